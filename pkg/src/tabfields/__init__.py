"""Mission-aware adversary behavior fields and TAB-conditioned POMCP on grids."""

from .errors import (EnumerationTooLarge, InfeasibleMission, MapError, MissionCompileError,
                     MissionSyntaxError, TabFieldsError, ZeroSupport)
from .gridworld import (Action, Cell, GridWorld, JointState, Observation, RewardParams,
                        feasible_moves, load_map, observe, parse_map, step)
from .mission import (CType, ConstraintAutomaton, ConstraintTuple, MissionSpec, automaton_step,
                      compile_automaton, completion_time, evaluate_trajectory, parse_mission)
from .tabfield import (ReferenceProcess, TabField, backward_pass, brute_force_marginals,
                       build_reference, compute_tabfield, conditioned_kernel, sample_trajectory)

__version__ = "0.1.0"
