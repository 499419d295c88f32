"""Mission DSL and its compilation into a time-indexed constraint automaton.

Grammar::

    mission := clause (';' clause)*
    clause  := 'reach' REGION ('at' | 'by') INT
             | 'reach' REGION 'every' INT
             | 'reach' REGION                  (eventually, before the horizon)
             | 'avoid' REGION
             | 'stay' REGION 'until' INT
             | 'gap' INT

REGION is a checkpoint letter or ``~`` for the map's restricted cells.
Newlines act like whitespace and ``#`` starts a comment.

Semantics over a cell sequence ``c_0 .. c_T``:

* ``reach R at t``   -- occupy R at exactly time t
* ``reach R by t``   -- visit R at some time <= t
* ``reach R every k``-- visit R inside every window [jk, (j+1)k] that fits in the horizon
* ``avoid R``        -- never occupy R
* ``stay R until t`` -- occupy R at every time 0..t
* ``gap k``          -- at most k steps between consecutive reach completions, where a
                        clause completes at its first qualifying visit

Reach clauses (at/by/eventually) are completed strictly in listed order, at most
one per time step.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import MissionCompileError, MissionSyntaxError
from .gridworld import Cell, GridWorld

DEAD = 0
DEFAULT_MAX_STATES = 20_000


class CType(enum.Enum):
    EXACT_TIME = "exact"
    DEADLINE = "deadline"
    UNTIL = "until"
    EVENTUALLY = "eventually"
    ALWAYS = "always"
    RECURRENT = "recurrent"


REACH_TYPES = (CType.EXACT_TIME, CType.DEADLINE, CType.EVENTUALLY)


@dataclass(frozen=True)
class ConstraintTuple:
    goal: Optional[str]
    time: Optional[int]  # None encodes an unbounded time
    ctype: CType
    forbidden: tuple = ()
    max_gap: Optional[int] = None
    period: Optional[int] = None

    def __post_init__(self):
        if self.ctype in (CType.EXACT_TIME, CType.DEADLINE, CType.UNTIL) and self.time is None:
            raise ValueError(f"{self.ctype.value} constraint needs a finite time")
        if self.ctype is CType.RECURRENT and (self.period is None or self.period < 1):
            raise ValueError("recurrent constraint needs period >= 1")
        if self.goal is None and self.ctype is not CType.ALWAYS:
            raise ValueError("only 'always' constraints may omit a goal")


@dataclass(frozen=True)
class MissionSpec:
    tuples: tuple
    max_gap: Optional[int] = None
    horizon_hint: Optional[int] = None
    source: str = ""

    @property
    def reach_tuples(self) -> list:
        return [ct for ct in self.tuples if ct.ctype in REACH_TYPES]

    def finite_times(self) -> list:
        return [ct.time for ct in self.tuples if ct.time is not None]

    def regions(self) -> set:
        out = set()
        for ct in self.tuples:
            if ct.goal is not None:
                out.add(ct.goal)
            out.update(ct.forbidden)
        return out


# --- parsing ------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(#[^\n]*)|(;)|(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(~))")


@dataclass
class _Tok:
    kind: str  # 'sep' | 'int' | 'word' | 'eof'
    value: object
    pos: int


def _tokenize(text: str) -> list:
    toks = []
    pos = 0
    while True:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            if not rest.strip():
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise MissionSyntaxError(f"unexpected character {text[bad]!r}", bad, text)
        comment, sep, num, word, tilde = m.groups()
        start = m.start(m.lastindex)
        if sep:
            toks.append(_Tok("sep", ";", start))
        elif num:
            toks.append(_Tok("int", int(num), start))
        elif word:
            toks.append(_Tok("word", word, start))
        elif tilde:
            toks.append(_Tok("word", "~", start))
        pos = m.end()
    toks.append(_Tok("eof", None, len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, msg: str, tok: _Tok):
        raise MissionSyntaxError(msg, tok.pos, self.text)

    def expect_word(self, *choices) -> _Tok:
        tok = self.next()
        if tok.kind != "word" or tok.value not in choices:
            want = " or ".join(repr(c) for c in choices)
            self.error(f"expected {want}, got {tok.value!r}" if tok.kind != "eof"
                       else f"expected {want}, got end of input", tok)
        return tok

    def expect_int(self) -> int:
        tok = self.next()
        if tok.kind != "int":
            self.error("expected an integer", tok)
        return tok.value

    def region(self) -> str:
        tok = self.next()
        if tok.kind != "word" or not (tok.value == "~" or re.fullmatch(r"[A-Z]", tok.value)):
            self.error("expected a region label (A-Z or ~)", tok)
        return tok.value

    def mission(self) -> MissionSpec:
        tuples, gap = [], None
        while True:
            while self.peek().kind == "sep":
                self.next()
            if self.peek().kind == "eof":
                break
            ct, g = self.clause()
            if ct is not None:
                tuples.append(ct)
            if g is not None:
                gap = g
            tok = self.peek()
            if tok.kind not in ("sep", "eof"):
                self.error("expected ';' between clauses", tok)
        if gap is not None:
            tuples = [ConstraintTuple(ct.goal, ct.time, ct.ctype, ct.forbidden, gap, ct.period)
                      if ct.ctype in REACH_TYPES else ct for ct in tuples]
        return MissionSpec(tuple(tuples), max_gap=gap, source=self.text)

    def clause(self):
        head = self.expect_word("reach", "avoid", "stay", "gap")
        if head.value == "reach":
            goal = self.region()
            tok = self.peek()
            if tok.kind == "word" and tok.value in ("at", "by", "every"):
                self.next()
                num = self.peek()
                n = self.expect_int()
                if tok.value == "at":
                    return ConstraintTuple(goal, n, CType.EXACT_TIME), None
                if tok.value == "by":
                    return ConstraintTuple(goal, n, CType.DEADLINE), None
                if n < 1:
                    self.error("period must be at least 1", num)
                return ConstraintTuple(goal, None, CType.RECURRENT, period=n), None
            return ConstraintTuple(goal, None, CType.EVENTUALLY), None
        if head.value == "avoid":
            zone = self.region()
            return ConstraintTuple(None, None, CType.ALWAYS, forbidden=(zone,)), None
        if head.value == "stay":
            goal = self.region()
            self.expect_word("until")
            return ConstraintTuple(goal, self.expect_int(), CType.UNTIL), None
        return None, self.expect_int()


def parse_mission(text: str) -> MissionSpec:
    return _Parser(text).mission()


def load_mission(arg: str) -> MissionSpec:
    """Parse ``arg`` as a file path if one exists, else as DSL text."""
    p = Path(arg)
    try:
        is_file = p.is_file()
    except OSError:
        is_file = False
    return parse_mission(p.read_text() if is_file else arg)


# --- automaton ----------------------------------------------------------------

@dataclass(frozen=True)
class _Q:
    progress: int
    gap: int
    flags: tuple


@dataclass(frozen=True, eq=False)
class ConstraintAutomaton:
    """Deterministic monitor over (cell, time) inputs.

    ``delta[t, q, c]`` is the successor of state ``q`` after reading free-cell
    index ``c`` at time ``t``. State 0 is the absorbing violation state. A run
    starts in ``q0`` and reads ``c_0`` at ``t = 0``.
    """

    world: GridWorld
    spec: MissionSpec
    horizon: int
    states: tuple
    delta: np.ndarray = field(repr=False)
    accepting: np.ndarray = field(repr=False)
    q0: int = 1
    n_reach: int = 0

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def dead(self) -> int:
        return DEAD

    def is_accepting(self, q: int, t: Optional[int] = None) -> bool:
        """Acceptance at the horizon; ``t`` is accepted for interface symmetry."""
        return bool(self.accepting[q])

    def progress(self, q: int) -> int:
        s = self.states[q]
        return -1 if s is None else s.progress


def _resolve(world: GridWorld, label: str) -> np.ndarray:
    try:
        return world.zone_mask(label)
    except KeyError:
        raise MissionCompileError(f"unknown region label {label!r}") from None


def compile_automaton(spec: MissionSpec, world: GridWorld, horizon: int,
                      max_states: int = DEFAULT_MAX_STATES) -> ConstraintAutomaton:
    if horizon < 0:
        raise MissionCompileError("horizon must be non-negative")
    late = [t for t in spec.finite_times() if t > horizon]
    if late:
        raise MissionCompileError(
            f"horizon {horizon} is smaller than constraint time {max(late)}")
    for label in sorted(spec.regions()):
        _resolve(world, label)

    reach = [(ct, _resolve(world, ct.goal)) for ct in spec.reach_tuples]
    recur = [(ct.period, _resolve(world, ct.goal)) for ct in spec.tuples if ct.ctype is CType.RECURRENT]
    until = [(ct.time, _resolve(world, ct.goal)) for ct in spec.tuples if ct.ctype is CType.UNTIL]
    forbidden = np.zeros(world.n_cells, dtype=bool)
    for ct in spec.tuples:
        for z in ct.forbidden:
            forbidden |= _resolve(world, z)
    n_reach = len(reach)
    max_gap = spec.max_gap if (spec.max_gap is not None and n_reach > 1) else None
    gap_levels = (max_gap + 1) if max_gap is not None else 1

    n_states = 1 + (n_reach + 1) * gap_levels * (2 ** len(recur))
    if n_states > max_states:
        raise MissionCompileError(f"automaton would have {n_states} states (cap {max_states})")
    states: list = [None]
    for p, g, flags in product(range(n_reach + 1), range(gap_levels),
                               product((False, True), repeat=len(recur))):
        states.append(_Q(p, g, tuple(flags)))
    sid = {s: i for i, s in enumerate(states) if s is not None}

    def signature(t: int) -> tuple:
        # everything the transition depends on besides (state, cell)
        return (t == 0,
                tuple((ct.time is not None and t == ct.time, ct.time is not None and t <= ct.time,
                       ct.time is not None and t >= ct.time) for ct, _ in reach),
                tuple(t > 0 and t % k == 0 for k, _ in recur),
                tuple(t <= tc for tc, _ in until))

    n = world.n_cells
    delta = np.zeros((horizon + 1, len(states), n), dtype=np.int32)
    cache: dict = {}
    for t in range(horizon + 1):
        sig = signature(t)
        if sig not in cache:
            table = np.zeros((len(states), n), dtype=np.int32)
            for qi, s in enumerate(states):
                if s is None:
                    continue
                for c in range(n):
                    table[qi, c] = _advance(s, c, t, reach, recur, until, forbidden, max_gap, sid)
            cache[sig] = table
        delta[t] = cache[sig]

    accepting = np.array([s is not None and s.progress == n_reach for s in states], dtype=bool)
    return ConstraintAutomaton(world, spec, horizon, tuple(states), delta, accepting,
                               q0=sid[_Q(0, 0, (False,) * len(recur))], n_reach=n_reach)


def _advance(s: _Q, c: int, t: int, reach, recur, until, forbidden, max_gap, sid) -> int:
    if forbidden[c]:
        return DEAD
    for tc, region in until:
        if t <= tc and not region[c]:
            return DEAD
    flags = []
    for (k, region), seen in zip(recur, s.flags):
        hit = bool(region[c])
        if t > 0 and t % k == 0:
            if not (seen or hit):
                return DEAD
            flags.append(hit)
        elif t == 0:
            flags.append(hit)
        else:
            flags.append(seen or hit)
    p = s.progress
    waiting = max_gap is not None and 1 <= p < len(reach)
    if waiting and s.gap + 1 > max_gap:
        return DEAD
    progressed = False
    if p < len(reach):
        ct, region = reach[p]
        if region[c]:
            if ct.ctype is CType.EXACT_TIME:
                ok = t == ct.time
            elif ct.ctype is CType.DEADLINE:
                ok = t <= ct.time
            else:
                ok = True
            if ok:
                p += 1
                progressed = True
    for i in range(p, len(reach)):
        tc = reach[i][0].time
        if tc is not None and t >= tc:
            return DEAD
    g = s.gap + 1 if waiting and not progressed else 0
    return sid[_Q(p, g, tuple(flags))]


def automaton_step(aut: ConstraintAutomaton, q: int, cell, t: int) -> int:
    if q == DEAD:
        return DEAD
    return int(aut.delta[t, q, aut.world.cell_index(Cell(*cell))])


def run_automaton(aut: ConstraintAutomaton, cells: Sequence) -> list:
    """States after reading each cell (length ``len(cells)``)."""
    q = aut.q0
    out = []
    for t, c in enumerate(cells):
        q = automaton_step(aut, q, c, t)
        out.append(q)
    return out


def evaluate_trajectory(aut: ConstraintAutomaton, cells: Sequence) -> bool:
    if len(cells) != aut.horizon + 1:
        raise ValueError(f"trajectory has {len(cells)} cells, expected {aut.horizon + 1}")
    for a, b in zip(cells, cells[1:]):
        if max(abs(a[0] - b[0]), abs(a[1] - b[1])) > 1 or not aut.world.is_free(b):
            return False
    return aut.is_accepting(run_automaton(aut, cells)[-1])


def completion_time(aut: ConstraintAutomaton, cells: Sequence) -> Optional[int]:
    """Time step at which a satisfying trajectory has fulfilled its mission.

    Reach clauses resolve when the last one completes, ``stay .. until t`` at t.
    Recurrent clauses, and avoid-only missions, only resolve at the horizon.
    Returns None for trajectories that do not satisfy the mission.
    """
    if not evaluate_trajectory(aut, cells):
        return None
    spec = aut.spec
    resolved = 0
    if aut.n_reach:
        qs = run_automaton(aut, cells)
        resolved = next(t for t, q in enumerate(qs) if aut.progress(q) == aut.n_reach)
    for ct in spec.tuples:
        if ct.ctype is CType.UNTIL:
            resolved = max(resolved, ct.time)
        elif ct.ctype is CType.RECURRENT:
            resolved = aut.horizon
    if not aut.n_reach and any(ct.ctype is CType.ALWAYS for ct in spec.tuples):
        resolved = aut.horizon
    return resolved
