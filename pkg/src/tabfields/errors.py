"""Exception types shared across the package."""


class TabFieldsError(Exception):
    """Base class for all package errors."""


class MapError(TabFieldsError, ValueError):
    pass


class MissionSyntaxError(TabFieldsError, ValueError):
    """Raised by the mission parser; carries the 0-based character offset."""

    def __init__(self, message: str, pos: int, text: str = ""):
        self.pos = pos
        self.text = text
        super().__init__(f"{message} at position {pos}")

    def annotated(self) -> str:
        """Return the offending line with a caret under the error position."""
        if not self.text:
            return str(self)
        start = self.text.rfind("\n", 0, self.pos) + 1
        end = self.text.find("\n", self.pos)
        if end < 0:
            end = len(self.text)
        line = self.text[start:end]
        return f"{self}\n  {line}\n  {' ' * (self.pos - start)}^"


class MissionCompileError(TabFieldsError, ValueError):
    pass


class InfeasibleMission(TabFieldsError):
    """No trajectory of the reference process satisfies the mission."""


class ZeroSupport(TabFieldsError):
    """A state outside the conditioned support was asked for a transition."""


class EnumerationTooLarge(TabFieldsError):
    pass
