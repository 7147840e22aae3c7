"""Exception types shared across the package."""


class GroupTooSmall(ValueError):
    """Raised when a cooperative group cannot null every constraining PU (N <= M)."""


class DegenerateChannel(ValueError):
    """The target channel lies (numerically) inside the PU row space."""


class ZeroArea(ValueError):
    pass


class ZeroDensity(ValueError):
    pass


class NoFeasibleGroup(ValueError):
    pass


class ConfigError(ValueError):
    """Invalid scenario configuration.

    ``key`` names the offending field and ``line`` the 1-based line number
    when the error came from parsing text.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
