"""Exception taxonomy shared by all modules."""


class JDiskError(Exception):
    """Base class for all library errors."""


class InvalidParams(JDiskError):
    """Malformed or out-of-range parameters."""


class UnknownName(JDiskError):
    """Requested a gallery entry or builtin that does not exist."""


class Singular(JDiskError):
    """A linear system required by the structure algebra is not solvable
    (condition number above the configured cap)."""


class InvalidGrid(JDiskError):
    """Grid construction rejected (even node count, too few nodes, bad radius)."""


class OutsideDisk(JDiskError):
    """A point expected strictly inside the disk lies on or beyond the boundary."""


class OutsideInterpolationRange(JDiskError):
    """Interpolation requested where the surrounding cell is not fully available."""


class GridMismatch(JDiskError):
    """Two objects built on incompatible grids were combined."""


class Diverged(JDiskError):
    """Fixed-point iteration failed to contract within the iteration budget."""


class NewtonFailed(JDiskError):
    """Outer quasi-Newton matching did not reach the endpoint tolerance."""


class ZeroDerivative(JDiskError):
    """Rescaling requires a nonzero derivative at the origin."""


class HypothesisViolated(JDiskError):
    """Reparametrization called with a target level above the map's derivative."""


class InvalidChain(JDiskError):
    """Chain links do not share endpoints within tolerance."""


class NoChainFound(JDiskError):
    """Distance search exhausted every (k, t) combination without a valid chain."""


class NotHolomorphicMap(JDiskError):
    """Pushforward produced links whose residual check failed."""


class ConfigError(JDiskError):
    """CLI configuration failed schema validation."""
