"""Exception types raised across the package."""


class PartsimError(Exception):
    """Base class for all package-specific errors."""


class IngestEmpty(PartsimError):
    """No interactions survived parsing and deduplication."""


class IngestParse(PartsimError):
    """A line of an interaction file could not be parsed."""

    def __init__(self, line_number: int, line: str):
        self.line_number = line_number
        self.line = line
        super().__init__(f"line {line_number}: cannot parse interaction {line!r}")


class DegreeZero(PartsimError):
    """A zero user or item degree was encountered where 1/sqrt(degree) is needed."""


class PartitionTooLarge(PartsimError):
    """A dense per-partition buffer would exceed the configured memory budget."""


class SvdNoConverge(PartsimError):
    """The iterative eigensolver did not reach the requested residual."""

    def __init__(self, best_residual: float, max_iter: int):
        self.best_residual = best_residual
        self.max_iter = max_iter
        super().__init__(
            f"no convergence in {max_iter} iterations (best residual {best_residual:.3e})"
        )


class ShapeError(PartsimError):
    """Operands with incompatible dimensions."""


class AdmmDiverged(PartsimError):
    """Primal residual grew 10x above its running minimum."""

    def __init__(self, iteration_log):
        self.iteration_log = list(iteration_log)
        super().__init__(
            f"primal residual diverged after {len(self.iteration_log)} iterations"
        )


class AssemblyMismatch(PartsimError):
    """Solved blocks do not cover the partition list exactly once."""


class ModelVersionError(PartsimError):
    """Model file was written by an incompatible format version."""


class ModelCorrupt(PartsimError):
    """Model file failed magic or checksum validation."""


class EvalEmpty(PartsimError):
    """The test set contains no usable interactions."""


class OmegaUndefined(PartsimError):
    """Sampling weight undefined for an item that co-occurs with nothing."""


class ModularityUndefined(PartsimError):
    """Modularity of a graph with zero total edge weight."""


class ConfigError(PartsimError):
    """Bad key or value in a run configuration."""
