"""Error kinds raised by catharm.

Every error derives from :class:`CatharmError`; errors caused by bad user
input also derive from :class:`ValueError`.
"""


class CatharmError(Exception):
    """Root of every catharm error."""


# numcore


class ShapeMismatch(CatharmError, ValueError):
    """Operand or input shapes are incompatible."""


class NonFiniteError(CatharmError, ArithmeticError):
    """An operation produced NaN or Inf."""

    def __init__(self, op, message=None, node=None, value=float("nan")):
        super().__init__(message or f"Operation {op!r} produced a non-finite value.")
        self.op = op
        self.node = node
        self.value = value
        # set by the objective when a loss term owns the node
        self.term = None


class GraphStateError(CatharmError, RuntimeError):
    """Graph used out of order (backward before forward, non-scalar output, ...)."""


# functors


class DimensionMismatch(CatharmError, ValueError):
    """A tensor does not have the dimension a functor expects."""


class MorphismError(CatharmError, ValueError):
    """A latent morphism cannot be applied as requested."""


class NonInvertibleMorphism(MorphismError):
    """Negative power of an ill-conditioned non-orthogonal morphism."""


class PowerLimitExceeded(MorphismError):
    """The requested power is above the configured maximum."""


class FractionalPowerOnNonOrthogonal(MorphismError):
    """Real powers are only defined for orthogonal morphisms."""


# objective / pairing / trainer


class LabelOutOfRange(CatharmError, ValueError):
    """A label is not a valid class index."""


class BinningError(CatharmError, ValueError):
    """A covariate value cannot be assigned to a bin."""


class NonFiniteLoss(CatharmError, ArithmeticError):
    """Training produced a non-finite loss term."""

    def __init__(self, term, epoch, value):
        super().__init__(f"Loss term {term!r} is {value} at epoch {epoch}, abort.")
        self.term = term
        self.epoch = epoch
        self.value = value


class CheckpointError(CatharmError, ValueError):
    """A checkpoint file cannot be read."""


class BadMagic(CheckpointError):
    """The file does not start with the checkpoint magic bytes."""


class VersionMismatch(CheckpointError):
    """The checkpoint was written by an unsupported format version."""


class Truncated(CheckpointError):
    """The checkpoint file ends before its declared content."""


# dataio


class DataError(CatharmError, ValueError):
    """A dataset file cannot be ingested."""


class IdxBadMagic(DataError):
    """IDX file magic number is not the expected one."""


class IdxDimensionMismatch(DataError):
    """IDX dimensions are not the expected ones."""


class IdxTruncated(DataError):
    """IDX file is shorter than its header declares."""


class MissingColumn(DataError):
    """A column named by the schema is absent from the CSV header."""


class EmptyClass(DataError):
    """A class needed to build pairs has no sample."""


# metrics / cli / specdsl


class DegenerateInput(CatharmError, ValueError):
    """Metric input is degenerate (single class, empty bin, ...)."""


class HashMismatch(CatharmError, ValueError):
    """Checkpoint and experiment spec were not produced together."""


class SpecError(CatharmError, ValueError):
    """An experiment spec does not parse or validate."""

    def __init__(self, errors):
        super().__init__("\n".join(str(error) for error in errors))
        self.errors = list(errors)
