"""Exception types raised by the tnzip kernel and pipeline."""


class TnzipError(Exception):
    """Base class for all tnzip errors."""


class ElementCountMismatch(TnzipError):
    """Reshape target has a different number of elements than the source."""


class InvalidPermutation(TnzipError):
    """Axis order is not a permutation of the tensor's axes."""


class AxisPartitionError(TnzipError):
    """Row/column axis lists do not partition the tensor's axes."""


class ExtentMismatch(TnzipError):
    """Paired contraction axes have different extents."""


class NonFiniteInput(TnzipError):
    """Input data contains NaN or infinity."""


class ShapeMismatch(TnzipError):
    """Operand shape does not match what the operation requires."""


class OracleBudgetExceeded(TnzipError):
    """Exact contraction would enumerate more configurations than allowed."""


class MissingForwardCache(TnzipError):
    """backward() called without a matching forward() in training mode."""


class NonConvergence(TnzipError):
    """Coarse-graining hit the step limit before reaching a 1x1 grid."""


class DivergenceDetected(TnzipError):
    """Training loss became non-finite.

    The partial training report is attached as ``.report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigInvalid(TnzipError):
    """Toy-model configuration failed validation."""


class BadMagic(TnzipError):
    """Tensor file does not start with the KTNS magic bytes."""


class UnsupportedVersion(TnzipError):
    """Tensor file declares a format version this reader does not know."""


class TruncatedPayload(TnzipError):
    """Tensor file payload length disagrees with the declared extents."""


class UnknownDtype(TnzipError):
    """Dtype code or name is not one of the supported values."""


class ManifestError(TnzipError):
    """Lattice manifest is inconsistent with the stored tensors."""
