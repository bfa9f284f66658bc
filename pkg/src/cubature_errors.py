from typing import Optional, Sequence


# =====================================================
# CONFIGURATION ERRORS (CLI exit code 2)
# =====================================================
class CubatureError(Exception):
    """Base class for every failure raised by the cubature package"""


class CubatureConfigError(CubatureError, ValueError):
    """Invalid parameters detected before any computation"""


class CorrelationOutOfRange(CubatureConfigError):
    """Correlation parameter or matrix is not an admissible correlation"""


class MissingBarriers(CubatureConfigError):
    """Digital basket payoff requested without barrier levels"""


class UnsupportedDimension(CubatureConfigError):
    """Operation only defined for a specific number of assets"""


# =====================================================
# NUMERICAL ERRORS (CLI exit code 3)
# =====================================================
class CubatureNumericalError(CubatureError, ArithmeticError):
    """Numerical failure during rule construction, integration or sampling"""


class RankDeficient(CubatureNumericalError):
    """Least-squares design matrix has numerical rank below the basis size"""

    def __init__(self, rank: int, size: int, message: str = ""):
        self.rank = rank
        self.size = size
        super().__init__(message or f"Design matrix rank {rank} < basis size {size}")


class EvaluationError(CubatureNumericalError):
    """Integrand returned a non-finite value"""

    def __init__(self, point: Optional[Sequence[float]], message: str = ""):
        self.point = None if point is None else [float(v) for v in point]
        super().__init__(message or f"Non-finite integrand value at point {self.point}")


class DegenerateRectangle(CubatureNumericalError):
    """Rectangle with a side that has collapsed to zero length in floating point"""


class NonPositiveEigenvalue(CubatureNumericalError):
    """Covariance eigen-decomposition produced an eigenvalue <= 0"""


class MeshExportError(CubatureError, OSError):
    """Mesh table could not be written"""

    def __init__(self, path: str, reason: str):
        self.path = path
        super().__init__(f"Failed to export mesh to {path}: {reason}")
