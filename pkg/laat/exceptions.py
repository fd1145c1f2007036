"""
Custom exceptions for the LAAT toolkit

Every error the library raises derives from LaatError. The CLI maps the
families to exit codes: InvalidArgumentError and ConfigurationError -> 2,
DataError -> 3, ConvergenceError -> 4.
"""

from typing import Optional, Sequence


class LaatError(Exception):
    """Base exception for the LAAT toolkit"""
    exit_code = 1

    def __init__(self, message: str, detail: Optional[str] = None):
        self.message = message
        self.detail = detail
        super().__init__(self.message)

    def __str__(self) -> str:
        if self.detail:
            return f"{self.message}: {self.detail}"
        return self.message


class InvalidArgumentError(LaatError, ValueError):
    """Raised when a numeric argument is outside its domain"""
    exit_code = 2


class ConfigurationError(LaatError):
    """Raised when run settings are invalid; one problem per field"""
    exit_code = 2

    def __init__(self, problems: Sequence[str], message: str = "Invalid configuration"):
        super().__init__(message, detail="; ".join(problems))
        self.problems = list(problems)


class DataError(LaatError):
    """Raised when input data cannot be used"""
    exit_code = 3


class EmptyAfterFilterError(DataError):
    """Raised when the degeneracy filter removes every point"""
    def __init__(self, n_points: int, min_neighbors: int, radius: float):
        super().__init__(
            "empty-after-filter",
            detail=f"all {n_points} points have fewer than {min_neighbors} neighbors within r={radius}",
        )
        self.n_points = n_points
        self.min_neighbors = min_neighbors
        self.radius = radius


class DegenerateJumpError(DataError):
    """Raised when a jump vector has zero length (coincident points)"""
    def __init__(self, i: int, j: int):
        super().__init__("degenerate-jump", detail=f"points {i} and {j} coincide")
        self.i = i
        self.j = j


class DegenerateNeighborhoodError(DataError):
    """Raised when every local eigenvalue is zero"""
    def __init__(self, i: int):
        super().__init__("degenerate-neighborhood", detail=f"all neighbors of point {i} coincide with it")
        self.i = i


class PlacementError(DataError):
    """Raised when no point is eligible as an ant start"""


class StuckAntError(DataError):
    """Raised when an ant reaches a point without neighbors"""
    def __init__(self, point: int):
        super().__init__("stuck-ant", detail=f"point {point} has no neighbors")
        self.point = point


class SchemaError(DataError):
    """Raised when files that must line up do not"""


class DataFormatError(DataError):
    """Raised when a file cannot be decoded"""
    def __init__(self, path: str, message: str):
        super().__init__(message, detail=str(path))
        self.path = str(path)


class MultiComponentError(DataError):
    """Raised when a chain has more than one connected component"""
    def __init__(self, n_components: int):
        super().__init__(
            "multi-component",
            detail=f"neighborhood graph has {n_components} connected components; "
                   "analyse each component separately (stationary_by_component)",
        )
        self.n_components = n_components


class ConvergenceError(LaatError):
    """Raised when the power method does not reach its tolerance"""
    exit_code = 4

    def __init__(self, residual: float, iterations: int, tol: float):
        super().__init__(
            "power iteration did not converge",
            detail=f"residual {residual:.3e} > tol {tol:.1e} after {iterations} iterations",
        )
        self.residual = residual
        self.iterations = iterations
        self.tol = tol
