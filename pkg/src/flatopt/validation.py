"""Input-validation helpers.

Small checks used at the public boundaries of the library. They normalize
inputs to float64 numpy arrays and fail loudly on NaN/Inf or shape problems,
so the numerical kernels can assume clean data.
"""

import numpy as np

from .errors import NonPositiveVariance, ShapeMismatch


def check_param_vector(values, p: int | None = None, name: str = "values") -> np.ndarray:
    """Validate a flat parameter vector: 1-d, finite, nonempty float64."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeMismatch(f"{name} must be 1-d, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeMismatch(f"{name} must be nonempty")
    if p is not None and arr.size != p:
        raise ShapeMismatch(f"{name} has length {arr.size}, expected {p}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_sigma_diag(sigma_diag, p: int | None = None, allow_zero: bool = False) -> np.ndarray:
    """Validate a covariance diagonal: finite and positive (or nonnegative)."""
    arr = check_param_vector(sigma_diag, p, name="sigma_diag")
    floor_ok = np.all(arr >= 0.0) if allow_zero else np.all(arr > 0.0)
    if not floor_ok:
        raise NonPositiveVariance(
            f"covariance diagonal must be {'nonnegative' if allow_zero else 'strictly positive'}; "
            f"min entry {arr.min()}"
        )
    return arr


def check_same_length(a: np.ndarray, b: np.ndarray, names=("a", "b")) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{names[0]} and {names[1]} differ in shape: {a.shape} vs {b.shape}")
