"""SVD-based rank estimation that tolerates bounded data corruption.

Measurement noise inflates the rank of a data matrix beyond what the
underlying system can explain.  Counting only singular values above a
threshold rho restores a usable rank estimate; choosing rho is left to
the caller, with `threshold_window` reporting the admissible interval.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SingularSpectrum", "singular_spectrum", "robustified_rank", "threshold_window"]


@dataclass(frozen=True)
class SingularSpectrum:
    """Descending singular values plus the numerical-noise floor of their source matrix.

    Values at or below `zero_threshold` are artifacts of finite precision and
    are treated as exact zeros by the counting helpers; the stored values
    themselves are unmodified.
    """

    values: np.ndarray
    zero_threshold: float

    def __post_init__(self):
        vals = np.atleast_1d(np.array(self.values, dtype=float))
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("spectrum must be a nonempty 1-D array")
        if np.any(vals < 0):
            raise ValueError("singular values must be nonnegative")
        if np.any(np.diff(vals) > 0):
            raise ValueError("singular values must be non-increasing")
        if self.zero_threshold < 0:
            raise ValueError("zero threshold must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def count_above(self, rho: float) -> int:
        """Number of singular values strictly greater than rho (ties excluded)."""
        vals = self.values
        return int(np.count_nonzero((vals > rho) & (vals > self.zero_threshold)))


def singular_spectrum(matrix) -> SingularSpectrum:
    """Full singular spectrum of a nonempty real matrix, in descending order."""
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    if M.size == 0:
        raise ValueError("matrix must be nonempty")
    values = np.linalg.svd(M, compute_uv=False)
    floor = max(M.shape) * np.finfo(float).eps * float(values[0])
    return SingularSpectrum(values, floor)


def _spectrum_of(matrix_or_spectrum) -> SingularSpectrum:
    if isinstance(matrix_or_spectrum, SingularSpectrum):
        return matrix_or_spectrum
    return singular_spectrum(matrix_or_spectrum)


def robustified_rank(matrix, rho: float) -> int:
    """Count of singular values strictly greater than rho.

    At rho = 0 this reduces to the numeric rank: singular values at the
    floating-point noise floor count as zero.  Accepts either a matrix or a
    precomputed SingularSpectrum.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    return _spectrum_of(matrix).count_above(rho)


def threshold_window(matrix, required_rank: int):
    """Admissible threshold interval (sigma_{r+1}, sigma_r) for recovering rank r.

    Any rho strictly inside the returned open interval makes the robustified
    rank equal `required_rank`.  Returns None when the spectrum has no gap at
    that index.  When required_rank equals the full spectrum length the lower
    edge is 0.
    """
    spectrum = _spectrum_of(matrix)
    k = spectrum.values.size
    if not 1 <= required_rank <= k:
        raise ValueError(f"required rank {required_rank} out of range 1..{k}")
    upper = float(spectrum.values[required_rank - 1])
    lower = float(spectrum.values[required_rank]) if required_rank < k else 0.0
    if upper <= lower:
        return None
    return lower, upper
