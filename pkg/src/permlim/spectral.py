"""Eigenvalue quantities: the centered matrix B, the determinant estimate
for normalised permanents, the spectral gap, and the Fredholm limit.

For a doubly stochastic A (= balanced kernel / n) write J for the matrix
with all entries 1/n and B = A - J. Multiplying by J averages rows or
columns, so B J = J B = 0 and the spectrum of A splits into the trivial
eigenvalue 1 (constant vector) plus the spectrum of B on its complement.
The normalised permanent of A converges to det(I + J - A^T A)^(-1/2); in
the continuum the same role is played by the Fredholm determinant of the
centered integral operator, estimated here by midpoint discretisation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .balance import BalanceResult
from .bridge import DensitySource
from .errors import (PermlimError, RefinementWarning, SpectralGapError,
                     SpectralGapWarning)

_ASYM_TOL = 1e-10
_ANNIHILATION_TOL = 1e-10
_GAP_MARGIN = 1e-8
_DET_IDENTITY_TOL = 1e-9
_GAP_WARN = 0.99

DEFAULT_EIG_CUTOFF = 1e-12
DEFAULT_REFINEMENT_TOL = 1e-5
MIN_RESOLUTION = 32


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues at one resolution and the determinants built from them.

    Fields that do not apply to the producing operation are nan. The
    reported ``fredholm_limit`` is exactly det_I_minus_B2 ** -0.5 with the
    product taken over the eigenvalues above the cutoff, so it can be
    reconstructed from the report alone.
    """

    n_or_m: int
    eigenvalues: np.ndarray
    lambda_star: float
    det_I_minus_B2: float
    mccullagh_value: float = math.nan
    fredholm_limit: float = math.nan
    converged: bool = True
    refinement_gap: float = math.nan


def eigen_symmetric(M) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("eigen_symmetric expects a square matrix")
    if float(np.abs(M - M.T).max()) > _ASYM_TOL:
        raise ValueError(
            f"matrix asymmetry {np.abs(M - M.T).max():.3e} exceeds {_ASYM_TOL:g}")
    return np.linalg.eigvalsh(0.5 * (M + M.T))


def bn_matrix(res: BalanceResult) -> np.ndarray:
    """B = balanced/n - J, checked to annihilate the averaging matrix J.

    max |B J| is the largest absolute row mean of B and max |J B| the
    largest column mean; both vanish exactly when the input is doubly
    stochastic, so values above 1e-10 signal an unbalanced input.
    """
    n = res.n
    B = res.balanced / n - 1.0 / n
    row_means = float(np.abs(B.mean(axis=1)).max())
    col_means = float(np.abs(B.mean(axis=0)).max())
    if max(row_means, col_means) > _ANNIHILATION_TOL:
        raise ValueError(
            f"B does not annihilate J (max row mean {row_means:.3e}, max column "
            f"mean {col_means:.3e}); the input is not balanced to tolerance")
    return B


def mccullagh_estimate(A) -> float:
    """det(I + J - A^T A)^(-1/2) for a doubly stochastic A.

    Requires every nontrivial eigenvalue of A to stay away from modulus 1
    (margin 1e-8); at modulus 1 the determinant degenerates and the
    estimate is meaningless. For symmetric A the value is cross-checked
    against the equivalent form det(I - B^2)^(-1/2) to 1e-9 relative.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    dev = max(float(np.abs(A.sum(axis=1) - 1.0).max()),
              float(np.abs(A.sum(axis=0) - 1.0).max()))
    if dev > _ASYM_TOL:
        raise ValueError(
            f"matrix is not doubly stochastic (row/column sum deviation {dev:.3e})")
    J = np.full((n, n), 1.0 / n)
    B = A - J
    symmetric = float(np.abs(A - A.T).max()) <= _ASYM_TOL
    if symmetric:
        nontrivial = np.abs(eigen_symmetric(B))
    else:
        nontrivial = np.abs(np.linalg.eigvals(B))
    if float(nontrivial.max(initial=0.0)) >= 1.0 - _GAP_MARGIN:
        raise SpectralGapError(
            f"a nontrivial eigenvalue of A has modulus "
            f"{nontrivial.max():.6f} >= {1.0 - _GAP_MARGIN}; the determinant "
            "estimate degenerates without a spectral gap")
    mu = eigen_symmetric(np.eye(n) + J - A.T @ A)
    if mu.min() <= 0.0:
        raise SpectralGapError(
            f"I + J - A^T A has a nonpositive eigenvalue {mu.min():.3e}")
    value = math.exp(-0.5 * math.fsum(np.log(mu)))
    if symmetric:
        det_direct = math.fsum(np.log(mu))
        one_minus_b2 = 1.0 - eigen_symmetric(B) ** 2
        if one_minus_b2.min() <= 0.0:
            raise SpectralGapError("I - B^2 has a nonpositive eigenvalue")
        det_b = math.fsum(np.log(one_minus_b2))
        if abs(math.exp(det_direct - det_b) - 1.0) > _DET_IDENTITY_TOL:
            raise PermlimError(
                "determinant identity det(I+J-A^2) = det(I-B^2) violated "
                f"(relative gap {abs(math.exp(det_direct - det_b) - 1.0):.3e})")
    return value


def centered_nystrom(source: DensitySource, m: int) -> np.ndarray:
    """The matrix C[i, j] = (rho(z_i, z_j) - 1)/m at midpoints z_i = (i-1/2)/m.

    Its eigenvalues approximate those of the centered integral operator
    f -> integral (rho(x, y) - 1) f(y) dy on mean-zero functions.
    """
    if m < MIN_RESOLUTION:
        raise ValueError(f"resolution m must be >= {MIN_RESOLUTION}")
    z = (np.arange(m) + 0.5) / m
    C = (np.asarray(source(z[:, None], z[None, :]), dtype=float) - 1.0) / m
    return 0.5 * (C + C.T)


def fredholm_limit(
    source: DensitySource,
    m: int,
    eig_cutoff: float = DEFAULT_EIG_CUTOFF,
    refinement_tol: float = DEFAULT_REFINEMENT_TOL,
) -> SpectrumReport:
    """Estimate prod (1 - lambda_k^2)^(-1/2) over the centered spectrum.

    Eigenvalues with |lambda| <= eig_cutoff are treated as discretisation
    zeros and excluded from the product. The estimate is recomputed at
    resolution 2m; if the two values disagree by more than refinement_tol
    relative, a RefinementWarning is emitted and the report is marked not
    converged, but the resolution-m value is still returned.
    """
    if eig_cutoff < 0:
        raise ValueError("eig_cutoff must be nonnegative")
    eigs = np.linalg.eigvalsh(centered_nystrom(source, m))
    value, lam_star, det = _product_value(eigs, eig_cutoff)
    eigs2 = np.linalg.eigvalsh(centered_nystrom(source, 2 * m))
    value2, _, _ = _product_value(eigs2, eig_cutoff)
    gap = abs(value2 / value - 1.0) if value != 0.0 else math.inf
    converged = gap <= refinement_tol
    if not converged:
        warnings.warn(
            f"Fredholm estimate moved by {gap:.3e} relative between m={m} and "
            f"m={2 * m}; reporting the m={m} value as non-converged",
            RefinementWarning, stacklevel=2)
    return SpectrumReport(
        n_or_m=m, eigenvalues=eigs, lambda_star=lam_star, det_I_minus_B2=det,
        fredholm_limit=value, converged=converged, refinement_gap=gap)


def spectral_gap_check(source: DensitySource, m: int) -> float:
    """Largest |eigenvalue| of the centered operator; warns when >= 0.99."""
    eigs = np.linalg.eigvalsh(centered_nystrom(source, m))
    lam_star = float(np.abs(eigs).max())
    if lam_star >= _GAP_WARN:
        warnings.warn(
            f"spectral gap nearly closed: max |eigenvalue| = {lam_star:.6f} "
            f">= {_GAP_WARN}; the limiting product is close to divergent",
            SpectralGapWarning, stacklevel=2)
    return lam_star


def _product_value(eigs: np.ndarray, eig_cutoff: float):
    lam = eigs[np.abs(eigs) > eig_cutoff]
    if lam.size and float(np.abs(lam).max()) >= 1.0:
        raise SpectralGapError(
            f"centered operator has an eigenvalue of modulus "
            f"{np.abs(lam).max():.6f} >= 1; the limit product diverges")
    det = float(np.prod(1.0 - lam * lam)) if lam.size else 1.0
    value = det ** -0.5
    lam_star = float(np.abs(eigs).max(initial=0.0))
    return value, lam_star, det
