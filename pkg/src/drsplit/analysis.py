"""Analysis toolkit: empirical rate fitting, finite-termination detection,
principal angles between constraint subspaces, and closed-form spectra of
the damped splitting map on lifted sudoku.

The closed forms live on the product space of the five sudoku blocks.  With
p free pillar coordinates, the damped map has eigenvalues {0, lam_minus,
gamma/(1+gamma), lam_plus} where lam_plus controls the observable linear
rate; the plain method contracts at cos of the Friedrichs angle between the
diagonal and the clue-constraint subspace, which is sqrt(5)/5 regardless of
the clue pattern.
"""

import dataclasses
import math
import re

import numpy as np

from .constraints import ClueProjection

__all__ = [
    "DDR_GLOBAL_GAMMA_MAX",
    "SUDOKU_SDR_RATE",
    "InsufficientDataError",
    "RateFit",
    "auto_tail_fraction",
    "build_sudoku_linearization",
    "ddr_affine_rate",
    "ddr_rate_block",
    "ddr_rate_eigenvalues",
    "detect_finite_termination",
    "fit_linear_rate",
    "friedrichs_angle",
    "is_semi_simple",
    "numerical_rank",
    "principal_angles",
    "spectral_radius",
    "sudoku_product_projectors",
    "sudoku_subspace_bases",
    "theoretical_rate",
]

SUDOKU_SDR_RATE = np.sqrt(5.0) / 5.0

# largest damping parameter with a contraction guarantee independent of
# the constraint geometry
DDR_GLOBAL_GAMMA_MAX = np.sqrt(1.5) - 1.0


class InsufficientDataError(RuntimeError):
    """Too few clean residual points for a meaningful rate fit."""


@dataclasses.dataclass(frozen=True)
class RateFit:
    slope: float
    r_squared: float
    window: tuple
    n_points: int


# residuals this close to the reference iterate carry mostly rounding
# noise; never fit through them
_FIT_FLOOR = 1e-11
_FIT_SKIP_LAST = 5
_FIT_MIN_RECORDS = 30
_FIT_MIN_POINTS = 10


def fit_linear_rate(trace, quantity, tail_fraction):
    """Least-squares slope of log10(residual) over the trailing window.

    tail_fraction in (0, 1] selects how much of the run to fit; points at
    or below the noise floor and the last few (reference-polluted) records
    are always excluded.  When the requested window holds fewer than 10
    clean points the fit falls back to the last 10 clean points overall.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError(
            f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    r = np.asarray(trace.residuals(quantity), dtype=float)
    n = len(r)
    if n < _FIT_MIN_RECORDS:
        raise InsufficientDataError(
            f"{n} records; need at least {_FIT_MIN_RECORDS}")
    clean = (r > _FIT_FLOOR) & (np.arange(n) < n - _FIT_SKIP_LAST)
    usable = np.nonzero(clean)[0]
    k0 = n - int(math.ceil(tail_fraction * n))
    pts = usable[usable >= k0]
    if len(pts) < _FIT_MIN_POINTS:
        pts = usable[-_FIT_MIN_POINTS:]
    if len(pts) < _FIT_MIN_POINTS:
        raise InsufficientDataError(
            f"only {len(pts)} residuals above the {_FIT_FLOOR} noise floor")
    y = np.log10(r[pts])
    design = np.vstack([pts.astype(float), np.ones(len(pts))]).T
    (slope_log, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ np.array([slope_log, intercept])
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return RateFit(slope=float(10.0 ** slope_log), r_squared=r_squared,
                   window=(int(pts[0]), int(pts[-1])), n_points=len(pts))


def auto_tail_fraction(trace, quantity, threshold=1e-4):
    """Tail fraction starting where the residual first drops below the
    threshold, skipping any initial plateau; 0.5 if it never does."""
    r = np.asarray(trace.residuals(quantity), dtype=float)
    below = np.nonzero(r < threshold)[0]
    if len(below) == 0:
        return 0.5
    return float((len(r) - below[0]) / len(r))


def detect_finite_termination(trace, block, tol=1e-14):
    """Smallest K with the block exactly constant (bitwise, or dithering
    at or below tol for the z steps) for all k >= K; None if never.

    block is "z" (uses recorded step sizes) or "uI" (uses the per-block
    mismatch counts against the final iterate, so it needs snapshots).
    """
    m = re.fullmatch(r"z|u(\d+)", block)
    if m is None:
        raise ValueError(f"unknown block {block!r}; use 'z' or 'u<i>'")
    if block == "z":
        steps = np.asarray(trace.z_step, dtype=float)
        moving = np.nonzero(steps > tol)[0]
        freeze = int(moving[-1]) + 1 if len(moving) else 0
        return freeze if freeze < len(steps) else None
    i = int(m.group(1))
    if i >= trace.n_blocks:
        raise ValueError(
            f"block u{i} out of range for {trace.n_blocks} blocks")
    mismatch = np.asarray(trace.u_mismatch)[:, i]
    changed = np.nonzero(mismatch != 0)[0]
    # the final record matches itself trivially, so demand one more
    # quiet record beyond the last change
    freeze = int(changed[-1]) + 2 if len(changed) else 1
    return freeze if freeze < len(mismatch) else None


# ---------------------------------------------------------------------------
# subspace geometry

def _validated_orthonormal(basis):
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2:
        raise ValueError("basis must be a 2-D array of rows")
    gram = basis @ basis.T
    if not np.allclose(gram, np.eye(basis.shape[0]), atol=1e-8):
        raise ValueError("basis rows must be orthonormal")
    return basis


def principal_angles(basis_a, basis_b):
    """Ascending principal angles between two linear subspaces given by
    row-orthonormal bases."""
    a = _validated_orthonormal(basis_a)
    b = _validated_orthonormal(basis_b)
    cosines = np.linalg.svd(a @ b.T, compute_uv=False)
    return np.arccos(np.clip(cosines, 0.0, 1.0))


def friedrichs_angle(basis_a, basis_b, intersection_tol=1e-10):
    """First principal angle after discarding the common directions."""
    angles = principal_angles(basis_a, basis_b)
    separated = angles[np.cos(angles) < 1.0 - intersection_tol]
    if len(separated) == 0:
        raise ValueError(
            "subspaces coincide along every direction; no angle remains")
    return float(separated[0])


def spectral_radius(matrix):
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def numerical_rank(matrix, reference=None):
    """Singular values above max(shape) * 1e-12 * smax(reference) count.

    Pass the parent operator as reference when ranking a shifted matrix
    like M - lam I, so the threshold reflects the parent's scale.
    """
    sv = np.linalg.svd(matrix, compute_uv=False)
    if reference is None:
        smax = float(sv[0]) if len(sv) else 0.0
    else:
        ref_sv = np.linalg.svd(reference, compute_uv=False)
        smax = float(ref_sv[0]) if len(ref_sv) else 0.0
    tol = max(matrix.shape) * 1e-12 * smax
    return int(np.count_nonzero(sv > tol))


def is_semi_simple(matrix, eigenvalue):
    """True when the eigenvalue has equal algebraic and geometric
    multiplicity: rank(A) == rank(A^2) for A = M - lam I."""
    shifted = matrix - eigenvalue * np.eye(matrix.shape[0])
    return (numerical_rank(shifted, reference=matrix)
            == numerical_rank(shifted @ shifted, reference=matrix))


# ---------------------------------------------------------------------------
# closed-form spectra for the damped map

def ddr_rate_eigenvalues(gamma):
    """The four eigenvalue levels (0, lam_minus, gamma/(1+gamma), lam_plus)
    of the damped sudoku map; real only for 0 < gamma <= 5/4."""
    if not 0.0 < gamma <= 1.25:
        raise ValueError(
            f"closed form is real only for 0 < gamma <= 5/4, got {gamma}")
    disc = np.sqrt(25.0 - 16.0 * gamma * gamma)
    denom = 10.0 * (1.0 + gamma)
    lam_minus = (2.0 * gamma + 5.0 - disc) / denom
    lam_plus = (2.0 * gamma + 5.0 + disc) / denom
    return (0.0, float(lam_minus), gamma / (1.0 + gamma), float(lam_plus))


def ddr_affine_rate(gamma):
    """Contraction factor of the damped map on affine pairs."""
    if not gamma > 0.0:
        raise ValueError(f"damping parameter must be positive, got {gamma}")
    if np.isinf(gamma):
        return 1.0
    return gamma / (1.0 + gamma)


def ddr_rate_block(gamma, p):
    """The 2p x 2p invariant block of the damped sudoku map whose
    eigenvalues are exactly lam_minus and lam_plus, p times each."""
    core = np.array([[gamma + 5.0, 2.0 * gamma],
                     [-2.0 * gamma, gamma]]) / (5.0 * (1.0 + gamma))
    return np.kron(core, np.eye(p))


def theoretical_rate(kind, method, gamma=None):
    """Predicted local linear rate, or None when no clean theory applies."""
    if method == "sdr":
        return SUDOKU_SDR_RATE if kind == "sudoku" else None
    if method == "ddr" and gamma is not None:
        if kind == "queens":
            return ddr_affine_rate(gamma)
        if kind == "sudoku":
            if 0.0 < gamma <= 1.25:
                return ddr_rate_eigenvalues(gamma)[3]
            return None
    return None


# ---------------------------------------------------------------------------
# explicit linearization on the five-block sudoku product space

def _free_mask(inst):
    return ClueProjection(inst.size, inst.clues).free_mask


def sudoku_product_projectors(inst):
    """Dense projectors (PC, PS) onto the constraint-linearization subspace
    and the consensus diagonal of the five-block product space."""
    n = inst.size ** 3
    dim = 5 * n
    free = _free_mask(inst).astype(float)
    pc = np.zeros((dim, dim))
    idx = 4 * n + np.arange(n)
    pc[idx, idx] = free
    ps = np.kron(np.full((5, 5), 0.2), np.eye(n))
    return pc, ps


def build_sudoku_linearization(inst, gamma=None, dim_cap=2000):
    """Dense matrix of the splitting map linearized at a solution.

    gamma=None gives the plain fixed-point map T; otherwise the damped
    map (gamma T + PC) / (1 + gamma).  Refuses product dimensions above
    dim_cap to keep memory predictable.
    """
    n = inst.size ** 3
    dim = 5 * n
    if dim > dim_cap:
        raise ValueError(
            f"product dimension {dim} exceeds dim_cap={dim_cap}; "
            "raise the cap to build this matrix")
    if gamma is not None and not 0.0 < gamma < np.inf:
        raise ValueError(f"damping parameter must be positive, got {gamma}")
    free = _free_mask(inst).astype(float)
    ps = np.kron(np.full((5, 5), 0.2), np.eye(n))
    # T = I - PS - PC + 2 PC PS, assembled without forming dense PC
    t = -ps
    t[4 * n:] += 2.0 * free[:, None] * ps[4 * n:]
    diag = np.arange(dim)
    t[diag, diag] += 1.0
    t[diag[4 * n:], diag[4 * n:]] -= free
    if gamma is None:
        return t
    t *= gamma
    t[diag[4 * n:], diag[4 * n:]] += free
    t /= 1.0 + gamma
    return t


def sudoku_subspace_bases(inst):
    """Row-orthonormal bases (constraint side, consensus diagonal) of the
    two subspaces whose principal angles drive the local rate."""
    n = inst.size ** 3
    dim = 5 * n
    free_idx = np.nonzero(_free_mask(inst))[0]
    p = len(free_idx)
    basis_c = np.zeros((p, dim))
    basis_c[np.arange(p), 4 * n + free_idx] = 1.0
    basis_s = np.zeros((n, dim))
    w = 1.0 / np.sqrt(5.0)
    cols = np.arange(n)
    for block in range(5):
        basis_s[cols, block * n + cols] = w
    return basis_c, basis_s
