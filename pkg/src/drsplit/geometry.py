"""Affine subspaces and elementary projection combinators.

An affine subspace is stored as an orthonormal row basis plus an offset
point, which makes projection a two-matvec operation and keeps the
projector symmetric idempotent by construction.
"""

import numpy as np

__all__ = [
    "AffineSubspace",
    "half_sq_dist",
    "reflect",
    "relaxed_project",
]


def _as_finite_vector(x, dim=None, name="input"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise ValueError(f"{name} has length {x.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def _orthonormal_rows(span):
    """Modified Gram-Schmidt with a second re-orthogonalization pass.

    Dependent or near-zero rows are dropped, never inflated, so the result
    always has full row rank.
    """
    span = np.asarray(span, dtype=float)
    basis = []
    for row in span:
        w = row.copy()
        for _ in range(2):
            for b in basis:
                w -= (b @ w) * b
        norm = np.linalg.norm(w)
        if norm > 1e-10 * max(1.0, np.linalg.norm(row)):
            basis.append(w / norm)
    if not basis:
        return np.zeros((0, span.shape[1]))
    return np.array(basis)


class AffineSubspace:
    """{offset + t, t in span(basis rows)} with orthonormal basis rows."""

    def __init__(self, basis, offset):
        offset = _as_finite_vector(offset, name="offset")
        basis = np.asarray(basis, dtype=float)
        if basis.ndim != 2 or basis.shape[1] != offset.shape[0]:
            raise ValueError(
                f"basis shape {basis.shape} does not match ambient dimension "
                f"{offset.shape[0]}")
        if not np.all(np.isfinite(basis)):
            raise ValueError("basis contains non-finite entries")
        if basis.shape[0]:
            gram = basis @ basis.T
            if np.max(np.abs(gram - np.eye(basis.shape[0]))) > 1e-10:
                raise ValueError("basis rows must be orthonormal")
        self.basis = basis
        self.offset = offset

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def ambient_dim(self):
        return self.offset.shape[0]

    @classmethod
    def from_span(cls, span, offset=None):
        """Build from an arbitrary (possibly rank-deficient) spanning set."""
        span = np.asarray(span, dtype=float)
        if span.ndim != 2:
            raise ValueError("span must be a 2-D array of row vectors")
        if not np.all(np.isfinite(span)):
            raise ValueError("span contains non-finite entries")
        if offset is None:
            offset = np.zeros(span.shape[1])
        return cls(_orthonormal_rows(span), offset)

    @classmethod
    def hyperplane(cls, normal, rhs):
        """The set {x : <normal, x> = rhs}."""
        normal = _as_finite_vector(normal, name="normal")
        nn = normal @ normal
        if nn == 0.0:
            raise ValueError("normal must be nonzero")
        offset = (rhs / nn) * normal
        # orthonormal complement of the normal direction
        q, _ = np.linalg.qr(normal[:, None], mode="complete")
        return cls(q[:, 1:].T, offset)

    def project(self, x):
        x = _as_finite_vector(x, self.ambient_dim, name="point")
        d = x - self.offset
        return self.offset + self.basis.T @ (self.basis @ d)

    def linear_project(self, v):
        """Projection onto the parallel linear subspace (offset dropped)."""
        v = _as_finite_vector(v, self.ambient_dim, name="vector")
        return self.basis.T @ (self.basis @ v)

    def projector_matrix(self):
        return self.basis.T @ self.basis

    def contains(self, x, tol=1e-9):
        x = _as_finite_vector(x, self.ambient_dim, name="point")
        gap = np.linalg.norm(self.project(x) - x)
        return gap <= tol * max(1.0, float(np.linalg.norm(x)))

    def __repr__(self):
        return (f"AffineSubspace(dim={self.dim}, "
                f"ambient_dim={self.ambient_dim})")


def relaxed_project(proj, x, lam):
    """x + lam * (proj(x) - x); lam = 1 is the plain projection,
    lam = 2 the reflection.  Only 0 < lam <= 2 is sensible."""
    if not 0.0 < lam <= 2.0:
        raise ValueError(f"relaxation parameter must be in (0, 2], got {lam}")
    p = proj(x)
    if lam == 1.0:
        return p
    return x + lam * (p - x)


def reflect(proj, x):
    return relaxed_project(proj, x, 2.0)


def half_sq_dist(proj, x):
    """Half squared distance from x to the set proj projects onto."""
    d = np.asarray(x, dtype=float) - proj(x)
    return 0.5 * float(d @ d)
