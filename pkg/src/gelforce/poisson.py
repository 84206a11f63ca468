"""Poisson integration of depth gradients under zero Dirichlet boundaries.

Two interchangeable solvers share the same central-difference divergence:

* ``dst_poisson_solve`` diagonalizes the 5-point Laplacian with an
  orthonormal type-I discrete sine transform over the interior unknowns
  (eigenvalues 2cos(pi i/(W-1)) + 2cos(pi j/(H-1)) - 4 on the unit grid),
  giving an O(N log N) solve.
* ``dense_poisson_solve`` assembles the same 5-point system explicitly and
  factorizes it; it exists as a small-grid oracle for the spectral path.

The border ring of the returned height field is identically zero.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dstn
from scipy.sparse import eye, kron
from scipy.sparse.linalg import spsolve

from .fields import DepthMap, GradientField

_DENSE_LIMIT = 64  # guard against quadratic memory in the oracle


class SolverError(ValueError):
    """Raised on degenerate or oversized solver grids."""


def divergence(g: GradientField) -> np.ndarray:
    """Central-difference divergence d(gx)/dx + d(gy)/dy at interior pixels.

    Returns an (H-2, W-2) float64 array in row-major (y, x) order.
    """
    gx = g.gx
    gy = g.gy
    dx = 0.5 * (gx[1:-1, 2:] - gx[1:-1, :-2])
    dy = 0.5 * (gy[2:, 1:-1] - gy[:-2, 1:-1])
    return dx + dy


def _check_grid(g: GradientField) -> tuple[int, int]:
    h, w = g.height, g.width
    if h < 3 or w < 3:
        raise SolverError(f"grid must be at least 3x3, got {h}x{w}")
    return h, w


def dst_poisson_solve(g: GradientField) -> DepthMap:
    """Integrate a gradient field into a height map via sine-transform diagonalization."""
    h, w = _check_grid(g)
    f = divergence(g)

    fhat = dstn(f, type=1, norm="ortho")
    jj, ii = np.meshgrid(np.arange(1, h - 1), np.arange(1, w - 1), indexing="ij")
    lam = 2.0 * np.cos(np.pi * ii / (w - 1)) + 2.0 * np.cos(np.pi * jj / (h - 1)) - 4.0
    uhat = fhat / lam
    u = dstn(uhat, type=1, norm="ortho")

    out = np.zeros((h, w), dtype=np.float64)
    out[1:-1, 1:-1] = u
    return DepthMap(out)


def dense_poisson_solve(g: GradientField) -> DepthMap:
    """Direct factorization of the 5-point Dirichlet system (oracle, grids <= 64x64)."""
    h, w = _check_grid(g)
    if h > _DENSE_LIMIT or w > _DENSE_LIMIT:
        raise SolverError(f"dense oracle limited to {_DENSE_LIMIT}x{_DENSE_LIMIT}, got {h}x{w}")
    f = divergence(g)

    ny, nx = h - 2, w - 2
    # 1-D second-difference blocks; Dirichlet values outside the ring are zero.
    def second_diff(n):
        d = np.ones(n)
        from scipy.sparse import diags

        return diags([d[:-1], -2.0 * d, d[:-1]], [-1, 0, 1], format="csr")

    lap = kron(eye(ny), second_diff(nx)) + kron(second_diff(ny), eye(nx))
    u = spsolve(lap.tocsr(), f.reshape(-1))

    out = np.zeros((h, w), dtype=np.float64)
    out[1:-1, 1:-1] = u.reshape(ny, nx)
    return DepthMap(out)
