"""Cell-centered finite-volume operators on a uniform 1D interval.

Fields live at the ``M`` cell centers ``x_m = (m + 1/2) h``; fluxes and
gradients live at the ``M + 1`` faces, with the two boundary faces pinned to
zero (homogeneous Neumann walls).  Quadrature is the midpoint rule.  The
divergence is the exact negative adjoint of the face gradient under these
inner products, which is what makes summation-by-parts identities hold to
rounding in the energy estimates downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import diags

from .errors import DimensionMismatch, ValidationError


@dataclass(frozen=True)
class Grid1D:
    """Uniform 1D grid: interval length and cell count."""

    length: float
    cells: int

    def __post_init__(self):
        if not self.length > 0.0:
            raise ValidationError("length", "must be positive")
        if self.cells < 2:
            raise ValidationError("cells", "need at least 2 cells")

    @property
    def h(self) -> float:
        return self.length / self.cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.cells) + 0.5) * self.h


def _check_cells(grid: Grid1D, f: np.ndarray, what: str) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[0] != grid.cells:
        raise DimensionMismatch(
            f"{what} must have {grid.cells} rows, got {f.shape[0]}"
        )
    return f


def face_gradient(grid: Grid1D, f: np.ndarray) -> np.ndarray:
    """Two-point difference quotients at faces; zero at the two walls.

    ``f`` is ``(M,)`` or ``(M, k)``; the result gains one row.
    """
    f = _check_cells(grid, f, "cell field")
    out = np.zeros((grid.cells + 1,) + f.shape[1:])
    out[1:-1] = (f[1:] - f[:-1]) / grid.h
    return out


def divergence(grid: Grid1D, flux: np.ndarray) -> np.ndarray:
    """Per-cell face-flux balance ``(flux[m+1] - flux[m]) / h``."""
    flux = np.asarray(flux, dtype=float)
    if flux.shape[0] != grid.cells + 1:
        raise DimensionMismatch(
            f"face field must have {grid.cells + 1} rows, got {flux.shape[0]}"
        )
    return (flux[1:] - flux[:-1]) / grid.h


def neumann_laplacian(grid: Grid1D) -> np.ndarray:
    """Dense matrix of ``divergence(face_gradient(.))``.

    Symmetric, negative semidefinite, with constants in its kernel; the
    first and last diagonal entries are ``-1/h^2`` because the wall faces
    carry no flux.
    """
    return _laplacian_sparse(grid).toarray()


def _laplacian_sparse(grid: Grid1D):
    M = grid.cells
    main = np.full(M, -2.0)
    main[0] = -1.0
    main[-1] = -1.0
    off = np.ones(M - 1)
    return diags([off, main, off], [-1, 0, 1]) / grid.h**2


def laplacian_squared_lower_bands(grid: Grid1D) -> tuple[np.ndarray, ...]:
    """Lower diagonals (offsets 0, 1, 2) of the squared Neumann Laplacian.

    The square is pentadiagonal and symmetric, so these three bands define
    it; the implicit stepper assembles its fourth-order regularization term
    from them directly in banded storage.
    """
    L = _laplacian_sparse(grid)
    L2 = (L @ L).todia()
    return (L2.diagonal(0), L2.diagonal(-1), L2.diagonal(-2))


def integrate(grid: Grid1D, f: np.ndarray) -> np.ndarray | float:
    """Midpoint-rule integral over the interval: ``h * sum`` along axis 0."""
    f = _check_cells(grid, f, "cell field")
    total = f.sum(axis=0) * grid.h
    return float(total) if np.ndim(total) == 0 else total
