"""
Matrix-free symmetric stencil operators and conjugate-gradient solves.

All implicit sub-steps reduce to operators of the form

    A u = m * u + a * (-lap u) + b * lap(lap u) - div(k grad u)

with a cellwise non-negative ``m``, scalars ``a, b >= 0`` and a cellwise
conductivity ``k``.  With ``m > 0`` somewhere these are symmetric positive
definite in the cell-volume-weighted inner product.  When ``m``, ``k`` are
uniform the operator is diagonalised by the DCT-II, which gives an exact
inverse; for variable coefficients the same transform with averaged
coefficients is used as a preconditioner.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy import fft

from .lattice import GridSpec, ScalarField, div_flux_values, laplacian_values, neumann_laplacian_eigenvalues

if TYPE_CHECKING:
    from numpy.typing import NDArray


class SolverError(RuntimeError):
    """Conjugate gradients stopped before reaching the requested tolerance."""

    def __init__(self, message: str, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} (iterations={iterations}, relative residual={residual:.3e})")


@dataclass
class SolveInfo:
    iterations: int
    residual: float


@dataclass(frozen=True, eq=False)
class StencilOperator:
    """
    ``m*u - a*lap(u) + b*lap(lap(u)) - div(k grad u)`` on ``grid``.

    Parameters
    ----------
    mass : float or ndarray
        Zeroth-order coefficient, cellwise or uniform.
    diffusion : float
        Coefficient ``a`` of ``-lap``.
    biharmonic : float
        Coefficient ``b`` of ``lap(lap)``.
    conductivity : ndarray or None
        Cell conductivity for ``-div(k grad)``; face values are arithmetic means.
    """

    grid: GridSpec
    mass: float | NDArray[np.float64] = 0.0
    diffusion: float = 0.0
    biharmonic: float = 0.0
    conductivity: NDArray[np.float64] | None = None

    def apply(self, u: NDArray[np.float64]) -> NDArray[np.float64]:
        sp = self.grid.spacing
        out = self.mass * u
        if self.diffusion or self.biharmonic:
            lap = laplacian_values(u, sp)
            if self.diffusion:
                out = out - self.diffusion * lap
            if self.biharmonic:
                out = out + self.biharmonic * laplacian_values(lap, sp)
        if self.conductivity is not None:
            out = out - div_flux_values(u, self.conductivity, sp)
        return out

    __call__ = apply

    def spectral_preconditioner(self) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
        """DCT-II inverse of the operator with coefficients replaced by their means."""
        lam = neumann_laplacian_eigenvalues(self.grid)
        k_bar = 0.0 if self.conductivity is None else float(np.mean(self.conductivity))
        symbol = (
            float(np.mean(self.mass))
            + (self.diffusion + k_bar) * lam
            + self.biharmonic * lam * lam
        )
        if np.any(symbol <= 0):
            raise ValueError("operator symbol is not positive; no zeroth-order term?")
        inv = 1.0 / symbol

        def apply_inverse(r: NDArray[np.float64]) -> NDArray[np.float64]:
            return fft.idctn(fft.dctn(r, type=2, norm="ortho") * inv, type=2, norm="ortho")

        return apply_inverse


def linear_solve(
    apply_operator: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    rhs: NDArray[np.float64] | ScalarField,
    tol: float = 1e-10,
    maxiter: int | None = None,
    x0: NDArray[np.float64] | None = None,
    preconditioner: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None,
    return_info: bool = False,
):
    """
    Preconditioned conjugate gradients for a symmetric positive definite operator.

    Stops when ``||A x - rhs|| <= tol * ||rhs||`` (Euclidean norms over cells).
    The returned residual is recomputed from ``A x`` rather than taken from the
    recurrence.

    Raises
    ------
    SolverError
        If ``maxiter`` iterations pass without meeting the tolerance.
    """
    field_grid = None
    if isinstance(rhs, ScalarField):
        field_grid = rhs.grid
        b = rhs.values
    else:
        b = np.asarray(rhs, dtype=float)
    if maxiter is None:
        maxiter = 10 * b.size

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        x = np.zeros_like(b)
        info = SolveInfo(0, 0.0)
        return _wrap(x, field_grid, info, return_info)

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_operator(x) if x0 is not None else b.copy()
    z = preconditioner(r) if preconditioner is not None else r
    p = z.copy()
    rz = float(np.vdot(r, z))
    it = 0
    res = float(np.linalg.norm(r)) / bnorm
    while res > tol:
        if it >= maxiter:
            raise SolverError("conjugate gradients did not converge", it, res)
        Ap = apply_operator(p)
        pAp = float(np.vdot(p, Ap))
        if pAp <= 0.0:
            raise SolverError("operator is not positive definite", it, res)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = float(np.linalg.norm(r)) / bnorm
        if res <= tol:
            # guard against drift of the recursive residual
            r = b - apply_operator(x)
            res = float(np.linalg.norm(r)) / bnorm
            if res <= tol:
                break
        z = preconditioner(r) if preconditioner is not None else r
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new

    return _wrap(x, field_grid, SolveInfo(it, res), return_info)


def _wrap(x, grid, info, return_info):
    out = ScalarField(grid, x) if grid is not None else x
    return (out, info) if return_info else out
