"""
Cell-centred box grids and second-order stencils with zero-flux boundaries.

Every operator here uses mirror ghost cells: the ghost value outside a
boundary face equals the adjacent interior value, so the normal difference
across every boundary face is exactly zero.  Operators are written in flux
form (differences on faces, then divergence of the face fluxes), which makes
the discrete divergence theorem hold to roundoff:

    sum_cells (L f) * cell_volume == 0

Arrays are stored with shape ``grid.shape`` (axis 0 is x), flattened
row-major when serialised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray


class NonFiniteFieldError(ValueError):
    """Raised when an operator receives NaN or Inf values."""

    def __init__(self, cell: tuple[int, ...], value: float, name: str = "field"):
        self.cell = cell
        self.value = value
        super().__init__(f"{name} has non-finite value {value!r} at cell {cell}")


@dataclass(frozen=True)
class GridSpec:
    """
    Axis-aligned box split into ``cells[i]`` uniform cells of width ``spacing[i]``.

    Attributes
    ----------
    cells : tuple of int
        Cell counts per axis, each at least 4.
    spacing : tuple of float
        Positive cell widths per axis.
    """

    cells: tuple[int, ...]
    spacing: tuple[float, ...]

    def __post_init__(self) -> None:
        cells = tuple(int(n) for n in self.cells)
        spacing = tuple(float(h) for h in self.spacing)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "spacing", spacing)
        if len(cells) not in (1, 2, 3):
            raise ValueError(f"grid dimension must be 1, 2 or 3, got {len(cells)}")
        if len(spacing) != len(cells):
            raise ValueError("cells and spacing must have the same length")
        if any(n < 4 for n in cells):
            raise ValueError(f"every cell count must be >= 4, got {cells}")
        if not all(np.isfinite(h) and h > 0 for h in spacing):
            raise ValueError(f"every spacing must be positive and finite, got {spacing}")

    @classmethod
    def unit_box(cls, *cells: int) -> GridSpec:
        """Grid covering [0, 1]^dim."""
        return cls(tuple(cells), tuple(1.0 / n for n in cells))

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def domain_lengths(self) -> tuple[float, ...]:
        return tuple(n * h for n, h in zip(self.cells, self.spacing))

    @property
    def volume(self) -> float:
        return self.size * self.cell_volume

    def centers(self) -> tuple[NDArray[np.float64], ...]:
        """Cell-centre coordinate arrays broadcast to ``shape`` (``indexing='ij'``)."""
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One real value per cell of ``grid``."""

    grid: GridSpec
    values: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.size != self.grid.size:
            raise ValueError(
                f"field has {values.size} values but grid has {self.grid.size} cells"
            )
        object.__setattr__(self, "values", values.reshape(self.grid.shape))

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> ScalarField:
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> ScalarField:
        """Sample ``func(*coords)`` at cell centres."""
        return cls(grid, np.broadcast_to(func(*grid.centers()), grid.shape).copy())

    def check_finite(self, name: str = "field") -> ScalarField:
        check_finite(self.values, name)
        return self

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def copy(self) -> ScalarField:
        return ScalarField(self.grid, self.values.copy())


def check_finite(values: NDArray[np.float64], name: str = "field") -> None:
    """Raise :class:`NonFiniteFieldError` naming the first bad cell, if any."""
    bad = ~np.isfinite(values)
    if bad.any():
        flat = int(np.flatnonzero(bad)[0])
        cell = tuple(int(i) for i in np.unravel_index(flat, values.shape))
        raise NonFiniteFieldError(cell, float(values.flat[flat]), name)


# ---------------------------------------------------------------------------
# Array kernels (no validation; used inside solvers)
# ---------------------------------------------------------------------------


def _face_diff(u: NDArray[np.float64], axis: int, h: float) -> NDArray[np.float64]:
    """Differences on all faces along ``axis``, boundary faces set to zero."""
    d = np.diff(u, axis=axis) / h
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    return np.pad(d, pad)


def laplacian_values(u: NDArray[np.float64], spacing: Sequence[float]) -> NDArray[np.float64]:
    out = np.zeros_like(u)
    for axis, h in enumerate(spacing):
        out += np.diff(_face_diff(u, axis, h), axis=axis) / h
    return out


def face_mean(c: NDArray[np.float64], axis: int) -> NDArray[np.float64]:
    """Arithmetic mean of the two cells adjacent to each interior face."""
    lo = [slice(None)] * c.ndim
    hi = [slice(None)] * c.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (c[tuple(lo)] + c[tuple(hi)])


def div_flux_values(
    u: NDArray[np.float64],
    conductivity: NDArray[np.float64],
    spacing: Sequence[float],
) -> NDArray[np.float64]:
    """div(k grad u) in flux form with face k from the arithmetic cell mean."""
    out = np.zeros_like(u)
    for axis, h in enumerate(spacing):
        k = face_mean(conductivity, axis)
        flux = k * (np.diff(u, axis=axis) / h)
        pad = [(0, 0)] * u.ndim
        pad[axis] = (1, 1)
        out += np.diff(np.pad(flux, pad), axis=axis) / h
    return out


def grad_norm_sq_values(
    u: NDArray[np.float64], spacing: Sequence[float], scheme: str = "central"
) -> NDArray[np.float64]:
    """
    Cellwise |grad u|^2.

    ``scheme="central"`` squares the centred difference ``(u[i+1] - u[i-1]) / 2h``
    with mirror ghosts, so the normal component vanishes on the boundary.
    ``scheme="face"`` instead averages the squared differences on the two faces
    of the cell; its integral equals ``-<lap u, u>`` exactly, whereas the central
    form matches it only up to O(h^2).  Both are exact for linear profiles away
    from the boundary.
    """
    out = np.zeros_like(u)
    for axis, h in enumerate(spacing):
        d = _face_diff(u, axis, h)
        lo = [slice(None)] * u.ndim
        hi = [slice(None)] * u.ndim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        if scheme == "face":
            sq = d * d
            out += 0.5 * (sq[tuple(lo)] + sq[tuple(hi)])
        elif scheme == "central":
            c = 0.5 * (d[tuple(lo)] + d[tuple(hi)])
            out += c * c
        else:
            raise ValueError(f"unknown gradient scheme {scheme!r}")
    return out


def dirichlet_form(u: NDArray[np.float64], spacing: Sequence[float]) -> float:
    """Sum over faces of squared face differences times cell volume (= -<lap u, u>)."""
    vol = float(np.prod(spacing))
    return float(sum(np.sum(np.diff(u, axis=a) ** 2) / h**2 for a, h in enumerate(spacing)) * vol)


def neumann_laplacian_eigenvalues(grid: GridSpec) -> NDArray[np.float64]:
    """
    Eigenvalues of ``-laplacian`` in the DCT-II basis, shaped like the grid.

    The mirror-ghost Laplacian on cell centres is diagonalised by
    ``cos(pi k (i + 1/2) / n)``, with eigenvalue ``(4/h^2) sin^2(pi k / 2n)``.
    """
    lam = np.zeros(grid.shape)
    for axis, (n, h) in enumerate(zip(grid.cells, grid.spacing)):
        k = np.arange(n)
        ev = (4.0 / h**2) * np.sin(np.pi * k / (2 * n)) ** 2
        shape = [1] * grid.dim
        shape[axis] = n
        lam = lam + ev.reshape(shape)
    return lam


# ---------------------------------------------------------------------------
# Public field operators
# ---------------------------------------------------------------------------


def laplacian(f: ScalarField) -> ScalarField:
    """Second-order Laplacian with zero-flux (mirror ghost) boundaries."""
    f.check_finite()
    return ScalarField(f.grid, laplacian_values(f.values, f.grid.spacing))


def div_kappa_grad(theta: ScalarField, params) -> ScalarField:
    """Conservative ``div(kappa(theta) grad theta)``, kappa from ``constitutive.kappa``."""
    from .constitutive import kappa

    theta.check_finite("theta")
    k = kappa(theta.values, params)
    return ScalarField(theta.grid, div_flux_values(theta.values, k, theta.grid.spacing))


def grad_norm_sq(mu: ScalarField, scheme: str = "central") -> ScalarField:
    """Cellwise squared gradient magnitude; see :func:`grad_norm_sq_values`."""
    mu.check_finite()
    return ScalarField(mu.grid, grad_norm_sq_values(mu.values, mu.grid.spacing, scheme))


def integrate(f: ScalarField | ArrayLike, grid: GridSpec | None = None) -> float:
    """Midpoint-rule integral: sum of values times cell volume."""
    if isinstance(f, ScalarField):
        f.check_finite()
        return float(np.sum(f.values) * f.grid.cell_volume)
    return float(np.sum(f) * grid.cell_volume)


def mean(f: ScalarField | ArrayLike) -> float:
    """Spatial mean, integral divided by the box volume."""
    if isinstance(f, ScalarField):
        f.check_finite()
        return float(np.mean(f.values))
    return float(np.mean(f))


def inner(f: ScalarField, g: ScalarField) -> float:
    """Cell-volume-weighted dot product."""
    return float(np.sum(f.values * g.values) * f.grid.cell_volume)
