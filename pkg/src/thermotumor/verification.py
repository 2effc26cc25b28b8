"""
Manufactured-solution convergence studies and dense direct-solve oracles.

The manufactured fields on [0,1]^2 are, with ``c = cos(pi x) cos(pi y)`` and
``e = exp(-t)``::

    phi   = a_phi * c * e
    theta = 1 + a_theta * c * e
    sigma = sigma_B + a_sigma * c * e

All three have zero normal derivative on the box.  Source terms ``g`` are
defined so that these solve the governing equations with ``+ g`` on the right:

    g_phi   = phi_t - lap mu - (P sigma - A) h(phi)
    g_theta = theta_t + theta phi_t - div(kappa(theta) grad theta) - |grad mu|^2
    g_sigma = sigma_t - lap sigma + C sigma h(phi) - B (sigma_B - sigma)

with ``mu = -lap phi + F'(phi) - theta``.  Using ``lap c = -2 pi^2 c``::

    lap mu      = -4 pi^4 phi + F'''(phi) |grad phi|^2 - 2 pi^2 F''(phi) phi + 2 pi^2 a_theta c e
    grad mu     = e grad c [a_phi (2 pi^2 + F''(phi)) - a_theta]
    div(k grad) = kappa'(theta) |grad theta|^2 + kappa(theta) lap theta

The closed forms are cross-checked against nested 9-point finite differences
(with one Richardson refinement) of the fields themselves before a case is
handed out.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from . import constitutive as cst
from .dynamics import Forcing, SimState, StepConfig, StepFailure, advance
from .lattice import GridSpec, ScalarField
from .linalg import StencilOperator

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from .constitutive import ModelParams

PI = math.pi

# 8th-order central stencils on offsets -4..4
_D1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
_D2 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])
_OFFSETS = np.arange(-4, 5)


class OracleMismatch(ValueError):
    """Closed-form manufactured sources disagree with the differentiation oracle."""


class SingularOperatorError(ValueError):
    """The assembled operator has the constants in its kernel."""


# ---------------------------------------------------------------------------
# Manufactured case
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedCase:
    params: ModelParams
    amp_phi: float = 0.3
    amp_theta: float = 0.2
    amp_sigma: float = 0.1

    def __post_init__(self) -> None:
        if 1.0 - abs(self.amp_theta) < 0.5:
            raise ValueError("manufactured theta must stay >= 0.5")
        sb = self.params.sigma_B
        if not (0.0 < sb - abs(self.amp_sigma) and sb + abs(self.amp_sigma) < 1.0):
            raise ValueError("manufactured sigma must stay inside (0,1)")
        if abs(self.amp_phi) >= 1.0:
            raise ValueError("manufactured phi must stay inside (-1,1)")

    # fields -----------------------------------------------------------------

    @staticmethod
    def _c(x, y):
        return np.cos(PI * x) * np.cos(PI * y)

    @staticmethod
    def _grad_c_sq(x, y):
        sx, cx = np.sin(PI * x), np.cos(PI * x)
        sy, cy = np.sin(PI * y), np.cos(PI * y)
        return PI**2 * ((sx * cy) ** 2 + (cx * sy) ** 2)

    def phi(self, x, y, t):
        return self.amp_phi * self._c(x, y) * np.exp(-t)

    def theta(self, x, y, t):
        return 1.0 + self.amp_theta * self._c(x, y) * np.exp(-t)

    def sigma(self, x, y, t):
        return self.params.sigma_B + self.amp_sigma * self._c(x, y) * np.exp(-t)

    def mu(self, x, y, t):
        phi = self.phi(x, y, t)
        return 2 * PI**2 * phi + cst.potential_dF(phi) - self.theta(x, y, t)

    # closed-form sources -----------------------------------------------------

    def g_phi(self, x, y, t):
        p = self.params
        e = np.exp(-t)
        c = self._c(x, y)
        phi = self.phi(x, y, t)
        grad_phi_sq = (self.amp_phi * e) ** 2 * self._grad_c_sq(x, y)
        lap_mu = (
            -4 * PI**4 * phi
            + 24.0 * phi * grad_phi_sq
            - 2 * PI**2 * cst.potential_d2F(phi) * phi
            + 2 * PI**2 * self.amp_theta * c * e
        )
        return -phi - lap_mu - (p.P * self.sigma(x, y, t) - p.A) * cst.h_interp(phi)

    def g_theta(self, x, y, t):
        p = self.params
        e = np.exp(-t)
        c = self._c(x, y)
        phi = self.phi(x, y, t)
        theta = self.theta(x, y, t)
        gc2 = self._grad_c_sq(x, y)
        theta_t = -self.amp_theta * c * e
        phi_t = -phi
        div_flux = (
            cst.kappa_prime(theta, p) * (self.amp_theta * e) ** 2 * gc2
            + cst.kappa(theta, p) * (-2 * PI**2 * self.amp_theta * c * e)
        )
        grad_mu_sq = e**2 * gc2 * (self.amp_phi * (2 * PI**2 + cst.potential_d2F(phi)) - self.amp_theta) ** 2
        return theta_t + theta * phi_t - div_flux - grad_mu_sq

    def g_sigma(self, x, y, t):
        p = self.params
        e = np.exp(-t)
        c = self._c(x, y)
        sigma = self.sigma(x, y, t)
        sigma_t = -self.amp_sigma * c * e
        lap_sigma = -2 * PI**2 * self.amp_sigma * c * e
        h = cst.h_interp(self.phi(x, y, t))
        return sigma_t - lap_sigma + p.C * sigma * h - p.B * (p.sigma_B - sigma)

    # grid helpers ---------------------------------------------------------------

    def state(self, grid: GridSpec, t: float) -> SimState:
        x, y = grid.centers()
        return SimState(
            t,
            ScalarField(grid, self.phi(x, y, t)),
            ScalarField(grid, self.theta(x, y, t)),
            ScalarField(grid, self.sigma(x, y, t)),
        )

    def forcing(self, grid: GridSpec) -> Callable[[float], Forcing]:
        x, y = grid.centers()

        def at(t: float) -> Forcing:
            return Forcing(self.g_phi(x, y, t), self.g_theta(x, y, t), self.g_sigma(x, y, t))

        return at

    # oracle -----------------------------------------------------------------

    def oracle_sources(self, x, y, t, h: float = 1e-2, ht: float = 1e-3):
        """Sources recomputed by finite differences of the manufactured fields only."""
        p = self.params
        phi, theta, sigma = self.phi, self.theta, self.sigma

        def mu(x, y, t):
            return -fd_laplacian(phi, x, y, t, h) + cst.potential_dF(phi(x, y, t)) - theta(x, y, t)

        def flux(axis):
            def f(x, y, t):
                return cst.kappa(theta(x, y, t), p) * fd_partial(theta, x, y, t, axis, 1, h)

            return f

        phi_v, theta_v, sigma_v = phi(x, y, t), theta(x, y, t), sigma(x, y, t)
        h_v = cst.h_interp(phi_v)
        phi_t = fd_partial(phi, x, y, t, 2, 1, ht)
        g_phi = phi_t - fd_laplacian(mu, x, y, t, h) - (p.P * sigma_v - p.A) * h_v

        div_flux = fd_partial(flux(0), x, y, t, 0, 1, h) + fd_partial(flux(1), x, y, t, 1, 1, h)
        grad_mu_sq = fd_partial(mu, x, y, t, 0, 1, h) ** 2 + fd_partial(mu, x, y, t, 1, 1, h) ** 2
        g_theta = fd_partial(theta, x, y, t, 2, 1, ht) + theta_v * phi_t - div_flux - grad_mu_sq

        g_sigma = (
            fd_partial(sigma, x, y, t, 2, 1, ht)
            - fd_laplacian(sigma, x, y, t, h)
            + p.C * sigma_v * h_v
            - p.B * (p.sigma_B - sigma_v)
        )
        return g_phi, g_theta, g_sigma

    def check_sources(self, n_points: int = 100, seed: int = 0, rtol: float = 1e-6) -> float:
        """
        Compare closed-form and oracle sources at random space-time points.

        Returns the worst relative error ``|a - b| / max(|b|, 1)``; raises
        :class:`OracleMismatch` above ``rtol``.
        """
        rng = np.random.default_rng(seed)
        x, y = rng.uniform(0, 1, n_points), rng.uniform(0, 1, n_points)
        t = rng.uniform(0, 1, n_points)
        exact = (self.g_phi(x, y, t), self.g_theta(x, y, t), self.g_sigma(x, y, t))
        oracle = self.oracle_sources(x, y, t)
        worst = 0.0
        for name, a, b in zip(("g_phi", "g_theta", "g_sigma"), exact, oracle):
            err = float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0)))
            worst = max(worst, err)
            if err > rtol:
                raise OracleMismatch(f"{name}: closed form differs from oracle by {err:.3e}")
        return worst


def default_case(params: ModelParams, check: bool = True, **amplitudes) -> ManufacturedCase:
    """Cosine manufactured case on [0,1]^2, verified against the oracle unless ``check=False``."""
    case = ManufacturedCase(params, **amplitudes)
    if check:
        case.check_sources()
    return case


def _stencil(f, x, y, t, axis, weights, step):
    acc = 0.0
    for k, w in zip(_OFFSETS, weights):
        if w == 0.0:
            continue
        args = [x, y, t]
        args[axis] = args[axis] + k * step
        acc = acc + w * f(*args)
    return acc / step ** (1 if weights is _D1 else 2)


def fd_partial(f, x, y, t, axis: int, order: int, step: float):
    """Partial derivative of ``f(x, y, t)`` along ``axis`` (0=x, 1=y, 2=t), order 1 or 2."""
    weights = _D1 if order == 1 else _D2
    coarse = _stencil(f, x, y, t, axis, weights, step)
    fine = _stencil(f, x, y, t, axis, weights, step / 2)
    return (256.0 * fine - coarse) / 255.0


def fd_laplacian(f, x, y, t, step: float):
    return fd_partial(f, x, y, t, 0, 2, step) + fd_partial(f, x, y, t, 1, 2, step)


# ---------------------------------------------------------------------------
# Convergence study
# ---------------------------------------------------------------------------


@dataclass
class LevelResult:
    n: int
    h: float
    dt: float
    steps: int
    err_phi: float
    err_theta: float
    err_sigma: float
    order_phi: float = float("nan")
    order_theta: float = float("nan")
    order_sigma: float = float("nan")
    dt_half_change: float = float("nan")
    seconds: float = 0.0


@dataclass
class OrderTable:
    levels: list[LevelResult] = field(default_factory=list)

    COLUMNS = ("n", "h", "dt", "steps", "err_phi", "err_theta", "err_sigma",
               "order_phi", "order_theta", "order_sigma", "dt_half_change", "seconds")

    def min_order(self) -> float:
        orders = [v for lv in self.levels[1:] for v in (lv.order_phi, lv.order_theta, lv.order_sigma)]
        return min(orders) if orders else float("nan")

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for lv in self.levels:
                w.writerow([_fmt(getattr(lv, c)) for c in self.COLUMNS])
        return path


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else format(float(v), ".17g")


def l2_error(field_values: NDArray[np.float64], exact: NDArray[np.float64], grid: GridSpec) -> float:
    return math.sqrt(float(np.sum((field_values - exact) ** 2)) * grid.cell_volume)


def run_level(case: ManufacturedCase, n: int, dt: float, t_final: float,
              lin_tol: float = 1e-10) -> tuple[float, float, float, int]:
    """Integrate the forced system on an ``n x n`` grid; return L2 errors and step count."""
    grid = GridSpec.unit_box(n, n)
    steps = max(1, int(math.ceil(t_final / dt - 1e-9)))
    cfg = StepConfig(t_final / steps, lin_tol=lin_tol)
    forcing = case.forcing(grid)
    state = case.state(grid, 0.0)
    for k in range(steps):
        try:
            state, _ = advance(state, cfg, case.params, forcing)
        except StepFailure as exc:
            raise StepFailure(f"level n={n} aborted at step {k}: {exc}", exc.subsystem) from exc
    exact = case.state(grid, state.t)
    return (
        l2_error(state.phi.values, exact.phi.values, grid),
        l2_error(state.theta.values, exact.theta.values, grid),
        l2_error(state.sigma.values, exact.sigma.values, grid),
        steps,
    )


def convergence_study(
    case: ManufacturedCase,
    grids: Sequence[int] = (32, 64, 128),
    dt_rule: Callable[[float], float] = lambda h: h * h / 8,
    t_final: float = 0.02,
    dt_check: bool = True,
    lin_tol: float = 1e-10,
) -> OrderTable:
    """
    L2 errors against the manufactured fields at ``t_final`` and fitted orders.

    ``dt_rule(h)`` sets the step on each level (``dt ~ h^2`` keeps the
    first-order time error at the size of the second-order spatial error).
    With ``dt_check`` the finest level is rerun at half the step and the
    largest relative change of the three errors is reported.
    """
    if len(grids) < 3:
        raise ValueError("a convergence study needs at least 3 refinement levels")
    table = OrderTable()
    for n in grids:
        h = 1.0 / n
        t0 = time.perf_counter()
        e_phi, e_theta, e_sigma, steps = run_level(case, n, dt_rule(h), t_final, lin_tol)
        table.levels.append(LevelResult(n, h, t_final / steps, steps, e_phi, e_theta, e_sigma,
                                        seconds=time.perf_counter() - t0))
    for coarse, fine in zip(table.levels, table.levels[1:]):
        ratio = math.log(coarse.h / fine.h)
        fine.order_phi = _order(coarse.err_phi, fine.err_phi, ratio)
        fine.order_theta = _order(coarse.err_theta, fine.err_theta, ratio)
        fine.order_sigma = _order(coarse.err_sigma, fine.err_sigma, ratio)
    if dt_check:
        last = table.levels[-1]
        errs = run_level(case, last.n, last.dt / 2, t_final, lin_tol)[:3]
        base = (last.err_phi, last.err_theta, last.err_sigma)
        last.dt_half_change = max(abs(a - b) / b for a, b in zip(errs, base) if b > 0) if any(base) else 0.0
    return table


def _order(e_coarse: float, e_fine: float, log_ratio: float) -> float:
    if e_coarse <= 0 or e_fine <= 0:
        return float("nan")
    return math.log(e_coarse / e_fine) / log_ratio


# ---------------------------------------------------------------------------
# Dense oracle
# ---------------------------------------------------------------------------


def _neighbours(grid: GridSpec):
    """Yield ``(i, j, axis)`` for every interior face between flat cells i < j."""
    idx = np.arange(grid.size).reshape(grid.shape)
    for axis in range(grid.dim):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        for i, j in zip(idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()):
            yield int(i), int(j), axis


def assemble_dense(op: StencilOperator) -> NDArray[np.float64]:
    """Explicit matrix of ``op`` built face by face (independent of ``op.apply``)."""
    grid = op.grid
    n = grid.size
    lap = np.zeros((n, n))
    cond = np.zeros((n, n))
    kflat = None if op.conductivity is None else np.asarray(op.conductivity, float).ravel()
    for i, j, axis in _neighbours(grid):
        w = 1.0 / grid.spacing[axis] ** 2
        lap[i, i] -= w
        lap[j, j] -= w
        lap[i, j] += w
        lap[j, i] += w
        if kflat is not None:
            kf = 0.5 * (kflat[i] + kflat[j]) * w
            cond[i, i] += kf
            cond[j, j] += kf
            cond[i, j] -= kf
            cond[j, i] -= kf
    mass = np.broadcast_to(np.asarray(op.mass, float), grid.shape).ravel()
    return np.diag(mass) - op.diffusion * lap + op.biharmonic * (lap @ lap) + cond


def dense_oracle_solve(op: StencilOperator, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
    """
    Direct dense solve of ``op x = rhs`` on a tiny grid (at most 16 cells per axis).

    Raises
    ------
    SingularOperatorError
        If the operator has no positive zeroth-order term: every stencil here
        annihilates constants under zero-flux boundaries.
    """
    grid = op.grid
    if max(grid.cells) > 16:
        raise ValueError("dense oracle is limited to grids with at most 16 cells per axis")
    mass = np.broadcast_to(np.asarray(op.mass, float), grid.shape)
    if not np.any(mass > 0):
        raise SingularOperatorError(
            "operator is singular (constants in the kernel); add a positive diagonal shift"
        )
    a = assemble_dense(op)
    x = np.linalg.solve(a, np.asarray(rhs, float).ravel())
    return x.reshape(grid.shape)
