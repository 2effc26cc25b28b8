"""
Semi-implicit time stepping for the coupled tumour / temperature / nutrient system.

One step advances ``(phi, theta, sigma)`` from ``t`` to ``t + dt`` in the fixed
order phi -> mu -> sigma -> theta:

1. phi: linearly stabilised Cahn-Hilliard update

       (phi' - phi)/dt = lap[-lap phi' + S(phi' - phi) + beta(phi) - lam*phi - theta]
                         + (P sigma - A) h(phi)

2. mu' = -lap phi' + F'(phi') - theta
3. sigma: implicit reaction-diffusion

       (1/dt - lap + C h(phi) + B) sigma' = sigma/dt + B sigma_B

4. theta: frozen conductivity, the theta*phi_t coupling taken implicitly

       theta' (1 + dphi)/dt - div(kappa(theta) grad theta') = theta/dt + |grad mu'|^2

Steps 3 and 4 are M-matrix solves, which is what keeps ``sigma`` inside its
invariant interval and ``theta`` positive.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, NamedTuple

import numpy as np

from . import constitutive as cst
from .lattice import GridSpec, ScalarField, check_finite, grad_norm_sq_values, laplacian_values
from .linalg import SolveInfo, SolverError, StencilOperator, linear_solve

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from .constitutive import ModelParams

log = logging.getLogger(__name__)

ORDERING = "phi,mu,sigma,theta"


class StepFailure(RuntimeError):
    """A sub-step could not be completed."""

    def __init__(self, message: str, subsystem: str, residual: float | None = None):
        self.subsystem = subsystem
        self.residual = residual
        super().__init__(f"[{subsystem}] {message}")


class StepRejected(StepFailure):
    """The step is inadmissible for this ``dt`` (reduce ``dt`` and retry)."""


class Forcing(NamedTuple):
    """Extra volume sources added to the phi, theta and sigma equations."""

    phi: NDArray[np.float64] | float = 0.0
    theta: NDArray[np.float64] | float = 0.0
    sigma: NDArray[np.float64] | float = 0.0


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    phi: ScalarField
    theta: ScalarField
    sigma: ScalarField

    def __post_init__(self) -> None:
        g = self.phi.grid
        if self.theta.grid != g or self.sigma.grid != g:
            raise ValueError("phi, theta and sigma must share one grid")

    @property
    def grid(self) -> GridSpec:
        return self.phi.grid

    @classmethod
    def uniform(cls, grid: GridSpec, phi: float, theta: float, sigma: float, t: float = 0.0) -> SimState:
        return cls(
            t,
            ScalarField.constant(grid, phi),
            ScalarField.constant(grid, theta),
            ScalarField.constant(grid, sigma),
        )

    def validate(self, sigma_upper: float | None = None, tol: float = 1e-12) -> list[str]:
        """Return a list of violated state invariants (empty when valid)."""
        problems = []
        for name in ("phi", "theta", "sigma"):
            v = getattr(self, name).values
            if not np.all(np.isfinite(v)):
                problems.append(f"{name} has non-finite values")
        if not problems:
            if self.theta.min() <= 0.0:
                problems.append(f"theta not positive (min {self.theta.min():.3e})")
            if self.sigma.min() < -tol:
                problems.append(f"sigma below 0 (min {self.sigma.min():.3e})")
            if sigma_upper is not None and self.sigma.max() > sigma_upper + tol:
                problems.append(
                    f"sigma above bound {sigma_upper:.17g} (max {self.sigma.max():.17g})"
                )
        return problems


@dataclass(frozen=True)
class StepConfig:
    dt: float
    lin_tol: float = 1e-10
    lin_maxiter: int | None = None
    ordering: str = ORDERING
    bound_tol: float = 1e-12
    preconditioned: bool = True

    def __post_init__(self) -> None:
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not 0.0 < self.lin_tol < 1.0:
            raise ValueError(f"lin_tol must lie in (0,1), got {self.lin_tol!r}")
        if self.ordering != ORDERING:
            raise ValueError(f"only the ordering {ORDERING!r} is supported")

    def maxiter(self, grid: GridSpec) -> int:
        return self.lin_maxiter if self.lin_maxiter else 10 * grid.size

    def halved(self) -> StepConfig:
        return StepConfig(self.dt / 2, self.lin_tol, self.lin_maxiter, self.ordering,
                          self.bound_tol, self.preconditioned)


@dataclass
class StepReport:
    dt: float
    iterations: dict[str, int] = field(default_factory=dict)
    residuals: dict[str, float] = field(default_factory=dict)
    clamp_events: int = 0
    theta_min: float = float("nan")
    sigma_min: float = float("nan")
    sigma_max: float = float("nan")
    violations: list[str] = field(default_factory=list)
    mu: ScalarField | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return not self.violations


def _check_ready(params: ModelParams) -> None:
    if params.eps != 1.0 or params.chi_phi != 0.0:
        raise NotImplementedError("time stepping is implemented for eps = 1, chi_phi = 0 only")


def _solve(op: StencilOperator, rhs, cfg: StepConfig, subsystem: str):
    pre = op.spectral_preconditioner() if cfg.preconditioned else None
    try:
        return linear_solve(op, rhs, cfg.lin_tol, cfg.maxiter(op.grid),
                            preconditioner=pre, return_info=True)
    except SolverError as exc:
        raise StepFailure(str(exc), subsystem, exc.residual) from exc


def compute_mu(phi: ScalarField, theta: ScalarField, params: ModelParams) -> ScalarField:
    """Chemical potential ``-lap phi + F'(phi) - theta``."""
    phi.check_finite("phi")
    theta.check_finite("theta")
    sp = phi.grid.spacing
    mu = -laplacian_values(phi.values, sp) + cst.potential_dF(phi.values) - theta.values
    return ScalarField(phi.grid, mu)


def growth_source(phi: NDArray[np.float64], sigma: NDArray[np.float64], params: ModelParams):
    """Mass source ``(P sigma - A) h(phi)``."""
    return (params.P * sigma - params.A) * cst.h_interp(phi)


def phi_operator(grid: GridSpec, cfg: StepConfig, params: ModelParams) -> StencilOperator:
    """``I/dt + lap^2 - S lap``."""
    return StencilOperator(grid, mass=1.0 / cfg.dt, diffusion=params.S, biharmonic=1.0)


def sigma_operator(phi: NDArray[np.float64], grid: GridSpec, cfg: StepConfig, params: ModelParams) -> StencilOperator:
    """``I/dt - lap + C h(phi) + B``."""
    mass = 1.0 / cfg.dt + params.B + params.C * cst.h_interp(phi)
    return StencilOperator(grid, mass=mass, diffusion=1.0)


def theta_operator(theta: NDArray[np.float64], dphi: NDArray[np.float64], grid: GridSpec,
                   cfg: StepConfig, params: ModelParams) -> StencilOperator:
    """``(1 + dphi)/dt - div(kappa(theta) grad .)``."""
    return StencilOperator(grid, mass=(1.0 + dphi) / cfg.dt, conductivity=cst.kappa(theta, params))


def step_phi(state: SimState, cfg: StepConfig, params: ModelParams,
             source: NDArray[np.float64] | float = 0.0, return_info: bool = False):
    """
    New tumour phase ``phi'``.

    The operator maps constants to constants/dt, so the mean of ``phi'`` is set
    directly from the mean of the right-hand side and CG only resolves the
    zero-mean part.  This makes the discrete mass-rate identity hold to
    roundoff rather than to the solver tolerance.
    """
    _check_ready(params)
    grid = state.grid
    sp = grid.spacing
    dt = cfg.dt
    phi, theta, sigma = state.phi.values, state.theta.values, state.sigma.values
    explicit = cst.beta(phi, params.lam) - params.lam * phi - params.S * phi - theta
    rhs = phi / dt + laplacian_values(explicit, sp) + growth_source(phi, sigma, params) + source
    check_finite(rhs, "phi right-hand side")

    rhs_mean = float(np.mean(rhs))
    fluct, info = _solve(phi_operator(grid, cfg, params), rhs - rhs_mean, cfg, "phi")
    new = dt * rhs_mean + (fluct - np.mean(fluct))
    out = ScalarField(grid, new)
    return (out, info) if return_info else out


def step_sigma(state: SimState, cfg: StepConfig, params: ModelParams,
               source: NDArray[np.float64] | float = 0.0, return_info: bool = False):
    """New nutrient ``sigma'``; consumption uses ``h(phi)`` at the old time level."""
    _check_ready(params)
    grid = state.grid
    rhs = state.sigma.values / cfg.dt + params.B * params.sigma_B + source
    rhs = np.broadcast_to(rhs, grid.shape).astype(float)
    op = sigma_operator(state.phi.values, grid, cfg, params)
    new, info = _solve(op, rhs, cfg, "sigma")
    out = ScalarField(grid, new)
    return (out, info) if return_info else out


def step_theta(state: SimState, phi_new: ScalarField, mu_new: ScalarField, cfg: StepConfig,
               params: ModelParams, source: NDArray[np.float64] | float = 0.0,
               return_info: bool = False):
    """
    New temperature ``theta'``.

    Raises
    ------
    StepRejected
        If ``1 + (phi' - phi) <= 0`` in some cell; the system would lose its
        M-matrix structure there and positivity could fail.
    """
    _check_ready(params)
    grid = state.grid
    dphi = phi_new.values - state.phi.values
    bad = 1.0 + dphi <= 0.0
    if bad.any():
        cell = tuple(int(i) for i in np.unravel_index(int(np.flatnonzero(bad)[0]), grid.shape))
        raise StepRejected(
            f"1 + (phi' - phi) <= 0 at cell {cell}; reduce dt (currently {cfg.dt:g})", "theta"
        )
    theta = state.theta.values
    heat = grad_norm_sq_values(mu_new.values, grid.spacing)
    rhs = theta / cfg.dt + heat + source
    op = theta_operator(theta, dphi, grid, cfg, params)
    new, info = _solve(op, rhs, cfg, "theta")
    out = ScalarField(grid, new)
    return (out, info) if return_info else out


def advance(state: SimState, cfg: StepConfig, params: ModelParams,
            forcing: Callable[[float], Forcing] | None = None) -> tuple[SimState, StepReport]:
    """
    One full step in the order phi, mu, sigma, theta.

    ``forcing(t)`` optionally returns volume sources evaluated at the new time
    level (used for manufactured solutions); with forcing present the nutrient
    bound is not checked since the sources may legitimately break it.

    Invariant violations are recorded in ``report.violations`` rather than
    raised; solver failures and rejected steps raise :class:`StepFailure`.
    """
    _check_ready(params)
    src = forcing(state.t + cfg.dt) if forcing is not None else Forcing()
    report = StepReport(dt=cfg.dt)

    phi_new, info = step_phi(state, cfg, params, src.phi, return_info=True)
    _record(report, "phi", info)
    mu_new = compute_mu(phi_new, state.theta, params)
    sigma_new, info = step_sigma(state, cfg, params, src.sigma, return_info=True)
    _record(report, "sigma", info)
    theta_new, info = step_theta(state, phi_new, mu_new, cfg, params, src.theta, return_info=True)
    _record(report, "theta", info)

    new = SimState(state.t + cfg.dt, phi_new, theta_new, sigma_new)
    upper = None if forcing is not None else max(state.sigma.max(), params.sigma_B)
    report.violations = new.validate(upper, cfg.bound_tol)
    report.clamp_events = cst.clamp_count(state.theta.values, params) + cst.clamp_count(
        theta_new.values, params
    )
    if report.clamp_events:
        report.violations.append(f"{report.clamp_events} theta clamp events")
    report.theta_min = theta_new.min()
    report.sigma_min = sigma_new.min()
    report.sigma_max = sigma_new.max()
    report.mu = mu_new
    for name, res in report.residuals.items():
        if res > cfg.lin_tol:
            report.violations.append(f"{name} solve residual {res:.3e} above lin_tol")
    if report.violations:
        log.warning("step to t=%g flagged: %s", new.t, "; ".join(report.violations))
    return new, report


def _record(report: StepReport, name: str, info: SolveInfo) -> None:
    report.iterations[name] = info.iterations
    report.residuals[name] = info.residual
