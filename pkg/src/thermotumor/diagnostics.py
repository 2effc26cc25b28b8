"""
Energy, entropy and balance-law monitors evaluated on consecutive states.

The continuous identities being tracked are

    d/dt (1/2 |grad phi|^2 + int F(phi) + int theta) = int (P sigma - A) h(phi) mu
    d/dt int (-log theta - phi) = -D,
    D = int |grad mu|^2 / theta + int |grad log theta|^2 + k_q int |grad theta^(q/2)|^2
    d/dt int theta + int theta phi_t = int |grad mu|^2

with ``k_q = 4/q^2`` (chain rule: ``theta^(q-2) |grad theta|^2 = (2/q)^2 |grad theta^(q/2)|^2``).
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from . import constitutive as cst
from .dynamics import SimState, growth_source
from .lattice import ScalarField, grad_norm_sq_values

CSV_HEADER = (
    "t,energy,entropy,entropy_production,phi_mean,sigma_min,sigma_max,theta_min,"
    "theta_max,grad_phi_sq,int_F,int_theta,sigma_l2,res_energy,res_mass,res_theta"
)


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    energy: float
    entropy: float
    entropy_production: float
    phi_mean: float
    sigma_min: float
    sigma_max: float
    theta_min: float
    theta_max: float
    grad_phi_sq: float
    int_F: float
    int_theta: float
    sigma_l2: float
    res_energy: float
    res_mass: float
    res_theta: float

    def values(self) -> tuple[float, ...]:
        return astuple(self)

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def is_consistent(self) -> bool:
        return (
            all(math.isfinite(v) for v in self.values())
            and self.sigma_min <= self.sigma_max
            and self.theta_min <= self.theta_max
        )


def k_q(q: float) -> float:
    return 4.0 / (q * q)


def _integral(values, grid) -> float:
    return float(np.sum(values) * grid.cell_volume)


def grad_phi_sq(state: SimState) -> float:
    """``||grad phi||^2``."""
    g = state.grid
    return _integral(grad_norm_sq_values(state.phi.values, g.spacing), g)


def energy_parts(state: SimState) -> tuple[float, float, float]:
    """``(||grad phi||^2, int F(phi), int theta)``."""
    g = state.grid
    return grad_phi_sq(state), _integral(cst.potential_F(state.phi.values), g), _integral(state.theta.values, g)


def energy(state: SimState, params=None) -> float:
    grad, int_f, int_theta = energy_parts(state)
    return 0.5 * grad + int_f + int_theta


def _log_theta(theta: np.ndarray, params) -> np.ndarray:
    floor = params.theta_floor if params is not None else cst.ModelParams().theta_floor
    return np.log(np.maximum(theta, floor))


def entropy(state: SimState, params=None) -> float:
    """``int (-log theta - phi)``; theta is clamped at ``theta_floor`` inside the log."""
    return _integral(-_log_theta(state.theta.values, params) - state.phi.values, state.grid)


def entropy_production_parts(state: SimState, mu: ScalarField, params) -> tuple[float, float, float]:
    """Return the three dissipation integrals: chemical, log-temperature, conductive."""
    g = state.grid
    sp = g.spacing
    theta = np.maximum(state.theta.values, params.theta_floor)
    chem = _integral(grad_norm_sq_values(mu.values, sp) / theta, g)
    logt = _integral(grad_norm_sq_values(np.log(theta), sp), g)
    cond = k_q(params.q) * _integral(grad_norm_sq_values(theta ** (params.q / 2.0), sp), g)
    return chem, logt, cond


def entropy_production(state: SimState, mu: ScalarField, params) -> float:
    return float(sum(entropy_production_parts(state, mu, params)))


def conductive_dissipation_direct(theta: ScalarField, params) -> float:
    """Un-split integrand ``int kappa(theta) |grad theta|^2 / theta^2``."""
    g = theta.grid
    t = np.maximum(theta.values, params.theta_floor)
    return _integral(cst.kappa(t, params) * grad_norm_sq_values(t, g.spacing) / t**2, g)


def conductive_dissipation_split(theta: ScalarField, params) -> float:
    """``int |grad log theta|^2 + k_q int |grad theta^(q/2)|^2``."""
    g = theta.grid
    t = np.maximum(theta.values, params.theta_floor)
    return _integral(grad_norm_sq_values(np.log(t), g.spacing), g) + k_q(params.q) * _integral(
        grad_norm_sq_values(t ** (params.q / 2.0), g.spacing), g
    )


def energy_balance_residual(prev: SimState, nxt: SimState, mu_next: ScalarField, params, dt: float) -> float:
    """``|(E' - E)/dt - int (P sigma - A) h(phi) mu'|`` with sources at the old level."""
    work = _integral(growth_source(prev.phi.values, prev.sigma.values, params) * mu_next.values, prev.grid)
    return abs((energy(nxt) - energy(prev)) / dt - work)


def mass_rate_residual(prev: SimState, nxt: SimState, params, dt: float) -> float:
    """``|(mean phi' - mean phi)/dt - mean((P sigma - A) h(phi))|``."""
    rate = (float(np.mean(nxt.phi.values)) - float(np.mean(prev.phi.values))) / dt
    return abs(rate - float(np.mean(growth_source(prev.phi.values, prev.sigma.values, params))))


def mass_rate_scale(state: SimState, params) -> float:
    return (abs(params.P) + abs(params.A)) * max(1.0, float(np.max(np.abs(state.sigma.values))))


def theta_balance_residual(prev: SimState, nxt: SimState, mu_next: ScalarField, dt: float) -> float:
    """
    Per-step ``|int theta' - int theta + int theta' dphi - dt int |grad mu'|^2|``.

    Not divided by ``dt``: the solver error it measures scales with
    ``lin_tol * int theta``, see :func:`theta_balance_scale`.
    """
    g = prev.grid
    dphi = nxt.phi.values - prev.phi.values
    change = _integral(nxt.theta.values, g) - _integral(prev.theta.values, g)
    coupling = _integral(nxt.theta.values * dphi, g)
    heat = _integral(grad_norm_sq_values(mu_next.values, g.spacing), g)
    return abs(change + coupling - dt * heat)


def theta_balance_scale(state: SimState) -> float:
    return max(1.0, _integral(np.abs(state.theta.values), state.grid))


def emit_row(prev: SimState, nxt: SimState, mu_next: ScalarField, params, dt: float) -> DiagnosticsRow:
    grad, int_f, int_theta = energy_parts(nxt)
    g = nxt.grid
    return DiagnosticsRow(
        t=nxt.t,
        energy=0.5 * grad + int_f + int_theta,
        entropy=entropy(nxt, params),
        entropy_production=entropy_production(nxt, mu_next, params),
        phi_mean=float(np.mean(nxt.phi.values)),
        sigma_min=nxt.sigma.min(),
        sigma_max=nxt.sigma.max(),
        theta_min=nxt.theta.min(),
        theta_max=nxt.theta.max(),
        grad_phi_sq=grad,
        int_F=int_f,
        int_theta=int_theta,
        sigma_l2=math.sqrt(_integral(nxt.sigma.values**2, g)),
        res_energy=energy_balance_residual(prev, nxt, mu_next, params, dt),
        res_mass=mass_rate_residual(prev, nxt, params, dt),
        res_theta=theta_balance_residual(prev, nxt, mu_next, dt),
    )


@dataclass
class Suprema:
    """Running suprema/time integrals of the a priori bounded quantities."""

    grad_phi_sq: float = 0.0
    int_F: float = 0.0
    int_theta: float = 0.0
    sigma_l2: float = 0.0
    time_int_grad_mu_sq: float = 0.0
    time_int_theta_q_half_V: float = 0.0

    def update(self, state: SimState, mu: ScalarField, params, dt: float) -> None:
        g = state.grid
        grad, int_f, int_theta = energy_parts(state)
        self.grad_phi_sq = max(self.grad_phi_sq, grad)
        self.int_F = max(self.int_F, int_f)
        self.int_theta = max(self.int_theta, int_theta)
        self.sigma_l2 = max(self.sigma_l2, math.sqrt(_integral(state.sigma.values**2, g)))
        self.time_int_grad_mu_sq += dt * _integral(grad_norm_sq_values(mu.values, g.spacing), g)
        tq = np.maximum(state.theta.values, params.theta_floor) ** (params.q / 2.0)
        self.time_int_theta_q_half_V += dt * (
            _integral(tq**2, g) + _integral(grad_norm_sq_values(tq, g.spacing), g)
        )

    def summary(self) -> str:
        return (
            f"sup|grad phi|^2={self.grad_phi_sq:.6g} sup int F={self.int_F:.6g} "
            f"sup int theta={self.int_theta:.6g} sup|sigma|={self.sigma_l2:.6g} "
            f"int|grad mu|^2 dt={self.time_int_grad_mu_sq:.6g} "
            f"int|theta^(q/2)|_V^2 dt={self.time_int_theta_q_half_V:.6g}"
        )
