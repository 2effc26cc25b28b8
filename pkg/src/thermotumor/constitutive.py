"""Model parameters and the constitutive functions F, beta, h and kappa."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


class ParameterError(ValueError):
    """A model parameter violates one of the modelling assumptions."""

    def __init__(self, message: str, name: str | None = None):
        self.name = name
        super().__init__(message)


@dataclass(frozen=True)
class ModelParams:
    """
    Physical constants and constitutive choices.

    ``eps`` and ``chi_phi`` are kept at 1 and 0; other values need
    ``experimental=True`` and are not supported by the time stepper.
    ``lam`` is the coefficient of the linear part in ``F'(r) = beta(r) - lam*r``.
    """

    P: float = 2.0
    A: float = 0.5
    B: float = 1.0
    C: float = 1.0
    sigma_B: float = 0.9
    q: float = 2.0
    lam: float = 4.0
    eps: float = 1.0
    chi_phi: float = 0.0
    S: float = 4.0
    theta_floor: float = 1e-10
    experimental: bool = False

    def __post_init__(self) -> None:
        for name in ("P", "A", "B", "C", "sigma_B", "q", "lam", "eps", "chi_phi", "S", "theta_floor"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v!r}", name)
        for name in ("P", "A", "B", "C"):
            if getattr(self, name) <= 0:
                raise ParameterError(
                    f"{name} must be strictly positive (coefficients P, A, B, C > 0)", name
                )
        if not 0.0 < self.sigma_B < 1.0:
            raise ParameterError("sigma_B must lie in (0,1)", "sigma_B")
        if self.q < 2.0:
            raise ParameterError("q must lie in [2, inf) (kappa(theta) = 1 + theta^q)", "q")
        if self.lam < 4.0:
            # beta(r) = F'(r) + lam*r must stay monotone for the quartic well
            raise ParameterError("lambda must be >= 4 so that beta = F' + lambda*r is monotone", "lam")
        if self.S < 0:
            raise ParameterError("S (stabilisation) must be >= 0", "S")
        if self.theta_floor <= 0:
            raise ParameterError("theta_floor must be > 0", "theta_floor")
        if (self.eps != 1.0 or self.chi_phi != 0.0) and not self.experimental:
            raise ParameterError(
                "eps must be 1 and chi_phi must be 0 (analysed case); "
                "set experimental=True to construct other values",
                "eps" if self.eps != 1.0 else "chi_phi",
            )

    @property
    def fixed_point_sigma(self) -> float:
        """Uniform nutrient level balancing supply and consumption where h = 1."""
        return self.B * self.sigma_B / (self.B + self.C)

    def replace(self, **changes) -> ModelParams:
        d = asdict(self)
        d.update(changes)
        return ModelParams(**d)


# Double-well potential and its convex/concave splitting.


def potential_F(r):
    """Double well F(r) = (r^2 - 1)^2."""
    r = np.asarray(r, dtype=float)
    return (r * r - 1.0) ** 2


def potential_dF(r):
    r = np.asarray(r, dtype=float)
    return 4.0 * r**3 - 4.0 * r


def potential_d2F(r):
    r = np.asarray(r, dtype=float)
    return 12.0 * r * r - 4.0


def beta(r, lam: float = 4.0):
    """Monotone part of F', so that F'(r) = beta(r) - lam*r and beta(0) = 0."""
    r = np.asarray(r, dtype=float)
    return 4.0 * r**3 + (lam - 4.0) * r


# Interpolation function: 0 for r <= -1, 1 for r >= 1, cubic Hermite blend between.


def h_interp(r):
    r = np.asarray(r, dtype=float)
    c = np.clip(r, -1.0, 1.0)
    return 0.25 * (c + 1.0) ** 2 * (2.0 - c)


def h_prime(r):
    r = np.asarray(r, dtype=float)
    inside = np.abs(r) < 1.0
    return np.where(inside, 0.75 * (1.0 - r * r), 0.0)


def kappa(theta, params: ModelParams):
    """Heat conductivity 1 + theta^q, theta clamped below at ``theta_floor``."""
    t = np.maximum(np.asarray(theta, dtype=float), params.theta_floor)
    return 1.0 + t**params.q


def kappa_prime(theta, params: ModelParams):
    t = np.maximum(np.asarray(theta, dtype=float), params.theta_floor)
    return params.q * t ** (params.q - 1.0)


def clamp_count(theta, params: ModelParams) -> int:
    """Number of cells where ``theta`` falls below the floor used by kappa and log."""
    return int(np.count_nonzero(np.asarray(theta) < params.theta_floor))
