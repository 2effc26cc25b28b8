import math

import numpy as np
import pytest

from conftest import fit_order, smooth_state
from thermotumor import GridSpec, ModelParams, ScalarField, SimState, StepConfig, advance
from thermotumor.diagnostics import (
    CSV_HEADER,
    DiagnosticsRow,
    Suprema,
    conductive_dissipation_direct,
    conductive_dissipation_split,
    emit_row,
    energy,
    energy_balance_residual,
    entropy,
    entropy_production,
    entropy_production_parts,
    k_q,
    mass_rate_residual,
    mass_rate_scale,
    theta_balance_residual,
    theta_balance_scale,
)

FP = ModelParams(P=2.0, A=0.9, B=1.0, C=1.0, sigma_B=0.9)


def test_header_matches_row_fields():
    assert CSV_HEADER == (
        "t,energy,entropy,entropy_production,phi_mean,sigma_min,sigma_max,theta_min,theta_max,"
        "grad_phi_sq,int_F,int_theta,sigma_l2,res_energy,res_mass,res_theta"
    )
    assert ",".join(DiagnosticsRow.columns()) == CSV_HEADER


def test_k_q():
    assert k_q(2.0) == 1.0
    assert k_q(4.0) == 0.25


class TestEnergy:
    def test_uniform_values(self):
        g = GridSpec.unit_box(8, 8)
        assert energy(SimState.uniform(g, 1.0, 0.5, 0.5)) == pytest.approx(0.5)
        assert energy(SimState.uniform(g, 0.0, 1e-300, 0.5)) == pytest.approx(1.0)

    def test_cosine_limit(self):
        exact = math.pi**2 / 4 + 3 / 8
        hs, errs = [], []
        for n in (32, 64, 128, 256):
            g = GridSpec.unit_box(n)
            (x,) = g.centers()
            st = SimState(0.0, ScalarField(g, np.cos(np.pi * x)), ScalarField.constant(g, 0.0),
                          ScalarField.constant(g, 0.5))
            hs.append(1 / n)
            errs.append(abs(energy(st) - exact))
        assert errs[-1] < 1e-3
        assert fit_order(hs, errs) == pytest.approx(2.0, abs=0.2)


class TestEntropy:
    def test_uniform_zero(self):
        g = GridSpec.unit_box(8, 8)
        st = SimState.uniform(g, 0.0, 1.0, 0.5)
        assert entropy(st) == 0.0
        assert entropy_production(st, ScalarField.constant(g, 3.0), ModelParams()) == 0.0

    def test_production_nonnegative(self, rng):
        g = GridSpec.unit_box(16, 16)
        p = ModelParams()
        for _ in range(10):
            st = SimState(0.0, ScalarField(g, rng.standard_normal(g.shape)),
                          ScalarField(g, 0.1 + rng.random(g.shape)), ScalarField.constant(g, 0.5))
            parts = entropy_production_parts(st, ScalarField(g, rng.standard_normal(g.shape)), p)
            assert all(v >= 0 for v in parts)

    @pytest.mark.parametrize("q", [2.0, 3.0])
    def test_splitting_identity_second_order(self, q):
        p = ModelParams(q=q)
        coef = np.random.default_rng(7).uniform(-0.15, 0.15, (3, 3))

        def theta(x, y):
            out = np.ones_like(x)
            for i in range(3):
                for j in range(3):
                    out += coef[i, j] * np.cos((i + 1) * np.pi * x) * np.cos(j * np.pi * y)
            return out

        hs, rel = [], []
        for n in (32, 64, 128, 256):
            g = GridSpec.unit_box(n, n)
            th = ScalarField.from_function(g, theta)
            direct = conductive_dissipation_direct(th, p)
            split = conductive_dissipation_split(th, p)
            hs.append(1 / n)
            rel.append(abs(split - direct) / direct)
        assert rel[-1] <= 1e-3
        assert fit_order(hs, rel) == pytest.approx(2.0, abs=0.25)


class TestResiduals:
    def test_fixed_point_pair(self):
        st = SimState.uniform(GridSpec.unit_box(16, 16), 1.0, 1.0, FP.fixed_point_sigma)
        cfg = StepConfig(1e-4)
        new, report = advance(st, cfg, FP)
        assert energy_balance_residual(st, new, report.mu, FP, cfg.dt) <= 1e-9
        assert mass_rate_residual(st, new, FP, cfg.dt) <= 1e-12
        assert theta_balance_residual(st, new, report.mu, cfg.dt) <= 1e-12

    def test_healthy_tissue_has_no_mass_source(self, rng):
        g = GridSpec.unit_box(16, 16)
        p = ModelParams()
        phi = -1.2 + 0.05 * rng.random(g.shape)
        st = SimState(0.0, ScalarField(g, phi), ScalarField.constant(g, 1.0), ScalarField(g, rng.random(g.shape)))
        cfg = StepConfig(1e-4)
        new, _ = advance(st, cfg, p)
        assert mass_rate_residual(st, new, p, cfg.dt) <= 1e-12
        assert np.mean(new.phi.values) == pytest.approx(np.mean(phi), abs=1e-14)

    def test_generic_step_bounds(self):
        st = smooth_state(32)
        p = ModelParams()
        cfg = StepConfig(1e-4)
        for _ in range(5):
            new, report = advance(st, cfg, p)
            assert mass_rate_residual(st, new, p, cfg.dt) <= 10 * cfg.lin_tol * mass_rate_scale(st, p)
            assert theta_balance_residual(st, new, report.mu, cfg.dt) <= 10 * cfg.lin_tol * theta_balance_scale(st)
            st = new

    def test_energy_non_increasing_source_free(self, rng):
        # phi below -1 everywhere: h = 0 turns off growth, so E can only dissipate
        g = GridSpec.unit_box(32, 32)
        p = ModelParams()
        phi = -1.3 + 0.01 * np.cos(np.pi * g.centers()[0])
        st = SimState(0.0, ScalarField(g, phi), ScalarField.constant(g, 1.0), ScalarField.constant(g, 0.5))
        cfg = StepConfig(1e-4)
        for _ in range(20):
            new, _ = advance(st, cfg, p)
            assert energy(new) <= energy(st) + 1e-10
            st = new


def test_emit_row_and_suprema():
    st = smooth_state(16)
    p = ModelParams()
    cfg = StepConfig(1e-4)
    sup = Suprema()
    for _ in range(3):
        new, report = advance(st, cfg, p)
        row = emit_row(st, new, report.mu, p, cfg.dt)
        sup.update(new, report.mu, p, cfg.dt)
        assert row.is_consistent()
        assert row.t == pytest.approx(new.t)
        assert row.energy == pytest.approx(0.5 * row.grad_phi_sq + row.int_F + row.int_theta)
        st = new
    assert sup.int_theta >= row.int_theta and sup.grad_phi_sq >= row.grad_phi_sq
    assert sup.time_int_grad_mu_sq > 0
    assert "sup int theta" in sup.summary()
