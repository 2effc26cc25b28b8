import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermotumor import GridSpec, ModelParams
from thermotumor.cli import EXIT_CONFIG, EXIT_OK, EXIT_STEP_FAILURE, EXIT_VIOLATION, fixed_point_config, initial_state, main, run, simulate
from thermotumor.config import DEFAULTS, ConfigError, RunConfig, parse_config, render_config
from thermotumor.diagnostics import CSV_HEADER
from thermotumor.dynamics import SimState
from thermotumor.lattice import ScalarField
from thermotumor.output import read_diagnostics, read_field, write_diagnostics, write_snapshot


class TestParseConfig:
    def test_sigma_b_out_of_range(self):
        with pytest.raises(ConfigError, match=r"line 2: sigma_B must lie in \(0,1\)"):
            parse_config("# model\nsigma_B = 1.5\n")

    def test_q_below_two(self):
        with pytest.raises(ConfigError, match=r"q must lie in \[2, inf\)"):
            parse_config("q = 1.0")

    def test_minimal_full_file_echoed(self):
        text = "\n".join(f"{k} = {v[1] if not isinstance(v[1], bool) else str(v[1]).lower()}"
                         for k, v in DEFAULTS.items() if k not in ("nz", "hz"))
        text = text.replace("dt = 0.0001", "dt = 2.5e-05").replace("nx = 64", "nx = 48").replace(
            "hx = 0.015625", "hx = 0.02")
        cfg = parse_config(text)
        assert cfg.dt == 2.5e-05
        assert cfg.grid == GridSpec((48, 64), (0.02, 1 / 64))

    @pytest.mark.parametrize(
        "text,match",
        [
            ("foo = 1", "line 1: unknown key 'foo'"),
            ("dt = 1e-4\ndt = 2e-4", "line 2: duplicate key 'dt'"),
            ("\n\ndt 1e-4", "line 3: expected 'key = value'"),
            ("nx = sixty", "line 1: nx: cannot parse"),
            ("T_final = 0", "line 1: T_final must be > 0"),
            ("diag_every = 0", "diag_every must be >= 1"),
            ("theta0 = -1", "theta0 must be > 0"),
            ("sigma0 = 2", r"sigma0 must lie in \[0,1\]"),
            ("initial = blob", "initial must be one of"),
            ("dim = 2\nnz = 8", "line 2: nz is not used when dim = 2"),
            ("nx = 2", "cell count"),
            ("P = -1", "line 1: P must be strictly positive"),
            ("eps = 0.5", "experimental"),
        ],
    )
    def test_errors(self, text, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(text)

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# header\n\n  dt = 5e-5   # small\nlambda = 5\n")
        assert cfg.dt == 5e-5 and cfg.params.lam == 5.0


@settings(max_examples=50, deadline=None)
@given(
    dt=st.floats(1e-6, 1e-2),
    sigma_B=st.floats(0.01, 0.99),
    q=st.floats(2.0, 6.0),
    n=st.integers(4, 40),
    dim=st.integers(1, 3),
    initial=st.sampled_from(["uniform", "fixed_point", "random_seeded", "tumor_seed"]),
    seed=st.integers(0, 2**31),
)
def test_config_round_trip(dt, sigma_B, q, n, dim, initial, seed):
    cfg = RunConfig(params=ModelParams(sigma_B=sigma_B, q=q), grid=GridSpec((n,) * dim, (1.0 / n,) * dim),
                    dt=dt, initial=initial, seed=seed)
    assert parse_config(render_config(cfg)) == cfg


class TestOutput:
    def test_empty_run_has_header_only(self, tmp_path):
        path = write_diagnostics([], tmp_path / "d.csv")
        assert path.read_bytes() == (CSV_HEADER + "\n").encode()

    def test_snapshot_round_trip(self, tmp_path, rng):
        g = GridSpec((5, 7), (0.1, 1 / 3))
        st = SimState(0.123456789, *(ScalarField(g, rng.standard_normal(g.shape) * 10.0 ** rng.integers(-8, 8))
                                      for _ in range(3)))
        paths = write_snapshot(st, 12, tmp_path)
        assert [p.name for p in paths] == ["phi_000012.txt", "theta_000012.txt", "sigma_000012.txt"]
        assert paths[0].read_text().splitlines()[0] == "2 5 7 1 0.10000000000000001 0.33333333333333331 0 0.123456789"
        grid, t, values = read_field(paths[2])
        assert grid == g and t == st.t
        assert np.array_equal(values, st.sigma.values)

    def test_snapshot_row_major(self, tmp_path):
        g = GridSpec((4, 5), (0.25, 0.2))
        v = np.arange(20.0).reshape(4, 5)
        st = SimState(0.0, ScalarField(g, v), ScalarField(g, v + 1), ScalarField(g, v))
        body = write_snapshot(st, 0, tmp_path)[0].read_text().splitlines()[1:]
        assert [float(b) for b in body] == list(range(20))

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            write_diagnostics([], blocker / "d.csv")


class TestInitialStates:
    def test_random_seeded_reproducible(self):
        cfg = RunConfig(grid=GridSpec.unit_box(16, 16), initial="random_seeded", seed=4, phi_mean=0.1)
        a, b = initial_state(cfg), initial_state(cfg)
        assert np.array_equal(a.phi.values, b.phi.values)
        assert np.mean(a.phi.values) == pytest.approx(0.1, abs=0.01)
        assert np.ptp(a.phi.values) <= 0.1
        assert 0 <= a.sigma.min() and a.sigma.max() <= 1
        c = initial_state(cfg.replace(seed=5))
        assert not np.array_equal(a.phi.values, c.phi.values)

    def test_tumor_seed(self):
        cfg = RunConfig(grid=GridSpec.unit_box(32, 32), initial="tumor_seed")
        st = initial_state(cfg)
        assert st.phi.values[16, 16] > 0.99 and st.phi.values[0, 0] < -0.99

    def test_fixed_point_requires_balanced_apoptosis(self):
        with pytest.raises(ConfigError, match="fixed_point preset requires A"):
            initial_state(RunConfig(grid=GridSpec.unit_box(8, 8), initial="fixed_point"))
        st = initial_state(fixed_point_config(n=8))
        assert np.all(st.phi.values == 1.0) and np.all(st.sigma.values == 0.45)


class TestRun:
    def test_fixed_point_residuals(self, tmp_path):
        assert run(fixed_point_config(steps=20, n=16), tmp_path) == EXIT_OK
        header, data = read_diagnostics(tmp_path / "diagnostics.csv")
        assert data.shape == (20, len(header))
        for col in ("res_energy", "res_mass", "res_theta"):
            assert np.max(data[:, header.index(col)]) <= 1e-9
        assert (tmp_path / "snapshots" / "phi_000000.txt").exists()
        assert (tmp_path / "snapshots" / "phi_000020.txt").exists()
        assert "summary status=0" in (tmp_path / "summary.txt").read_text()

    def test_tumor_seed_grows(self, tmp_path):
        cfg = RunConfig(grid=GridSpec.unit_box(32, 32), initial="tumor_seed", T_final=0.005, diag_every=5,
                        snapshot_every=1000)
        result = simulate(cfg, tmp_path)
        assert result.status == EXIT_OK
        header, data = read_diagnostics(tmp_path / "diagnostics.csv")
        assert len(data) == 10
        assert np.all(np.diff(data[:, header.index("phi_mean")]) >= 0)
        assert np.all(data[:, header.index("sigma_min")] >= 0)
        assert np.all(data[:, header.index("sigma_max")] <= max(cfg.sigma0, cfg.params.sigma_B) + 1e-12)

    def test_rejection_halves_dt(self, tmp_path):
        # a steep seed and a huge step push 1 + dphi below zero on the first attempt
        cfg = RunConfig(grid=GridSpec.unit_box(16, 16), initial="tumor_seed", seed_width=0.02, dt=0.05,
                        T_final=0.05, snapshot_every=1000)
        result = simulate(cfg, tmp_path)
        assert result.rejections >= 1
        assert result.final.t == pytest.approx(0.05)
        assert result.final.theta.min() > 0

    def test_solver_failure_exit(self, tmp_path):
        cfg = RunConfig(grid=GridSpec.unit_box(16, 16), T_final=0.01, lin_tol=1e-15, lin_maxiter=1)
        assert run(cfg, tmp_path) == EXIT_STEP_FAILURE

    def test_violation_stops_unless_continued(self, tmp_path, monkeypatch):
        import thermotumor.cli as cli

        real = cli.advance

        def flagged(state, cfg, params, forcing=None):
            new, report = real(state, cfg, params, forcing)
            report.violations.append("synthetic")
            return new, report

        monkeypatch.setattr(cli, "advance", flagged)
        cfg = RunConfig(grid=GridSpec.unit_box(8, 8), initial="uniform", T_final=5e-4, snapshot_every=1000)
        stopped = simulate(cfg, tmp_path / "a")
        assert stopped.status == EXIT_VIOLATION and stopped.steps == 1
        assert "synthetic" in stopped.message
        kept = simulate(cfg, tmp_path / "b", continue_on_violation=True)
        assert kept.status == EXIT_VIOLATION and kept.steps == 5


class TestMain:
    def test_run_and_determinism(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("nx = 16\nny = 16\nhx = 0.0625\nhy = 0.0625\nT_final = 0.002\nseed = 3\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_OK
        a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
        assert a == (tmp_path / "b" / "diagnostics.csv").read_bytes()
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "c"), "--seed", "4"]) == EXIT_OK
        assert a != (tmp_path / "c" / "diagnostics.csv").read_bytes()

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("sigma_B = 1.5\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
        assert "sigma_B must lie in (0,1)" in capsys.readouterr().err
        assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG

    def test_fixedpoint_command(self, tmp_path, capsys):
        assert main(["fixedpoint", "--out", str(tmp_path)]) == EXIT_OK
        assert "max residual" in capsys.readouterr().out

    def test_mms_command_small(self, tmp_path, capsys):
        rc = main(["mms", "--levels", "3", "--base", "16", "--t-final", "0.002", "--no-dt-check",
                   "--out", str(tmp_path)])
        assert rc == EXIT_OK
        assert (tmp_path / "mms_orders.csv").exists()
        assert main(["mms", "--levels", "2", "--out", str(tmp_path)]) == EXIT_CONFIG
