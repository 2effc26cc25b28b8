"""
Line-oriented ``key = value`` run configuration.

``#`` starts a comment; blank lines are ignored; unknown or repeated keys are
errors.  Every key is optional, defaults are listed in :data:`DEFAULTS`.
:func:`render_config` writes every key back out so that
``parse_config(render_config(cfg)) == cfg``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import SimpleNamespace

from .constitutive import ModelParams, ParameterError
from .lattice import GridSpec

PRESETS = ("uniform", "fixed_point", "random_seeded", "tumor_seed")

# key -> (type, default).  Order here is the render order.
DEFAULTS: dict[str, tuple[type, object]] = {
    # model
    "P": (float, 2.0),
    "A": (float, 0.5),
    "B": (float, 1.0),
    "C": (float, 1.0),
    "sigma_B": (float, 0.9),
    "q": (float, 2.0),
    "lambda": (float, 4.0),
    "eps": (float, 1.0),
    "chi_phi": (float, 0.0),
    "S": (float, 4.0),
    "theta_floor": (float, 1e-10),
    "experimental": (bool, False),
    # grid
    "dim": (int, 2),
    "nx": (int, 64),
    "ny": (int, 64),
    "nz": (int, 64),
    "hx": (float, 1.0 / 64),
    "hy": (float, 1.0 / 64),
    "hz": (float, 1.0 / 64),
    # time stepping and output
    "dt": (float, 1e-4),
    "T_final": (float, 0.1),
    "diag_every": (int, 1),
    "snapshot_every": (int, 100),
    "lin_tol": (float, 1e-10),
    "lin_maxiter": (int, 0),
    "out_dir": (str, "out"),
    # initial condition
    "initial": (str, "random_seeded"),
    "seed": (int, 0),
    "phi_mean": (float, 0.0),
    "theta0": (float, 1.0),
    "sigma0": (float, 0.5),
    "seed_radius": (float, 0.2),
    "seed_width": (float, 0.03),
}

_PARAM_KEYS = {
    "P": "P", "A": "A", "B": "B", "C": "C", "sigma_B": "sigma_B", "q": "q", "lambda": "lam",
    "eps": "eps", "chi_phi": "chi_phi", "S": "S", "theta_floor": "theta_floor",
    "experimental": "experimental",
}
_AXES = "xyz"


def _is_grid_key(key: str) -> bool:
    return key == "dim" or (len(key) == 2 and key[0] in "nh" and key[1] in _AXES)


_RUN_KEYS = tuple(k for k in DEFAULTS if k not in _PARAM_KEYS and not _is_grid_key(k))


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams = field(default_factory=ModelParams)
    grid: GridSpec = field(default_factory=lambda: GridSpec.unit_box(64, 64))
    dt: float = 1e-4
    T_final: float = 0.1
    diag_every: int = 1
    snapshot_every: int = 100
    lin_tol: float = 1e-10
    lin_maxiter: int = 0
    out_dir: str = "out"
    initial: str = "random_seeded"
    seed: int = 0
    phi_mean: float = 0.0
    theta0: float = 1.0
    sigma0: float = 0.5
    seed_radius: float = 0.2
    seed_width: float = 0.03

    def __post_init__(self) -> None:
        _validate_run(self)

    def replace(self, **changes) -> RunConfig:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return RunConfig(**d)


def _validate_run(cfg, lines: dict[str, int] | None = None) -> None:
    lines = lines or {}

    def fail(key, msg):
        raise ConfigError(msg, lines.get(key))

    if not (math.isfinite(cfg.dt) and cfg.dt > 0):
        fail("dt", "dt must be > 0")
    if not (math.isfinite(cfg.T_final) and cfg.T_final > 0):
        fail("T_final", "T_final must be > 0")
    if cfg.diag_every < 1:
        fail("diag_every", "diag_every must be >= 1")
    if cfg.snapshot_every < 1:
        fail("snapshot_every", "snapshot_every must be >= 1")
    if not 0 < cfg.lin_tol < 1:
        fail("lin_tol", "lin_tol must lie in (0,1)")
    if cfg.lin_maxiter < 0:
        fail("lin_maxiter", "lin_maxiter must be >= 0 (0 selects 10 * cells)")
    if cfg.initial not in PRESETS:
        fail("initial", f"initial must be one of {', '.join(PRESETS)}")
    if cfg.seed < 0:
        fail("seed", "seed must be >= 0")
    if not (math.isfinite(cfg.theta0) and cfg.theta0 > 0):
        fail("theta0", "theta0 must be > 0 (initial temperature positive a.e.)")
    if not 0.0 <= cfg.sigma0 <= 1.0:
        fail("sigma0", "sigma0 must lie in [0,1] (initial nutrient 0 <= sigma_0 <= 1)")
    if not math.isfinite(cfg.phi_mean):
        fail("phi_mean", "phi_mean must be finite")
    if not (cfg.seed_radius > 0 and cfg.seed_width > 0):
        fail("seed_radius", "seed_radius and seed_width must be > 0")


def _convert(key: str, raw: str, line: int):
    typ = DEFAULTS[key][0]
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}", line) from None


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a configuration text."""
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ConfigError("missing key before '='", lineno)
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", lineno)
        values[key] = _convert(key, raw, lineno)
        lines[key] = lineno

    def get(key):
        return values.get(key, DEFAULTS[key][1])

    param_kwargs = {attr: get(key) for key, attr in _PARAM_KEYS.items()}
    try:
        params = ModelParams(**param_kwargs)
    except ParameterError as exc:
        key = next((k for k, attr in _PARAM_KEYS.items() if attr == exc.name), None)
        raise ConfigError(str(exc), lines.get(key)) from None

    dim = get("dim")
    if dim not in (1, 2, 3):
        raise ConfigError("dim must be 1, 2 or 3", lines.get("dim"))
    for ax in _AXES[dim:]:
        for key in (f"n{ax}", f"h{ax}"):
            if key in values:
                raise ConfigError(f"{key} is not used when dim = {dim}", lines[key])
    try:
        grid = GridSpec(tuple(get(f"n{a}") for a in _AXES[:dim]),
                        tuple(get(f"h{a}") for a in _AXES[:dim]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    run_kwargs = {key: get(key) for key in _RUN_KEYS}
    _validate_run(SimpleNamespace(**run_kwargs), lines)
    cfg = RunConfig(params=params, grid=grid, **run_kwargs)
    return cfg


def render_config(cfg: RunConfig) -> str:
    """Render every key; floats use ``repr`` so they parse back bit-identically."""
    out = []
    p = cfg.params
    for key, attr in _PARAM_KEYS.items():
        out.append(f"{key} = {_render_value(getattr(p, attr))}")
    out.append(f"dim = {cfg.grid.dim}")
    for a, n in zip(_AXES, cfg.grid.cells):
        out.append(f"n{a} = {n}")
    for a, h in zip(_AXES, cfg.grid.spacing):
        out.append(f"h{a} = {_render_value(h)}")
    for key in _RUN_KEYS:
        out.append(f"{key} = {_render_value(getattr(cfg, key))}")
    return "\n".join(out) + "\n"


def _render_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
