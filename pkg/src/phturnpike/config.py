"""Run configuration: one JSON document, validated and materialized with defaults."""
from dataclasses import asdict, dataclass, field
import json
from typing import Optional

import numpy as np

from .errors import ConfigError, PHTurnpikeError
from .phsys import BUILTINS, builtin_linear
from .solver import SolverOptions
from .transcribe import OCPSpec

DEFAULT_CERTIFY = {"box": None, "samples": 10000, "shell_width": None}
DEFAULT_SWEEP = {"horizons": [5.0, 10.0, 20.0, 40.0]}
DEFAULT_CONTROL = {"constant": None, "csv": None}


@dataclass
class RunConfig:
    """Validated run configuration.

    ``control`` drives ``simulate``: ``{"constant": [...]}`` or
    ``{"csv": path}``.  ``certify.box`` of None means ``[-3, 3]^n`` for the
    ``certify`` command and the padded state hull of the trajectory for
    ``solve`` and ``diagnose``.
    """

    system: str
    x0: list
    xT: list
    T: float
    N: int
    u_bounds: list
    x_bounds: Optional[list] = None
    linear: Optional[dict] = None
    theta: float = 0.5
    epsilon: float = 0.1
    dissipativity_tol: float = 1e-4
    seed: int = 0
    out: str = "out"
    control: dict = field(default_factory=dict)
    trajectory: Optional[str] = None
    solver: dict = field(default_factory=dict)
    certify: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


_FIELDS = set(RunConfig.__dataclass_fields__)


def build_system(cfg):
    if cfg.system == "linear":
        if not isinstance(cfg.linear, dict):
            raise ConfigError("system 'linear' needs a 'linear' object with J, R, Q, B")
        missing = {"J", "R", "Q", "B"} - set(cfg.linear)
        if missing:
            raise ConfigError(f"linear system is missing {sorted(missing)}")
        try:
            return builtin_linear(*(np.array(cfg.linear[k], dtype=float) for k in "JRQB"))
        except (PHTurnpikeError, ValueError) as exc:
            raise ConfigError(f"invalid linear system: {exc}") from exc
    if cfg.system not in BUILTINS:
        raise ConfigError(f"unknown system {cfg.system!r}; expected one of {sorted(BUILTINS) + ['linear']}")
    return BUILTINS[cfg.system]()


def _box(pair, size, what, open_ends=False):
    """Broadcast a ``[lower, upper]`` pair; with ``open_ends`` null entries mean unbounded."""
    if pair is None:
        return None, None
    if not isinstance(pair, (list, tuple)) or len(pair) != 2:
        raise ConfigError(f"{what} must be a [lower, upper] pair")
    try:
        lo, hi = (np.broadcast_to(np.array(v, dtype=float), (size,)).copy() for v in pair)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: {exc}") from exc
    if open_ends:
        lo[np.isnan(lo)] = -np.inf
        hi[np.isnan(hi)] = np.inf
    if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
        raise ConfigError(f"{what} has missing entries")
    if np.any(lo > hi):
        raise ConfigError(f"{what}: lower bound exceeds upper bound")
    return lo, hi


def parse(doc):
    """Validate a config mapping; raises :class:`ConfigError` on any problem."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    missing = {"system", "x0", "xT", "T", "N", "u_bounds"} - set(doc)
    if missing:
        raise ConfigError(f"missing config keys {sorted(missing)}")
    try:
        cfg = RunConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    defaults = {
        "solver": SolverOptions().to_dict(),
        "certify": DEFAULT_CERTIFY,
        "sweep": DEFAULT_SWEEP,
        "control": DEFAULT_CONTROL,
    }
    for key, default in defaults.items():
        given = getattr(cfg, key) or {}
        if not isinstance(given, dict):
            raise ConfigError(f"'{key}' must be an object")
        extra = set(given) - set(default)
        if extra:
            raise ConfigError(f"unknown keys in '{key}': {sorted(extra)}")
        setattr(cfg, key, {**default, **given})
    try:
        sys = build_system(cfg)
        ocp = build_ocp(cfg, sys)
        solver_options(cfg)
    except ConfigError:
        raise
    except (PHTurnpikeError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg.epsilon > 0:
        raise ConfigError("epsilon must be positive")
    if cfg.certify["box"] is not None:
        _box(cfg.certify["box"], sys.n, "certify.box")
    if int(cfg.certify["samples"]) < 1:
        raise ConfigError("certify.samples must be at least 1")
    if not cfg.sweep["horizons"] or any(not float(T) > 0 for T in cfg.sweep["horizons"]):
        raise ConfigError("sweep.horizons must be a nonempty list of positive horizons")
    const = cfg.control.get("constant")
    if const is not None and np.size(const) not in (1, sys.m):
        raise ConfigError(f"control.constant has length {np.size(const)}, expected {sys.m}")
    cfg.T = float(cfg.T)
    cfg.N = int(ocp.N)
    cfg.theta = float(ocp.theta)
    cfg.x0 = [float(v) for v in ocp.x0]
    cfg.xT = [float(v) for v in ocp.xT]
    cfg.u_bounds = [ocp.u_lb.tolist(), ocp.u_ub.tolist()]
    return cfg, sys, ocp


def build_ocp(cfg, sys):
    u_lb, u_ub = _box(cfg.u_bounds, sys.m, "u_bounds")
    x_lb, x_ub = _box(cfg.x_bounds, sys.n, "x_bounds", open_ends=True)
    if isinstance(cfg.N, bool) or not isinstance(cfg.N, (int, float)):
        raise ConfigError("N must be an integer")
    return OCPSpec(sys, cfg.x0, cfg.xT, float(cfg.T), cfg.N, u_lb, u_ub, x_lb, x_ub, cfg.theta)


def solver_options(cfg):
    return SolverOptions(**cfg.solver)


def load(path, overrides=None):
    """Read ``path``, apply non-None ``overrides`` and :func:`parse` the result."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return parse(doc)
