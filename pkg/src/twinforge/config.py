"""Versioned JSON experiment configuration consumed by the CLI.

Example (all sections but ``case`` optional)::

    {
      "schema": 1,
      "seed": 0,
      "output_dir": "out/bl_wide",
      "case": {"flux": "buckley_leverett", "ic": {"kind": "sine", "amplitude": 0.45},
               "grid": {"M": 21, "N": 32, "T": 1.0}, "cfl": 0.5, "bc": "periodic"},
      "twin": {"scheme": "rusanov_forward_euler", "substeps": null},
      "control": {"kind": "scalar", "value": 0.0},
      "objective": {"kind": "terminal_quadratic", "target": 0.5},
      "train": {"k_folds": 2, "l1_weight": 0.0},
      "metric": "pretrain+finetune",
      "basis": "adaptive",
      "gradcheck": {"control": {"kind": "field", "value": 0.0}, "components": 5, "fd_step": 1e-5}
    }

Relative paths (``output_dir``, ``adhoc:<file>``) resolve against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .control import ControlField
from .errors import ConfigError
from .field import Grid, build_grid
from .graybox import GrayBoxCase, InitialCondition
from .train import TrainConfig
from .twin import SCHEMES, make_objective

SCHEMA_VERSION = 1
METRICS = ("mismatch", "truncation", "pretrain+finetune")
_TOP_KEYS = {"schema", "seed", "output_dir", "case", "twin", "control", "objective", "train", "metric", "basis",
             "gradcheck", "report"}


def _section(d, name, allowed):
    sec = d.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError("must be an object", name)
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", name)
    return sec


def _number(sec, key, where, default=None, kind=float):
    v = sec.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", f"{where}.{key}")
    if kind is int and int(v) != v:
        raise ConfigError(f"expected an integer, got {v!r}", f"{where}.{key}")
    return kind(v)


def parse_control(spec, grid: Grid, where="control") -> ControlField:
    """``{"kind": "scalar"|"field", "value": v}``; a field control is ``v`` on every node."""
    spec = {"kind": "scalar", "value": 0.0} if spec is None else spec
    if not isinstance(spec, dict):
        raise ConfigError("must be an object", where)
    unknown = set(spec) - {"kind", "value"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", where)
    value = _number(spec, "value", where, 0.0)
    kind = spec.get("kind", "scalar")
    if kind == "scalar":
        return ControlField.scalar(value)
    if kind == "field":
        return ControlField.uniform(grid, value)
    raise ConfigError(f"unknown control kind {kind!r}", f"{where}.kind")


@dataclass(frozen=True)
class TwinSettings:
    scheme: str = "rusanov_forward_euler"
    substeps: int | None = None  # None: reuse the gray box's substep count
    smooth_eps: float = 1e-8
    max_courant: float = 1.0


@dataclass(frozen=True)
class GradcheckSettings:
    control: dict = field(default_factory=lambda: {"kind": "field", "value": 0.0})
    components: int = 5
    fd_step: float = 1e-5


@dataclass(frozen=True)
class ExperimentConfig:
    case: GrayBoxCase
    control: dict
    objective: dict
    train: TrainConfig
    output_dir: Path
    seed: int = 0
    twin: TwinSettings = TwinSettings()
    metric: str = "pretrain+finetune"
    basis: str = "adaptive"
    gradcheck: GradcheckSettings = GradcheckSettings()
    contraction: bool = False  # include the contraction check in the report
    base_dir: Path = Path(".")

    def control_field(self) -> ControlField:
        return parse_control(self.control, self.case.grid)

    def gradcheck_control(self) -> ControlField:
        return parse_control(self.gradcheck.control, self.case.grid, "gradcheck.control")

    def objective_functional(self):
        return make_objective(self.objective)

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _parse_case(d) -> GrayBoxCase:
    sec = _section(d, "case", {"flux", "ic", "grid", "cfl", "bc", "inflow_value", "speed", "substeps"})
    if "flux" not in sec:
        raise ConfigError("missing", "case.flux")
    g = sec.get("grid", {})
    if not isinstance(g, dict) or set(g) - {"M", "N", "T", "domain"}:
        raise ConfigError("expected an object with M, N, T and optional domain", "case.grid")
    for key in ("M", "N"):
        if key not in g:
            raise ConfigError("missing", f"case.grid.{key}")
    domain = g.get("domain", [0.0, 1.0])
    if not (isinstance(domain, (list, tuple)) and len(domain) == 2):
        raise ConfigError("expected [x_lo, x_hi]", "case.grid.domain")
    grid = build_grid(_number(g, "M", "case.grid", kind=int), _number(g, "N", "case.grid", kind=int),
                      _number(g, "T", "case.grid", 1.0), tuple(float(v) for v in domain))
    ic = dict(sec.get("ic", {"kind": "sine"}))
    try:
        ic_obj = InitialCondition(ic.pop("kind", "sine"), ic)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], f"case.{exc.field}") from exc
    try:
        return GrayBoxCase(
            sec["flux"],
            ic_obj,
            grid,
            cfl=_number(sec, "cfl", "case", 0.5),
            bc=sec.get("bc", "periodic"),
            inflow_value=_number(sec, "inflow_value", "case", 0.0),
            speed=_number(sec, "speed", "case", 1.0),
            substeps=_number(sec, "substeps", "case", None, int),
        )
    except ConfigError as exc:
        if str(exc.field).startswith("case."):
            raise
        raise ConfigError(str(exc).split(": ", 1)[-1], f"case.{exc.field}") from exc


def parse_config(d: dict, base_dir=Path(".")) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("top level must be an object", "config")
    if d.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema {d.get('schema')!r}, expected {SCHEMA_VERSION}", "schema")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", "config")
    case = _parse_case(d)
    seed = _number(d, "seed", "config", 0, int)

    tsec = _section(d, "twin", {"scheme", "substeps", "smooth_eps", "max_courant"})
    scheme = tsec.get("scheme", "rusanov_forward_euler")
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}", "twin.scheme")
    twin = TwinSettings(scheme, _number(tsec, "substeps", "twin", None, int), _number(tsec, "smooth_eps", "twin", 1e-8),
                        _number(tsec, "max_courant", "twin", 1.0))
    if twin.substeps is not None and twin.substeps < 1:
        raise ConfigError("must be positive", "twin.substeps")

    train_d = _section(d, "train", TrainConfig.__dataclass_fields__.keys())
    if "seed" not in train_d:
        train_d = {**train_d, "seed": seed}
    try:
        train = TrainConfig.from_dict(train_d)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.field if str(exc.field).startswith("train") else "train") from exc

    metric = d.get("metric", "pretrain+finetune")
    if metric not in METRICS:
        raise ConfigError(f"expected one of {list(METRICS)}, got {metric!r}", "metric")
    basis = d.get("basis", "adaptive")
    if not isinstance(basis, str) or not (basis == "adaptive" or basis.startswith("adhoc:")):
        raise ConfigError(f"expected 'adaptive' or 'adhoc:<file>', got {basis!r}", "basis")

    gsec = _section(d, "gradcheck", {"control", "components", "fd_step"})
    gc = GradcheckSettings(gsec.get("control", {"kind": "field", "value": 0.0}),
                           _number(gsec, "components", "gradcheck", 5, int), _number(gsec, "fd_step", "gradcheck", 1e-5))
    if gc.components < 0:
        raise ConfigError("must be non-negative", "gradcheck.components")
    if not gc.fd_step > 0:
        raise ConfigError("must be positive", "gradcheck.fd_step")
    parse_control(gc.control, case.grid, "gradcheck.control")

    control = d.get("control", {"kind": "scalar", "value": 0.0})
    parse_control(control, case.grid)
    objective = d.get("objective", {"kind": "terminal_quadratic", "target": 0.5})
    if not isinstance(objective, dict):
        raise ConfigError("must be an object", "objective")
    try:
        make_objective(objective)
    except TypeError as exc:
        raise ConfigError(str(exc), "objective") from exc

    rsec = _section(d, "report", {"contraction"})
    base_dir = Path(base_dir)
    out = Path(d.get("output_dir", "out"))
    return ExperimentConfig(case, control, objective, train, out if out.is_absolute() else base_dir / out, seed,
                            twin, metric, basis, gc, bool(rsec.get("contraction", False)), base_dir)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", "config") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}", "config") from exc
    return parse_config(d, path.parent)
