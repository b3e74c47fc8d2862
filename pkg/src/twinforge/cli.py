"""Command-line entry point: ``twinforge {simulate,train,gradcheck,report}``.

Every command reads and writes files in the experiment's output directory:

========================  ==========  ================================================
file                      written by  content
========================  ==========  ================================================
gray.csv                  simulate    gray-box space-time field (JSON header + rows)
simulate_meta.json        simulate    scheme, substeps, Courant number, drift, case
dictionary.json           train       trained bases and coefficients
train_report.json         train       step history, errors, solve counters, setup
gradient_report.json      gradcheck   adjoint vs FD, integrated gradient error
gradcheck.csv             gradcheck   component, adjoint, fd, rel_err
summary.json              report      consolidated results
flux_compare.csv          report      u, F_true, F_twin, dF_true, dF_twin, in_range
train_history.csv         report      one row per training step
gradient_overlay.csv      report      t, x, twin and reference control gradients
========================  ==========  ================================================

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import twin as tw
from . import verify as vf
from .basis import Dictionary, flux_curve, load_dictionary, save_dictionary
from .config import ExperimentConfig, TwinSettings, load_config, parse_control
from .errors import ConfigError, DivergenceError, FieldFormatError, NumericalError, ShapeError
from .field import SpaceTimeField, read_field, uniform_time_weights, write_field
from .graybox import GrayBoxCase, graybox_run, true_flux
from .train import (Objective, TrainConfig, adaptive_train, contraction_check, pretrain_finetune,
                    train_coefficients)

log = logging.getLogger("twinforge")

GRAY_FILE = "gray.csv"
META_FILE = "simulate_meta.json"
DICT_FILE = "dictionary.json"
TRAIN_FILE = "train_report.json"
GRAD_FILE = "gradient_report.json"
REPORT_INPUTS = (GRAY_FILE, META_FILE, DICT_FILE, TRAIN_FILE, GRAD_FILE)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(_jsonable(data), indent=2) + "\n")


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FieldFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc


def _jobs(arg) -> int:
    if arg is not None:
        jobs = arg
    else:
        env = os.environ.get("TWINFORGE_JOBS", "1")
        try:
            jobs = int(env)
        except ValueError as exc:
            raise ConfigError(f"not an integer: {env!r}", "TWINFORGE_JOBS") from exc
    if jobs < 1:
        raise ConfigError(f"must be at least 1, got {jobs}", "jobs")
    return jobs


def _case_dict(case: GrayBoxCase) -> dict:
    return {
        "flux": case.flux,
        "ic": case.ic.to_dict(),
        "grid": case.grid.to_dict(),
        "cfl": case.cfl,
        "bc": case.bc,
        "inflow_value": case.inflow_value,
        "speed": case.speed,
    }


def _require(out: Path, names) -> None:
    missing = [n for n in names if not (out / n).exists()]
    if missing:
        raise ConfigError(f"missing {', '.join(missing)} in {out}", "output_dir")


def _twin_kwargs(settings: TwinSettings, bc: str) -> dict:
    return {"bc": bc, "scheme": settings.scheme, "smooth_eps": settings.smooth_eps, "max_courant": settings.max_courant}


def _build_twin(dictionary: Dictionary, gray: SpaceTimeField, substeps: int, settings: TwinSettings, bc: str):
    return tw.TwinModel.from_gray(dictionary, gray, settings.substeps or substeps, **_twin_kwargs(settings, bc))


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: ExperimentConfig) -> dict:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    run = graybox_run(cfg.case, cfg.control_field())
    write_field(out / GRAY_FILE, run.field)
    meta = {
        "scheme": "rusanov_forward_euler",
        "substeps": run.substeps,
        "max_courant": run.max_courant,
        "conservation_drift": run.conservation_drift,
        "case": _case_dict(cfg.case),
        "control": cfg.control,
    }
    write_json(out / META_FILE, meta)
    return meta


def _train_setup(cfg: ExperimentConfig, metric: str, basis: str) -> dict:
    return {
        "metric": metric,
        "basis": basis,
        "twin": {"scheme": cfg.twin.scheme, "substeps": cfg.twin.substeps, "smooth_eps": cfg.twin.smooth_eps,
                 "max_courant": cfg.twin.max_courant},
        "control": cfg.control,
        "objective": cfg.objective,
        "train": cfg.train.to_dict(),
        "contraction": cfg.contraction,
    }


def cmd_train(cfg: ExperimentConfig, metric: str | None = None, basis: str | None = None, jobs: int = 1) -> dict:
    out = cfg.output_dir
    _require(out, (GRAY_FILE, META_FILE))
    metric = metric or cfg.metric
    basis = basis or cfg.basis
    gray = read_field(out / GRAY_FILE)
    meta = read_json(out / META_FILE)
    config = TrainConfig.from_dict({**cfg.train.to_dict(), "jobs": jobs})
    twin = _build_twin(Dictionary(), gray, int(meta["substeps"]), cfg.twin, cfg.case.bc)
    base_metric = "mismatch" if metric == "pretrain+finetune" else metric
    objective = Objective(twin, gray, base_metric, control=cfg.control_field())
    setup = _train_setup(cfg, metric, basis)
    try:
        if basis == "adaptive":
            if metric == "pretrain+finetune":
                d, report = pretrain_finetune(objective, config)
            else:
                d, report = adaptive_train(objective, config)
        else:
            d0 = load_dictionary(cfg.resolve(basis.split(":", 1)[1]))
            if metric == "pretrain+finetune":
                pre = Objective(twin, gray, "truncation", control=objective.control)
                d_pre, pre_report = train_coefficients(pre, d0, config)
                d, report = train_coefficients(objective, d_pre, config)
                report.metric = metric
                report.stages = {
                    "pretrain": {"twin_solves": pre_report.twin_solves, "final_truncation_error": pre_report.final_error,
                                 "size": len(d_pre)},
                    "finetune": {"twin_solves": report.twin_solves, "final_mismatch": report.final_error},
                }
            else:
                d, report = train_coefficients(objective, d0, config)
    except DivergenceError as exc:
        partial = {"setup": setup, "error": str(exc)}
        if exc.report is not None:
            partial["sgd"] = {k: getattr(exc.report, k) for k in ("initial", "final", "epochs", "step", "history")}
        write_json(out / TRAIN_FILE, partial)
        raise
    save_dictionary(out / DICT_FILE, d)
    data = {"setup": setup, **report.to_dict()}
    write_json(out / TRAIN_FILE, data)
    return data


def cmd_gradcheck(cfg: ExperimentConfig, components: int | None = None, fd_step: float | None = None,
                  jobs: int = 1) -> dict:
    out = cfg.output_dir
    _require(out, (GRAY_FILE, META_FILE, DICT_FILE))
    n_comp = cfg.gradcheck.components if components is None else components
    delta = cfg.gradcheck.fd_step if fd_step is None else fd_step
    if n_comp < 0:
        raise ConfigError("must be non-negative", "components")
    if not delta > 0:
        raise ConfigError("must be positive", "fd_step")
    gray, meta, d = read_field(out / GRAY_FILE), read_json(out / META_FILE), load_dictionary(out / DICT_FILE)
    twin = _build_twin(d, gray, int(meta["substeps"]), cfg.twin, cfg.case.bc)
    functional = cfg.objective_functional()
    control = cfg.gradcheck_control()
    vg = tw.value_and_grad(twin, functional, control)
    grad = np.atleast_1d(vg.d_control).reshape(-1)
    rng = np.random.default_rng(cfg.seed)
    comps = np.sort(rng.choice(grad.size, size=min(n_comp, grad.size), replace=False))
    fd = tw.fd_gradient(lambda c: tw.evaluate(twin, functional, c), control, delta, comps, jobs)
    rep = tw.GradientReport.compare(grad, comps, fd)
    ref = vf.reference_gradient(twin, cfg.case.flux, functional, control, cfg.case.speed)
    ref_grad = np.atleast_1d(ref.d_control).reshape(-1)
    if control.is_scalar:
        integrated = float(np.sum((grad - ref_grad) ** 2))
    else:
        shape = gray.grid.shape
        integrated = vf.integrated_gradient_error(grad.reshape(shape), ref_grad.reshape(shape), grid=gray.grid)
    data = {
        "objective": cfg.objective,
        "control": cfg.gradcheck.control,
        "fd_step": delta,
        "xi_twin": vg.value,
        "xi_reference": ref.value,
        **rep.to_dict(),
        "integrated_gradient_error": integrated,
        "twin_gradient": grad.reshape(np.shape(vg.d_control)),
        "reference_gradient": ref_grad.reshape(np.shape(ref.d_control)),
    }
    write_json(out / GRAD_FILE, data)
    with open(out / "gradcheck.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "adjoint", "fd", "rel_err"])
        for c, a, f, r in zip(comps, grad[comps], fd, rep.rel_err):
            w.writerow([int(c), repr(float(a)), repr(float(f)), repr(float(r))])
    return data


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def cmd_report(out: Path) -> dict:
    out = Path(out)
    _require(out, REPORT_INPUTS)
    gray = read_field(out / GRAY_FILE)
    meta = read_json(out / META_FILE)
    d = load_dictionary(out / DICT_FILE)
    train = read_json(out / TRAIN_FILE)
    grad = read_json(out / GRAD_FILE)
    case = meta["case"]
    flux, speed = case["flux"], float(case.get("speed", 1.0))
    setup = train.get("setup", {})
    settings = TwinSettings(**setup.get("twin", {}))
    twin = _build_twin(d, gray, int(meta["substeps"]), settings, case["bc"])

    lo, hi = float(gray.u.min()), float(gray.u.max())
    pad = 0.25 * max(hi - lo, 1e-3)
    u = np.linspace(lo - pad, hi + pad, 201)
    F, dF = true_flux(flux, u, speed)
    Ft, dFt = flux_curve(d, u)
    in_range = (u >= lo) & (u <= hi)
    _write_csv(out / "flux_compare.csv", ["u", "F_true", "F_twin", "dF_true", "dF_twin", "in_range"],
               zip(u, F, Ft, dF, dFt, in_range.astype(int)))

    steps = train.get("steps", [])
    _write_csv(out / "train_history.csv", ["step", "kind", "accepted", "size", "cv_error", "train_error"],
               [(i, s["kind"], int(bool(s["accepted"])), s["size"], s["cv_error"], s["train_error"])
                for i, s in enumerate(steps)])

    g_twin = np.asarray(grad["twin_gradient"], dtype=float)
    g_ref = np.asarray(grad["reference_gradient"], dtype=float)
    g = gray.grid
    if g_twin.ndim == 2:
        tt, xx = np.meshgrid(g.t_nodes, g.x_nodes, indexing="ij")
        rows = zip(tt.ravel(), xx.ravel(), g_twin.ravel(), g_ref.ravel())
    else:
        rows = [(float("nan"), float("nan"), float(g_twin.ravel()[0]), float(g_ref.ravel()[0]))]
    _write_csv(out / "gradient_overlay.csv", ["t", "x", "twin_gradient", "reference_gradient"], rows)

    # the perturbation sweep compares against the gray field, so it needs the gray box's own scheme
    same_scheme = settings.scheme == meta["scheme"] and twin.disc.substeps == int(meta["substeps"])
    recovery = vf.flux_recovery_report(d, flux, gray, twin if same_scheme else None, speed=speed)
    summary = {
        "case": case,
        "substeps": meta["substeps"],
        "conservation_drift": meta["conservation_drift"],
        "metric": train.get("metric"),
        "dictionary_size": len(d),
        "final_error": train.get("final_error"),
        "twin_solves": train.get("twin_solves"),
        "stages": train.get("stages", {}),
        "accepted_cv": [s["cv_error"] for s in steps if s["accepted"] and s["kind"] != "initial"],
        "flux_recovery": recovery.to_dict(),
        "gradient": {k: grad[k] for k in ("max_rel_err", "integrated_gradient_error", "xi_twin", "xi_reference")},
    }
    if setup.get("contraction"):
        control = parse_control(setup.get("control"), g)
        rep = contraction_check(twin, gray, uniform_time_weights(g), control, seed=int(setup["train"].get("seed", 0)))
        summary["contraction"] = rep.to_dict()
    write_json(out / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twinforge", description="Gray-box twin models of 1-D conservation laws.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the gray box and write its space-time field")
    s.add_argument("config")

    t = sub.add_parser("train", help="train a twin on the gray-box field")
    t.add_argument("config")
    t.add_argument("--metric", choices=("mismatch", "truncation", "pretrain+finetune"))
    t.add_argument("--basis", help="'adaptive' or 'adhoc:<dictionary file>'")
    t.add_argument("--jobs", type=int, help="parallel fold trainings (default: $TWINFORGE_JOBS or 1)")

    g = sub.add_parser("gradcheck", help="compare twin adjoint gradients with finite differences")
    g.add_argument("config")
    g.add_argument("--components", type=int, help="number of sampled control components")
    g.add_argument("--fd-step", type=float, help="central difference step")
    g.add_argument("--jobs", type=int, help="parallel FD columns (default: $TWINFORGE_JOBS or 1)")

    r = sub.add_parser("report", help="summarize an output directory")
    r.add_argument("output_dir")
    return p


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if getattr(exc, "field", None) is not None:
        payload["field"] = exc.field
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "report":
            summary = cmd_report(Path(args.output_dir))
            print(json.dumps({"dictionary_size": summary["dictionary_size"], "final_error": summary["final_error"]}))
            return 0
        cfg = load_config(args.config)
        if args.command == "simulate":
            meta = cmd_simulate(cfg)
            print(json.dumps({"output": str(cfg.output_dir / GRAY_FILE), "substeps": meta["substeps"]}))
        elif args.command == "train":
            if args.basis is not None and not (args.basis == "adaptive" or args.basis.startswith("adhoc:")):
                raise ConfigError(f"expected 'adaptive' or 'adhoc:<file>', got {args.basis!r}", "basis")
            data = cmd_train(cfg, args.metric, args.basis, _jobs(args.jobs))
            print(json.dumps({"dictionary_size": len(data["dictionary"]), "final_error": data["final_error"]}))
        elif args.command == "gradcheck":
            data = cmd_gradcheck(cfg, args.components, args.fd_step, _jobs(args.jobs))
            print(json.dumps({"max_rel_err": data["max_rel_err"],
                              "integrated_gradient_error": data["integrated_gradient_error"]}))
    except (ConfigError, FieldFormatError, ShapeError, FileNotFoundError) as exc:
        return _fail(exc, 2)
    except NumericalError as exc:
        return _fail(exc, 3)
    return 0


if __name__ == "__main__":
    sys.exit(main())
