"""Command-line front end.

    rsdp --config exp.yaml --out runs/a check|converge|dominate|couple|invariant|simulate

Exit codes: 0 success, 2 configuration error, 3 assumption failure,
4 acceptance threshold missed, 5 inconclusive.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from typing import Any, Callable

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, canonical_json, load_experiment
from .model import AssumptionError, ModelError, check_birth_death, rate_bounds, validate_model
from .rng import seed_digest

OK, CONFIG, ASSUMPTION, THRESHOLD, INCONCLUSIVE = 0, 2, 3, 4, 5


class Exit(Exception):
    def __init__(self, code: int, message: str = ""):
        self.code, self.message = code, message
        super().__init__(message)


class Run:
    """Output directory with a manifest written before any result file."""

    def __init__(self, cfg: ExperimentConfig, command: str, out: str, outputs: list[str],
                 seed_tags: dict[str, int]):
        self.cfg, self.command, self.out = cfg, command, out
        self.outputs = outputs
        self.started = time.perf_counter()
        os.makedirs(out, exist_ok=True)
        self.manifest = {
            "command": command, "config_hash": cfg.hash(), "version": __version__,
            "base_seed": cfg.seed, "outputs": outputs,
            "derived_seeds": {tag: {"paths": n, "sha256": seed_digest(cfg.seed, tag, n)}
                              for tag, n in sorted(seed_tags.items())},
        }
        self._write_manifest()

    def _write_manifest(self):
        with open(os.path.join(self.out, "manifest.json"), "w", encoding="utf-8") as fh:
            fh.write(canonical_json(self.manifest))

    def json(self, name: str, obj: Any):
        self._check(name)
        with open(os.path.join(self.out, name), "w", encoding="utf-8") as fh:
            fh.write(canonical_json(obj))

    def csv(self, name: str, rows: list[dict]):
        self._check(name)
        buf = io.StringIO()
        if rows:
            w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _fmt(v) for k, v in r.items()})
        with open(os.path.join(self.out, name), "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())

    def text(self, name: str, body: str):
        self._check(name)
        with open(os.path.join(self.out, name), "w", encoding="utf-8") as fh:
            fh.write(body)

    def _check(self, name: str):
        if name not in self.outputs:
            raise RuntimeError(f"{name} missing from the manifest output list")

    def finish(self):
        self.manifest["wall_clock_seconds"] = round(time.perf_counter() - self.started, 3)
        self._write_manifest()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _get(cfg: ExperimentConfig, section: str, key: str, default=None, required: bool = False):
    sec = cfg.section(section)
    if key not in sec:
        if required:
            raise cfg.error((section,), f"missing key {key!r}")
        return default
    return sec[key]


def _positive_int(cfg, section, key, default):
    v = _get(cfg, section, key, default)
    if not isinstance(v, int) or v < 1:
        raise cfg.error((section, key), "must be a positive integer")
    return v


def _vec(cfg, section, key, default, n):
    v = _get(cfg, section, key, default)
    try:
        return np.asarray(v, dtype=np.float64).reshape(n)
    except (TypeError, ValueError):
        raise cfg.error((section, key), f"expected a vector of length {n}") from None


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def cmd_check(cfg: ExperimentConfig, out: str, workers: int) -> int:
    from .couple import alpha_matrix
    from .dominate import STANDARD, build_dominating, eta_bar, orientation_for
    model = cfg.model
    run = Run(cfg, "check", out, ["check.json", "check.txt"], {})
    report = validate_model(model)
    rb = rate_bounds(model)
    bd = check_birth_death(model)
    summary: dict[str, Any] = {"model": model.name, "N": model.N, "n": model.n,
                               "H": rb.H, "M": rb.M, "c_q": model.rates.lipschitz,
                               "rate_bounds_method": rb.method, "birth_death": bd["is_birth_death"],
                               "assumptions": report.to_dict()}
    lam = _get(cfg, "check", "lam", None)
    if bd["is_birth_death"] and model.N > 1:
        orient = orientation_for(lam) if lam is not None else STANDARD
        dom = build_dominating(model, orient)
        summary["dominating"] = dom.to_dict()
        summary["eta_bar"] = eta_bar(dom, lam if lam is not None else np.zeros(model.N))
        if model.constants.alpha is not None:
            summary["eta_alpha"] = alpha_matrix(model)[1]
    failed = report.failed()
    if "couple" in cfg.sections and not model.constants.has_A4:
        failed.append("A4 required")
    summary["failed"] = failed
    run.json("check.json", summary)
    lines = [f"model {model.name or '<unnamed>'}: N={model.N}, n={model.n}",
             f"H={rb.H:g}  M={rb.M:g}  c_q={summary['c_q']:g}  ({rb.method})"]
    if "eta_bar" in summary:
        lines.append(f"eta_bar={summary['eta_bar']:.6g}")
    if "eta_alpha" in summary:
        lines.append(f"eta_alpha={summary['eta_alpha']:.6g}")
    for k, v in report.verdicts.items():
        vd = v.to_dict()
        lines.append(f"{k:6s} {'pass' if v.passed else 'FAIL'}  [{v.method}] {json.dumps(vd['evidence'])}"
                     + (f" witness={json.dumps(vd['witness'])}" if v.witness is not None and not v.passed else ""))
    if "A4 required" in failed:
        lines.append("A4 required: couple experiments need C3, beta, p, i0")
    run.text("check.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    run.finish()
    return ASSUMPTION if failed else OK


def cmd_converge(cfg: ExperimentConfig, out: str, workers: int) -> int:
    from .integrate import ratio, steps_for, strong_error
    model = cfg.model
    deltas = _get(cfg, "converge", "deltas", [2.0 ** -k for k in range(4, 10)])
    dref = float(_get(cfg, "converge", "delta_ref", 2.0 ** -13))
    T = float(_get(cfg, "converge", "T", 1.0))
    paths = _positive_int(cfg, "converge", "paths", 1000)
    thr = float(_get(cfg, "converge", "slope_threshold", 0.45))
    x0 = _vec(cfg, "converge", "x0", [0.0] * model.n, model.n)
    i0 = int(_get(cfg, "converge", "i0", 1))
    try:
        for d in deltas:
            ratio(float(d), dref)
            steps_for(T, float(d))
    except ValueError as exc:
        raise cfg.error(("converge", "deltas"), str(exc)) from None
    if not model.constant_sigma:
        raise Exit(ASSUMPTION, "H1 required: the EM scheme needs constant sigma")
    run = Run(cfg, "converge", out, ["converge.csv", "converge.json"],
              {"drive": paths, "brownian": paths})
    rep = strong_error(model, deltas, dref, T, paths, cfg.seed, x0, i0, workers=workers)
    run.csv("converge.csv", rep.rows())
    d = rep.to_dict()
    d["slope"] = rep.slope if rep.slope is not None else "undefined"
    d["slope_threshold"] = thr
    d["passed"] = rep.slope is not None and rep.slope >= thr
    run.json("converge.json", d)
    print(f"slope={d['slope']}  threshold={thr}")
    run.finish()
    return OK if d["passed"] else THRESHOLD


def cmd_dominate(cfg: ExperimentConfig, out: str, workers: int) -> int:
    from .dominate import (STANDARD, build_dominating, check_domination, eta_bar, exp_functional,
                           feynman_kac, orientation_for)
    model = cfg.model
    paths = _positive_int(cfg, "dominate", "paths", 10000)
    T = float(_get(cfg, "dominate", "T", 5.0))
    delta = float(_get(cfg, "dominate", "delta", 0.01))
    i0 = int(_get(cfg, "dominate", "i0", 1))
    x0 = _vec(cfg, "dominate", "x0", [0.0] * model.n, model.n)
    lam = _get(cfg, "dominate", "lam", None)
    t_eval = [float(t) for t in _get(cfg, "dominate", "t_eval", [1.0, 2.0, 5.0])]
    orient = orientation_for(lam) if lam is not None else STANDARD
    dom = build_dominating(model, orient)
    if not dom.conditions_hold:
        v = dom.verdicts[0]
        raise Exit(ASSUMPTION, f"{v.name} fails: {v.evidence}; witness x={v.witness}")
    run = Run(cfg, "dominate", out, ["dominate.json", "feynman_kac.csv"],
              {"drive": paths, "brownian": paths})
    res = check_domination(model, T, paths, cfg.seed, i0, x0, delta, dom,
                           lam=lam, t_eval=[t for t in t_eval if t <= T])
    summary = {"dominating": dom.to_dict(), **res.to_dict()}
    rows = []
    if lam is not None:
        summary["eta_bar"] = eta_bar(dom, lam)
        mc_paths = min(paths, 10000)
        for t in t_eval:
            mc = exp_functional(lam, t, Q=dom, paths=mc_paths, seed=cfg.seed, i0=i0)
            rows.append({"t": t, "chain_mc": mc["estimate"], "chain_se": mc["std_error"],
                         "feynman_kac": feynman_kac(dom.Q, lam, t, i0)})
    run.csv("feynman_kac.csv", rows)
    run.json("dominate.json", summary)
    print(f"violations={res.violations} over {paths} paths; identical paths={res.identical_paths}")
    run.finish()
    return OK if res.violations == 0 else THRESHOLD


def cmd_couple(cfg: ExperimentConfig, out: str, workers: int) -> int:
    from .couple import (CouplingBoundParams, coupling_time_bound, coupling_time_limit, fixed_env_meeting,
                         simulate_coupling)
    model = cfg.model
    try:
        params = CouplingBoundParams.from_model(model)
    except AssumptionError as exc:
        raise Exit(ASSUMPTION, f"A4 required: {exc}") from None
    c = model.constants
    paths = _positive_int(cfg, "couple", "paths", 2000)
    delta = float(_get(cfg, "couple", "delta", 1e-3))
    Tmax = float(_get(cfg, "couple", "Tmax", 50.0))
    start = _get(cfg, "couple", "start", [[[1.0] * model.n, 1], [[-1.0] * model.n, 2]])
    min_frac = float(_get(cfg, "couple", "min_coupled_fraction", 0.99))
    distances = [float(r) for r in _get(cfg, "couple", "distances", [1.0, 5.0])]
    env_paths = _positive_int(cfg, "couple", "env_paths", paths)
    tol = float(_get(cfg, "couple", "tolerance", 0.05))
    try:
        (x, i), (y, j) = start
    except (TypeError, ValueError):
        raise cfg.error(("couple", "start"), "expected [[x, i], [y, j]]") from None
    run = Run(cfg, "couple", out, ["couple.json", "meeting_times.csv", "fixed_env.csv"],
              {"couple:brownian": paths, "couple:drive1": paths, "couple:drive2": paths,
               "fixed-env:brownian": env_paths})
    res = simulate_coupling(model, (x, i), (y, j), delta, Tmax, paths, cfg.seed, workers=workers)
    run.csv("meeting_times.csv", [{"path": p, "T": float(res.T[p]), "tau": float(res.tau[p])}
                                  for p in range(paths)])
    env_rows = []
    for r in distances:
        half = np.zeros(model.n)
        half[0] = r / 2
        out_r = fixed_env_meeting(model, c.i0, (half, -half), delta, Tmax, env_paths, cfg.seed,
                                  tolerance=tol, workers=workers)
        env_rows.append(out_r)
    run.csv("fixed_env.csv", env_rows)
    summary = {"coupling": res.to_dict(), "fixed_env": env_rows,
               "bound_limit": coupling_time_limit(params),
               "bound_params": {"C2": params.C2, "C3": params.C3, "beta": params.beta, "p": params.p}}
    run.json("couple.json", summary)
    print(f"coupled fraction={res.coupled_fraction:.4f}")
    for e in env_rows:
        print(f"|x-y|={e['r']:g}: E T1={e['mean_T1']:.4f} +- {e['se_T1']:.4f}  bound={e['bound']:.4f}  {e['status']}")
    run.finish()
    if res.censored_fraction > 0.5 or any(e["passed"] is None for e in env_rows):
        return INCONCLUSIVE
    ok = res.coupled_fraction >= min_frac and all(e["passed"] for e in env_rows)
    return OK if ok else THRESHOLD


def cmd_invariant(cfg: ExperimentConfig, out: str, workers: int) -> int:
    from .measure import init_tag, invariant_convergence
    model = cfg.model
    inits = _get(cfg, "invariant", "inits", None, required=True)
    try:
        inits = [(np.asarray(x, dtype=np.float64).reshape(model.n), int(i)) for x, i in inits]
    except (TypeError, ValueError):
        raise cfg.error(("invariant", "inits"), "expected a list of [x, i]") from None
    if len(inits) < 2:
        raise cfg.error(("invariant", "inits"), "need at least two initial conditions")
    times = [float(t) for t in _get(cfg, "invariant", "times", [1, 2, 5, 10, 20])]
    paths = _positive_int(cfg, "invariant", "paths", 2000)
    delta = float(_get(cfg, "invariant", "delta", 0.01))
    lag = float(_get(cfg, "invariant", "probe_lag", 5.0))
    thr = float(_get(cfg, "invariant", "threshold", 0.1))
    tags = {}
    for k, (x, i) in enumerate(inits):
        tag = f"{init_tag(x, i)}:brownian"
        tags[tag] = max(tags.get(tag, 0), 2 * paths if k == 0 else paths)
    run = Run(cfg, "invariant", out, ["invariant.csv", "invariant.json"], tags)
    res = invariant_convergence(model, inits, times, paths, cfg.seed, delta, lag, workers=workers)
    run.csv("invariant.csv", res.rows())
    d = res.to_dict()
    final = float(res.distances[-1].max())
    d["final_distance"], d["threshold"], d["passed"] = final, thr, final < thr
    run.json("invariant.json", d)
    for row in res.rows():
        print(", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    run.finish()
    return OK if final < thr else THRESHOLD


def cmd_simulate(cfg: ExperimentConfig, out: str, workers: int) -> int:
    from .integrate import em_path, sample_brownian
    from .skorokhod import sample_drive
    model = cfg.model
    T = float(_get(cfg, "simulate", "T", 1.0))
    delta = float(_get(cfg, "simulate", "delta", 0.01))
    x0 = _vec(cfg, "simulate", "x0", [0.0] * model.n, model.n)
    i0 = int(_get(cfg, "simulate", "i0", 1))
    path = int(_get(cfg, "simulate", "path", 0))
    run = Run(cfg, "simulate", out, ["path.csv", "drive.csv"], {"drive": path + 1, "brownian": path + 1})
    drive = sample_drive(T, model.M, cfg.seed, path)
    bm = sample_brownian(T, delta, model.n, cfg.seed, path)
    sp = em_path(model, delta, drive, bm, x0, i0)
    regs = sp.switch.at(sp.times)
    rows = [{"t": float(t), **{f"x{c + 1}": float(sp.X[k, c]) for c in range(model.n)}, "regime": int(regs[k])}
            for k, t in enumerate(sp.times)]
    run.csv("path.csv", rows)
    run.text("drive.csv", drive.to_csv())
    run.finish()
    return OK


COMMANDS: dict[str, Callable[[ExperimentConfig, str, int], int]] = {
    "check": cmd_check, "converge": cmd_converge, "dominate": cmd_dominate,
    "couple": cmd_couple, "invariant": cmd_invariant, "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsdp", description=__doc__.split("\n")[0])
    p.add_argument("--config", required=True, help="experiment YAML file")
    p.add_argument("--seed", type=int, default=None, help="base seed (overrides the config)")
    p.add_argument("--workers", type=int, default=None, help="worker processes; never changes results")
    p.add_argument("--out", default="rsdp-out", help="output directory")
    p.add_argument("command", choices=sorted(COMMANDS))
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_experiment(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        workers = args.workers if args.workers is not None else cfg.workers
        if workers < 1:
            raise ConfigError("--workers must be positive")
        return COMMANDS[args.command](cfg, args.out, workers)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG
    except Exit as exc:
        if exc.message:
            print(exc.message, file=sys.stderr)
        return exc.code
    except (AssumptionError, ModelError) as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return ASSUMPTION


if __name__ == "__main__":
    sys.exit(main())
