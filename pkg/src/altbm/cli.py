"""Batch front-end.

    altbm <command> --config <file> [--seed N] [--out DIR] [--workers N] [--set key=value ...]

The config is one JSON object.  Flags override its top-level fields.  Every
run writes ``manifest.json`` and ``<command>.csv``; ``<command>.json`` and
``<command>.svg`` are written when listed in ``formats``.  Invalid
configurations exit with status 1 and numerical failures with status 2, in
both cases with a JSON error object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AltBMError, InvalidInput, NumericalFailure
from .estimation import (
    empirical_generator,
    check_sweep_lambdas,
    mc_correlation,
    summarize_sweep,
    sweep_replication,
)
from .exp_alt import ExpAltParams, build_exp_alt_generator, corr_exp, cov_laplace_exp, simulate_exp_alternating
from .flipflop import build_standard_generator, wh_couple
from .map_alt import (
    MapParams,
    build_map_alt_generator,
    corr_map,
    cov_laplace,
    cov_laplace_occupation,
    simulate_map_alternating,
)
from .sampling import RandomStream

COMMANDS = ("simulate", "generator", "correlation", "laplace", "converge")
CONSTRUCTIONS = ("standard", "exp-alt", "map-alt")
FORMATS = ("csv", "json", "svg")
KNOWN_KEYS = {
    "command", "seed", "construction", "alpha", "beta", "start", "b", "C", "D", "gamma",
    "lambda", "lambdas", "horizon", "count", "t_grid", "q_grid", "replications",
    "output_dir", "formats", "workers", "terms", "tolerance",
}
DEFAULTS = {"seed": 0, "formats": ["csv"], "output_dir": "altbm-out"}


class ConfigError(InvalidInput):
    pass


# ---------------------------------------------------------------- config

def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _override(item: str):
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def _positive(cfg, key, kind=float):
    v = cfg.get(key)
    if v is None:
        raise ConfigError(f"'{key}' is required for {cfg['command']}")
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
        raise ConfigError(f"'{key}' must be a positive number, got {v!r}")
    if kind is int:
        if v != int(v):
            raise ConfigError(f"'{key}' must be an integer, got {v!r}")
        return int(v)
    return float(v)


def _grid(cfg, key):
    v = cfg.get(key)
    if not isinstance(v, list) or not v:
        raise ConfigError(f"'{key}' must be a nonempty list of positive numbers")
    out = []
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x) or x <= 0:
            raise ConfigError(f"'{key}' entries must be positive numbers, got {x!r}")
        out.append(float(x))
    return out


def resolve(cfg: dict) -> dict:
    """Validate and normalize a config; returns the dict echoed in the manifest."""
    unknown = sorted(set(cfg) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = {**DEFAULTS, **cfg}
    if cfg.get("command") not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}")
    if cfg.get("construction") not in CONSTRUCTIONS:
        raise ConfigError(f"construction must be one of {', '.join(CONSTRUCTIONS)}")
    seed = cfg["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    fmts = cfg["formats"]
    if not isinstance(fmts, list) or not fmts or any(f not in FORMATS for f in fmts):
        raise ConfigError(f"formats must be a nonempty subset of {list(FORMATS)}")
    if "csv" not in fmts:
        fmts = ["csv", *fmts]
    cfg["formats"] = sorted(set(fmts), key=FORMATS.index)
    if "workers" in cfg:
        cfg["workers"] = _positive(cfg, "workers", int)
    # parameters are checked by the model constructors
    params(cfg)
    return cfg


def params(cfg):
    kind = cfg["construction"]
    if kind == "exp-alt":
        for key in ("alpha", "beta"):
            if key not in cfg:
                raise ConfigError(f"'{key}' is required for exp-alt")
        return ExpAltParams(cfg["alpha"], cfg["beta"], cfg.get("start", "sync"))
    if kind == "map-alt":
        for key in ("b", "C", "D"):
            if key not in cfg:
                raise ConfigError(f"'{key}' is required for map-alt")
        return MapParams(cfg["b"], cfg["C"], cfg["D"])
    return None


def _param_columns(cfg):
    """Metadata columns carried by every table row."""
    cols = {"seed": cfg["seed"], "construction": cfg["construction"]}
    if cfg["construction"] == "exp-alt":
        cols.update(alpha=float(cfg["alpha"]), beta=float(cfg["beta"]), start=cfg.get("start", "sync"))
    elif cfg["construction"] == "map-alt":
        for key in ("b", "C", "D"):
            cols[key] = json.dumps(cfg[key], separators=(",", ":"))
    if "gamma" in cfg:
        cols["gamma"] = float(cfg["gamma"])
    return cols


def _lambdas(cfg):
    if "lambdas" in cfg:
        return check_sweep_lambdas(_grid(cfg, "lambdas"))
    return [_positive(cfg, "lambda")]


def _extent(cfg):
    if "horizon" in cfg and "count" in cfg:
        raise ConfigError("give either 'horizon' or 'count', not both")
    if "count" in cfg:
        return {"count": _positive(cfg, "count", int)}
    return {"horizon": _positive(cfg, "horizon")}


# ---------------------------------------------------------------- jobs

def _map_jobs(fn, jobs, workers):
    """Ordered map; each job carries its own pre-derived stream, so the
    result does not depend on the number of workers."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, *zip(*jobs), chunksize=max(1, len(jobs) // (4 * workers))))


def _correlation_job(driver, t, replications, stream):
    est = mc_correlation(driver, t, replications, stream)
    return est.mean, est.stderr


def _sweep_job(construction, lambdas, horizon, stream, model):
    return sweep_replication(construction, lambdas, horizon, stream, model)


# ---------------------------------------------------------------- commands

def _state_label(state) -> str:
    return "|".join(str(x) for x in np.atleast_1d(state).tolist())


def cmd_simulate(cfg, root, workers):
    model = params(cfg)
    lambdas = _lambdas(cfg)
    extent = _extent(cfg)
    rows, dump = [], {}
    if cfg["construction"] == "standard":
        header = ["lambda", "t", "F1", "J1"]
        for i, lam in enumerate(lambdas):
            pair = wh_couple(lam, extent.get("count"), root.substream(f"lambda-{i}"),
                             horizon=extent.get("horizon"))
            st = pair.phase.states
            for k, t in enumerate(pair.phase.times):
                rows.append([lam, t, pair.fluid.levels[k], int(st[min(k, len(st) - 1)])])
            sk = pair.skeleton
            dump[repr(lam)] = {"theta": sk.epochs, "C": sk.values, "M": sk.minima, "chi": pair.chi}
    else:
        if cfg["construction"] == "exp-alt":
            _, sched, paths = simulate_exp_alternating(model, lambdas, root, **extent)
        else:
            _, sched, paths = simulate_map_alternating(model, lambdas, root, gamma=cfg.get("gamma"), **extent)
        with_u = cfg["construction"] == "map-alt"
        header = ["lambda", "t", "F1", "F2", "J1", "J2", "sync"] + (["U"] if with_u else [])
        for lam in sorted(paths):
            p = paths[lam]
            st = p.phase.states
            for k, row in enumerate(p.to_rows()):
                rows.append([lam, *row] + ([int(st[min(k, len(st) - 1), 2])] if with_u else []))
            sk = p.coupled.skeleton
            dump[repr(lam)] = {"theta": sk.epochs, "C": sk.values, "M": sk.minima,
                               "chi": p.coupled.chi, "S": p.s_epochs, "Bstar": p.bstar_skeleton()}
    return header, rows, {"paths": dump}


def cmd_generator(cfg, root, workers):
    model = params(cfg)
    lam = _positive(cfg, "lambda")
    kind = cfg["construction"]
    if kind == "standard":
        gen = build_standard_generator(lam)
    elif kind == "exp-alt":
        gen = build_exp_alt_generator(lam, model)
    else:
        gen = build_map_alt_generator(lam, model)
    empirical = None
    if "horizon" in cfg or "count" in cfg:
        extent = _extent(cfg)
        if kind == "standard":
            phase = wh_couple(lam, extent.get("count"), root, horizon=extent.get("horizon")).phase
        elif kind == "exp-alt":
            phase = simulate_exp_alternating(model, [lam], root, **extent)[2][lam].phase
        else:
            phase = simulate_map_alternating(model, [lam], root, gamma=cfg.get("gamma"), **extent)[2][lam].phase
        empirical = empirical_generator([phase], gen.states)
    header = ["lambda", "from", "to", "rate"]
    if empirical is not None:
        header += ["count", "holding", "empirical", "stderr"]
    rows = []
    for i, a in enumerate(gen.states):
        for j, b in enumerate(gen.states):
            row = [lam, _state_label(a), _state_label(b), gen.Q[i, j]]
            if empirical is not None:
                seen = empirical.observed[i]
                # unobserved origin states get empty estimate cells, never NaN
                row += [int(empirical.counts[i, j]), empirical.holding[i],
                        empirical.estimate[i, j] if seen else None,
                        empirical.stderr[i, j] if seen else None]
            rows.append(row)
    extra = {"states": [list(np.atleast_1d(s).tolist()) for s in gen.states], "Q": gen.Q}
    if empirical is not None:
        extra["empirical_counts"] = empirical.counts
        extra["holding"] = empirical.holding
    return header, rows, extra


def cmd_correlation(cfg, root, workers):
    model = params(cfg)
    if cfg["construction"] == "standard":
        raise ConfigError("correlation needs construction exp-alt or map-alt")
    ts = _grid(cfg, "t_grid")
    reps = _positive(cfg, "replications", int)
    terms = int(cfg.get("terms", 41))
    tol = float(cfg.get("tolerance", 1e-8))
    if cfg["construction"] == "exp-alt":
        analytic = [corr_exp(model, t) for t in ts]
    else:
        analytic = [corr_map(model, t, terms, tol) for t in ts]
    jobs = [(model, t, reps, root.substream(f"t-{i}")) for i, t in enumerate(ts)]
    mc = _map_jobs(_correlation_job, jobs, workers)
    header = ["t", "analytic", "mc_estimate", "mc_stderr", "replications"]
    rows = [[t, a, m, se, reps] for t, a, (m, se) in zip(ts, analytic, mc)]
    return header, rows, {}


def cmd_laplace(cfg, root, workers):
    model = params(cfg)
    if cfg["construction"] == "standard":
        raise ConfigError("laplace needs construction exp-alt or map-alt")
    qs = _grid(cfg, "q_grid")
    if cfg["construction"] == "exp-alt":
        m, sign = model.as_map(), (-1) ** model.parity_offset
        header = ["q", "transform", "occupation_form", "closed_form"]
        rows = [[q, sign * cov_laplace(m, q), sign * cov_laplace_occupation(m, q), cov_laplace_exp(model, q)]
                for q in qs]
    else:
        header = ["q", "transform", "occupation_form"]
        rows = [[q, cov_laplace(model, q), cov_laplace_occupation(model, q)] for q in qs]
    return header, rows, {}


def cmd_converge(cfg, root, workers):
    model = params(cfg)
    lambdas = check_sweep_lambdas(_grid(cfg, "lambdas"))
    horizon = _positive(cfg, "horizon") if "horizon" in cfg else 1.0
    reps = _positive(cfg, "replications", int)
    jobs = [(cfg["construction"], lambdas, horizon, root.substream(f"replication-{r}"), model)
            for r in range(reps)]
    out = _map_jobs(_sweep_job, jobs, workers)
    mis = np.column_stack([o[0] for o in out])
    resid = np.column_stack([o[1] for o in out])
    summary = summarize_sweep(lambdas, mis, resid)
    fitted = math.isfinite(summary["slope"])
    lo, hi = summary["slope_ci"]
    header = ["lambda", "median_misalignment", "p90_misalignment", "max_identity_residual",
              "slope", "slope_lo", "slope_hi", "horizon", "replications"]
    rows = [[r["lambda"], r["median_misalignment"], r["p90_misalignment"], r["max_identity_residual"],
             summary["slope"] if fitted else None, lo if fitted else None, hi if fitted else None,
             horizon, reps] for r in summary["rows"]]
    return header, rows, {"misalignment": summary["misalignment"]}


HANDLERS = {
    "simulate": cmd_simulate,
    "generator": cmd_generator,
    "correlation": cmd_correlation,
    "laplace": cmd_laplace,
    "converge": cmd_converge,
}


# ---------------------------------------------------------------- output

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise NumericalFailure(f"non-finite value {v} in output")
        return format(float(v), ".17g")
    return str(v)


def to_csv(header, rows, meta) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(meta) + header)
    fixed = [_cell(v) for v in meta.values()]
    for row in rows:
        w.writerow(fixed + [_cell(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise NumericalFailure(f"non-finite value {obj} in output")
        return float(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def to_svg(command, header, rows) -> str | None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "altbm"
    col = {h: i for i, h in enumerate(header)}
    fig, ax = plt.subplots(figsize=(6, 4))
    if command == "correlation":
        t = [r[col["t"]] for r in rows]
        ax.plot(t, [r[col["analytic"]] for r in rows], "-", color="k", label="analytic")
        ax.errorbar(t, [r[col["mc_estimate"]] for r in rows], yerr=[3 * r[col["mc_stderr"]] for r in rows],
                    fmt="o", ms=4, capsize=3, label="Monte Carlo (3 SE)")
        ax.set_xlabel("t")
        ax.set_ylabel("Corr(B(t), B*(t))")
        ax.legend()
    elif command == "converge":
        ax.loglog([r[0] for r in rows], [r[1] for r in rows], "o-", label="median")
        ax.loglog([r[0] for r in rows], [r[2] for r in rows], "s--", label="90th percentile")
        ax.set_xlabel("lambda")
        ax.set_ylabel("max_k |theta_k - chi_k|")
        ax.legend()
    elif command == "simulate":
        for lam in sorted({r[0] for r in rows}):
            sub = [r for r in rows if r[0] == lam]
            ax.plot([r[1] for r in sub], [r[2] for r in sub], lw=0.8, label=f"F1, lambda={lam:g}")
            if "F2" in col:
                ax.plot([r[1] for r in sub], [r[col["F2"]] for r in sub], lw=0.8, label=f"F2, lambda={lam:g}")
        ax.set_xlabel("t")
        ax.legend(fontsize=7)
    elif command == "laplace":
        ax.plot([r[0] for r in rows], [r[1] for r in rows], "o-")
        ax.set_xscale("log")
        ax.set_xlabel("q")
        ax.set_ylabel("Laplace transform of E[B(t)B*(t)]")
    else:
        plt.close(fig)
        return None
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def run(cfg: dict, out_dir=None) -> list[str]:
    """Execute one validated experiment and write its files; returns the file list."""
    cfg = resolve(cfg)
    out = Path(out_dir or cfg["output_dir"])
    workers = cfg.get("workers", os.cpu_count() or 1)
    command = cfg["command"]
    root = RandomStream(cfg["seed"]).substream(command)
    header, rows, extra = HANDLERS[command](cfg, root, workers)
    meta = _param_columns(cfg)
    files = {f"{command}.csv": to_csv(header, rows, meta)}
    if "json" in cfg["formats"]:
        files[f"{command}.json"] = dump_json({
            "metadata": meta,
            "columns": header,
            "rows": [[None if v is None else v for v in r] for r in rows],
            **extra,
        })
    if "svg" in cfg["formats"]:
        svg = to_svg(command, header, rows)
        if svg is None:
            raise ConfigError(f"no plot is defined for {command}")
        files[f"{command}.svg"] = svg
    echo = {k: v for k, v in cfg.items() if k not in ("output_dir", "workers")}
    manifest = {"tool": "altbm", "version": __version__, "config": echo,
                "files": sorted(files) + ["manifest.json"]}
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)
    (out / "manifest.json").write_text(dump_json(manifest))
    return manifest["files"]


def _fail(exc: Exception, code: int) -> int:
    print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}),
          file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="altbm", description="Flip-flop couplings of alternating Brownian motion.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment description")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a top-level config field (value parsed as JSON when possible)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        for item in args.set:
            key, value = _override(item)
            cfg[key] = value
        cfg["command"] = args.command
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.workers is not None:
            cfg["workers"] = args.workers
        if args.out is not None:
            cfg["output_dir"] = args.out
        files = run(cfg)
    except InvalidInput as exc:
        return _fail(exc, 1)
    except NumericalFailure as exc:
        return _fail(exc, 2)
    except AltBMError as exc:
        return _fail(exc, 2)
    print(json.dumps({"output_dir": str(Path(cfg["output_dir"])), "files": files}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
