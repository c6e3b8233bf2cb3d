"""Command-line front end.

Subcommands: select-models, run, reference, plot-data.  All outputs are
deterministic functions of (config, master seed): CSVs carry a `# schema=1`
header comment, floats are written with shortest round-trip repr, and row
order follows the configuration order.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import adapt, mlmc
from .config import ExperimentConfig, build_problem
from .errors import ConfigError, MbmlmcError, SingularSystem, SolverDiverged
from .homogenize import FINE, ModelSpec
from .media import derive_seed

SCHEMA = "# schema=1"
RUN_STREAM = 5
REF_STREAM = 6


def _fmt(x):
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, columns, rows):
    lines = [SCHEMA, ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _model_to_dict(model: ModelSpec):
    return {
        "variant": model.variant,
        "coarsen": model.coarsen,
        "refined_blocks": sorted(model.refined_blocks),
    }


def _model_from_dict(d) -> ModelSpec:
    return ModelSpec(
        d["variant"],
        coarsen=int(d.get("coarsen", 0)),
        refined_blocks=frozenset(d.get("refined_blocks", ())),
    )


def _pilot_key(config: ExperimentConfig):
    return {
        "preset": config.preset,
        "m_hat": config.m_hat,
        "gamma": config.gamma,
        "master_seed": config.master_seed,
        "min_tolerance": min(config.tolerances),
    }


def run_selection(config: ExperimentConfig, prob) -> adapt.ModelSequence:
    params = adapt.SelectionParams(
        tol_bias=min(config.tolerances) / np.sqrt(2.0),
        m_hat=config.m_hat,
        gamma=config.gamma,
    )
    return adapt.select_models(prob, params, config.master_seed)


def save_selection(config: ExperimentConfig, seq: adapt.ModelSequence, out: Path):
    rows = []
    for e in seq.entries:
        refined = ";".join(str(b) for b in sorted(e.model.refined_blocks))
        rows.append((e.label, refined, e.pilot_error, e.work))
    write_csv(out / "models.csv", ("model_id", "refined_blocks", "pilot_error", "pilot_work_avg"), rows)
    brows = [
        (b.id, b.kind) + b.bounds
        for b in _partition_blocks(config)
    ]
    write_csv(out / "blocks.csv", ("id", "kind", "x0", "y0", "x1", "y1"), brows)
    cache = {
        "key": _pilot_key(config),
        "tol_bias": seq.tol_bias,
        "exhausted": seq.exhausted,
        "pilot_work": seq.pilot_work,
        "fine": {"qois": seq.fine_qois.tolist(), "work": seq.fine_work},
        "seeds": seq.seeds,
        "entries": [
            {
                "model": _model_to_dict(e.model),
                "label": e.label,
                "qois": e.qois.tolist(),
                "work": e.work,
                "pilot_error": e.pilot_error,
            }
            for e in seq.entries
        ],
        "log": seq.selection_log,
    }
    (out / "pilot_cache.json").write_text(json.dumps(cache, indent=1), encoding="utf-8")
    (out / "selection.log").write_text("\n".join(seq.selection_log) + "\n", encoding="utf-8")


def _partition_blocks(config):
    return build_problem(config).partition.blocks


def load_selection(config: ExperimentConfig, out: Path):
    path = out / "pilot_cache.json"
    if not path.exists():
        return None
    data = json.loads(path.read_text(encoding="utf-8"))
    if data.get("key") != _pilot_key(config):
        return None
    entries = [
        adapt.ModelEntry(
            model=_model_from_dict(e["model"]),
            label=e["label"],
            qois=np.asarray(e["qois"]),
            work=e["work"],
            pilot_error=e["pilot_error"],
        )
        for e in data["entries"]
    ]
    return adapt.ModelSequence(
        entries=entries,
        fine_qois=np.asarray(data["fine"]["qois"]),
        fine_work=data["fine"]["work"],
        seeds=list(data["seeds"]),
        tol_bias=data["tol_bias"],
        exhausted=data["exhausted"],
        pilot_work=data["pilot_work"],
        selection_log=list(data.get("log", ())),
    )


def ensure_selection(config: ExperimentConfig, prob, out: Path) -> adapt.ModelSequence:
    seq = load_selection(config, out)
    if seq is None:
        seq = run_selection(config, prob)
        save_selection(config, seq, out)
    return seq


def cmd_select_models(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prob = build_problem(config)
    seq = run_selection(config, prob)
    save_selection(config, seq, out)
    return out / "models.csv"


def cmd_reference(config: ExperimentConfig) -> Path:
    """High-accuracy reference: zero-bias MLMC with the fine model as last
    level at half the smallest tolerance, averaged over >= 4 repetitions."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prob = build_problem(config)
    seq = ensure_selection(config, prob, out)
    tol_ref = min(config.tolerances) / 2.0
    levels = max(int(l) for l in config.levels)
    plan = mlmc.select_levels(seq, levels, tol_ref, force_zero=True)
    master = derive_seed(config.master_seed, REF_STREAM)
    estimates = []
    for rep in range(config.reference_repetitions):
        res = mlmc.run_mlmc(plan, prob, master, repetition=rep, threads=config.threads)
        estimates.append(res.estimate)
    estimates = np.asarray(estimates)
    ref = {
        "value": float(np.mean(estimates)),
        "se": float(np.std(estimates, ddof=1) / np.sqrt(len(estimates))),
        "repetitions": len(estimates),
        "tolerance": tol_ref,
        "master_seed": config.master_seed,
        "estimates": estimates.tolist(),
    }
    path = out / "reference.json"
    path.write_text(json.dumps(ref, indent=1), encoding="utf-8")
    return path


def cmd_run(config: ExperimentConfig) -> Path:
    """Model selection, level selection, MLMC runs and MC baselines; emits
    runs.csv, levels.csv and convergence.csv."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prob = build_problem(config)
    seq = ensure_selection(config, prob, out)
    ref_path = out / "reference.json"
    if not ref_path.exists():
        cmd_reference(config)
    reference = json.loads(ref_path.read_text(encoding="utf-8"))["value"]

    run_rows = []
    level_rows = []
    results = {}
    for ti, tol in enumerate(config.tolerances):
        for li, levels in enumerate(config.levels):
            seq_t = seq.for_tolerance(tol)
            plan = mlmc.select_levels(seq_t, int(levels), tol)
            master = derive_seed(config.master_seed, RUN_STREAM, ti, li)
            for rep in range(config.repetitions):
                res = mlmc.run_mlmc(plan, prob, master, repetition=rep, threads=config.threads)
                results.setdefault(("mlmc", levels, tol), []).append(res)
                run_rows.append(
                    (tol, int(levels), rep, res.estimate, res.work_total, res.work_preprocess)
                )
                for row in res.levels:
                    level_rows.append(
                        (
                            tol,
                            int(levels),
                            rep,
                            row["level"],
                            row["label"],
                            row["samples"],
                            row["variance"],
                            row["work"],
                        )
                    )
        if config.mc_baseline:
            master = derive_seed(config.master_seed, RUN_STREAM, ti, 99)
            for rep in range(config.mc_reps):
                res = mlmc.run_plain_mc(
                    FINE, prob, tol, master, m_hat=config.mc_pilot,
                    repetition=rep, threads=config.threads,
                )
                results.setdefault(("mc", 1, tol), []).append(res)
                run_rows.append((tol, 1, rep, res.estimate, res.work_total, res.work_preprocess))
                for row in res.levels:
                    level_rows.append(
                        (tol, 1, rep, row["level"], row["label"], row["samples"], row["variance"], row["work"])
                    )
    write_csv(
        out / "runs.csv",
        ("tol", "L", "rep", "estimate", "work_total", "work_preprocess"),
        run_rows,
    )
    write_csv(
        out / "levels.csv",
        ("tol", "L", "rep", "level", "model_id", "M_l", "V_l", "W_l"),
        level_rows,
    )
    conv_rows = []
    for (method, levels, tol), rs in results.items():
        errs = np.array([r.estimate - reference for r in rs])
        rmse = float(np.sqrt(np.mean(errs**2)))
        work = float(np.mean([r.work_total for r in rs]))
        conv_rows.append((method, int(levels), tol, rmse, work))
    write_csv(out / "convergence.csv", ("method", "L", "tol", "rmse", "work_mean"), conv_rows)
    return out / "runs.csv"


def cmd_plot_data(config: ExperimentConfig) -> Path:
    """Recompute convergence.csv from runs.csv and reference.json."""
    out = Path(config.out_dir)
    runs_path = out / "runs.csv"
    ref_path = out / "reference.json"
    if not runs_path.exists():
        raise ConfigError("out_dir", f"no runs.csv under {out}")
    if not ref_path.exists():
        raise ConfigError("out_dir", f"no reference.json under {out}")
    reference = json.loads(ref_path.read_text(encoding="utf-8"))["value"]
    lines = runs_path.read_text(encoding="utf-8").strip().splitlines()
    if lines[0].strip() != SCHEMA:
        raise ConfigError("runs.csv", "schema mismatch")
    header = lines[1].split(",")
    idx = {name: i for i, name in enumerate(header)}
    groups = {}
    for line in lines[2:]:
        parts = line.split(",")
        tol = float(parts[idx["tol"]])
        levels = int(parts[idx["L"]])
        method = "mc" if levels == 1 else "mlmc"
        est = float(parts[idx["estimate"]])
        work = float(parts[idx["work_total"]])
        groups.setdefault((method, levels, tol), []).append((est, work))
    rows = []
    for (method, levels, tol), vals in groups.items():
        errs = np.array([v[0] - reference for v in vals])
        rows.append(
            (
                method,
                levels,
                tol,
                float(np.sqrt(np.mean(errs**2))),
                float(np.mean([v[1] for v in vals])),
            )
        )
    write_csv(out / "convergence.csv", ("method", "L", "tol", "rmse", "work_mean"), rows)
    return out / "convergence.csv"


def build_config(args) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.from_file(args.config)
    else:
        config = ExperimentConfig().validate()
    if args.preset:
        config.preset = args.preset
    if args.seed is not None:
        config.master_seed = args.seed
    if args.threads is not None:
        config.threads = args.threads
    if args.out is not None:
        config.out_dir = args.out
    return config.validate()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mbmlmc",
        description="Adaptive surrogate modeling and model-based MLMC for random two-phase media",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("select-models", "run", "reference", "plot-data"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON config path")
        p.add_argument("--preset", type=str, default=None, choices=("heat-rect", "elasticity-lshape"))
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", type=str, default=None, help="output directory")
    args = parser.parse_args(argv)
    try:
        config = build_config(args)
        cmd = {
            "select-models": cmd_select_models,
            "run": cmd_run,
            "reference": cmd_reference,
            "plot-data": cmd_plot_data,
        }[args.command]
        path = cmd(config)
        print(path)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverDiverged, SingularSystem) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except MbmlmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
