"""Command line front end.

Subcommands:
    simulate <config>     run the configured recovery trials, write traces
    check [--full]        run the invariant suite, write a CSV report
    analyze <dir>         fit rates/burn-in over a directory of traces
    gen-model <spec>      generate a model file from a one-line spec

Exit codes: 0 ok, 2 config error, 3 numeric divergence, 4 check failures.
"""

import argparse
import json
import math
import os
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .checks import report_csv, report_table, run_checks
from .config import ConfigError, ExperimentConfig, MU_AUTO, load_config, serialize_config
from .convex_prior import box_denoiser, sample_box
from .diagnostics import detect_burn_in, fit_linear_rate
from .errors import DivergenceError, InsufficientDataError, ResourceLimitError
from .lrgmm_prior import LrGmmPrior, denoiser, random_lrgmm, sample, sparse_gmm, uniform_lrgmm
from .model_sets import BoxSet, UnionOfSubspaces, random_union, squared_projection_norms
from .modelio import load_model, save_model
from .recovery_engine import TRACE_FORMAT_LINE, RecoveryTrace, run_recovery
from .sensing_analysis import SensingProblem, gaussian_operator, spectral_norm

MANIFEST_NAME = "manifest.json"
RESOLVED_NAME = "resolved.cfg"
REPORT_NAME = "check_report.csv"
ANALYZE_OUTPUTS = ("rates.csv", "summary.csv")


class _RealizedPrior:
    """A config prior turned into sampler + denoiser + trace context."""

    def __init__(self, spec):
        self.descriptor = {"kind": spec.kind}
        if spec.kind == "lrgmm":
            rng = np.random.default_rng(spec.seed)
            pi = list(spec.pi) if spec.pi is not None else None
            model = random_lrgmm(spec.d, spec.r, spec.k, rng, pi=pi)
            self.descriptor.update(d=spec.d, r=spec.r, k=spec.k, seed=spec.seed)
        elif spec.kind == "sparse":
            pi = list(spec.pi) if spec.pi is not None else None
            model = sparse_gmm(spec.d, spec.s, pi=pi)
            self.descriptor.update(d=spec.d, s=spec.s)
        elif spec.kind == "box":
            model = BoxSet(lower=spec.lower, upper=spec.upper)
            self.descriptor.update(d=model.ambient_dim)
        else:
            model = load_model(spec.path)
            if isinstance(model, UnionOfSubspaces):
                model = uniform_lrgmm(model)
            if not isinstance(model, (LrGmmPrior, BoxSet)):
                raise ConfigError(
                    f"[prior] path: {spec.path} does not hold a prior or a box"
                )
            self.descriptor.update(path=spec.path)

        if isinstance(model, BoxSet):
            self.box = model
            self.prior = None
            self.ambient_dim = model.ambient_dim
            self.denoise = lambda z, sg: box_denoiser(model, z, sg)
        else:
            self.box = None
            self.prior = model
            self.ambient_dim = model.ambient_dim
            self.denoise = lambda z, sg: denoiser(model, z, sg).value

    def draw(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        if self.box is not None:
            return sample_box(self.box, rng)[0]
        return sample(self.prior, rng)

    def true_component(self, x: np.ndarray):
        if self.prior is None:
            return None
        return int(np.argmax(squared_projection_norms(self.prior.union, x)))


def _resolve_mu(mu, operator) -> float:
    if mu == MU_AUTO:
        return 1.9 / spectral_norm(operator) ** 2
    return float(mu)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        changes["threads"] = args.threads
    if args.seed_override is not None:
        changes["trial_seeds"] = tuple(
            args.seed_override + i for i in range(len(cfg.trial_seeds))
        )
    if not changes:
        return cfg
    from dataclasses import replace

    return replace(cfg, **changes)


def _trace_name(schedule_name: str, seed: int) -> str:
    return f"trace_{schedule_name}_{seed:05d}.csv"


def cmd_simulate(args) -> int:
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        realized = _RealizedPrior(cfg.prior)
    except (ConfigError, ResourceLimitError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    operator = gaussian_operator(
        cfg.sensing.m, realized.ambient_dim, np.random.default_rng(cfg.sensing.seed)
    )
    mu = _resolve_mu(cfg.sensing.mu, operator)
    os.makedirs(cfg.out_dir, exist_ok=True)

    def one_run(task):
        schedule_name, schedule, seed = task
        x_true = realized.draw(seed)
        problem = SensingProblem(operator, mu, operator @ x_true, x_true=x_true, seed=seed)
        metadata = {
            "schedule_name": schedule_name,
            "trial_seed": seed,
            "prior": realized.descriptor,
        }
        component = realized.true_component(x_true)
        if component is not None:
            metadata["true_component"] = component
        # overflow inside a diverging run is reported via DivergenceError
        with np.errstate(over="ignore", invalid="ignore"):
            trace = run_recovery(
                problem,
                realized.denoise,
                schedule,
                n_iters=cfg.n_iters,
                prior=realized.prior,
                record_iterates=False,
                metadata=metadata,
            )
        name = _trace_name(schedule_name, seed)
        trace.write_csv(os.path.join(cfg.out_dir, name))
        return name

    tasks = [
        (name, schedule, seed)
        for seed in cfg.trial_seeds
        for name, schedule in cfg.schedules
    ]
    files = []
    diverged = []
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = {pool.submit(one_run, task): task for task in tasks}
        for future, task in futures.items():
            try:
                files.append(future.result())
            except DivergenceError as exc:
                diverged.append((task[0], task[2], exc))
    if diverged:
        diverged.sort(key=lambda item: (item[0], item[1]))
        for schedule_name, seed, exc in diverged:
            print(
                f"divergence in run {_trace_name(schedule_name, seed)}: {exc}",
                file=sys.stderr,
            )
        return 3

    with open(os.path.join(cfg.out_dir, RESOLVED_NAME), "w", newline="\n") as fh:
        fh.write(serialize_config(cfg))
    manifest = {
        "files": sorted(files + [RESOLVED_NAME, MANIFEST_NAME]),
        "prior": realized.descriptor,
        "sensing_seed": cfg.sensing.seed,
        "trial_seeds": list(cfg.trial_seeds),
        "mu": mu,
    }
    with open(os.path.join(cfg.out_dir, MANIFEST_NAME), "w", newline="\n") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    print(f"wrote {len(files)} traces to {cfg.out_dir}")
    return 0


def cmd_check(args) -> int:
    results = run_checks("full" if args.full else "fast")
    out_dir = args.out if args.out is not None else "."
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, REPORT_NAME)
    with open(report_path, "w", newline="\n") as fh:
        fh.write(report_csv(results))
    print(report_table(results), end="")
    print(f"report: {report_path}")
    return 0 if all(res.passed for res in results) else 4


def _is_trace_file(path) -> bool:
    try:
        with open(path, "r") as fh:
            return fh.readline().rstrip("\n") == TRACE_FORMAT_LINE
    except OSError:
        return False


def _fit_row(trace: RecoveryTrace, fname: str):
    meta = trace.metadata
    schedule = meta.get("schedule_name") or meta.get("schedule", {}).get("kind", "")
    seed = meta.get("trial_seed", meta.get("seed", ""))
    burn_in = None
    if trace.subspace_distances is not None and "true_component" in meta:
        burn_in = detect_burn_in(trace, int(meta["true_component"]))
    try:
        fit = fit_linear_rate(trace, from_n=burn_in or 0)
        rate, r2 = format(fit.rate, ".17g"), format(fit.r2, ".17g")
    except InsufficientDataError:
        rate, r2 = "", ""
    return {
        "file": fname,
        "schedule": schedule,
        "seed": seed,
        "burn_in": "" if burn_in is None else burn_in,
        "rate": rate,
        "r2": r2,
        "final_mse": format(trace.final_mse, ".17g"),
        "_burn_in_raw": burn_in,
    }


def cmd_analyze(args) -> int:
    directory = args.dir
    if not os.path.isdir(directory):
        print(f"not a directory: {directory}", file=sys.stderr)
        return 2
    out_dir = args.out if args.out is not None else directory
    os.makedirs(out_dir, exist_ok=True)

    rows = []
    candidates = sorted(
        fname
        for fname in os.listdir(directory)
        if fname.endswith(".csv") and fname not in ANALYZE_OUTPUTS
    )
    for fname in candidates:
        path = os.path.join(directory, fname)
        if not _is_trace_file(path):
            print(f"skipping {fname}: not a trace file", file=sys.stderr)
            continue
        try:
            trace = RecoveryTrace.read_csv(path)
        except (ValueError, json.JSONDecodeError) as exc:
            print(f"skipping {fname}: {exc}", file=sys.stderr)
            continue
        rows.append(_fit_row(trace, fname))
    if not rows:
        print(f"no readable traces in {directory}", file=sys.stderr)
        return 2

    rates_path = os.path.join(out_dir, "rates.csv")
    with open(rates_path, "w", newline="\n") as fh:
        fh.write("file,schedule,seed,burn_in,rate,r2,final_mse\n")
        for row in rows:
            fh.write(
                f"{row['file']},{row['schedule']},{row['seed']},{row['burn_in']},"
                f"{row['rate']},{row['r2']},{row['final_mse']}\n"
            )

    by_schedule = {}
    for row in rows:
        by_schedule.setdefault(row["schedule"], []).append(row)
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="\n") as fh:
        fh.write("schedule,n_traces,mean_final_mse,median_final_mse,mean_burn_in\n")
        for schedule in sorted(by_schedule):
            group = by_schedule[schedule]
            mses = [float(row["final_mse"]) for row in group]
            burns = [row["_burn_in_raw"] for row in group if row["_burn_in_raw"] is not None]
            mean_burn = format(statistics.mean(burns), ".17g") if burns else ""
            fh.write(
                f"{schedule},{len(group)},{format(statistics.mean(mses), '.17g')},"
                f"{format(statistics.median(mses), '.17g')},{mean_burn}\n"
            )
    print(f"analyzed {len(rows)} traces; wrote {rates_path} and {summary_path}")
    return 0


def _parse_model_spec(spec: str) -> dict:
    if ":" not in spec:
        raise ConfigError(f"model spec needs kind:key=value,..., got {spec!r}")
    kind, _, rest = spec.partition(":")
    fields = {}
    for item in rest.split(","):
        if not item:
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"model spec item {item!r} is not key=value")
        fields[key.strip()] = value.strip()
    fields["kind"] = kind.strip()
    return fields


def _spec_int(fields, key) -> int:
    if key not in fields:
        raise ConfigError(f"model spec: missing {key}")
    try:
        return int(fields[key])
    except ValueError:
        raise ConfigError(f"model spec: {key} must be an integer") from None


def _spec_floats(fields, key):
    if key not in fields:
        raise ConfigError(f"model spec: missing {key}")
    try:
        return [float(v) for v in fields[key].split("|")]
    except ValueError:
        raise ConfigError(f"model spec: {key} must be numbers separated by |") from None


def cmd_gen_model(args) -> int:
    try:
        fields = _parse_model_spec(args.spec)
        kind = fields.pop("kind")
        seed = args.seed_override
        if kind == "lrgmm":
            if seed is None:
                seed = _spec_int(fields, "seed")
            pi = _spec_floats(fields, "pi") if "pi" in fields else None
            model = random_lrgmm(
                _spec_int(fields, "d"),
                _spec_int(fields, "r"),
                _spec_int(fields, "k"),
                np.random.default_rng(seed),
                pi=pi,
            )
        elif kind == "sparse":
            pi = _spec_floats(fields, "pi") if "pi" in fields else None
            model = sparse_gmm(_spec_int(fields, "d"), _spec_int(fields, "s"), pi=pi)
        elif kind == "box":
            model = BoxSet(
                lower=_spec_floats(fields, "lower"), upper=_spec_floats(fields, "upper")
            )
        elif kind == "union":
            if seed is None:
                seed = _spec_int(fields, "seed")
            ranks = [int(v) for v in _spec_floats(fields, "ranks")]
            model = random_union(
                _spec_int(fields, "d"), ranks, np.random.default_rng(seed)
            )
        elif kind == "matrix":
            if seed is None:
                seed = _spec_int(fields, "seed")
            model = gaussian_operator(
                _spec_int(fields, "m"), _spec_int(fields, "d"), np.random.default_rng(seed)
            )
        else:
            raise ConfigError(f"unknown model kind {kind!r}")
        save_model(args.output, model)
    except (ConfigError, ResourceLimitError, ValueError, OSError) as exc:
        print(f"gen-model error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--seed-override",
        type=int,
        default=None,
        help="replace trial seeds (simulate) or the generation seed (gen-model)",
    )
    common.add_argument(
        "--threads", type=int, default=None, help="worker pool size override"
    )
    common.add_argument("--out", default=None, help="output directory override")

    parser = argparse.ArgumentParser(
        prog="projdiff",
        description="Subspace recovery experiments with noise-scheduled denoisers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    config_help = """\
config format (flat INI; omitted seeds and counts resolve to defaults and
are written back into <out>/resolved.cfg):

  [prior]               kind = lrgmm | sparse | box | file
    lrgmm: d, r, k, seed, pi (uniform or space-separated floats)
    sparse: d, s, pi      box: lower, upper      file: path
  [sensing]             m, seed, mu (auto_1.9 or a positive float)
  [schedule.<name>]     kind (defaults to <name>), sigma_max,
                        sigma_min + horizon, or a (infinite_geometric)
  [run]                 n_iters, trials + base_seed or trial_seeds,
                        out_dir, threads
"""
    p_sim = sub.add_parser(
        "simulate",
        parents=[common],
        help="run configured trials",
        epilog=config_help,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_sim.add_argument("config", help="experiment config path (INI dialect)")
    p_sim.set_defaults(func=cmd_simulate)

    p_check = sub.add_parser("check", parents=[common], help="run the invariant suite")
    p_check.add_argument("--full", action="store_true", help="complete grids (slower)")
    p_check.set_defaults(func=cmd_check)

    p_an = sub.add_parser("analyze", parents=[common], help="summarise trace files")
    p_an.add_argument("dir", help="directory containing trace CSV files")
    p_an.set_defaults(func=cmd_analyze)

    p_gen = sub.add_parser(
        "gen-model",
        parents=[common],
        help="write a model file from kind:key=value,... (lists use |)",
    )
    p_gen.add_argument("spec", help="e.g. lrgmm:d=16,r=2,k=4,seed=11 or box:lower=-1|-1,upper=1|1")
    p_gen.add_argument("-o", "--output", required=True, help="output model file")
    p_gen.set_defaults(func=cmd_gen_model)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)
