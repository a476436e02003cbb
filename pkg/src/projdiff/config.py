"""Experiment configuration: a flat INI dialect with explicit seeds.

A config names a prior, a sensing setup, one or more noise schedules, and
the trial plan.  Parsing resolves every implicit choice (seed defaults,
trial counts, thread counts) so that the serialized form is a fixed point:
parse(serialize(cfg)) == cfg, and two runs of the same resolved config are
byte-identical.

    [prior]
    kind = lrgmm            # or sparse / box / file
    d = 64
    r = 5
    k = 8
    seed = 101
    pi = uniform            # or explicit: 0.2 0.5 0.3

    [sensing]
    m = 20
    seed = 202
    mu = auto_1.9           # or an explicit float

    [schedule.geometric]
    kind = geometric
    sigma_max = 0.5
    sigma_min = 1e-4
    horizon = 150

    [run]
    n_iters = 150
    trials = 20             # or: trial_seeds = 7000 7001 ...
    base_seed = 7000
    out_dir = out
    threads = 4
"""

import configparser
import os
from dataclasses import dataclass

from .recovery_engine import SCHEDULE_KINDS, NoiseSchedule

PRIOR_KINDS = ("lrgmm", "sparse", "box", "file")

MU_AUTO = "auto_1.9"

DEFAULT_PRIOR_SEED = 1
DEFAULT_SENSING_SEED = 2
DEFAULT_BASE_SEED = 1000

_PRIOR_KEYS = {
    "lrgmm": {"kind", "d", "r", "k", "seed", "pi"},
    "sparse": {"kind", "d", "s", "pi"},
    "box": {"kind", "lower", "upper"},
    "file": {"kind", "path"},
}

_SCHEDULE_KEYS = {"kind", "sigma_max", "sigma_min", "horizon", "a"}

_RUN_KEYS = {"n_iters", "trials", "base_seed", "trial_seeds", "out_dir", "threads"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending section/key."""


@dataclass(frozen=True)
class PriorSpec:
    kind: str
    d: int = 0
    r: int = 0
    k: int = 0
    s: int = 0
    seed: int = 0
    pi: tuple = None
    lower: tuple = None
    upper: tuple = None
    path: str = None


@dataclass(frozen=True)
class SensingSpec:
    m: int
    seed: int
    mu: object = MU_AUTO  # the literal "auto_1.9" or an explicit float


@dataclass(frozen=True)
class ExperimentConfig:
    prior: PriorSpec
    sensing: SensingSpec
    schedules: tuple  # ((name, NoiseSchedule), ...)
    n_iters: int
    trial_seeds: tuple
    out_dir: str
    threads: int

    def schedule_map(self) -> dict:
        return dict(self.schedules)


def _fail(section, key, problem) -> ConfigError:
    where = f"[{section}] {key}" if key else f"[{section}]"
    return ConfigError(f"{where}: {problem}")


def _get_int(section, values, key, default=None):
    if key not in values:
        if default is None:
            raise _fail(section, key, "required key is missing")
        return default
    try:
        return int(values[key])
    except ValueError:
        raise _fail(section, key, f"expected an integer, got {values[key]!r}") from None


def _get_float(section, values, key, default=None):
    if key not in values:
        if default is None:
            raise _fail(section, key, "required key is missing")
        return default
    try:
        return float(values[key])
    except ValueError:
        raise _fail(section, key, f"expected a number, got {values[key]!r}") from None


def _get_floats(section, values, key):
    if key not in values:
        raise _fail(section, key, "required key is missing")
    try:
        return tuple(float(v) for v in values[key].split())
    except ValueError:
        raise _fail(section, key, f"expected numbers, got {values[key]!r}") from None


def _check_keys(section, values, allowed):
    unknown = set(values) - allowed
    if unknown:
        raise _fail(section, sorted(unknown)[0], "unknown key")


def _parse_prior(values) -> PriorSpec:
    kind = values.get("kind")
    if kind not in PRIOR_KINDS:
        raise _fail("prior", "kind", f"must be one of {PRIOR_KINDS}, got {kind!r}")
    _check_keys("prior", values, _PRIOR_KEYS[kind])
    if kind == "lrgmm":
        pi = None
        if values.get("pi", "uniform") != "uniform":
            pi = _get_floats("prior", values, "pi")
        return PriorSpec(
            kind=kind,
            d=_get_int("prior", values, "d"),
            r=_get_int("prior", values, "r"),
            k=_get_int("prior", values, "k"),
            seed=_get_int("prior", values, "seed", DEFAULT_PRIOR_SEED),
            pi=pi,
        )
    if kind == "sparse":
        pi = None
        if values.get("pi", "uniform") != "uniform":
            pi = _get_floats("prior", values, "pi")
        return PriorSpec(
            kind=kind,
            d=_get_int("prior", values, "d"),
            s=_get_int("prior", values, "s"),
            pi=pi,
        )
    if kind == "box":
        lower = _get_floats("prior", values, "lower")
        upper = _get_floats("prior", values, "upper")
        if len(lower) != len(upper):
            raise _fail("prior", "upper", "lower and upper must have equal length")
        return PriorSpec(kind=kind, d=len(lower), lower=lower, upper=upper)
    path = values.get("path")
    if not path:
        raise _fail("prior", "path", "required key is missing")
    return PriorSpec(kind=kind, path=path)


def _parse_sensing(values) -> SensingSpec:
    _check_keys("sensing", values, {"m", "seed", "mu"})
    raw_mu = values.get("mu", MU_AUTO)
    if raw_mu == MU_AUTO:
        mu = MU_AUTO
    else:
        try:
            mu = float(raw_mu)
        except ValueError:
            raise _fail(
                "sensing", "mu", f"expected {MU_AUTO!r} or a number, got {raw_mu!r}"
            ) from None
        if mu <= 0.0:
            raise _fail("sensing", "mu", f"must be positive, got {mu}")
    return SensingSpec(
        m=_get_int("sensing", values, "m"),
        seed=_get_int("sensing", values, "seed", DEFAULT_SENSING_SEED),
        mu=mu,
    )


def _parse_schedule(section, values) -> NoiseSchedule:
    _check_keys(section, values, _SCHEDULE_KEYS)
    name = section.split(".", 1)[1]
    kind = values.get("kind", name if name in SCHEDULE_KINDS else None)
    if kind is None:
        raise _fail(section, "kind", "required key is missing")
    try:
        if kind == "infinite_geometric":
            return NoiseSchedule(
                kind=kind,
                sigma_max=_get_float(section, values, "sigma_max"),
                a=_get_float(section, values, "a"),
            )
        return NoiseSchedule(
            kind=kind,
            sigma_max=_get_float(section, values, "sigma_max"),
            sigma_min=_get_float(section, values, "sigma_min"),
            horizon=_get_int(section, values, "horizon"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise _fail(section, None, str(exc)) from None


def _parse_run(values):
    _check_keys("run", values, _RUN_KEYS)
    if "trial_seeds" in values:
        if "trials" in values:
            raise _fail("run", "trials", "give either trials or trial_seeds, not both")
        try:
            seeds = tuple(int(v) for v in values["trial_seeds"].split())
        except ValueError:
            raise _fail(
                "run", "trial_seeds", f"expected integers, got {values['trial_seeds']!r}"
            ) from None
    elif "trials" in values:
        count = _get_int("run", values, "trials")
        if count < 1:
            raise _fail("run", "trials", f"must be >= 1, got {count}")
        base = _get_int("run", values, "base_seed", DEFAULT_BASE_SEED)
        seeds = tuple(base + i for i in range(count))
    else:
        raise _fail("run", "trials", "required key is missing (or give trial_seeds)")
    if not seeds:
        raise _fail("run", "trial_seeds", "at least one trial seed is required")
    if len(set(seeds)) != len(seeds):
        raise _fail("run", "trial_seeds", "trial seeds must be distinct")
    threads = _get_int("run", values, "threads", os.cpu_count() or 1)
    if threads < 1:
        raise _fail("run", "threads", f"must be >= 1, got {threads}")
    n_iters = _get_int("run", values, "n_iters", 0)
    return n_iters, seeds, values.get("out_dir", "out"), threads


def parse_config(text: str) -> ExperimentConfig:
    """Parse and resolve a config; all defaults become explicit fields."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    sections = set(cp.sections())
    schedule_sections = [s for s in cp.sections() if s.startswith("schedule.")]
    unknown = sections - {"prior", "sensing", "run"} - set(schedule_sections)
    if unknown:
        raise _fail(sorted(unknown)[0], None, "unknown section")
    for required in ("prior", "sensing", "run"):
        if required not in sections:
            raise _fail(required, None, "required section is missing")
    if not schedule_sections:
        raise ConfigError("at least one [schedule.<name>] section is required")

    prior = _parse_prior(dict(cp["prior"]))
    sensing = _parse_sensing(dict(cp["sensing"]))
    schedules = tuple(
        (section.split(".", 1)[1], _parse_schedule(section, dict(cp[section])))
        for section in schedule_sections
    )
    names = [name for name, _ in schedules]
    if len(set(names)) != len(names):
        raise ConfigError("schedule names must be distinct")

    n_iters, seeds, out_dir, threads = _parse_run(dict(cp["run"]))
    finite = [s.horizon for _, s in schedules if s.kind != "infinite_geometric"]
    if n_iters == 0:
        if not finite:
            raise _fail("run", "n_iters", "required when all schedules are infinite")
        n_iters = min(finite)
    if n_iters < 1:
        raise _fail("run", "n_iters", f"must be >= 1, got {n_iters}")
    for name, sched in schedules:
        if sched.kind != "infinite_geometric" and n_iters > sched.horizon:
            raise _fail(
                f"schedule.{name}",
                "horizon",
                f"n_iters={n_iters} exceeds the horizon {sched.horizon}",
            )

    return ExperimentConfig(
        prior=prior,
        sensing=sensing,
        schedules=schedules,
        n_iters=n_iters,
        trial_seeds=seeds,
        out_dir=out_dir,
        threads=threads,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical resolved text; parse_config inverts it exactly."""
    lines = ["[prior]", f"kind = {cfg.prior.kind}"]
    if cfg.prior.kind == "lrgmm":
        lines += [
            f"d = {cfg.prior.d}",
            f"r = {cfg.prior.r}",
            f"k = {cfg.prior.k}",
            f"seed = {cfg.prior.seed}",
            "pi = " + ("uniform" if cfg.prior.pi is None
                       else " ".join(_fmt(v) for v in cfg.prior.pi)),
        ]
    elif cfg.prior.kind == "sparse":
        lines += [
            f"d = {cfg.prior.d}",
            f"s = {cfg.prior.s}",
            "pi = " + ("uniform" if cfg.prior.pi is None
                       else " ".join(_fmt(v) for v in cfg.prior.pi)),
        ]
    elif cfg.prior.kind == "box":
        lines += [
            "lower = " + " ".join(_fmt(v) for v in cfg.prior.lower),
            "upper = " + " ".join(_fmt(v) for v in cfg.prior.upper),
        ]
    else:
        lines.append(f"path = {cfg.prior.path}")

    lines += [
        "",
        "[sensing]",
        f"m = {cfg.sensing.m}",
        f"seed = {cfg.sensing.seed}",
        f"mu = {_fmt(cfg.sensing.mu)}",
    ]
    for name, sched in cfg.schedules:
        lines += ["", f"[schedule.{name}]", f"kind = {sched.kind}",
                  f"sigma_max = {_fmt(sched.sigma_max)}"]
        if sched.kind == "infinite_geometric":
            lines.append(f"a = {_fmt(sched.a)}")
        else:
            lines += [f"sigma_min = {_fmt(sched.sigma_min)}",
                      f"horizon = {sched.horizon}"]
    lines += [
        "",
        "[run]",
        f"n_iters = {cfg.n_iters}",
        "trial_seeds = " + " ".join(str(s) for s in cfg.trial_seeds),
        f"out_dir = {cfg.out_dir}",
        f"threads = {cfg.threads}",
    ]
    return "\n".join(lines) + "\n"
