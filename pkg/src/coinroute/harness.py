"""Configuration-driven experiment runner.

A config file holds one section per experiment; keys in ``[DEFAULT]`` are
shared.  Example::

    [DEFAULT]
    runs = 20
    seed = 0

    [hex]
    family = Hex
    regimes = 1; 2; 3; 4
    policies = ISPA, MB
    steering = 0.5

Regimes are ``;``-separated, each a ``,``-separated per-source packet vector.

Run ``i`` of every cell uses the ``i``-th child of
``numpy.random.SeedSequence(seed)``, so cells share random numbers run by run.
"""
from __future__ import annotations

import configparser
import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import GLOBAL_PER_PACKET, METRIC_MODES, SUM_OVER_SOURCES, SimConfig
from .routing import MB, POLICIES, PolicyConfig, run_policy
from .topology import FAMILIES, SOURCE_COUNTS, VARIANTS, BenchmarkId, ConfigurationError, build_benchmark

log = logging.getLogger(__name__)

REPORT_HEADER = ("family", "variant", "regime", "policy", "steering", "metric_mode", "mean", "stddev", "braess")
DEFAULT_EPSILON = 0.02
DEFAULT_STEERING = (0.0, 0.25, 0.5, 0.75, 1.0)


def default_metric_mode(family: str) -> str:
    return SUM_OVER_SOURCES if family in ("Butterfly", "Ray") else GLOBAL_PER_PACKET


@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    regimes: tuple[tuple[int, ...], ...]
    variants: tuple[str, ...] = VARIANTS
    policies: tuple[str, ...] = ("ISPA",)
    steering: tuple[float, ...] = (0.5,)
    runs: int = 20
    seed: int = 0
    window_waves: int = 100
    warmup_waves: int = 300
    measure_waves: int = 800
    bootstrap_waves: int = 100
    metric_mode: str | None = None
    epsilon: float = DEFAULT_EPSILON
    output: str | None = None
    workers: int = 1
    name: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}")
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        if not self.regimes:
            raise ConfigurationError("at least one load regime is required")
        n = SOURCE_COUNTS[self.family]
        for r in self.regimes:
            if len(r) != n:
                raise ConfigurationError(f"{self.family} has {n} sources, regime {r} has {len(r)} entries")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigurationError(f"unknown variant {v!r}")
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigurationError(f"unknown policy {p!r}")
        for s in self.steering:
            if not 0.0 <= s <= 1.0:
                raise ConfigurationError("steering values must lie in [0, 1]")
        if self.metric_mode is not None and self.metric_mode not in METRIC_MODES:
            raise ConfigurationError(f"metric_mode must be one of {METRIC_MODES}")
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be >= 0")

    @property
    def mode(self) -> str:
        return self.metric_mode or default_metric_mode(self.family)

    def sim_config(self, seed: int) -> SimConfig:
        return SimConfig(self.window_waves, self.warmup_waves, self.measure_waves, seed, self.mode)

    def run_seeds(self) -> list[int]:
        return run_seeds(self.seed, self.runs)


def run_seeds(master: int, runs: int) -> list[int]:
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in np.random.SeedSequence(master).spawn(runs)]


def _split(text: str, sep: str = ",") -> list[str]:
    return [t.strip() for t in text.split(sep) if t.strip()]


def parse_regimes(text: str) -> tuple[tuple[int, ...], ...]:
    out = []
    for chunk in _split(text, ";"):
        try:
            out.append(tuple(int(v) for v in _split(chunk)))
        except ValueError:
            raise ConfigurationError(f"bad regime {chunk!r}") from None
    return tuple(out)


def _section_config(name: str, sec: configparser.SectionProxy) -> ExperimentConfig:
    known = {"family", "regimes", "variants", "policies", "steering", "runs", "seed", "window_waves",
             "warmup_waves", "measure_waves", "bootstrap_waves", "metric_mode", "epsilon", "output", "workers"}
    unknown = set(sec.keys()) - known
    if unknown:
        raise ConfigurationError(f"[{name}] unknown keys: {sorted(unknown)}")
    if "family" not in sec or "regimes" not in sec:
        raise ConfigurationError(f"[{name}] needs 'family' and 'regimes'")
    kw = dict(family=sec["family"].strip(), regimes=parse_regimes(sec["regimes"]), name=name)
    if "variants" in sec:
        kw["variants"] = tuple(_split(sec["variants"]))
    if "policies" in sec:
        kw["policies"] = tuple(p.upper() for p in _split(sec["policies"]))
    if "steering" in sec:
        kw["steering"] = tuple(float(v) for v in _split(sec["steering"]))
    try:
        for key in ("runs", "seed", "window_waves", "warmup_waves", "measure_waves", "bootstrap_waves", "workers"):
            if key in sec:
                kw[key] = sec.getint(key)
        if "epsilon" in sec:
            kw["epsilon"] = sec.getfloat("epsilon")
    except ValueError as exc:
        raise ConfigurationError(f"[{name}] {exc}") from None
    if "metric_mode" in sec:
        kw["metric_mode"] = sec["metric_mode"].strip() or None
    if "output" in sec:
        kw["output"] = sec["output"].strip() or None
    return ExperimentConfig(**kw)


def load_configs(source: str | Path | io.TextIOBase) -> list[ExperimentConfig]:
    """Parse every experiment section of a config file (path, text handle or string)."""
    parser = configparser.ConfigParser(interpolation=None)
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and "[" not in source):
        with open(source) as fh:
            parser.read_file(fh)
    elif isinstance(source, str):
        parser.read_string(source)
    else:
        parser.read_file(source)
    if not parser.sections():
        raise ConfigurationError("config has no experiment sections")
    return [_section_config(name, parser[name]) for name in parser.sections()]


# -- report --------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    family: str
    variant: str
    regime: tuple[int, ...]
    policy: str
    steering: float | None
    metric_mode: str
    mean: float
    stddev: float
    braess: bool | None = None
    runs: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def key(self):
        return self.family, self.regime, self.policy, self.steering


@dataclass
class ExperimentReport:
    rows: list[ReportRow] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)
    epsilon: float = DEFAULT_EPSILON

    def cell(self, variant: str, regime: Sequence[int], policy: str, steering: float | None = None,
             family: str | None = None) -> ReportRow:
        regime = tuple(regime)
        for row in self.rows:
            if (row.variant == variant and row.regime == regime and row.policy == policy
                    and (steering is None or row.steering == steering)
                    and (family is None or row.family == family)):
                return row
        raise KeyError((family, variant, regime, policy, steering))

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in self.rows:
            w.writerow((r.family, r.variant, format_regime(r.regime), r.policy,
                        "" if r.steering is None else repr(r.steering), r.metric_mode,
                        repr(r.mean), repr(r.stddev), "" if r.braess is None else str(r.braess).lower()))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, lines: Iterable[str], epsilon: float = DEFAULT_EPSILON) -> "ExperimentReport":
        reader = csv.reader(lines)
        header = next(reader, None)
        if tuple(header or ()) != REPORT_HEADER:
            raise ConfigurationError(f"unexpected report header {header}")
        rows = []
        for f in reader:
            if not f:
                continue
            rows.append(ReportRow(f[0], f[1], parse_regime(f[2]), f[3], float(f[4]) if f[4] else None, f[5],
                                  float(f[6]), float(f[7]), None if f[8] == "" else f[8] == "true"))
        return cls(rows, [], epsilon)


def format_regime(regime: Sequence[int]) -> str:
    return "(" + ",".join(str(v) for v in regime) + ")"


def parse_regime(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in _split(text.strip().strip("()")))


def _cells(cfg: ExperimentConfig):
    for regime in cfg.regimes:
        for variant in cfg.variants:
            for policy in cfg.policies:
                for steering in (cfg.steering if policy == MB else (None,)):
                    yield regime, variant, policy, steering


def _run_one(args) -> float:
    cfg, regime, variant, policy, steering, seed = args
    spec = build_benchmark(BenchmarkId(cfg.family, variant), regime)
    pol = PolicyConfig(policy, 0.5 if steering is None else steering, cfg.bootstrap_waves, seed)
    return run_policy(spec, cfg.sim_config(seed), pol).mean


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run every (regime, variant, policy, steering) cell over ``cfg.runs`` seeds."""
    seeds = cfg.run_seeds()
    cells = list(_cells(cfg))
    jobs = [(cfg, *cell, seed) for cell in cells for seed in seeds]
    results: dict[int, float | BaseException] = {}
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            futures = [pool.submit(_run_one, job) for job in jobs]
            for i, fut in enumerate(futures):
                try:
                    results[i] = fut.result()
                except Exception as exc:  # collected per cell below
                    results[i] = exc
    else:
        for i, job in enumerate(jobs):
            try:
                results[i] = _run_one(job)
            except Exception as exc:
                results[i] = exc

    report = ExperimentReport(epsilon=cfg.epsilon)
    for c, (regime, variant, policy, steering) in enumerate(cells):
        vals = [results[c * len(seeds) + j] for j in range(len(seeds))]
        errors = [v for v in vals if isinstance(v, BaseException)]
        label = f"{cfg.family} {variant} {format_regime(regime)} {policy}" + (
            f" steering={steering}" if steering is not None else "")
        if errors:
            report.failures.append((label, f"{len(errors)}/{len(vals)} runs failed: {errors[0]!r}"))
            log.warning("cell %s failed: %s", label, errors[0])
            continue
        arr = np.array(vals, dtype=float)
        report.rows.append(ReportRow(cfg.family, variant, tuple(regime), policy, steering, cfg.mode,
                                     float(arr.mean()), float(arr.std()), None, tuple(arr)))
    _flag_braess(report)
    return report


def _flag_braess(report: ExperimentReport) -> None:
    by_key: dict = {}
    for i, row in enumerate(report.rows):
        by_key.setdefault(row.key(), {})[row.variant] = i
    for pair in by_key.values():
        if "NetA" not in pair or "NetB" not in pair:
            continue
        a, b = report.rows[pair["NetA"]], report.rows[pair["NetB"]]
        flag = b.mean > a.mean * (1 + report.epsilon)
        report.rows[pair["NetA"]] = replace(a, braess=flag)
        report.rows[pair["NetB"]] = replace(b, braess=flag)


@dataclass(frozen=True)
class ParadoxEntry:
    family: str
    regime: tuple[int, ...]
    policy: str
    steering: float | None
    net_a: float
    net_b: float
    paradox: bool


@dataclass
class BraessSummary:
    entries: list[ParadoxEntry]
    notes: list[str]

    def regimes(self, policy: str, steering: float | None = None) -> list[tuple[int, ...]]:
        return [e.regime for e in self.entries
                if e.paradox and e.policy == policy and (steering is None or e.steering == steering)]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.entries:
            out[e.policy] = out.get(e.policy, 0) + int(e.paradox)
        return out

    def to_text(self) -> str:
        lines = []
        for e in self.entries:
            tag = e.policy + (f"@{e.steering}" if e.steering is not None else "")
            lines.append(f"{e.family:10s} {format_regime(e.regime):10s} {tag:10s} "
                         f"NetA={e.net_a:9.3f} NetB={e.net_b:9.3f} {'PARADOX' if e.paradox else '-'}")
        lines += [f"note: {n}" for n in self.notes]
        lines += [f"{p}: paradox in {n} regime(s)" for p, n in sorted(self.counts().items())]
        return "\n".join(lines)


def braess_check(report: ExperimentReport, epsilon: float | None = None) -> BraessSummary:
    """Regimes where adding NetB's link raised a policy's mean cost by more than epsilon."""
    eps = report.epsilon if epsilon is None else epsilon
    by_key: dict = {}
    for row in report.rows:
        by_key.setdefault(row.key(), {})[row.variant] = row
    entries, notes = [], []
    for (family, regime, policy, steering), pair in by_key.items():
        if "NetA" not in pair or "NetB" not in pair:
            missing = "NetB" if "NetA" in pair else "NetA"
            notes.append(f"{family} {format_regime(regime)} {policy}: {missing} missing, skipped")
            continue
        a, b = pair["NetA"].mean, pair["NetB"].mean
        entries.append(ParadoxEntry(family, regime, policy, steering, a, b, b > a * (1 + eps)))
    return BraessSummary(entries, notes)


def steering_sweep(cfg: ExperimentConfig, values: Sequence[float] = DEFAULT_STEERING) -> ExperimentReport:
    """MB runs at each steering value; the 0.0 and 1.0 endpoints are always included."""
    vals = sorted(set(float(v) for v in values) | {0.0, 1.0})
    for v in vals:
        if not 0.0 <= v <= 1.0 or math.isnan(v):
            raise ConfigurationError("steering values must lie in [0, 1]")
    return run_experiment(replace(cfg, policies=(MB,), steering=tuple(vals)))


def write_report(report: ExperimentReport, path: str | Path | None) -> str:
    text = report.to_csv_text()
    if path:
        Path(path).write_text(text)
    return text
