"""Experiment orchestration: the cold-start active-learning loop, records,
significance tests, gamma tuning and the greedy-vs-MCR mode benchmark."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy import stats

from dppal.data import (
    Dataset,
    SineSpec,
    fake_labels_centroid,
    fake_labels_sine,
    generate_sine_dataset,
    load_csv,
    split_halves,
)
from dppal.errors import ConfigError, InputError, ParameterError
from dppal.kernel import gaussian_similarity
from dppal.learner import MlpSpec, TrainConfig, accuracy, train_ensemble, uncertainty
from dppal.mode import SmdConfig, greedy_mode, mcr_mode
from dppal.strategies import KINDS, PoolState, StrategyConfig, select_batch

GAMMA_GRID = tuple(range(8))

# hyperparameters used for the synthetic study, per strategy kind
KIND_DEFAULTS = {
    "uniform": {},
    "passive-dpp": {"alpha": 5.0},
    "passive-dpp-mode": {"alpha": 5.0},
    "eps-greedy": {},
    "active-dpp": {"alpha": 4.0, "gamma": 5.0},
    "active-dpp-mode": {"alpha": 4.0, "gamma": 5.0},
}

LABEL_SOURCES = ("true", "fake-sine", "fake-centroid")


def strategy_config(kind, **overrides):
    """StrategyConfig with the documented defaults for ``kind`` filled in."""
    if kind not in KINDS:
        raise ConfigError(f"unknown strategy {kind!r}; expected one of {KINDS}")
    params = dict(KIND_DEFAULTS[kind])
    params.update({k: v for k, v in overrides.items() if v is not None})
    return StrategyConfig(kind=kind, **params)


@dataclass(frozen=True)
class DatasetConfig:
    """Synthetic sine band (``kind="sine"``) or a CSV file split in halves."""

    kind: str = "sine"
    n: int = 1000
    seed: int = 0
    test_n: int = 1000
    test_seed: int = 1
    path: str | None = None
    label_column: str | None = "label"
    normalize: bool = True
    split_seed: int = 0
    labels: str = "true"  # or fake-sine / fake-centroid for tuning

    def __post_init__(self):
        if self.kind not in ("sine", "csv"):
            raise ConfigError("dataset kind must be 'sine' or 'csv'")
        if self.kind == "csv" and not self.path:
            raise ConfigError("csv dataset needs a path")
        if self.labels not in LABEL_SOURCES:
            raise ConfigError(f"labels must be one of {LABEL_SOURCES}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = DatasetConfig()
    strategy: StrategyConfig = field(default_factory=lambda: strategy_config("uniform"))
    budget: int = 150
    batch: int = 15
    replicates: int = 100
    base_seed: int = 0
    hidden: tuple = (4,)
    train: TrainConfig = TrainConfig()
    output: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.batch < 1 or self.budget < 1:
            raise ConfigError("budget and batch must be >= 1")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def n_iterations(self):
        return math.ceil(self.budget / self.batch)


@dataclass(frozen=True)
class IterationRecord:
    batch: tuple
    n_labeled: int
    accuracy: float
    select_seconds: float = field(default=0.0, compare=False)
    train_seconds: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class ExperimentRecord:
    strategy: str
    seed: int
    iterations: tuple

    @property
    def final_accuracy(self):
        return self.iterations[-1].accuracy if self.iterations else float("nan")

    def to_dict(self):
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "final_accuracy": self.final_accuracy,
            "iterations": [
                {**asdict(it), "batch": list(it.batch)} for it in self.iterations
            ],
        }

    @classmethod
    def from_dict(cls, d):
        its = tuple(
            IterationRecord(tuple(int(i) for i in it["batch"]), int(it["n_labeled"]),
                            float(it["accuracy"]), float(it.get("select_seconds", 0.0)),
                            float(it.get("train_seconds", 0.0)))
            for it in d["iterations"]
        )
        return cls(str(d["strategy"]), int(d["seed"]), its)


# --- config files ---------------------------------------------------------

def _build(cls, d, what):
    if not isinstance(d, dict):
        raise ConfigError(f"{what} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {what}: {exc}") from None


def config_from_dict(d):
    """ExperimentConfig from a plain dict (the parsed JSON config file)."""
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    d = dict(d)
    ds = _build(DatasetConfig, d.pop("dataset", {}), "dataset")
    strat = dict(d.pop("strategy", {"kind": "uniform"}))
    if not isinstance(strat, dict):
        raise ConfigError("strategy must be an object")
    kind = strat.pop("kind", "uniform")
    known = {f.name for f in fields(StrategyConfig)} - {"kind"}
    if set(strat) - known:
        raise ConfigError(f"unknown strategy keys: {sorted(set(strat) - known)}")
    try:
        sc = strategy_config(kind, **strat)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad strategy: {exc}") from None
    train = _build(TrainConfig, d.pop("train", {}), "train")
    known = {f.name for f in fields(ExperimentConfig)} - {"dataset", "strategy", "train"}
    if set(d) - known:
        raise ConfigError(f"unknown config keys: {sorted(set(d) - known)}")
    try:
        return ExperimentConfig(dataset=ds, strategy=sc, train=train, **d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}") from None


def config_to_dict(cfg):
    out = asdict(cfg)
    out["hidden"] = list(cfg.hidden)
    return out


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)


# --- data -----------------------------------------------------------------

def load_split(dcfg):
    """(train, test) datasets; labels replaced by fake ones when requested."""
    if dcfg.kind == "sine":
        train = generate_sine_dataset(SineSpec(n=dcfg.n, seed=dcfg.seed))
        test = generate_sine_dataset(SineSpec(n=dcfg.test_n, seed=dcfg.test_seed))
    else:
        full = load_csv(dcfg.path, dcfg.label_column, dcfg.normalize)
        if full.labels is None:
            raise ConfigError("experiments need a label column")
        train, test = split_halves(full, dcfg.split_seed)
    if dcfg.labels == "fake-sine":
        train = Dataset(train.features, fake_labels_sine(train.features), 2, train.name + "/fake")
        test = Dataset(test.features, fake_labels_sine(test.features), 2, test.name + "/fake")
    elif dcfg.labels == "fake-centroid":
        c = train.n_classes
        both = np.vstack([train.features, test.features])
        labels = fake_labels_centroid(both, c, seed=dcfg.seed)
        train = Dataset(train.features, labels[:train.n], c, train.name + "/fake")
        test = Dataset(test.features, labels[train.n:], c, test.name + "/fake")
    return train, test


# --- the active-learning loop ---------------------------------------------

def run_replicate(cfg, train, test, seed):
    """One cold-start run: select, reveal labels, retrain, evaluate, repeat."""
    if train.n < cfg.budget:
        raise ConfigError(f"pool of {train.n} is smaller than the budget {cfg.budget}")
    spec = MlpSpec((train.d, *cfg.hidden, train.n_classes))
    state = PoolState(train.features)
    seeds = np.random.SeedSequence(seed).generate_state(2 * cfg.n_iterations, dtype=np.uint32)
    ens = None
    out = []
    for it in range(cfg.n_iterations):
        size = min(cfg.batch, cfg.budget - len(state.selected))
        t0 = time.perf_counter()
        q = uncertainty(ens, train.features) if (cfg.strategy.is_active and ens is not None) else None
        batch = select_batch(state, size, cfg.strategy, q, int(seeds[2 * it]))
        t1 = time.perf_counter()
        state = state.with_batch(batch, train.labels[list(batch)])
        idx = list(state.selected)
        ens = train_ensemble(spec, train.features[idx], train.labels[idx], cfg.train,
                             int(seeds[2 * it + 1]))
        acc = accuracy(ens, test.features, test.labels)
        t2 = time.perf_counter()
        out.append(IterationRecord(tuple(batch), len(idx), acc, t1 - t0, t2 - t1))
    return ExperimentRecord(cfg.strategy.kind, int(seed), tuple(out))


def _replicate_job(args):
    cfg, train, test, seed = args
    return run_replicate(cfg, train, test, seed)


def run_experiment(cfg, progress=None):
    """Replicate r uses seed base_seed + r; records come back in replicate order."""
    train, test = load_split(cfg.dataset)
    if train.n < cfg.budget:
        raise ConfigError(f"pool of {train.n} is smaller than the budget {cfg.budget}")
    jobs = [(cfg, train, test, cfg.base_seed + r) for r in range(cfg.replicates)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(_replicate_job, jobs))
    else:
        records = []
        for job in jobs:
            records.append(_replicate_job(job))
            if progress:
                progress(len(records), cfg.replicates)
    if cfg.output:
        write_records(records, cfg.output)
    return records


def write_records(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")


def read_records(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(ExperimentRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad record ({exc})") from None
    return out


# --- statistics -----------------------------------------------------------

def welch_t_test(a, b):
    """Two-sided Welch t-test; returns (t, p)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise InputError("each sample needs at least 2 values")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 and vb == 0:
        if a.mean() == b.mean():
            return 0.0, 1.0
        raise InputError("both samples have zero variance")
    res = stats.ttest_ind(a, b, equal_var=False)
    return float(res.statistic), float(res.pvalue)


@dataclass(frozen=True)
class ComparisonSummary:
    means: dict
    stds: dict
    counts: dict
    tests: dict  # (a, b) -> (t, p)

    def table(self):
        lines = [f"{'strategy':<18} {'n':>4} {'mean':>8} {'std':>8}"]
        for s in self.means:
            lines.append(f"{s:<18} {self.counts[s]:>4} {self.means[s]:>8.4f} {self.stds[s]:>8.4f}")
        if self.tests:
            lines.append("")
            lines.append(f"{'comparison':<38} {'t':>8} {'p':>10}")
            for (x, y), (t, p) in self.tests.items():
                lines.append(f"{x + ' vs ' + y:<38} {t:>8.3f} {p:>10.3g}")
        return "\n".join(lines)


def summarize(records):
    by = {}
    for rec in records:
        by.setdefault(rec.strategy, []).append(rec.final_accuracy)
    means = {s: float(np.mean(v)) for s, v in by.items()}
    stds = {s: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0 for s, v in by.items()}
    counts = {s: len(v) for s, v in by.items()}
    tests = {}
    names = list(by)
    for i, x in enumerate(names):
        for y in names[i + 1:]:
            try:
                tests[(x, y)] = welch_t_test(by[x], by[y])
            except InputError:
                continue
    return ComparisonSummary(means, stds, counts, tests)


def curves_csv(records, path):
    """Mean accuracy per (strategy, labelled count), for external plotting."""
    acc = {}
    for rec in records:
        for it in rec.iterations:
            acc.setdefault((rec.strategy, it.n_labeled), []).append(it.accuracy)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("strategy,n_labeled,mean_accuracy,std_accuracy,runs\n")
        for (s, n), v in sorted(acc.items()):
            sd = float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
            fh.write(f"{s},{n},{np.mean(v):.6f},{sd:.6f},{len(v)}\n")


# --- tuning ---------------------------------------------------------------

@dataclass(frozen=True)
class TuningResult:
    best: float
    grid: tuple  # rows (gamma, mean, std)


def tune_gamma(cfg, gamma_grid=GAMMA_GRID, fake_labels="fake-sine"):
    """Grid search over gamma on fake labels; ties go to the smaller gamma."""
    if not len(gamma_grid):
        raise ParameterError("empty gamma grid")
    dcfg = replace(cfg.dataset, labels=fake_labels)
    rows = []
    for g in sorted(float(x) for x in gamma_grid):
        c = replace(cfg, dataset=dcfg, strategy=replace(cfg.strategy, gamma=g), output=None)
        acc = [r.final_accuracy for r in run_experiment(c)]
        rows.append((g, float(np.mean(acc)), float(np.std(acc, ddof=1)) if len(acc) > 1 else 0.0))
    best = max(rows, key=lambda r: (r[1], -r[0]))[0]
    return TuningResult(best, tuple(rows))


# --- greedy vs MCR --------------------------------------------------------

@dataclass(frozen=True)
class ModeComparison:
    greedy: np.ndarray = field(repr=False)
    mcr: np.ndarray = field(repr=False)
    tol: float = 1e-9

    @property
    def n(self):
        return self.greedy.size

    @property
    def better(self):
        return float(np.mean(self.mcr > self.greedy + self.tol))

    @property
    def better_or_equal(self):
        return float(np.mean(self.mcr >= self.greedy - self.tol))

    def table(self):
        return (f"instances {self.n}\n"
                f"mcr strictly better   {self.better:.3f}\n"
                f"mcr better or equal   {self.better_or_equal:.3f}\n"
                f"mean log-det gain     {np.mean(self.mcr - self.greedy):.4f}")


def _mode_instance(args):
    seed, n_points, sigma, k, smd = args
    x = np.random.default_rng(seed).random((n_points, 2))
    s = gaussian_similarity(x, sigma)
    return greedy_mode(s, k).log_det, mcr_mode(s, k, smd).log_det


def mode_compare(n_instances, n_points, sigma, k, seed=0, workers=1, smd=None, progress=None):
    """Greedy and MCR log-dets on fresh uniform point clouds in the unit square."""
    if min(n_instances, n_points, k) < 1 or not sigma > 0:
        raise ParameterError("instances, points, k and sigma must be positive")
    if k > n_points:
        raise ParameterError("k cannot exceed the number of points")
    smd = smd or SmdConfig()
    seeds = np.random.SeedSequence(seed).generate_state(n_instances, dtype=np.uint32)
    jobs = [(int(s), n_points, sigma, k, smd) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            pairs = list(pool.map(_mode_instance, jobs))
    else:
        pairs = []
        for job in jobs:
            pairs.append(_mode_instance(job))
            if progress:
                progress(len(pairs), n_instances)
    g, m = np.array(pairs).T
    return ModeComparison(g, m)
