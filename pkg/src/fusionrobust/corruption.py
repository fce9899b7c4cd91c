"""Corruption generators, synthetic multi-source tasks, robustness metrics.

Corruptions are Gaussian noise at a fraction of a per-source reference
scale tau, or structured downsampling that zero-masks all but every k-th
slice along an axis (shape-preserving, so the differentiable core never
sees ragged tensors).  The evaluation protocol corrupts one source at a
time over repeated trials and reports the worst per-source metric
(min-metric) and the largest imbalance between sources (max-diff), with
Student-t confidence intervals.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from . import diffcore as dc
from .errors import ConfigurationError, PreconditionError, ShapeError
from .linear import LatentSpec, generate_linear_data

CORRUPTION_KINDS = ("gaussian", "downsample", "none")
TASK_KINDS = ("linear_regression", "nonlinear_regression", "conv_classification")


@dataclass(frozen=True)
class CorruptionSpec:
    """One source's corruption: kind, reference scale, and parameters."""

    kind: str = "gaussian"
    tau: float = 1.0
    factor: float = 0.75
    keep_ratio: float = 0.25
    axis: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ConfigurationError(
                f"unknown corruption kind {self.kind!r}; supported: {CORRUPTION_KINDS}"
            )
        if self.factor < 0:
            raise ConfigurationError("gaussian factor must be >= 0")
        if not 0.0 < self.keep_ratio <= 1.0:
            raise ConfigurationError("keep_ratio must be in (0, 1]")

    @property
    def sigma(self) -> float:
        return self.factor * self.tau


def corrupt(x: np.ndarray, spec: CorruptionSpec, rng: np.random.Generator | None = None):
    """Apply one corruption; deterministic per spec.seed when rng is None."""
    x = np.asarray(x, dtype=np.float64)
    if spec.kind == "none":
        return x.copy()
    if spec.kind == "gaussian":
        if spec.sigma == 0.0:
            return x.copy()
        if rng is None:
            rng = np.random.default_rng(spec.seed)
        return x + rng.normal(0.0, spec.sigma, size=x.shape)
    # downsample: keep every round(1/keep_ratio)-th slice, zero the rest
    axis = spec.axis
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"downsample axis {axis} out of range for rank {x.ndim}")
    step = max(1, round(1.0 / spec.keep_ratio))
    mask = np.zeros(x.shape[axis])
    mask[::step] = 1.0
    shape = [1] * x.ndim
    shape[axis] = x.shape[axis]
    return x * mask.reshape(shape)


def default_tau(source: np.ndarray) -> float:
    """Per-source reference scale: empirical standard deviation."""
    return float(np.std(np.asarray(source, dtype=np.float64)))


# ---------------------------------------------------------------------------
# Synthetic tasks
# ---------------------------------------------------------------------------


@dataclass
class MultiSourceDataset:
    sources: list[np.ndarray]
    y: np.ndarray

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def batch(self, idx) -> "MultiSourceDataset":
        return MultiSourceDataset([s[idx] for s in self.sources], self.y[idx])


@dataclass(frozen=True)
class SyntheticTask:
    """Desk-scale multi-source task description."""

    kind: str = "conv_classification"
    source_shapes: tuple = ((8, 8, 4), (8, 8, 6))
    n_train: int = 4000
    n_val: int = 1000
    d1: int = 1
    d2: int = 1
    d3: int = 1
    seed: int = 0
    # conv task knobs: per-source signal gain, count of signal channels,
    # noise std of the non-signal channels (scalar or per-source), and
    # per-source noise std of the signal channels (None = same as
    # noise_level)
    signal_gains: tuple = (0.10, 0.14)
    signal_channels: int = 2
    noise_level: float | tuple = (4.0, 0.25)
    signal_noise: tuple | None = (0.4, 0.25)
    # aligned: every source carries the signature in channels 0..k-1;
    # disjoint: source i carries it in its own channel block, so averaging
    # fusion mixes one source's signal with the other's noise
    signal_layout: str = "aligned"
    # per-source row indices carrying the signal (None = all rows); rows
    # outside the set carry only noise, so structured row dropout can
    # erase one source's signal entirely
    signal_rows: tuple | None = ((1, 2, 3, 5), (1, 2, 3, 5, 6))
    # linear/nonlinear task latent weights (defaults drawn from seed if None)
    beta1: tuple | None = None
    beta2: tuple | None = None
    beta3: tuple | None = None

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ConfigurationError(f"unknown task kind {self.kind!r}")
        if self.n_train < 1 or self.n_val < 1:
            raise ConfigurationError("n_train and n_val must be >= 1")
        if self.signal_layout not in ("aligned", "disjoint"):
            raise ConfigurationError(
                f"unknown signal layout {self.signal_layout!r}"
            )


def _task_betas(task: SyntheticTask, rng: np.random.Generator):
    def pick(beta, d):
        if beta is not None:
            return np.asarray(beta, dtype=np.float64)
        return rng.uniform(-1.5, 1.5, size=d)

    return (
        pick(task.beta1, task.d1),
        pick(task.beta2, task.d2),
        pick(task.beta3, task.d3),
    )


def _make_linear(task: SyntheticTask):
    rng = np.random.default_rng(task.seed)
    b1, b2, b3 = _task_betas(task, rng)
    spec = LatentSpec(beta1=b1, beta2=b2, beta3=b3, sigma=1.0)
    train = generate_linear_data(spec, task.n_train, seed=task.seed)
    val = generate_linear_data(spec, task.n_val, seed=task.seed + 1)
    return (
        MultiSourceDataset([train.x1, train.x2], train.y),
        MultiSourceDataset([val.x1, val.x2], val.y),
        {"spec": spec},
    )


def _make_nonlinear(task: SyntheticTask):
    rng = np.random.default_rng(task.seed)
    b1, b2, b3 = _task_betas(task, rng)
    out_dims = [int(np.prod(s)) for s in task.source_shapes]
    r1 = rng.standard_normal((task.d1 + task.d3, out_dims[0]))
    r2 = rng.standard_normal((task.d2 + task.d3, out_dims[1]))

    def draw(n, seed):
        g = np.random.default_rng(seed)
        z1 = g.standard_normal((n, task.d1))
        z2 = g.standard_normal((n, task.d2))
        z3 = g.standard_normal((n, task.d3))
        x1 = np.tanh(np.hstack([z1, z3]) @ r1)
        x2 = np.tanh(np.hstack([z2, z3]) @ r2)
        y = z1 @ b1 + z2 @ b2 + z3 @ b3
        return MultiSourceDataset([x1, x2], y)

    return draw(task.n_train, task.seed), draw(task.n_val, task.seed + 1), {}


def _make_conv(task: SyntheticTask):
    """Two channel-last views of a shared class pattern plus private noise.

    The first ``signal_channels`` channels of each source carry the label's
    channel signature (antipodal between the two classes) scaled by that
    source's gain; remaining channels are pure noise.  The shared pattern
    is recoverable from either view, so a single-source probe reaches
    above-chance accuracy, and asymmetric gains make one source more
    informative than the other.
    """
    rng = np.random.default_rng(task.seed)
    shapes = [tuple(s) for s in task.source_shapes]
    a, b = shapes[0][:2]
    for s in shapes:
        if s[:2] != (a, b):
            raise ConfigurationError("conv task sources must share spatial dims")
    k_max = min(task.signal_channels, min(s[2] for s in shapes))
    sig0 = rng.choice([-1.0, 1.0], size=k_max)
    signatures = np.stack([sig0, -sig0])

    if isinstance(task.noise_level, (int, float)):
        noise_levels = tuple(float(task.noise_level) for _ in shapes)
    else:
        noise_levels = tuple(float(v) for v in task.noise_level)
    sig_noise = task.signal_noise
    if sig_noise is None:
        sig_noise = noise_levels

    def draw(n, seed):
        g = np.random.default_rng(seed)
        y = g.integers(0, 2, size=n)
        sources = []
        for i, ((aa, bb, d), gain, sn, nz) in enumerate(
            zip(shapes, task.signal_gains, sig_noise, noise_levels)
        ):
            x = g.normal(0.0, nz, size=(n, aa, bb, d))
            k = min(task.signal_channels, d, k_max)
            off = min(i * k, d - k) if task.signal_layout == "disjoint" else 0
            x[..., off : off + k] = g.normal(0.0, sn, size=(n, aa, bb, k))
            row_mask = np.ones(aa)
            if task.signal_rows is not None and task.signal_rows[i] is not None:
                row_mask = np.zeros(aa)
                row_mask[list(task.signal_rows[i])] = 1.0
            x[..., off : off + k] += (
                gain * signatures[y][:, None, None, :k] * row_mask[None, :, None, None]
            )
            sources.append(x)
        return MultiSourceDataset(sources, y)

    return draw(task.n_train, task.seed), draw(task.n_val, task.seed + 1), {
        "signatures": signatures
    }


def make_task(task: SyntheticTask):
    """Build (train, val) datasets; deterministic per task.seed."""
    if task.kind == "linear_regression":
        train, val, _ = _make_linear(task)
    elif task.kind == "nonlinear_regression":
        train, val, _ = _make_nonlinear(task)
    else:
        train, val, _ = _make_conv(task)
    return train, val


def metric_kind_for_task(kind: str) -> str:
    return "accuracy" if kind == "conv_classification" else "neg_mse"


# ---------------------------------------------------------------------------
# Metrics and the robustness report
# ---------------------------------------------------------------------------


def evaluate_metric(graph: dc.ComputationGraph, data: MultiSourceDataset) -> float:
    """Higher-is-better metric: accuracy or negative MSE per graph.meta."""
    inputs = {f"x{i + 1}": s for i, s in enumerate(data.sources)}
    outputs = dc.forward(graph, inputs)
    pred = outputs["pred"].data
    if graph.meta.get("loss") == "softmax_ce":
        return float((pred.argmax(axis=1) == data.y).mean())
    return -float(((pred - data.y) ** 2).mean())


@dataclass
class MetricSummary:
    mean: float
    ci_low: float
    ci_high: float

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2.0


@dataclass
class RobustnessReport:
    clean_metric: MetricSummary
    per_source_metric: list[MetricSummary]
    asn_metric: MetricSummary
    min_metric: float
    max_diff_metric: float
    trials: int
    confidence: float
    metric_kind: str

    def to_dict(self):
        def pack(m):
            return {"mean": m.mean, "ci_low": m.ci_low, "ci_high": m.ci_high}

        return {
            "metric_kind": self.metric_kind,
            "trials": self.trials,
            "confidence": self.confidence,
            "clean": pack(self.clean_metric),
            "per_source": [pack(m) for m in self.per_source_metric],
            "asn": pack(self.asn_metric),
            "min_metric": self.min_metric,
            "max_diff_metric": self.max_diff_metric,
        }

    def csv_rows(self):
        """Rows of (metric_kind, source, mean, ci_low, ci_high)."""
        rows = [("clean", "", self.clean_metric)]
        rows += [
            (f"source_corrupted", str(i + 1), m)
            for i, m in enumerate(self.per_source_metric)
        ]
        rows.append(("asn", "all", self.asn_metric))
        out = [
            (kind, src, m.mean, m.ci_low, m.ci_high) for kind, src, m in rows
        ]
        out.append(("min_metric", "", self.min_metric, "", ""))
        out.append(("max_diff_metric", "", self.max_diff_metric, "", ""))
        return out


def write_report_json(report: RobustnessReport, path):
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)


def write_report_csv(report: RobustnessReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric_kind", "source", "mean", "ci_low", "ci_high"])
        writer.writerows(report.csv_rows())


def _summarize(values, confidence: float) -> MetricSummary:
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    if values.size < 2:
        return MetricSummary(mean, math.nan, math.nan)
    sd = float(values.std(ddof=1))
    tq = stats.t.ppf(0.5 + confidence / 2.0, df=values.size - 1)
    hw = tq * sd / math.sqrt(values.size)
    return MetricSummary(mean, mean - hw, mean + hw)


def _trial_seed(base: int, source: int, trial: int) -> int:
    return (base * 1_000_003 + source * 7919 + trial * 104_729) % (2**31 - 1)


def evaluate_robustness(
    graph: dc.ComputationGraph,
    data: MultiSourceDataset,
    specs: list[CorruptionSpec],
    trials: int = 5,
    confidence: float = 0.95,
) -> RobustnessReport:
    """Clean / per-source-corrupted / all-source-corrupted metric report.

    For each source i, runs ``trials`` evaluations corrupting only source
    i with fresh seeds, plus clean and all-source evaluations.  CI uses
    Student-t with trials-1 degrees of freedom; a single trial reports
    NaN bounds.
    """
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    if not 0.0 < confidence < 1.0:
        raise PreconditionError("confidence must be in (0, 1)")
    if len(specs) != len(data.sources):
        raise ConfigurationError("one corruption spec per source is required")

    clean_vals = [evaluate_metric(graph, data) for _ in range(trials)]

    def corrupted_dataset(active_sources, trial):
        sources = []
        for i, s in enumerate(data.sources):
            if i in active_sources and specs[i].kind != "none":
                spec_t = replace(specs[i], seed=_trial_seed(specs[i].seed, i, trial))
                sources.append(corrupt(s, spec_t))
            else:
                sources.append(s)
        return MultiSourceDataset(sources, data.y)

    per_source = []
    for i in range(len(data.sources)):
        vals = [
            evaluate_metric(graph, corrupted_dataset({i}, t)) for t in range(trials)
        ]
        per_source.append(_summarize(vals, confidence))
    asn_vals = [
        evaluate_metric(graph, corrupted_dataset(set(range(len(data.sources))), t))
        for t in range(trials)
    ]

    means = [m.mean for m in per_source]
    max_diff = max(
        abs(a - b) for i, a in enumerate(means) for b in means[i:]
    )
    return RobustnessReport(
        clean_metric=_summarize(clean_vals, confidence),
        per_source_metric=per_source,
        asn_metric=_summarize(asn_vals, confidence),
        min_metric=min(means),
        max_diff_metric=max_diff,
        trials=trials,
        confidence=confidence,
        metric_kind="accuracy" if graph.meta.get("loss") == "softmax_ce" else "neg_mse",
    )
