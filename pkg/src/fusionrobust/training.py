"""Training procedures: clean, all-source-noise, and single-source-noise.

All corruption-aware procedures alternate a clean step on even iterations
(0-indexed) with a corrupted step on odd iterations:

  * all-source: every source corrupted at once;
  * single-source: forward once per source with exactly that source
    corrupted, pick the source with the largest loss (ties to the lowest
    index), then recompute and backpropagate that branch with the same
    noise;
  * single-source alternating: instead of the argmax, corrupt sources in
    rotation across the corrupted iterations.

Every procedure records a trace row per iteration and raises if the loss
stops being finite.  Runs are deterministic per (config.seed, algorithm):
batch sampling and corruption noise use separate counter-derived streams.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import diffcore as dc
from .corruption import CorruptionSpec, MultiSourceDataset, corrupt
from .errors import ConfigurationError, TrainingDivergedError

ALGORITHMS = ("clean", "asn", "ssn", "ssn_alt")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 1000
    batch_size: int = 64
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    seed: int = 0
    noise_per_sample: bool = True
    trace_every: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if self.trace_every < 1:
            raise ConfigurationError("trace_every must be >= 1")


@dataclass
class TraceRow:
    iteration: int
    phase: str  # "clean" or "corrupt"
    corrupted_source: int  # 0 = none, 1-based source index otherwise (-1 = all)
    loss: float


@dataclass
class TrainResult:
    graph: dc.ComputationGraph
    trace: list[TraceRow] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.trace[-1].loss if self.trace else float("nan")


def write_trace_csv(trace: list[TraceRow], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "phase", "corrupted_source", "loss"])
        for row in trace:
            writer.writerow(
                [row.iteration, row.phase, row.corrupted_source, repr(row.loss)]
            )


def _noise_seed(base: int, iteration: int, source: int) -> int:
    return (base * 2_654_435_761 + iteration * 40_503 + source * 9_176_131) % (2**31 - 1)


def _corrupt_source(x, spec: CorruptionSpec, seed: int, per_sample: bool):
    spec_t = replace(spec, seed=seed)
    if spec_t.kind != "gaussian" or per_sample:
        return corrupt(x, spec_t)
    # shared noise pattern across the batch
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, spec_t.sigma, size=x.shape[1:])
    return x + noise[None, ...]


def _batch_inputs(batch: MultiSourceDataset, corrupted: dict[int, np.ndarray]):
    inputs = {
        f"x{i + 1}": corrupted.get(i, s) for i, s in enumerate(batch.sources)
    }
    inputs["y"] = batch.y
    return inputs


def _loss_of(graph, inputs) -> float:
    return float(dc.forward(graph, inputs)["loss"].data)


def _check_finite(loss: float, iteration: int):
    if not np.isfinite(loss):
        raise TrainingDivergedError(
            f"non-finite loss at iteration {iteration}", iteration=iteration
        )


def train(
    graph: dc.ComputationGraph,
    data: MultiSourceDataset,
    config: TrainConfig,
    algorithm: str = "clean",
    corruption: list[CorruptionSpec] | None = None,
    tags: set[str] | None = None,
    adam: dc.AdamState | None = None,
    start_iteration: int = 0,
) -> TrainResult:
    """Run one training procedure in place on the graph's parameters.

    ``tags`` restricts which parameter partitions are updated (used by
    fine-tuning); ``adam``/``start_iteration`` let callers resume an
    existing optimizer state for multi-phase schedules.
    """
    if algorithm not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}")
    n_sources = len(data.sources)
    if algorithm != "clean":
        if corruption is None or len(corruption) != n_sources:
            raise ConfigurationError(
                "corruption-aware training needs one spec per source"
            )
    batch_rng = np.random.default_rng(config.seed)
    state = adam if adam is not None else dc.init_adam(graph.params)
    result = TrainResult(graph=graph)
    corrupt_step = 0  # counts corrupted iterations, drives the rotation

    for it in range(start_iteration, start_iteration + config.iterations):
        idx = batch_rng.integers(0, data.n, size=config.batch_size)
        batch = data.batch(idx)
        odd = it % 2 == 1

        if algorithm == "clean" or not odd:
            phase, source_id = "clean", 0
            inputs = _batch_inputs(batch, {})
        elif algorithm == "asn":
            phase, source_id = "corrupt", -1
            corrupted = {
                i: _corrupt_source(
                    batch.sources[i],
                    corruption[i],
                    _noise_seed(config.seed, it, i),
                    config.noise_per_sample,
                )
                for i in range(n_sources)
                if corruption[i].kind != "none"
            }
            inputs = _batch_inputs(batch, corrupted)
        else:
            phase = "corrupt"
            if algorithm == "ssn_alt":
                j_star = corrupt_step % n_sources
            else:
                # one forward per candidate source, pick the worst loss;
                # recompute below with the identical per-source seed
                losses = []
                for j in range(n_sources):
                    xj = _corrupt_source(
                        batch.sources[j],
                        corruption[j],
                        _noise_seed(config.seed, it, j),
                        config.noise_per_sample,
                    )
                    losses.append(_loss_of(graph, _batch_inputs(batch, {j: xj})))
                j_star = int(np.argmax(losses))
            corrupt_step += 1
            source_id = j_star + 1
            xj = _corrupt_source(
                batch.sources[j_star],
                corruption[j_star],
                _noise_seed(config.seed, it, j_star),
                config.noise_per_sample,
            )
            inputs = _batch_inputs(batch, {j_star: xj})

        outputs = dc.forward(graph, inputs)
        loss = float(outputs["loss"].data)
        _check_finite(loss, it)
        grads = dc.backward(graph)
        dc.step_adam(
            graph.params,
            grads,
            state,
            lr=config.lr,
            betas=config.betas,
            tags=tags,
            tag_of=graph.tags if tags is not None else None,
        )
        if it % config.trace_every == 0:
            result.trace.append(TraceRow(it, phase, source_id, loss))
    return result


def train_clean(graph, data, config, **kw):
    return train(graph, data, config, algorithm="clean", **kw)


def train_asn(graph, data, config, corruption, **kw):
    return train(graph, data, config, algorithm="asn", corruption=corruption, **kw)


def train_ssn(graph, data, config, corruption, **kw):
    return train(graph, data, config, algorithm="ssn", corruption=corruption, **kw)


def train_ssn_alt(graph, data, config, corruption, **kw):
    return train(graph, data, config, algorithm="ssn_alt", corruption=corruption, **kw)


def fine_tune(
    graph: dc.ComputationGraph,
    data: MultiSourceDataset,
    config: TrainConfig,
    algorithm: str,
    corruption: list[CorruptionSpec] | None,
    n_clean: int,
    n_tune: int,
) -> TrainResult:
    """Warm start on all tags, then adapt only the fusion and head stages.

    Phase 1 runs n_clean clean iterations over every parameter; phase 2
    runs n_tune iterations of the requested procedure with the extractor
    partition frozen (its values stay bit-identical).
    """
    if n_clean < 1 or n_tune < 0:
        raise ConfigurationError("n_clean must be >= 1 and n_tune >= 0")
    state = dc.init_adam(graph.params)
    first = train(
        graph,
        data,
        replace(config, iterations=n_clean),
        algorithm="clean",
        adam=state,
    )
    if n_tune == 0:
        return first
    second = train(
        graph,
        data,
        replace(config, iterations=n_tune),
        algorithm=algorithm,
        corruption=corruption,
        tags={"fusion", "head"},
        adam=state,
        start_iteration=n_clean,
    )
    second.trace = first.trace + second.trace
    return second
