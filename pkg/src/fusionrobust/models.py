"""Model builders: tagged computation graphs for the experiment tasks.

Two families: the direct linear fusion model (one weight vector per
source, prediction is the sum of per-source dot products) and a small
convolutional two-source classifier (per-source 1x1-conv extractors,
mean or learned-ensemble fusion, spatial mean pooling, a dense head).
Every builder returns a ComputationGraph whose forward accepts named
inputs x1, x2, ... and, when "y" is supplied, also emits the training
loss.
"""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from . import fusion as fu
from .errors import ConfigurationError, ShapeError

FUSION_KINDS = ("mean", "concat", "lel")


def build_linear_model(d1: int, d2: int, d3: int, rng: np.random.Generator):
    """Direct fusion regressor: pred = x1 @ h1 + x2 @ h2.

    h_i stacks the private part w_i over the shared part g_i; both live
    under the head tag since the model has no separate feature stage.
    """
    if min(d1, d2, d3) < 0:
        raise ConfigurationError("latent dims must be nonnegative")
    params = {
        "h1": dc.parameter(0.01 * rng.standard_normal(d1 + d3)),
        "h2": dc.parameter(0.01 * rng.standard_normal(d2 + d3)),
    }
    tags = {"h1": "head", "h2": "head"}

    def forward_fn(p, inputs):
        pred = dc.add(
            dc.matmul(inputs["x1"], p["h1"]), dc.matmul(inputs["x2"], p["h2"])
        )
        out = {"pred": pred}
        if "y" in inputs:
            out["loss"] = dc.mse_loss(pred, inputs["y"].data)
        return out

    meta = {"loss": "mse", "d1": d1, "d2": d2, "d3": d3, "n_sources": 2}
    return dc.ComputationGraph(params=params, tags=tags, forward_fn=forward_fn, meta=meta)


def linear_g_parts(graph: dc.ComputationGraph):
    """Extract (w1, g1, w2, g2) from a linear model's head vectors."""
    d1 = graph.meta["d1"]
    d2 = graph.meta["d2"]
    h1 = graph.params["h1"].data
    h2 = graph.params["h2"].data
    return h1[:d1].copy(), h1[d1:].copy(), h2[:d2].copy(), h2[d2:].copy()


def build_conv_model(
    source_shapes,
    depths,
    rng: np.random.Generator,
    fusion: str = "mean",
    hidden: int = 32,
    n_classes: int = 2,
    lel_l1_coeff: float = 0.01,
):
    """Two-source convolutional classifier with a configurable fusion stage.

    Per source: 1x1 conv to depth d_i + ReLU (extractor tag).  Fusion is
    element-wise mean (no parameters) or the learned ensemble layer
    (fusion tag, l1-penalized).  Head: spatial mean pool, dense-ReLU-dense
    to class logits (head tag).
    """
    if fusion not in FUSION_KINDS:
        raise ConfigurationError(f"unknown fusion kind {fusion!r}")
    shapes = [tuple(s) for s in source_shapes]
    if len(shapes) != len(depths):
        raise ConfigurationError("one output depth per source is required")
    lead = shapes[0][:2]
    for s in shapes:
        if len(s) != 3 or s[:2] != lead:
            raise ShapeError("sources must be (a, b, c) maps with shared a, b")
    if fusion == "mean" and len(set(depths)) != 1:
        raise ShapeError("mean fusion needs equal extractor depths")

    params = {}
    tags = {}
    for i, ((_, _, cin), d) in enumerate(zip(shapes, depths), start=1):
        params[f"ext{i}_w"] = dc.parameter(dc.glorot_uniform(rng, cin, d, (cin, d)))
        params[f"ext{i}_b"] = dc.parameter(np.zeros(d))
        tags[f"ext{i}_w"] = "extractor"
        tags[f"ext{i}_b"] = "extractor"

    fused_depth = sum(depths) if fusion == "concat" else max(depths)
    if fusion == "lel":
        lel = fu.init_lel_params(list(depths), rng, l1_coeff=lel_l1_coeff)
        params["lel_w"] = lel.weights
        tags["lel_w"] = "fusion"

    params["head_w1"] = dc.parameter(
        dc.glorot_uniform(rng, fused_depth, hidden, (fused_depth, hidden))
    )
    params["head_b1"] = dc.parameter(np.zeros(hidden))
    params["head_w2"] = dc.parameter(
        dc.glorot_uniform(rng, hidden, n_classes, (hidden, n_classes))
    )
    params["head_b2"] = dc.parameter(np.zeros(n_classes))
    for name in ("head_w1", "head_b1", "head_w2", "head_b2"):
        tags[name] = "head"

    def forward_fn(p, inputs):
        feats = []
        for i in range(1, len(shapes) + 1):
            h = dc.conv1x1(inputs[f"x{i}"], p[f"ext{i}_w"], p[f"ext{i}_b"])
            feats.append(dc.relu(h))
        stack = fu.FeatureStack(feats)
        if fusion == "lel":
            lel_now = fu.LELParams(weights=p["lel_w"], l1_coeff=lel_l1_coeff)
            fused = fu.fuse_lel(stack, lel_now)
        elif fusion == "concat":
            fused = fu.fuse_concat(stack)
        else:
            fused = fu.fuse_mean(stack)
        pooled = dc.mean_pool_spatial(fused)
        h1 = dc.relu(dc.dense(pooled, p["head_w1"], p["head_b1"]))
        logits = dc.dense(h1, p["head_w2"], p["head_b2"])
        out = {"pred": logits}
        if "y" in inputs:
            loss = dc.softmax_cross_entropy(logits, inputs["y"].data.astype(int))
            if fusion == "lel":
                loss = dc.add(loss, dc.l1_penalty(p["lel_w"], lel_l1_coeff))
            out["loss"] = loss
        return out

    meta = {
        "loss": "softmax_ce",
        "fusion": fusion,
        "depths": list(depths),
        "n_sources": len(shapes),
        "source_shapes": shapes,
    }
    return dc.ComputationGraph(params=params, tags=tags, forward_fn=forward_fn, meta=meta)
