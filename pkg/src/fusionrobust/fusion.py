"""Fusion mechanisms over per-source convolutional feature maps.

Three ways to merge channel-last feature stacks: element-wise mean
(requires equal depths), channel concatenation, and the latent ensemble
layer (LEL) — a learned sparse channel mixer implemented as a 1x1
convolution over the stacked channels with an activation and an l1
penalty standing in for a hard per-row sparsity cap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diffcore as dc
from .errors import ConfigurationError, ShapeError


@dataclass
class FeatureStack:
    """Per-source feature maps sharing spatial dims, channel-last."""

    sources: list[dc.Tensor]

    def __post_init__(self):
        if not self.sources:
            raise ShapeError("FeatureStack requires at least one source")
        lead = self.sources[0].data.shape[:-1]
        for s in self.sources:
            if s.data.ndim < 2:
                raise ShapeError("each source needs spatial dims plus channels")
            if s.data.shape[:-1] != lead:
                raise ShapeError("sources must share spatial dimensions")

    @property
    def depths(self) -> list[int]:
        return [s.data.shape[-1] for s in self.sources]

    @property
    def d_sum(self) -> int:
        return sum(self.depths)

    @property
    def d_hat(self) -> int:
        return max(self.depths)


@dataclass
class LELParams:
    """Mixing weights (d_hat rows over d_sum stacked channels) + l1 knob."""

    weights: dc.Tensor
    l1_coeff: float = 0.01
    sparsity_target: int | None = None

    def __post_init__(self):
        if self.l1_coeff < 0:
            raise ConfigurationError("l1_coeff must be >= 0")
        if self.weights.data.ndim != 2:
            raise ShapeError("LEL weights must be a d_hat x d_sum matrix")
        if not np.all(np.isfinite(self.weights.data)):
            raise ConfigurationError("LEL weights must be finite")


def fuse_mean(stack: FeatureStack) -> dc.Tensor:
    """Element-wise mean over sources; all depths must be equal."""
    depths = stack.depths
    if len(set(depths)) != 1:
        raise ShapeError(
            f"mean fusion needs equal channel depths, got {depths}; "
            "use concatenation or the ensemble layer for unequal depths"
        )
    out = stack.sources[0]
    for s in stack.sources[1:]:
        out = dc.add(out, s)
    return dc.scale(out, 1.0 / len(stack.sources))


def fuse_concat(stack: FeatureStack) -> dc.Tensor:
    """Channels concatenated in source order."""
    if len(stack.sources) == 1:
        return stack.sources[0]
    return dc.concat_channels(stack.sources)


def fuse_lel(
    stack: FeatureStack,
    params: LELParams,
    activation: Callable[[dc.Tensor], dc.Tensor] | None = dc.relu,
) -> dc.Tensor:
    """Latent ensemble layer: learned channel mixing of the stacked sources.

    Output channel j is activation(sum_k w[j, k] * stacked_channel_k),
    realized as a 1x1 convolution over the d_sum stacked channels.  Output
    depth is d_hat = max_i d_i regardless of input values.
    """
    if params.weights.data.shape[1] != stack.d_sum:
        raise ShapeError(
            f"LEL weight columns {params.weights.data.shape[1]} != "
            f"stacked depth {stack.d_sum}"
        )
    stacked = fuse_concat(stack)
    mixed = dc.conv1x1(stacked, dc.transpose(params.weights))
    return activation(mixed) if activation is not None else mixed


def lel_l1_term(params: LELParams) -> dc.Tensor:
    """The training-loss l1 penalty for the mixing weights."""
    return dc.l1_penalty(params.weights, params.l1_coeff)


def lel_sparsity_report(params: LELParams, threshold: float = 1e-3) -> np.ndarray:
    """Per-output-channel counts of mixing weights above threshold."""
    if threshold <= 0:
        raise ConfigurationError("threshold must be > 0")
    return (np.abs(params.weights.data) > threshold).sum(axis=1)


def mean_equivalent_weights(depths: list[int], d_hat: int | None = None) -> np.ndarray:
    """Weight matrix making an identity-activation LEL equal mean fusion.

    Row j averages channel j of every source that has it; for equal
    depths this reproduces element-wise mean exactly.
    """
    if d_hat is None:
        d_hat = max(depths)
    d_sum = sum(depths)
    w = np.zeros((d_hat, d_sum))
    offsets = np.cumsum([0] + depths[:-1])
    for j in range(d_hat):
        holders = [off + j for off, d in zip(offsets, depths) if j < d]
        for col in holders:
            w[j, col] = 1.0 / len(holders)
    return w


def init_lel_params(
    depths: list[int],
    rng: np.random.Generator,
    l1_coeff: float = 0.01,
    noise: float = 0.01,
    sparsity_target: int | None = None,
) -> LELParams:
    """Mean-fusion-equivalent init plus small uniform noise."""
    base = mean_equivalent_weights(depths)
    base = base + rng.uniform(-noise, noise, size=base.shape)
    return LELParams(
        weights=dc.parameter(base),
        l1_coeff=l1_coeff,
        sparsity_target=sparsity_target,
    )
