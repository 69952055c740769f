"""Batch-means error bars over seeded chains."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .geometry import Configuration


@dataclass(frozen=True)
class Estimate:
    estimate: float
    stderr: float

    def zscore(self, target: float = 0.0) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.estimate == target else math.copysign(math.inf, self.estimate - target)
        return (self.estimate - target) / self.stderr

    def consistent_with(self, target: float = 0.0, k: float = 3.0) -> bool:
        return abs(self.estimate - target) <= k * self.stderr

    def __iter__(self):
        yield self.estimate
        yield self.stderr


class SampleSet:
    """Equilibrium samples with their chain labels.

    Accepts a flat list of configurations (one chain) or a list of
    per-chain lists.
    """

    def __init__(self, samples):
        if isinstance(samples, SampleSet):
            self.configs, self.chain = samples.configs, samples.chain
            return
        samples = list(samples)
        if not samples:
            raise ParameterError("empty sample list")
        if isinstance(samples[0], Configuration):
            self.configs = samples
            self.chain = np.zeros(len(samples), dtype=int)
        else:
            self.configs = [c for chain in samples for c in chain]
            self.chain = np.concatenate([np.full(len(ch), i, dtype=int) for i, ch in enumerate(samples)])
        if not self.configs:
            raise ParameterError("empty sample list")

    def __len__(self):
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)

    @property
    def n_chains(self) -> int:
        return int(self.chain.max()) + 1


def batch_labels(chain: np.ndarray, min_batches: int = 32) -> np.ndarray:
    """Split every chain into contiguous batches so that there are at least ``min_batches`` overall."""
    chains = np.unique(chain)
    per_chain = max(1, math.ceil(min_batches / len(chains)))
    labels = np.empty(len(chain), dtype=int)
    next_label = 0
    for c in chains:
        idx = np.flatnonzero(chain == c)
        k = min(per_chain, len(idx))
        parts = np.array_split(idx, k)
        for p in parts:
            labels[p] = next_label
            next_label += 1
    return labels


def batch_mean(values, chain: np.ndarray | None = None, min_batches: int = 32) -> Estimate:
    """Mean of per-sample ``values`` with a batch-means standard error."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ParameterError("no values to average")
    chain = np.zeros(len(v), dtype=int) if chain is None else np.asarray(chain)
    labels = batch_labels(chain, min_batches)
    B = labels.max() + 1
    if B < 2:
        return Estimate(float(v.mean()), math.nan)
    sums = np.bincount(labels, weights=v, minlength=B)
    counts = np.bincount(labels, minlength=B)
    means = sums / counts
    mean = float(v.mean())
    # weighted batch-means variance of the overall mean
    w = counts / counts.sum()
    var = float(np.sum(w**2 * (means - mean) ** 2)) * B / (B - 1)
    return Estimate(mean, math.sqrt(var))


def batch_mean_columns(values, chain=None, min_batches: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise ``batch_mean`` for an (n_samples, k) array; returns (means, stderrs)."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    chain = np.zeros(len(v), dtype=int) if chain is None else np.asarray(chain)
    labels = batch_labels(chain, min_batches)
    B = labels.max() + 1
    counts = np.bincount(labels, minlength=B)
    sums = np.zeros((B, v.shape[1]))
    np.add.at(sums, labels, v)
    means = sums / counts[:, None]
    mean = v.mean(axis=0)
    if B < 2:
        return mean, np.full(v.shape[1], math.nan)
    w = (counts / counts.sum())[:, None]
    var = np.sum(w**2 * (means - mean) ** 2, axis=0) * B / (B - 1)
    return mean, np.sqrt(var)
