"""Shared test helpers: random nets and the Lipschitz-refined grid oracle."""

from __future__ import annotations

import numpy as np

from sceno.mlp import Mlp, forward_batch


def random_net(seed: int, dims: list[int], out_mean: float = 0.0, out_std: float = 1.0) -> Mlp:
    """Seeded dense net with non-trivial biases, for bound/soundness tests."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        weights.append(rng.uniform(-1.0, 1.0, size=(fan_out, fan_in)) / np.sqrt(fan_in))
        biases.append(rng.uniform(-0.5, 0.5, size=fan_out))
    return Mlp(weights, biases, out_mean=out_mean, out_std=out_std)


def lipschitz_inf(f: Mlp) -> float:
    """Global Lipschitz constant w.r.t. the max norm: out_std * prod ||W||_inf."""
    return float(f.out_std) * float(np.prod([np.abs(w).sum(axis=1).max() for w in f.weights]))


def grid_values(f: Mlp, lo: np.ndarray, hi: np.ndarray, per_dim: int) -> np.ndarray:
    """Network values at the centers of a regular grid over the box."""
    m = len(lo)
    axes = [lo[d] + (hi[d] - lo[d]) * (np.arange(per_dim) + 0.5) / per_dim for d in range(m)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    vals = np.empty(len(pts))
    for start in range(0, len(pts), 200_000):
        vals[start : start + 200_000] = forward_batch(f, pts[start : start + 200_000])
    return vals


def grid_min_oracle(
    f: Mlp, lo: np.ndarray, hi: np.ndarray, per_dim: int
) -> tuple[float, float]:
    """Bracket [sampled_min - L*g/2, sampled_min] provably containing min f.

    g is the largest grid cell width; every box point is within g/2 of a grid
    center in the max norm, so the true minimum sits above
    sampled_min - L*g/2.
    """
    sampled = float(grid_values(f, lo, hi, per_dim).min())
    g = float(np.max((hi - lo) / per_dim))
    return sampled - lipschitz_inf(f) * g / 2.0, sampled


def assert_brackets_oracle(lower: float, upper: float, oracle_lo: float, oracle_hi: float):
    """Consistency of a sound bracket with the oracle bracket.

    Both intervals contain the true minimum, so they must overlap:
    lower <= oracle_hi (sampled min) and upper >= oracle_lo.
    """
    assert lower <= oracle_hi + 1e-9, f"lower {lower} exceeds sampled min {oracle_hi}"
    assert upper >= oracle_lo - 1e-9, f"upper {upper} below refined bound {oracle_lo}"
