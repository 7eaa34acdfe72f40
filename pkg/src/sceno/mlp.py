"""Fully connected ReLU network with training and extreme-point search.

The network is a plain affine/ReLU chain ending in a single affine output
that is de-standardized on the way out: out = out_std * z + out_mean. Targets
are standardized before training and the (out_mean, out_std) pair is stored
on the model, so predictions are always in raw fitness units. Everything is
numpy and deterministic per seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation, TrainingDiverged

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class Mlp:
    """Weights/biases per layer; weights[l] has shape (fan_out, fan_in)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    out_mean: float = 0.0
    out_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ContractViolation("weights and biases must be non-empty and parallel")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ContractViolation(f"layer {i}: weight/bias shapes {w.shape}/{b.shape}")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ContractViolation(f"layer {i}: fan-in {w.shape[1]} does not chain")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ContractViolation(f"layer {i}: non-finite entries")
        if self.weights[-1].shape[0] != 1:
            raise ContractViolation("final layer must have a single output")
        if not (np.isfinite(self.out_std) and self.out_std > 0):
            raise ContractViolation("out_std must be finite and > 0")
        if not np.isfinite(self.out_mean):
            raise ContractViolation("out_mean must be finite")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def clone(self) -> "Mlp":
        return Mlp(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.out_mean,
            self.out_std,
            self.seed,
        )

    def __call__(self, theta: np.ndarray) -> float:
        return forward(self, theta)


@dataclass(frozen=True)
class Dataset:
    """Evaluated samples: normalized parameter rows with their fitness values."""

    thetas: np.ndarray  # (n, m)
    rhos: np.ndarray    # (n,)

    def __post_init__(self):
        t = np.asarray(self.thetas, dtype=float)
        r = np.asarray(self.rhos, dtype=float)
        if t.ndim != 2 or r.ndim != 1 or t.shape[0] != r.shape[0] or r.size == 0:
            raise ContractViolation(f"inconsistent dataset shapes {t.shape}/{r.shape}")
        if not np.isfinite(r).all():
            raise ContractViolation("dataset contains non-finite fitness values")
        object.__setattr__(self, "thetas", t)
        object.__setattr__(self, "rhos", r)

    def __len__(self) -> int:
        return int(self.rhos.size)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch: int = 256
    lr: float = 1e-3
    seed: int = 0
    l2: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1:
            raise ContractViolation("epochs and batch must be >= 1")
        if self.lr <= 0 or self.l2 < 0:
            raise ContractViolation("lr must be > 0 and l2 >= 0")


def mlp_init(layer_dims: list[int], seed: int) -> Mlp:
    """Seeded uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero biases."""
    if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
        raise ContractViolation(f"bad layer dims {layer_dims}")
    if layer_dims[-1] != 1:
        raise ContractViolation("output dimension must be 1")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims, layer_dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, seed=int(seed))


def _check_input(f: Mlp, theta) -> np.ndarray:
    t = np.asarray(theta, dtype=float)
    if t.shape != (f.input_dim,):
        raise ContractViolation(f"expected input of dimension {f.input_dim}, got shape {t.shape}")
    return t


def forward_batch(f: Mlp, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on rows of x; returns shape (n,)."""
    a = np.asarray(x, dtype=float)
    last = len(f.weights) - 1
    for i, (w, b) in enumerate(zip(f.weights, f.biases)):
        a = a @ w.T + b
        if i < last:
            np.maximum(a, 0.0, out=a)
    return f.out_std * a[:, 0] + f.out_mean


def forward(f: Mlp, theta: np.ndarray) -> float:
    return float(forward_batch(f, _check_input(f, theta)[None, :])[0])


def grad_batch(f: Mlp, x: np.ndarray) -> np.ndarray:
    """Gradient of the (de-standardized) output w.r.t. each input row.

    ReLU subgradient at exactly 0 is taken as 0.
    """
    a = np.asarray(x, dtype=float)
    pre = []
    last = len(f.weights) - 1
    for i, (w, b) in enumerate(zip(f.weights, f.biases)):
        a = a @ w.T + b
        if i < last:
            pre.append(a)
            a = np.maximum(a, 0.0)
    delta = np.full((a.shape[0], 1), f.out_std)
    for i in range(last, -1, -1):
        delta = delta @ f.weights[i]
        if i > 0:
            delta = delta * (pre[i - 1] > 0.0)
    return delta


def grad_input(f: Mlp, theta: np.ndarray) -> np.ndarray:
    return grad_batch(f, _check_input(f, theta)[None, :])[0]


def _mse(f: Mlp, x: np.ndarray, z: np.ndarray) -> float:
    # standardized-space loss used throughout training
    a = x
    last = len(f.weights) - 1
    for i, (w, b) in enumerate(zip(f.weights, f.biases)):
        a = a @ w.T + b
        if i < last:
            a = np.maximum(a, 0.0)
    return float(np.mean((a[:, 0] - z) ** 2))


def train(f: Mlp, data: Dataset, cfg: TrainConfig) -> Mlp:
    """Adam on mean squared error against standardized targets.

    ``cfg.lr`` is the peak rate of a cosine schedule decaying to zero over
    the epochs, so late epochs settle instead of dithering. Target mean/std
    are recomputed from ``data`` and stored on the model; the incoming
    weights are kept as the warm start (their standardized-space shape is
    what carries over between refinement rounds). The returned model's
    full-data loss is never worse than the incoming one: the best parameter
    snapshot across epochs is kept.
    """
    if len(data) == 0:
        raise ContractViolation("training needs a non-empty dataset")
    x = data.thetas
    mean = float(np.mean(data.rhos))
    std = float(np.std(data.rhos))
    if std < 1e-8:
        std = 1.0
    g = f.clone()
    g.out_mean, g.out_std = mean, std
    z = (data.rhos - mean) / std

    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    mom = [np.zeros_like(w) for w in g.weights] + [np.zeros_like(b) for b in g.biases]
    vel = [np.zeros_like(p) for p in mom]
    params = g.weights + g.biases
    last = len(g.weights) - 1
    step = 0

    best_loss = _mse(g, x, z)
    best = [p.copy() for p in params]
    for epoch in range(cfg.epochs):
        lr = cfg.lr * 0.5 * (1.0 + np.cos(np.pi * epoch / cfg.epochs))
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.batch):
            idx = perm[lo : lo + cfg.batch]
            xb, zb = x[idx], z[idx]
            acts = [xb]
            a = xb
            pre = []
            for i in range(last + 1):
                a = a @ g.weights[i].T + g.biases[i]
                if i < last:
                    pre.append(a)
                    a = np.maximum(a, 0.0)
                    acts.append(a)
            delta = (2.0 / xb.shape[0]) * (a[:, 0] - zb)[:, None]
            grads_w = [None] * (last + 1)
            grads_b = [None] * (last + 1)
            for i in range(last, -1, -1):
                grads_w[i] = delta.T @ acts[i]
                grads_b[i] = delta.sum(axis=0)
                if i > 0:
                    delta = (delta @ g.weights[i]) * (pre[i - 1] > 0.0)
            if cfg.l2 > 0:
                for i in range(last + 1):
                    grads_w[i] += cfg.l2 * g.weights[i]
            step += 1
            c1 = 1.0 - ADAM_BETA1**step
            c2 = 1.0 - ADAM_BETA2**step
            for j, grad in enumerate(grads_w + grads_b):
                mom[j] = ADAM_BETA1 * mom[j] + (1 - ADAM_BETA1) * grad
                vel[j] = ADAM_BETA2 * vel[j] + (1 - ADAM_BETA2) * grad**2
                params[j] -= lr * (mom[j] / c1) / (np.sqrt(vel[j] / c2) + ADAM_EPS)
        loss = _mse(g, x, z)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite training loss after step {step}")
        if loss < best_loss:
            best_loss = loss
            best = [p.copy() for p in params]
    if _mse(g, x, z) > best_loss:
        for p, b in zip(params, best):
            p[...] = b
    return g


def pgd_extremes(
    f: Mlp,
    n: int,
    direction: str,
    steps: int = 50,
    step_size: float = 0.05,
    restarts: int = 10,
    seed: int = 0,
) -> list[np.ndarray]:
    """Sign-gradient projected search for extreme surrogate outputs on [0,1]^m.

    Runs ``max(restarts, n)`` seeded uniform starts, takes ``steps`` clipped
    steps of size ``step_size`` toward smaller (``"min"``) or larger
    (``"max"``) outputs, and returns the n best distinct endpoints.
    """
    if direction not in ("min", "max"):
        raise ContractViolation(f"direction must be 'min' or 'max', got {direction!r}")
    if n < 0:
        raise ContractViolation("n must be >= 0")
    if n == 0:
        return []
    m = f.input_dim
    rng = np.random.default_rng(seed)
    pts = rng.uniform(size=(max(restarts, n), m))
    pts, vals = _pgd_on_box(f, pts, np.zeros(m), np.ones(m), direction, steps, step_size)
    order = np.argsort(vals if direction == "min" else -vals, kind="stable")
    seen = set()
    out: list[np.ndarray] = []
    for i in order:
        key = pts[i].tobytes()
        if key in seen:
            continue
        seen.add(key)
        out.append(pts[i].copy())
        if len(out) == n:
            break
    return out


def _pgd_on_box(
    f: Mlp,
    starts: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    direction: str,
    steps: int,
    step_size: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Batch PGD restricted to an axis-aligned box; returns endpoints and values."""
    sgn = -1.0 if direction == "min" else 1.0
    pts = np.clip(starts, lo, hi)
    for _ in range(steps):
        g = grad_batch(f, pts)
        pts = np.clip(pts + sgn * step_size * np.sign(g), lo, hi)
    return pts, forward_batch(f, pts)


# ---------------------------------------------------------------------------
# Persistence (value-exact JSON; floats serialized via repr round-trip)
# ---------------------------------------------------------------------------


def mlp_to_dict(f: Mlp) -> dict:
    return {
        "dims": f.dims,
        "weights": [w.tolist() for w in f.weights],
        "biases": [b.tolist() for b in f.biases],
        "out_mean": f.out_mean,
        "out_std": f.out_std,
        "seed": f.seed,
    }


def mlp_from_dict(d: dict) -> Mlp:
    for key in ("dims", "weights", "biases", "out_mean", "out_std"):
        if key not in d:
            raise ContractViolation(f"missing model field {key!r}")
    f = Mlp(
        [np.array(w, dtype=float) for w in d["weights"]],
        [np.array(b, dtype=float) for b in d["biases"]],
        float(d["out_mean"]),
        float(d["out_std"]),
        int(d.get("seed", 0)),
    )
    if f.dims != list(d["dims"]):
        raise ContractViolation(f"model dims {d['dims']} do not match weights {f.dims}")
    return f


def save_mlp(f: Mlp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mlp_to_dict(f), sort_keys=True, separators=(",", ":")))


def load_mlp(path: str | Path) -> Mlp:
    return mlp_from_dict(json.loads(Path(path).read_text()))
