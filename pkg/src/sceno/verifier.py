"""Sound output bounding and verification of a ReLU network over a box.

Two bounding layers feed a best-first input-splitting branch-and-bound:

* interval arithmetic through every affine/ReLU layer (cheap, loose);
* per-neuron linear relaxation with back-substitution to the input box.
  An unstable neuron y = relu(x), x in [l, u] with l < 0 < u is bounded by
  y <= u (x - l) / (u - l) above and y >= alpha x below, with alpha chosen
  0 when |l| >= u and 1 otherwise (the smaller-area rule). Stable neurons
  are exact. Reported bounds are always the tighter of the two methods.

Branch-and-bound splits the widest input dimension at its midpoint, keyed by
the node's certified lower bound (ties broken by insertion order, so runs are
deterministic); the incumbent upper bound comes from evaluating box centers
and a few projected-gradient probes near the root. Certified lower bounds
are sound by construction; the incumbent is an exact network evaluation, so
counterexamples are never relaxation artifacts.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractViolation
from .mlp import Mlp, _pgd_on_box, forward_batch

SAFE = "SAFE"
UNSAFE = "UNSAFE"
UNKNOWN = "UNKNOWN"

DEFAULT_TOL = 1e-4
DEFAULT_BUDGET = 20_000

# incumbent refinement inside branch-and-bound: a few projected-gradient
# probes on shallow nodes only, so the cost stays bounded
_NODE_PGD_RESTARTS = 5
_NODE_PGD_STEPS = 30
_NODE_PGD_STEP_SIZE = 0.05
_NODE_PGD_DEPTH_LIMIT = 3


@dataclass(frozen=True)
class Box:
    """Axis-aligned sub-box of the unit parameter box."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ContractViolation(f"bad box shapes {lo.shape}/{hi.shape}")
        if np.any(lo > hi):
            raise ContractViolation("box needs lo <= hi in every dimension")
        if np.any(lo < 0.0) or np.any(hi > 1.0):
            raise ContractViolation("box must lie within the unit box")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def m(self) -> int:
        return self.lo.shape[0]

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def split(self) -> tuple["Box", "Box"]:
        """Bisect the widest dimension at its midpoint."""
        dim = int(np.argmax(self.hi - self.lo))
        mid = 0.5 * (self.lo[dim] + self.hi[dim])
        left_hi = self.hi.copy()
        left_hi[dim] = mid
        right_lo = self.lo.copy()
        right_lo[dim] = mid
        return Box(self.lo, left_hi), Box(right_lo, self.hi)


def unit_box(m: int) -> Box:
    return Box(np.zeros(m), np.ones(m))


@dataclass(frozen=True)
class BoundResult:
    lower: float
    upper: float
    method: str

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ContractViolation("bounds must be finite")
        if self.lower > self.upper:
            raise ContractViolation(f"lower {self.lower} exceeds upper {self.upper}")


def _check_box(f: Mlp, box: Box) -> None:
    if box.m != f.input_dim:
        raise ContractViolation(f"box dimension {box.m} does not match network {f.input_dim}")


def _interval_layers(f: Mlp, lo: np.ndarray, hi: np.ndarray):
    """Pre-activation interval bounds per layer from plain interval arithmetic."""
    bounds = []
    a_lo, a_hi = lo, hi
    last = len(f.weights) - 1
    for i, (w, b) in enumerate(zip(f.weights, f.biases)):
        w_pos = np.maximum(w, 0.0)
        w_neg = np.minimum(w, 0.0)
        z_lo = w_pos @ a_lo + w_neg @ a_hi + b
        z_hi = w_pos @ a_hi + w_neg @ a_lo + b
        bounds.append((z_lo, z_hi))
        if i < last:
            a_lo = np.maximum(z_lo, 0.0)
            a_hi = np.maximum(z_hi, 0.0)
    return bounds


def interval_bounds(f: Mlp, box: Box) -> BoundResult:
    """Sound output range from interval arithmetic."""
    _check_box(f, box)
    z_lo, z_hi = _interval_layers(f, box.lo, box.hi)[-1]
    return BoundResult(
        lower=f.out_std * float(z_lo[0]) + f.out_mean,
        upper=f.out_std * float(z_hi[0]) + f.out_mean,
        method="interval",
    )


def _relu_relaxation(l: np.ndarray, u: np.ndarray):
    """Per-neuron linear bounds for a = relu(z), z in [l, u].

    Returns (sl, su, cu): lower slope, upper slope, upper intercept (the
    lower intercept is always zero).
    """
    sl = np.zeros_like(l)
    su = np.zeros_like(l)
    cu = np.zeros_like(l)
    pos = l >= 0.0
    sl[pos] = 1.0
    su[pos] = 1.0
    unstable = (l < 0.0) & (u > 0.0)
    if unstable.any():
        lu, uu = l[unstable], u[unstable]
        su[unstable] = uu / (uu - lu)
        cu[unstable] = -uu * lu / (uu - lu)
        sl[unstable] = np.where(np.abs(lu) >= uu, 0.0, 1.0)
    return sl, su, cu


def _preactivation_bounds(f: Mlp, lo: np.ndarray, hi: np.ndarray):
    """Back-substituted pre-activation bounds per layer, intersected layerwise
    with interval bounds (both are sound, so the intersection is too)."""
    interval = _interval_layers(f, lo, hi)
    relax = []  # (sl, su, cu) per hidden layer processed so far
    bounds = []
    for k in range(len(f.weights)):
        a_low = f.weights[k]
        a_up = f.weights[k]
        c_low = f.biases[k].copy()
        c_up = f.biases[k].copy()
        for j in range(k - 1, -1, -1):
            sl, su, cu = relax[j]
            pos_low = np.maximum(a_low, 0.0)
            neg_low = np.minimum(a_low, 0.0)
            pos_up = np.maximum(a_up, 0.0)
            neg_up = np.minimum(a_up, 0.0)
            c_low = c_low + neg_low @ cu
            c_up = c_up + pos_up @ cu
            a_low = pos_low * sl + neg_low * su
            a_up = pos_up * su + neg_up * sl
            c_low = c_low + a_low @ f.biases[j]
            c_up = c_up + a_up @ f.biases[j]
            a_low = a_low @ f.weights[j]
            a_up = a_up @ f.weights[j]
        z_lo = c_low + np.maximum(a_low, 0.0) @ lo + np.minimum(a_low, 0.0) @ hi
        z_hi = c_up + np.maximum(a_up, 0.0) @ hi + np.minimum(a_up, 0.0) @ lo
        z_lo = np.maximum(z_lo, interval[k][0])
        z_hi = np.minimum(z_hi, interval[k][1])
        bounds.append((z_lo, z_hi))
        if k < len(f.weights) - 1:
            relax.append(_relu_relaxation(z_lo, z_hi))
    return bounds


def relaxation_bounds(f: Mlp, box: Box) -> BoundResult:
    """Sound output range from linear relaxation with back-substitution.

    Never looser than :func:`interval_bounds` (the two are intersected at
    every layer).
    """
    _check_box(f, box)
    z_lo, z_hi = _preactivation_bounds(f, box.lo, box.hi)[-1]
    return BoundResult(
        lower=f.out_std * float(z_lo[0]) + f.out_mean,
        upper=f.out_std * float(z_hi[0]) + f.out_mean,
        method="linear-relaxation",
    )


@dataclass(frozen=True)
class BabResult:
    """Certified bracket of the network minimum over a box."""

    lower: float
    upper: float
    witness: np.ndarray
    nodes_explored: int
    converged: bool


@dataclass(frozen=True)
class VerificationResult:
    status: str
    certified_lower: float
    counterexample: Optional[np.ndarray]
    counterexample_value: Optional[float]
    nodes_explored: int

    def __post_init__(self):
        if self.status not in (SAFE, UNSAFE, UNKNOWN):
            raise ContractViolation(f"bad status {self.status!r}")
        if self.status == UNSAFE and self.counterexample is None:
            raise ContractViolation("UNSAFE requires a concrete counterexample")


class _Incumbent:
    """Best exact evaluation seen so far (value and witness point)."""

    def __init__(self, f: Mlp):
        self.f = f
        self.value = np.inf
        self.point: Optional[np.ndarray] = None

    def offer(self, pts: np.ndarray, vals: np.ndarray) -> None:
        i = int(np.argmin(vals))
        if vals[i] < self.value:
            self.value = float(vals[i])
            self.point = pts[i].copy()


def _probe(f: Mlp, box: Box, inc: _Incumbent, depth: int, seed: int, node_id: int) -> None:
    center = box.midpoint()[None, :]
    inc.offer(center, forward_batch(f, center))
    if depth <= _NODE_PGD_DEPTH_LIMIT and np.any(box.hi > box.lo):
        rng = np.random.default_rng([seed, node_id])
        starts = rng.uniform(box.lo, box.hi, size=(_NODE_PGD_RESTARTS, box.m))
        pts, vals = _pgd_on_box(
            f, starts, box.lo, box.hi, "min", _NODE_PGD_STEPS, _NODE_PGD_STEP_SIZE
        )
        inc.offer(pts, vals)


def _bab_engine(
    f: Mlp,
    box: Box,
    tol: float,
    budget: int,
    seed: int,
    stop_lower: Optional[float] = None,
    threshold: Optional[float] = None,
):
    """Shared best-first branch-and-bound loop.

    Returns (lower, upper, witness, nodes, reason) where reason is one of
    "tol", "bound", "decided", "budget". With ``threshold`` set, runs in
    decision mode: the tolerance exit is disabled and the loop stops as soon
    as the threshold question is answered either way.
    """
    _check_box(f, box)
    if tol <= 0:
        raise ContractViolation("tol must be > 0")
    if budget < 1:
        raise ContractViolation("budget must be >= 1")

    inc = _Incumbent(f)
    node_id = 0
    _probe(f, box, inc, 0, seed, node_id)
    root_lower = relaxation_bounds(f, box).lower
    nodes = 1
    counter = 0
    heap = [(root_lower, counter, box, 0)]

    def current_lower() -> float:
        return min(heap[0][0], inc.value) if heap else inc.value

    reason = "budget"
    while True:
        lower = current_lower()
        if threshold is not None:
            if inc.value < threshold or lower >= threshold:
                reason = "decided"
                break
        else:
            if stop_lower is not None and lower >= stop_lower:
                reason = "bound"
                break
            if inc.value - lower <= tol:
                reason = "tol"
                break
        if not heap or nodes >= budget:
            reason = "tol" if not heap else "budget"
            break
        node_lower, _, node_box, depth = heapq.heappop(heap)
        if node_lower >= inc.value:
            continue
        for child in node_box.split():
            node_id += 1
            _probe(f, child, inc, depth + 1, seed, node_id)
            child_lower = max(relaxation_bounds(f, child).lower, node_lower)
            nodes += 1
            if child_lower < inc.value:
                counter += 1
                heapq.heappush(heap, (child_lower, counter, child, depth + 1))

    return current_lower(), inc.value, inc.point, nodes, reason


def bab_min(
    f: Mlp,
    box: Box,
    tol: float = DEFAULT_TOL,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    stop_when_lower_ge: Optional[float] = None,
) -> BabResult:
    """Certified bracket [lower, upper] of min f over the box.

    ``upper`` is the exact network value at ``witness``. Terminates when the
    bracket closes to ``tol``, when the certified lower bound clears
    ``stop_when_lower_ge`` (if given), or when ``budget`` nodes have been
    bounded; only the budget exit reports ``converged=False``.
    """
    lower, upper, witness, nodes, reason = _bab_engine(
        f, box, tol, budget, seed, stop_lower=stop_when_lower_ge
    )
    return BabResult(
        lower=float(lower),
        upper=float(upper),
        witness=witness,
        nodes_explored=nodes,
        converged=reason != "budget",
    )


def certify(
    f: Mlp,
    box: Box,
    threshold: float,
    tol: float = DEFAULT_TOL,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
) -> VerificationResult:
    """Decide whether f(theta) >= threshold holds over the whole box.

    SAFE requires a certified lower bound at or above the threshold; UNSAFE
    requires a concrete input whose exact evaluation falls below it; UNKNOWN
    means the node budget ran out undecided.
    """
    lower, upper, witness, nodes, _ = _bab_engine(f, box, tol, budget, seed, threshold=threshold)
    if upper < threshold:
        return VerificationResult(
            status=UNSAFE,
            certified_lower=float(lower),
            counterexample=witness,
            counterexample_value=float(upper),
            nodes_explored=nodes,
        )
    if lower >= threshold:
        return VerificationResult(
            status=SAFE,
            certified_lower=float(lower),
            counterexample=None,
            counterexample_value=None,
            nodes_explored=nodes,
        )
    return VerificationResult(
        status=UNKNOWN,
        certified_lower=float(lower),
        counterexample=None,
        counterexample_value=None,
        nodes_explored=nodes,
    )


def verification_report(
    result: VerificationResult, threshold: float, tol: float, budget: int
) -> dict:
    """JSON-ready report with the normative field names."""
    return {
        "status": result.status,
        "certified_lower": result.certified_lower,
        "threshold": threshold,
        "counterexample": None
        if result.counterexample is None
        else [float(v) for v in result.counterexample],
        "counterexample_value": result.counterexample_value,
        "nodes_explored": result.nodes_explored,
        "tol": tol,
        "budget": budget,
    }
