"""Scenario-optimization certificates for the surrogate/fitness distance.

The max residual over K i.i.d. uniform samples,

    lambda_star = max_i |f(theta_i) - rho(theta_i)|,

is the optimum of a one-variable robust program relaxed to K sampled
constraints (feasible, unique optimum). Whenever

    K >= (2 / epsilon) * (ln(1 / eta) + 1),

the residual of a fresh uniform draw exceeds lambda_star with probability at
most epsilon, at confidence 1 - eta. The surrogate must be fixed before the
samples are drawn: estimating on training points voids the guarantee.

Certificates store the sample seed and a digest of the decimal-serialized
sample block so audits can regenerate the draw and recheck the maximum.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, EvaluationError
from .mlp import Dataset, Mlp, forward, forward_batch
from .scenario import BlackBox


def required_samples(epsilon: float, eta: float) -> int:
    """Smallest K with (2/K) * (ln(1/eta) + 1) <= epsilon."""
    if not 0 < epsilon < 1:
        raise ContractViolation(f"epsilon must be in (0,1), got {epsilon}")
    if not 0 < eta < 1:
        raise ContractViolation(f"eta must be in (0,1), got {eta}")
    need = math.log(1.0 / eta) + 1.0
    k = max(1, math.ceil(2.0 * need / epsilon))
    # settle float edge cases so K is the exact boundary-inclusive minimum
    while k > 1 and 2.0 * need / (k - 1) <= epsilon:
        k -= 1
    while 2.0 * need / k > epsilon:
        k += 1
    return k


@dataclass(frozen=True)
class PacCertificate:
    """Evidence backing one probabilistic distance estimate."""

    lambda_star: float
    epsilon: float
    eta: float
    k: int
    seed: int
    sample_digest: str

    def __post_init__(self):
        if not (np.isfinite(self.lambda_star) and self.lambda_star >= 0):
            raise ContractViolation("lambda_star must be finite and >= 0")
        if self.k < required_samples(self.epsilon, self.eta):
            raise ContractViolation(
                f"k={self.k} is below the required "
                f"{required_samples(self.epsilon, self.eta)} samples"
            )

    def to_dict(self) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "epsilon": self.epsilon,
            "eta": self.eta,
            "k": self.k,
            "seed": self.seed,
            "sample_digest": self.sample_digest,
        }


def sample_digest(thetas: np.ndarray) -> str:
    """SHA-256 over the decimal serialization of a sample block."""
    text = "\n".join(",".join(repr(v) for v in row) for row in np.asarray(thetas, dtype=float))
    return hashlib.sha256(text.encode("ascii")).hexdigest()


def draw_samples(m: int, k: int, seed: int) -> np.ndarray:
    """The seeded uniform sample block behind a certificate (replayable)."""
    return np.random.default_rng(seed).uniform(size=(k, m))


def evaluate_blackbox(bb: BlackBox, thetas: np.ndarray) -> np.ndarray:
    """Evaluate rho on each row, in index order; failures carry their theta."""
    out = np.empty(len(thetas))
    for i, theta in enumerate(thetas):
        try:
            out[i] = bb.evaluate(theta)
        except EvaluationError as err:
            err.index = i
            err.theta = np.array(theta)
            raise
    return out


def estimate_lambda_samples(
    f: Mlp, bb: BlackBox, epsilon: float, eta: float, seed: int
) -> tuple[PacCertificate, Dataset]:
    """Like :func:`estimate_lambda` but also returns the evaluated block,
    so learning pipelines can recycle the simulations as training data."""
    k = required_samples(epsilon, eta)
    thetas = draw_samples(f.input_dim, k, seed)
    rhos = evaluate_blackbox(bb, thetas)
    # per-sample forward: residuals are exact w.r.t. the scalar evaluation
    # path, so a black box that IS the surrogate certifies lambda_star = 0
    preds = np.array([forward(f, theta) for theta in thetas])
    residuals = np.abs(preds - rhos)
    cert = PacCertificate(
        lambda_star=float(residuals.max()),
        epsilon=epsilon,
        eta=eta,
        k=k,
        seed=int(seed),
        sample_digest=sample_digest(thetas),
    )
    return cert, Dataset(thetas, rhos)


def estimate_lambda(f: Mlp, bb: BlackBox, epsilon: float, eta: float, seed: int) -> PacCertificate:
    """Draw the required fresh samples and certify the max residual.

    ``f`` must not have been trained on the drawn samples; use a seed
    disjoint from every seed that produced training data.
    """
    return estimate_lambda_samples(f, bb, epsilon, eta, seed)[0]


@dataclass(frozen=True)
class OutlierReport:
    """Partition of a dataset into glitch suspects and kept samples."""

    flagged: list[tuple[np.ndarray, float, float]]  # (theta, rho, residual)
    kept: Dataset
    policy: str
    threshold_value: float


def outlier_filter(data: Dataset, f: Mlp, k: float = 10.0) -> OutlierReport:
    """Flag samples whose surrogate residual is extreme under a MAD rule.

    Residuals r_i = |f(theta_i) - rho_i| are compared against
    median(r) + k * MAD(r). A zero MAD with non-degenerate spread falls back
    to the Tukey rule Q3 + 1.5 IQR; fully constant residuals flag nothing.
    This is a pure report: callers retrain on ``kept`` and re-estimate
    lambda_star themselves.
    """
    if len(data) < 10:
        raise ContractViolation(f"outlier filtering needs >= 10 samples, got {len(data)}")
    r = np.abs(forward_batch(f, data.thetas) - data.rhos)
    med = float(np.median(r))
    mad = float(np.median(np.abs(r - med)))
    if mad > 0:
        threshold = med + k * mad
        policy = f"median+{k:g}*MAD"
    elif r.max() > r.min():
        q1, q3 = np.percentile(r, [25.0, 75.0])
        threshold = float(q3 + 1.5 * (q3 - q1))
        policy = "iqr-fallback"
    else:
        threshold = float(r.max())
        policy = "constant-residuals"
    mask = r > threshold
    flagged = [
        (data.thetas[i].copy(), float(data.rhos[i]), float(r[i])) for i in np.flatnonzero(mask)
    ]
    if mask.all():
        raise ContractViolation("outlier filter flagged every sample; threshold degenerate")
    kept = Dataset(data.thetas[~mask], data.rhos[~mask])
    return OutlierReport(flagged=flagged, kept=kept, policy=policy, threshold_value=threshold)
