"""End-to-end flows: surrogate learning loop and scenario verification.

Learning alternates training on an accumulated sample pool with a fresh
certified distance estimate. Each iteration:

1. train the network on everything gathered so far;
2. draw a fresh i.i.d. evaluation block (disjoint from all training data,
   as the distance guarantee requires) and record lambda_star;
3. stop if lambda_star reached the target or barely improved (< 1%
   relative), otherwise grow the pool with uniform samples, projected
   gradient extremes of the current surrogate (where it predicts its own
   minima and maxima, hence where it is most likely wrong), and the fresh
   evaluation block just recorded.

Verification then certifies f(theta) >= tau + lambda_star over the whole
box: a SAFE outcome transfers to the black box as
P(rho(theta) >= tau) >= 1 - epsilon at confidence 1 - eta.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ContractViolation
from .mlp import Dataset, Mlp, TrainConfig, mlp_init, pgd_extremes, train
from .pac import PacCertificate, estimate_lambda_samples, evaluate_blackbox
from .scenario import BlackBox, ParamSpace
from .verifier import (
    DEFAULT_BUDGET,
    DEFAULT_TOL,
    VerificationResult,
    certify,
    unit_box,
    verification_report,
)

DEFAULT_HIDDEN = (100, 100)


@dataclass(frozen=True)
class LearnConfig:
    """Knobs of the learning loop; epsilon/eta parameterize every distance
    estimate made along the way."""

    n_init: int = 900
    n_inc: int = 40
    n_ex: int = 10
    max_iters: int = 10
    lambda_target: float = 0.0
    epsilon: float = 0.01
    eta: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if min(self.n_init, self.n_inc, self.n_ex) < 0:
            raise ContractViolation("sample counts must be >= 0")
        if self.n_init < 1:
            raise ContractViolation("n_init must be >= 1")
        if self.max_iters < 1:
            raise ContractViolation("max_iters must be >= 1")
        if not 0 < self.epsilon < 1 or not 0 < self.eta < 1:
            raise ContractViolation("epsilon and eta must be in (0,1)")
        if self.lambda_target < 0:
            raise ContractViolation("lambda_target must be >= 0")


@dataclass(frozen=True)
class VerifyConfig:
    tol: float = DEFAULT_TOL
    budget: int = DEFAULT_BUDGET
    seed: int = 0


@dataclass(frozen=True)
class LearnResult:
    model: Mlp
    certificate: PacCertificate
    dataset: Dataset
    history: tuple[PacCertificate, ...]


def learn_surrogate(
    bb: BlackBox,
    space: ParamSpace,
    cfg: LearnConfig,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    train_cfg: Optional[TrainConfig] = None,
) -> LearnResult:
    """Run the iterative learning loop and return the certified surrogate.

    Deterministic per ``cfg.seed``: every sample draw, training shuffle and
    extreme search derives its seed from one master stream.
    """
    base_train = train_cfg if train_cfg is not None else TrainConfig()
    master = np.random.default_rng(cfg.seed)

    def next_seed() -> int:
        return int(master.integers(2**63))

    m = space.m
    f = mlp_init([m, *hidden, 1], next_seed())
    thetas = np.random.default_rng(next_seed()).uniform(size=(cfg.n_init, m))
    rhos = evaluate_blackbox(bb, thetas)

    history: list[PacCertificate] = []
    prev_lambda: Optional[float] = None
    for it in range(cfg.max_iters):
        f = train(f, Dataset(thetas, rhos), replace(base_train, seed=next_seed()))
        cert, eval_block = estimate_lambda_samples(f, bb, cfg.epsilon, cfg.eta, next_seed())
        history.append(cert)
        lam = cert.lambda_star
        if lam <= cfg.lambda_target:
            break
        if prev_lambda is not None and (prev_lambda - lam) < 0.01 * prev_lambda:
            break
        prev_lambda = lam
        if it == cfg.max_iters - 1:
            break
        inc = np.random.default_rng(next_seed()).uniform(size=(cfg.n_inc, m))
        ex_min = pgd_extremes(f, cfg.n_ex // 2, "min", seed=next_seed())
        ex_max = pgd_extremes(f, cfg.n_ex - cfg.n_ex // 2, "max", seed=next_seed())
        extremes = np.array(ex_min + ex_max).reshape(-1, m)
        fresh = np.vstack([inc, extremes])
        fresh_rhos = evaluate_blackbox(bb, fresh) if len(fresh) else np.empty(0)
        thetas = np.vstack([thetas, fresh, eval_block.thetas])
        rhos = np.concatenate([rhos, fresh_rhos, eval_block.rhos])

    return LearnResult(
        model=f,
        certificate=history[-1],
        dataset=Dataset(thetas, rhos),
        history=tuple(history),
    )


@dataclass(frozen=True)
class VerifyOutcome:
    result: VerificationResult
    certificate: PacCertificate
    model: Mlp
    dataset: Dataset
    report: dict


def verify_scenario(
    bb: BlackBox,
    space: ParamSpace,
    tau: float,
    learn_cfg: LearnConfig,
    verify_cfg: VerifyConfig = VerifyConfig(),
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    train_cfg: Optional[TrainConfig] = None,
) -> VerifyOutcome:
    """Learn a certified surrogate, then verify f >= tau + lambda_star.

    The report carries epsilon, eta, lambda_star and tau alongside the raw
    verdict. For UNSAFE outcomes it shows both the surrogate value at the
    counterexample and that value minus lambda_star (the probabilistic lower
    bound on the true fitness there).
    """
    learned = learn_surrogate(bb, space, learn_cfg, hidden=hidden, train_cfg=train_cfg)
    lam = learned.certificate.lambda_star
    threshold = tau + lam
    result = certify(
        learned.model,
        unit_box(space.m),
        threshold,
        tol=verify_cfg.tol,
        budget=verify_cfg.budget,
        seed=verify_cfg.seed,
    )
    report = verification_report(result, threshold, verify_cfg.tol, verify_cfg.budget)
    report.update(
        {
            "tau": tau,
            "lambda_star": lam,
            "epsilon": learned.certificate.epsilon,
            "eta": learned.certificate.eta,
            "counterexample_value_minus_lambda": None
            if result.counterexample_value is None
            else result.counterexample_value - lam,
        }
    )
    return VerifyOutcome(
        result=result,
        certificate=learned.certificate,
        model=learned.model,
        dataset=learned.dataset,
        report=report,
    )
