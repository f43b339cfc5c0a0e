"""Generative model over labeling-function votes.

Votes and the unobserved class are modeled as conditionally independent
factors: each function j has an accuracy weight a_j firing when its vote
matches the class, and a propensity weight p_j firing whenever it does not
abstain. Given class y, a vote lambda has probability

    psi_j(lambda, y) / Z_j,
    psi_j = exp(a_j * [lambda == y] + p_j * [lambda != abstain]),
    Z_j   = 1 + exp(a_j + p_j) + exp(p_j),

and a row's marginal likelihood sums the class-conditional products over
both classes weighted by the (supplied, not learned) class balance. Fitting
minimizes the mean negative log marginal likelihood with an L2 penalty by
full-batch gradient descent from zero, which is deterministic.

The posterior over the class given a row depends only on the accuracy
weights of the non-abstaining functions; propensity factors are class
independent and cancel, so they are omitted from the posterior entirely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import OptimizationError
from .labeling import Vote, VoteMatrix

REAL, ARTIFACT, ABSTAIN = int(Vote.REAL), int(Vote.ARTIFACT), int(Vote.ABSTAIN)


@dataclass(frozen=True)
class LabelModelParams:
    theta_acc: np.ndarray
    theta_prop: np.ndarray
    class_balance: float
    lf_names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        acc = np.asarray(self.theta_acc, dtype=np.float64)
        prop = np.asarray(self.theta_prop, dtype=np.float64)
        if acc.shape != prop.shape or acc.ndim != 1:
            raise ValueError("theta_acc and theta_prop must be 1-d and equal length")
        if not (np.isfinite(acc).all() and np.isfinite(prop).all()):
            raise ValueError("weights must be finite")
        if not 0.0 < self.class_balance < 1.0:
            raise ValueError("class_balance must lie in (0, 1)")
        object.__setattr__(self, "theta_acc", acc)
        object.__setattr__(self, "theta_prop", prop)

    @property
    def m(self) -> int:
        return int(self.theta_acc.size)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "theta_acc": self.theta_acc.tolist(),
                    "theta_prop": self.theta_prop.tolist(),
                    "class_balance": self.class_balance,
                    "lf_names": self.lf_names,
                },
                indent=1,
            )
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "LabelModelParams":
        obj = json.loads(Path(path).read_text())
        return cls(
            np.asarray(obj["theta_acc"]),
            np.asarray(obj["theta_prop"]),
            obj["class_balance"],
            list(obj["lf_names"]),
        )


@dataclass(frozen=True)
class ProbabilisticLabel:
    row_id: str
    p_artifact: float
    covered: bool


@dataclass(frozen=True)
class LabelModelHyper:
    lr: float = 0.01
    epochs: int = 1000
    l2: float = 1e-4
    seed: int = 0
    # optimistic accuracy start (sigmoid(1) ~ 0.73 when voting): encodes the
    # working assumption that heuristics beat random whenever they vote.
    # an all-zero start is a saddle whose responsibilities equal the class
    # prior, which systematically buries rare one-sided heuristics.
    init_acc: float = 1.0


def _vote_arrays(votes: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    votes = np.asarray(votes)
    agree_real = (votes == REAL).astype(np.float64)
    agree_artifact = (votes == ARTIFACT).astype(np.float64)
    non_abstain = (votes != ABSTAIN).astype(np.float64)
    return agree_real, agree_artifact, non_abstain


def marginal_nll(
    params: LabelModelParams, votes: np.ndarray | VoteMatrix
) -> tuple[float, np.ndarray]:
    """Negative log marginal likelihood of the observed votes and its
    gradient with respect to all 2m weights (accuracy first, then
    propensity)."""
    if isinstance(votes, VoteMatrix):
        votes = votes.votes
    votes = np.atleast_2d(np.asarray(votes))
    n, m = votes.shape
    if n == 0 or m == 0:
        raise ValueError("vote matrix must be nonempty")
    if m != params.m:
        raise ValueError(f"expected {params.m} columns, got {m}")

    acc, prop = params.theta_acc, params.theta_prop
    a_real, a_art, voted = _vote_arrays(votes)

    # log Z_j = log(1 + e^(a+p) + e^p), stable via chained logaddexp
    log_z = np.logaddexp(0.0, np.logaddexp(acc + prop, prop))
    prop_term = voted @ prop
    log_like_real = np.log1p(-params.class_balance) + a_real @ acc + prop_term
    log_like_art = np.log(params.class_balance) + a_art @ acc + prop_term
    row_log = np.logaddexp(log_like_real, log_like_art) - log_z.sum()
    nll = -float(row_log.sum())

    # responsibilities: posterior class weights per row
    q_art = 1.0 / (1.0 + np.exp(log_like_real - log_like_art))
    q_real = 1.0 - q_art

    p_correct = np.exp(acc + prop - log_z)
    p_voted = p_correct + np.exp(prop - log_z)
    grad_acc = -(q_real @ a_real + q_art @ a_art) + n * p_correct
    grad_prop = -voted.sum(axis=0) + n * p_voted
    return nll, np.concatenate([grad_acc, grad_prop])


def fit_label_model(
    votes: np.ndarray | VoteMatrix,
    class_balance: float,
    hyper: LabelModelHyper | None = None,
    lf_names: Sequence[str] | None = None,
) -> LabelModelParams:
    """Gradient descent on the mean marginal NLL plus an L2 penalty.

    Weights start at (init_acc, 0) per function; with a fixed step count
    the fit is fully deterministic.
    """
    hyper = hyper or LabelModelHyper()
    if isinstance(votes, VoteMatrix):
        lf_names = lf_names or votes.lf_names
        votes = votes.votes
    votes = np.atleast_2d(np.asarray(votes))
    n, m = votes.shape
    if n == 0 or m == 0:
        raise ValueError("vote matrix must be nonempty")

    theta = np.concatenate([np.full(m, float(hyper.init_acc)), np.zeros(m)])
    for epoch in range(hyper.epochs):
        params = LabelModelParams(theta[:m], theta[m:], class_balance)
        nll, grad = marginal_nll(params, votes)
        if not np.isfinite(nll):
            raise OptimizationError(
                f"label model diverged at epoch {epoch}: nll={nll}, "
                f"|theta|={np.abs(theta).max():.3g}"
            )
        theta = theta - hyper.lr * (grad / n + 2.0 * hyper.l2 * theta)
    return LabelModelParams(
        theta[:m], theta[m:], class_balance, list(lf_names or [])
    )


def posterior(
    params: LabelModelParams, vote_row: np.ndarray, row_id: str = ""
) -> ProbabilisticLabel:
    """P(artifact | votes). Propensity factors are class independent, so the
    log odds reduce to the prior odds plus accuracy weights of the
    functions voting artifact minus those voting real."""
    row = np.asarray(vote_row).reshape(-1)
    if row.size != params.m:
        raise ValueError(f"expected {params.m} votes, got {row.size}")
    acc = params.theta_acc
    log_odds = float(
        np.log(params.class_balance) - np.log1p(-params.class_balance)
        + acc[row == ARTIFACT].sum() - acc[row == REAL].sum()
    )
    p = 1.0 / (1.0 + np.exp(-log_odds))
    return ProbabilisticLabel(row_id, p, covered=bool((row != ABSTAIN).any()))


def posterior_batch(
    params: LabelModelParams, matrix: VoteMatrix
) -> list[ProbabilisticLabel]:
    return [
        posterior(params, matrix.votes[i], matrix.row_ids[i]) for i in range(matrix.n)
    ]


def majority_vote(
    vote_row: np.ndarray, class_balance: float = 0.5, row_id: str = ""
) -> ProbabilisticLabel:
    """Fraction of non-abstaining votes for artifact; the class prior when
    every function abstained. An exact split gives 0.5."""
    row = np.asarray(vote_row).reshape(-1)
    voted = row != ABSTAIN
    if not voted.any():
        return ProbabilisticLabel(row_id, class_balance, covered=False)
    p = float((row == ARTIFACT).sum() / voted.sum())
    return ProbabilisticLabel(row_id, p, covered=True)


def majority_vote_batch(
    matrix: VoteMatrix, class_balance: float = 0.5
) -> list[ProbabilisticLabel]:
    return [
        majority_vote(matrix.votes[i], class_balance, matrix.row_ids[i])
        for i in range(matrix.n)
    ]


def to_crisp_labels(
    probs: Sequence[ProbabilisticLabel], threshold: float = 0.5
) -> dict[str, int]:
    """Uncovered rows are filtered out; a probability exactly at the
    threshold resolves to real, the safety-critical class."""
    return {
        p.row_id: (1 if p.p_artifact > threshold else 0) for p in probs if p.covered
    }
