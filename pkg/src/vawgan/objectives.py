"""Scalar training objectives and their combination.

Sign convention: every "loss" here is minimized. The critic's
maximization of the Wasserstein estimate is realized by minimizing its
negation inside the training step. Per parameter set the objectives
are: encoder minimizes recon + KL, generator minimizes
recon + alpha * wasserstein_gap, critic maximizes wasserstein_gap.

The reconstruction term drops the constant (D/2) log 2pi of the
unit-covariance Gaussian likelihood so a perfect reconstruction reads
exactly zero; reported values are comparable up to that constant.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import numerics as nm
from .errors import ShapeError
from .numerics import Tensor


def kl_loss(mu, log_var) -> Tensor:
    """Mean over the batch of KL(N(mu, diag exp(log_var)) || N(0, I)).

    Closed form per frame: 0.5 * sum_d (mu^2 + exp(log_var) - log_var - 1).
    Always >= 0, and 0 exactly at the prior.
    """
    mu, log_var = nm.as_tensor(mu), nm.as_tensor(log_var)
    if mu.shape != log_var.shape:
        raise ShapeError(f"kl_loss: mu {mu.shape} vs log_var {log_var.shape}")
    per_dim = nm.sub(nm.add(nm.square(mu), nm.exp(log_var)), nm.add(log_var, 1.0))
    per_frame = nm.reduce_sum(per_dim, axis=1)
    return nm.mul(nm.reduce_mean(per_frame), 0.5)


def recon_loss(x, x_hat) -> Tensor:
    """Mean over the batch of 0.5 * ||x - x_hat||^2 (unit-covariance Gaussian)."""
    x, x_hat = nm.as_tensor(x), nm.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ShapeError(f"recon_loss: x {x.shape} vs x_hat {x_hat.shape}")
    per_frame = nm.reduce_sum(nm.square(nm.sub(x, x_hat)), axis=1)
    return nm.mul(nm.reduce_mean(per_frame), 0.5)


def wgan_objective(real_scores, fake_scores) -> Tensor:
    """mean(D(real)) - mean(D(fake)): the critic ascends it, the generator descends."""
    real_scores, fake_scores = nm.as_tensor(real_scores), nm.as_tensor(fake_scores)
    if real_scores.size == 0 or fake_scores.size == 0:
        raise ShapeError("wgan_objective: score batches must be non-empty")
    return nm.sub(nm.reduce_mean(real_scores), nm.reduce_mean(fake_scores))


def _softplus(t: Tensor) -> Tensor:
    # log(1 + exp(t)) computed as relu(t) + log(1 + exp(-|t|)) for stability
    relu = nm.leaky_relu(t, slope=0.0)
    absval = nm.add(relu, nm.leaky_relu(nm.mul(t, -1.0), slope=0.0))
    return nm.add(relu, nm.log(nm.add(nm.exp(nm.mul(absval, -1.0)), 1.0)))


def jsgan_objective(real_logits, fake_logits) -> Tensor:
    """E[log sigmoid(real)] + E[log(1 - sigmoid(fake))]; ablation objective only."""
    real_logits, fake_logits = nm.as_tensor(real_logits), nm.as_tensor(fake_logits)
    real_term = nm.mul(nm.reduce_mean(_softplus(nm.mul(real_logits, -1.0))), -1.0)
    fake_term = nm.mul(nm.reduce_mean(_softplus(fake_logits)), -1.0)
    return nm.add(real_term, fake_term)


@dataclass(frozen=True)
class LossBreakdown:
    """Component record of one training step's objectives."""

    j_lat: float
    j_obs: float
    j_wgan: float
    total: float
    alpha: float

    @property
    def encoder_objective(self) -> float:
        return self.j_obs + self.j_lat

    @property
    def generator_objective(self) -> float:
        return self.j_obs + self.alpha * self.j_wgan

    @property
    def critic_objective(self) -> float:
        return self.j_wgan


def vawgan_total(j_lat: float, j_obs: float, j_wgan: float, alpha: float) -> LossBreakdown:
    """Combine components; alpha weights the Wasserstein term.

    With alpha = 0 the generator objective reduces to plain
    reconstruction (the warm-up baseline); alpha = 50 is the default
    joint-phase weight.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    total = j_obs + j_lat + alpha * j_wgan
    return LossBreakdown(
        j_lat=float(j_lat), j_obs=float(j_obs), j_wgan=float(j_wgan),
        total=float(total), alpha=float(alpha),
    )
