"""Bhattacharyya-distance alignment between batch distributions.

Each mini-batch of embeddings is summarized as a diagonal Gaussian; the
closed-form Gaussian Bhattacharyya distance then scores how far apart
two batches are. The hyperbolic flavor applies the same construction to
log-mapped ball points (a tangent-space wrapped-Gaussian approximation),
which reduces to the Euclidean one as c -> 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import InvalidInputError
from .geometry import BallConfig, log_origin

#: Default per-dimension variance floor. Keeps single-sample batches
#: well defined and bounds the log terms away from -inf.
VAR_FLOOR = 1e-5


@dataclass
class GaussianStats:
    """Per-dimension mean and (floored) variance of one batch."""

    mean: torch.Tensor
    var: torch.Tensor

    def __post_init__(self):
        if self.mean.shape != self.var.shape:
            raise InvalidInputError(
                f"mean/var shape mismatch: {tuple(self.mean.shape)} vs {tuple(self.var.shape)}"
            )
        if not bool((self.var > 0).all()):
            raise InvalidInputError("variances must be strictly positive")

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]


@dataclass
class LossBreakdown:
    """Composite objective split into its three weighted components.

    ``total`` must equal lambda1*l_ss + lambda2*l_st + lambda3*l_lm for
    the weights that produced it; values are torch scalars during
    training and plain floats after ``detached()``.
    """

    l_ss: torch.Tensor
    l_st: torch.Tensor
    l_lm: torch.Tensor
    total: torch.Tensor

    def detached(self) -> "LossBreakdown":
        def _f(x):
            return float(x.detach()) if torch.is_tensor(x) else float(x)

        return LossBreakdown(_f(self.l_ss), _f(self.l_st), _f(self.l_lm), _f(self.total))


def _as_batch(batch) -> torch.Tensor:
    if torch.is_tensor(batch):
        t = batch
    else:
        rows = list(batch)
        if len(rows) == 0:
            raise InvalidInputError("batch is empty")
        dims = {len(torch.as_tensor(r).reshape(-1)) for r in rows}
        if len(dims) != 1:
            raise InvalidInputError(f"batch rows disagree on dimension: {sorted(dims)}")
        t = torch.stack([torch.as_tensor(r, dtype=torch.float64).reshape(-1) for r in rows])
    if t.ndim == 1:
        t = t.unsqueeze(0)
    if t.ndim != 2:
        raise InvalidInputError(f"batch must be (N, d), got shape {tuple(t.shape)}")
    if t.shape[0] == 0:
        raise InvalidInputError("batch is empty")
    if not t.is_floating_point():
        t = t.to(torch.float64)
    return t


def fit_gaussian(batch, var_floor: float = VAR_FLOOR) -> GaussianStats:
    """Per-dimension mean and biased (1/N) variance, floored elementwise.

    The 1/N estimator keeps the statistic deterministic and defined for
    batches of one, where the floor takes over entirely.
    """
    if var_floor <= 0:
        raise InvalidInputError(f"var_floor must be positive, got {var_floor}")
    t = _as_batch(batch)
    mean = t.mean(dim=0)
    var = ((t - mean) ** 2).mean(dim=0)
    var = var.clamp_min(var_floor)
    return GaussianStats(mean=mean, var=var)


def bhattacharyya_gaussian(p: GaussianStats, q: GaussianStats) -> torch.Tensor:
    """Closed-form Bhattacharyya distance between diagonal Gaussians.

        D = sum_i (mu1_i - mu2_i)^2 / (8 sbar_i)
          + 1/2 sum_i ln( sbar_i / sqrt(var1_i * var2_i) )

    with sbar_i = (var1_i + var2_i) / 2. Symmetric, nonnegative, and
    zero exactly when the two statistics coincide.
    """
    if p.dim != q.dim:
        raise InvalidInputError(f"dimension mismatch: {p.dim} vs {q.dim}")
    sbar = (p.var + q.var) / 2.0
    mean_term = ((p.mean - q.mean) ** 2 / (8.0 * sbar)).sum()
    log_term = 0.5 * torch.log(sbar / torch.sqrt(p.var * q.var)).sum()
    return mean_term + log_term


def bd_euclidean(batch_a, batch_b, var_floor: float = VAR_FLOOR) -> torch.Tensor:
    """Bhattacharyya distance between the Gaussian fits of two batches."""
    return bhattacharyya_gaussian(fit_gaussian(batch_a, var_floor), fit_gaussian(batch_b, var_floor))


def bd_hyperbolic(batch_a, batch_b, cfg: BallConfig, var_floor: float = VAR_FLOOR) -> torch.Tensor:
    """Bhattacharyya distance between two batches of ball points.

    Every point is pulled back to the tangent space at the origin with
    the log map; the Euclidean batch distance is then applied there.
    """
    a = log_origin(_as_batch(batch_a), cfg)
    b = log_origin(_as_batch(batch_b), cfg)
    return bd_euclidean(a, b, var_floor)
