"""Reverse-diffusion noise schedule.

The per-step variance interpolates linearly from beta_end at index 0 down
to beta_start at index T-1 (the interpolation runs from the end value to
the start value as the index rises; `reverse=True` flips it back to the
conventional orientation for ablations). From the variances:

    alpha_bar[t] = prod_{i<=t} (1 - beta[i])
    sigma[t]     = sqrt(1 - alpha_bar[t])          image noise level
    sigma_kernel[t] = mu * sigma[t]                kernel-latent noise level

The engine walks outer steps t = T..1 and reads index t-1, so the largest
noise level is injected first.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta_start: float
    beta_end: float
    mu: float
    beta: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray
    sigma_kernel: np.ndarray


def build_schedule(T, beta_start=1e-4, beta_end=2e-2, mu=0.15, reverse=False):
    if T < 2:
        raise ValidationError(f"T must be >= 2, got {T}")
    for name, val in (("beta_start", beta_start), ("beta_end", beta_end)):
        if not 0.0 < val < 1.0:
            raise ValidationError(f"{name} must lie in (0, 1), got {val}")
    if mu <= 0:
        raise ValidationError(f"mu must be > 0, got {mu}")
    frac = np.arange(T, dtype=np.float64) / (T - 1)
    if reverse:
        beta = (1.0 - frac) * beta_start + frac * beta_end
    else:
        beta = (1.0 - frac) * beta_end + frac * beta_start
    alpha_bar = np.cumprod(1.0 - beta)
    sigma = np.sqrt(1.0 - alpha_bar)
    return NoiseSchedule(
        T=T,
        beta_start=beta_start,
        beta_end=beta_end,
        mu=mu,
        beta=beta,
        alpha_bar=alpha_bar,
        sigma=sigma,
        sigma_kernel=mu * sigma,
    )


def perturb(estimate, sigma_t, seed):
    """Add seeded Gaussian noise of scale sigma_t; exact copy when sigma_t is 0."""
    estimate = np.asarray(estimate, dtype=np.float64)
    if sigma_t < 0:
        raise ValidationError(f"sigma_t must be >= 0, got {sigma_t}")
    if sigma_t == 0:
        return estimate.copy()
    rng = np.random.default_rng(seed)
    return estimate + sigma_t * rng.standard_normal(estimate.shape)


def schedule_rows(schedule):
    """(t, beta, alpha_bar, sigma, sigma_kernel) rows for the CSV dump."""
    for t in range(schedule.T):
        yield (
            t,
            schedule.beta[t],
            schedule.alpha_bar[t],
            schedule.sigma[t],
            schedule.sigma_kernel[t],
        )
