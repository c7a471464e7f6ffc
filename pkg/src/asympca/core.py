"""Scalar asymmetric-norm statistics.

Expectiles and quantiles generalize mean and median by weighting positive
and negative deviations asymmetrically (weight tau above, 1-tau below).
This module provides the asymmetric norms themselves, the matching location
estimators, their dispersion analogues, the distribution function whose
tau-quantile is the tau-expectile, and a plug-in estimator of the expectile's
asymptotic variance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .exceptions import ContractError, DegenerateInputError, DomainError

__all__ = [
    "TauLevel",
    "ExpectileResult",
    "asym_l1_norm",
    "asym_l2_norm_sq",
    "expectile_1d",
    "quantile_1d",
    "tau_variance",
    "tau_deviation",
    "t_function",
    "asymptotic_variance",
    "expectile_foc_residual",
]


@dataclass(frozen=True)
class TauLevel:
    """Asymmetry level, strictly inside (0, 1)."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not np.isfinite(v) or not 0.0 < v < 1.0:
            raise DomainError(f"tau must lie strictly in (0, 1), got {self.value!r}")
        object.__setattr__(self, "value", v)

    def __float__(self) -> float:
        return self.value


def as_tau(tau) -> float:
    """Validate a tau level given as a TauLevel or a bare float."""
    if isinstance(tau, TauLevel):
        return tau.value
    return TauLevel(tau).value


def as_samples(values) -> np.ndarray:
    """Coerce to a 1-D float64 sample vector with finite entries, n >= 1."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size < 1:
        raise ContractError("sample vector must contain at least one value")
    if not np.all(np.isfinite(arr)):
        raise DomainError("sample vector contains non-finite entries")
    return arr


@dataclass(frozen=True)
class ExpectileResult:
    """Expectile value with the iteration record of the fixed-point solve."""

    value: float
    iterations: int
    converged: bool


def asym_l1_norm(y, tau) -> float:
    """Asymmetric L1 norm: sum of |y_j| weighted tau above zero, 1-tau below."""
    t = as_tau(tau)
    arr = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise DomainError("non-finite input")
    return float(np.sum(np.abs(arr) * np.where(arr >= 0.0, t, 1.0 - t)))


def asym_l2_norm_sq(y, tau) -> float:
    """Squared asymmetric L2 norm: tau*sum(y+)^2 + (1-tau)*sum(y-)^2."""
    t = as_tau(tau)
    arr = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise DomainError("non-finite input")
    pos = np.maximum(arr, 0.0)
    neg = np.maximum(-arr, 0.0)
    return float(t * np.dot(pos, pos) + (1.0 - t) * np.dot(neg, neg))


def expectile_1d(samples, tau, max_iter: int = 200) -> ExpectileResult:
    """Scalar tau-expectile: the minimizer of the asymmetric squared loss.

    Computed by the weight-set fixed point: given the current split of the
    sample, the candidate is the weighted average with weights tau above and
    1-tau at or below, and the split is refreshed from the new candidate.
    The split set is finite, so exact repetition is the stopping rule; a
    guard of `max_iter` iterations flags nonconvergence.
    """
    t = as_tau(tau)
    ys = np.sort(as_samples(samples))
    value, iterations, converged = backend.expectile_sorted(ys, t, max_iter)
    return ExpectileResult(float(value), int(iterations), bool(converged))


def quantile_1d(samples, tau) -> float:
    """Scalar tau-quantile, lower endpoint of the minimizing interval."""
    t = as_tau(tau)
    ys = as_samples(samples)
    return float(np.quantile(ys, t, method="inverted_cdf"))


def tau_variance(samples, tau) -> float:
    """Mean asymmetric squared loss about the tau-expectile (1/n normalized).

    At tau = 1/2 this is half the population variance; the factor comes from
    the literal norm definition and cancels in every argmax computed from it.
    """
    t = as_tau(tau)
    ys = as_samples(samples)
    e = expectile_1d(ys, t).value
    d = ys - e
    return float(
        np.mean(np.where(d > 0.0, t, 1.0 - t) * d * d)
    )


def tau_deviation(samples, tau) -> float:
    """Mean asymmetric absolute loss about the tau-quantile (1/n normalized)."""
    t = as_tau(tau)
    ys = as_samples(samples)
    q = quantile_1d(ys, t)
    d = ys - q
    return float(np.mean(np.abs(d) * np.where(d >= 0.0, t, 1.0 - t)))


def t_function(x, samples) -> float:
    """Empirical distribution function whose tau-quantile is the tau-expectile.

    T(x) = {G(x) - x F(x)} / [2{G(x) - x F(x)} + (x - mean)] with F the
    empirical cdf and G the empirical first partial moment.
    """
    ys = as_samples(samples)
    xv = float(x)
    if not np.isfinite(xv):
        raise DomainError("non-finite evaluation point")
    mean = float(ys.mean())
    below = ys <= xv
    F = float(below.mean())
    G = float((ys * below).mean())
    num = G - xv * F
    den = 2.0 * num + (xv - mean)
    scale = 1.0 + abs(num) + abs(xv) + abs(mean)
    if abs(den) <= 1e-15 * scale:
        raise DegenerateInputError("T(x) denominator vanishes for this sample")
    return num / den


def asymptotic_variance(samples, tau) -> float:
    """Plug-in estimate of the asymptotic variance of the scaled expectile error.

    Returns K / J^2 with K the mean squared asymmetric loss gradient at the
    expectile and J = tau*(1 - F(e)) + (1-tau)*F(e). At tau = 1/2 this
    estimates the ordinary variance.
    """
    t = as_tau(tau)
    ys = as_samples(samples)
    if ys.size < 2:
        raise ContractError("asymptotic variance requires at least two samples")
    e = expectile_1d(ys, t).value
    d = ys - e
    grad = t * np.maximum(d, 0.0) + (1.0 - t) * np.maximum(-d, 0.0)
    K = float(np.mean(grad * grad))
    F = float(np.mean(ys <= e))
    J = t * (1.0 - F) + (1.0 - t) * F
    return K / (J * J)


def expectile_foc_residual(samples, tau, e) -> float:
    """First-order-condition residual tau*sum(y-e)+ - (1-tau)*sum(e-y)+."""
    t = as_tau(tau)
    ys = as_samples(samples)
    d = ys - e
    return float(t * np.sum(np.maximum(d, 0.0)) - (1.0 - t) * np.sum(np.maximum(-d, 0.0)))
