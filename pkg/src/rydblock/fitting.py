"""Damped Rabi oscillation fit ``(1 - a) + a exp(-t/tau) cos(2 pi f t)``.

``f`` is reported in MHz (Rabi frequency over 2 pi) with ``t`` in microseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .errors import NumericalError


@dataclass(frozen=True)
class RabiFitResult:
    a: float
    tau: float  # us, inf for an undamped oscillation
    omega: float  # MHz
    residual: float  # rms of the fit residuals
    n_points: int

    def as_dict(self) -> dict:
        return {
            "a": self.a,
            "tau_us": self.tau if math.isfinite(self.tau) else None,
            "omega_mhz": self.omega,
            "residual_rms": self.residual,
            "n_points": self.n_points,
        }


def damped_rabi(t, a: float, tau: float, omega: float):
    t = np.asarray(t, dtype=float)
    decay = np.exp(-t / tau) if math.isfinite(tau) else 1.0
    return (1.0 - a) + a * decay * np.cos(2.0 * math.pi * omega * t)


def _model(p, t):
    a, gamma, f = p
    return (1.0 - a) + a * np.exp(-gamma * t) * np.cos(2.0 * math.pi * f * t)


def _initial_frequency(t: np.ndarray, y: np.ndarray) -> float:
    # peak of a zero-padded discrete Fourier sum; the grid need not be uniform
    span = t[-1] - t[0]
    dt = np.min(np.diff(t))
    freqs = np.linspace(0.25 / span, 0.5 / dt, 4000)
    yc = y - y.mean()
    phase = np.exp(-2j * math.pi * np.outer(freqs, t))
    power = np.abs(phase @ yc) ** 2
    return float(freqs[np.argmax(power)])


def _initial_guess(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    a0 = 0.5 * (y.max() - y.min())
    f0 = _initial_frequency(t, y)
    # envelope decay from the spread of the first and last halves
    half = len(t) // 2
    early, late = np.ptp(y[: max(half, 2)]), np.ptp(y[half:])
    span = t[-1] - t[0]
    gamma0 = 0.0
    if late > 1e-12 and early > late:
        gamma0 = math.log(early / late) / (0.5 * span)
    return np.array([a0, gamma0, f0])


def fit_damped_rabi(t, y) -> RabiFitResult:
    """Least-squares fit of ground-state retention versus pulse length."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and y must be 1-D arrays of equal length")
    if len(t) < 4:
        raise ValueError("at least 4 points are needed")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite data")
    order = np.argsort(t, kind="stable")
    t, y = t[order], y[order]
    if np.ptp(y) < 1e-12:
        raise NumericalError("constant data carry no oscillation to fit")
    if np.min(np.diff(t)) <= 0:
        raise ValueError("duplicate time points")

    p0 = _initial_guess(t, y)
    fit = least_squares(
        lambda p: _model(p, t) - y,
        p0,
        bounds=([0.0, 0.0, 0.0], [np.inf, np.inf, np.inf]),
        x_scale=np.array([0.1, 0.1, 0.1]) + np.abs(p0),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=10000,
    )
    if not fit.success:
        raise NumericalError(f"damped Rabi fit failed: {fit.message}")
    a, gamma, f = fit.x
    rms = float(np.sqrt(np.mean(fit.fun**2)))
    tau = 1.0 / gamma if gamma > 0 else math.inf
    return RabiFitResult(float(a), float(tau), float(f), rms, len(t))


class DampedRabiFit(BaseEstimator, RegressorMixin):
    """Estimator wrapper around ``fit_damped_rabi``.

    ``X`` holds the pulse lengths (us) as a single column, ``y`` the retention.
    """

    def __init__(self, min_points: int = 4):
        self.min_points = min_points

    def fit(self, X, y):
        t = np.asarray(X, dtype=float).reshape(len(X), -1)
        if t.shape[1] != 1:
            raise ValueError("X must have exactly one column (pulse length)")
        if len(t) < self.min_points:
            raise ValueError(f"at least {self.min_points} points are needed")
        res = fit_damped_rabi(t[:, 0], y)
        self.a_ = res.a
        self.tau_ = res.tau
        self.omega_ = res.omega
        self.residual_ = res.residual
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "omega_")
        t = np.asarray(X, dtype=float).reshape(len(X), -1)[:, 0]
        return damped_rabi(t, self.a_, self.tau_, self.omega_)
