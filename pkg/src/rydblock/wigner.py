"""Wigner 3j and 6j symbols.

Arguments are integers or half-integers (floats, ints or ``Fraction``).
For total angular momentum up to ``EXACT_LIMIT`` the Racah sums are evaluated
in exact rational arithmetic and only the final square root is rounded; beyond
that a floating-point Racah sum in log-factorials is used.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

EXACT_LIMIT = 40


def _twice(value) -> int:
    doubled = 2 * Fraction(value).limit_denominator(4)
    if doubled.denominator != 1 or abs(float(doubled) - 2 * float(value)) > 1e-9:
        raise ValueError(f"{value!r} is not an integer or half-integer")
    return int(doubled)


def _triangle(a: int, b: int, c: int) -> bool:
    # doubled arguments
    return (a + b + c) % 2 == 0 and abs(a - b) <= c <= a + b


@lru_cache(maxsize=None)
def _fact(n: int) -> int:
    return math.factorial(n)


def _delta_sq(a: int, b: int, c: int) -> Fraction:
    """Triangle coefficient squared, doubled arguments."""
    return Fraction(
        _fact((a + b - c) // 2) * _fact((a - b + c) // 2) * _fact((-a + b + c) // 2),
        _fact((a + b + c) // 2 + 1),
    )


def _log_fact(n: int) -> float:
    return math.lgamma(n + 1)


def _log_delta(a: int, b: int, c: int) -> float:
    return 0.5 * (
        _log_fact((a + b - c) // 2)
        + _log_fact((a - b + c) // 2)
        + _log_fact((-a + b + c) // 2)
        - _log_fact((a + b + c) // 2 + 1)
    )


def _signed_sqrt(square: Fraction, total: Fraction) -> float:
    if total == 0:
        return 0.0
    return float(total) * math.sqrt(square.numerator) / math.sqrt(square.denominator)


@lru_cache(maxsize=65536)
def _threej_doubled(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    if m1 + m2 + m3 != 0:
        return 0.0
    if not _triangle(j1, j2, j3):
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0
    if (j1 - m1) % 2 or (j2 - m2) % 2 or (j3 - m3) % 2:
        return 0.0
    # Racah formula in terms of half the doubled values
    a = (j1 + m1) // 2
    b = (j1 - m1) // 2
    c = (j2 + m2) // 2
    d = (j2 - m2) // 2
    e = (j3 + m3) // 2
    f = (j3 - m3) // 2
    k_min = max(0, (j2 - j3 - m1) // 2, (j1 - j3 + m2) // 2)
    k_max = min((j1 + j2 - j3) // 2, b, c)
    sign_base = (j1 - j2 - m3) // 2
    if max(j1, j2, j3) <= 2 * EXACT_LIMIT:
        total = Fraction(0)
        for k in range(k_min, k_max + 1):
            den = (
                _fact(k)
                * _fact((j1 + j2 - j3) // 2 - k)
                * _fact(b - k)
                * _fact(c - k)
                * _fact((j3 - j2 + m1) // 2 + k)
                * _fact((j3 - j1 - m2) // 2 + k)
            )
            total += Fraction((-1) ** k, den)
        square = _delta_sq(j1, j2, j3) * (
            _fact(a) * _fact(b) * _fact(c) * _fact(d) * _fact(e) * _fact(f)
        )
        return (-1) ** (sign_base % 2) * _signed_sqrt(square, total)
    log_pre = _log_delta(j1, j2, j3) + 0.5 * sum(
        _log_fact(v) for v in (a, b, c, d, e, f)
    )
    total = 0.0
    for k in range(k_min, k_max + 1):
        log_den = (
            _log_fact(k)
            + _log_fact((j1 + j2 - j3) // 2 - k)
            + _log_fact(b - k)
            + _log_fact(c - k)
            + _log_fact((j3 - j2 + m1) // 2 + k)
            + _log_fact((j3 - j1 - m2) // 2 + k)
        )
        total += (-1) ** k * math.exp(log_pre - log_den)
    return (-1) ** (sign_base % 2) * total


def wigner_3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3j symbol ``(j1 j2 j3; m1 m2 m3)``.

    Returns 0 whenever a selection rule (m-sum, triangle, |m| <= j) fails.
    Negative ``j`` raises ``ValueError``.
    """
    args = [_twice(v) for v in (j1, j2, j3, m1, m2, m3)]
    if min(args[:3]) < 0:
        raise ValueError("angular momenta must be non-negative")
    return _threej_doubled(*args)


@lru_cache(maxsize=65536)
def _sixj_doubled(j1: int, j2: int, j3: int, j4: int, j5: int, j6: int) -> float:
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    if not all(_triangle(*t) for t in triads):
        return 0.0
    s = [sum(t) // 2 for t in triads]
    p = ((j1 + j2 + j4 + j5) // 2, (j2 + j3 + j5 + j6) // 2, (j3 + j1 + j6 + j4) // 2)
    k_min = max(s)
    k_max = min(p)
    if max(j1, j2, j3, j4, j5, j6) <= 2 * EXACT_LIMIT:
        total = Fraction(0)
        for k in range(k_min, k_max + 1):
            den = _fact(k - s[0]) * _fact(k - s[1]) * _fact(k - s[2]) * _fact(k - s[3])
            den *= _fact(p[0] - k) * _fact(p[1] - k) * _fact(p[2] - k)
            total += Fraction((-1) ** k * _fact(k + 1), den)
        square = Fraction(1)
        for t in triads:
            square *= _delta_sq(*t)
        return _signed_sqrt(square, total)
    log_pre = sum(_log_delta(*t) for t in triads)
    total = 0.0
    for k in range(k_min, k_max + 1):
        log_term = _log_fact(k + 1) - sum(_log_fact(k - v) for v in s)
        log_term -= sum(_log_fact(v - k) for v in p)
        total += (-1) ** k * math.exp(log_pre + log_term)
    return total


def wigner_6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6j symbol ``{j1 j2 j3; j4 j5 j6}``; 0 when any triad fails."""
    args = [_twice(v) for v in (j1, j2, j3, j4, j5, j6)]
    if min(args) < 0:
        raise ValueError("angular momenta must be non-negative")
    return _sixj_doubled(*args)


def clebsch_gordan(j1, m1, j2, m2, j, m) -> float:
    """``<j1 m1 j2 m2 | j m>`` in the Condon-Shortley convention."""
    phase = _twice(j1) - _twice(j2) + _twice(m)
    sign = -1.0 if (phase // 2) % 2 else 1.0
    return sign * math.sqrt(2 * float(j) + 1) * wigner_3j(j1, j2, j, m1, m2, -Fraction(m))
