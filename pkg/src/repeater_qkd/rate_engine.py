"""Channel loss, timing, waiting-time combinatorics and repeater rate formulas."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Sequence

import numpy as np

from .core_states import DomainError

DEFAULT_ALPHA_ATT = 0.17  # dB/km
DEFAULT_C = 2e5  # km/s
MAX_EXACT_N = 10


class DivergenceError(ArithmeticError):
    """A success probability of zero makes an expected waiting time infinite."""


@dataclass(frozen=True)
class ChannelModel:
    alpha_att: float = DEFAULT_ALPHA_ATT
    c: float = DEFAULT_C

    def __post_init__(self) -> None:
        if self.alpha_att < 0:
            raise DomainError("alpha_att must be non-negative")
        if self.c <= 0:
            raise DomainError("signal speed c must be positive")


@dataclass(frozen=True)
class RepeaterGeometry:
    L: float
    N: int
    beta: int = 2

    def __post_init__(self) -> None:
        if self.L <= 0:
            raise DomainError("total distance L must be positive")
        if int(self.N) != self.N or self.N < 0:
            raise DomainError("nesting level N must be a non-negative integer")
        if self.beta not in (1, 2):
            raise DomainError("beta must be 1 or 2")

    @property
    def L0(self) -> float:
        return self.L / 2**self.N


@dataclass(frozen=True)
class RateBreakdown:
    r_rep: float
    p_click: float
    r_sift: float
    r_secret_fraction: float
    r_qkd: float
    meta: dict = field(default_factory=dict, compare=False)

    def as_dict(self) -> dict:
        return {
            "r_rep": self.r_rep,
            "p_click": self.p_click,
            "r_sift": self.r_sift,
            "r_secret_fraction": self.r_secret_fraction,
            "r_qkd": self.r_qkd,
        }


def transmittivity(length: float, channel: ChannelModel = ChannelModel()) -> float:
    if length < 0:
        raise DomainError("length must be non-negative")
    return 10.0 ** (-channel.alpha_att * length / 10.0)


def fundamental_time(geom: RepeaterGeometry, channel: ChannelModel = ChannelModel()) -> float:
    return geom.beta * geom.L0 / channel.c


def z_average_attempts(N: int, P: float) -> float:
    """Expected number of rounds until 2^N independent geometric(P) links all exist.

    The alternating binomial sum cancels catastrophically in floating point,
    so it is accumulated exactly with rationals whenever P is representable.
    """
    if not (0.0 <= P <= 1.0):
        raise DomainError(f"P={P!r} is not a probability")
    if P == 0.0:
        raise DivergenceError("Z_N diverges at P = 0")
    if N < 0 or int(N) != N:
        raise DomainError("N must be a non-negative integer")
    n = 2 ** int(N)
    if n == 1:
        return 1.0 / P
    if N > MAX_EXACT_N:
        raise DomainError(f"N={N} too large for the exact alternating sum")
    q = Fraction(1) - Fraction(P)
    total = Fraction(0)
    qj = Fraction(1)
    for j in range(1, n + 1):
        qj *= q
        term = Fraction(comb(n, j)) / (1 - qj)
        total += term if j % 2 else -term
    return float(total)


def z1_closed_form(P: float) -> float:
    if P <= 0:
        raise DivergenceError("Z_1 diverges at P = 0")
    return (3.0 - 2.0 * P) / (P * (2.0 - P))


def p_l0_recursion(P0: float, distill_success: Sequence[float]) -> list[float]:
    """P_L0[0..k]: each round halves the pair supply and succeeds with P_D[i]."""
    if P0 <= 0:
        raise DivergenceError("P0 must be positive")
    out = [float(P0)]
    for i, pd in enumerate(distill_success, start=1):
        if pd <= 0:
            raise DivergenceError(f"distillation round {i} has zero success probability")
        out.append(pd / z_average_attempts(1, out[-1]))
    return out


def rate_deterministic(T0: float, N: int, P_l0_k: float) -> float:
    return 1.0 / (T0 * z_average_attempts(N, P_l0_k))


def a_factor(P: float) -> float:
    """Constant a with Z_1(P) >= 3a/(2P); tends to 1 as P -> 0 and is 2/3 at P = 1."""
    if not (0.0 < P <= 1.0):
        raise DomainError(f"P={P!r} must lie in (0, 1]")
    return 2.0 * (3.0 - 2.0 * P) / (3.0 * (2.0 - P))


def rate_probabilistic(
    T0: float,
    N: int,
    k: int,
    P0: float,
    p_es: Sequence[float],
    p_d: Sequence[float],
    a: float,
) -> float:
    if not (0.0 < a <= 1.0):
        raise DomainError("a-factor must lie in (0, 1]")
    if len(p_es) != N:
        raise DomainError(f"expected {N} swap probabilities, got {len(p_es)}")
    if len(p_d) != k:
        raise DomainError(f"expected {k} distillation probabilities, got {len(p_d)}")
    return (
        (2.0 / (3.0 * a)) ** (N + k)
        * P0
        * float(np.prod(p_es))
        * float(np.prod(p_d))
        / T0
    )


def compose_qkd_rate(
    r_rep: float, p_click: float, r_sift: float, r_inf: float, meta: dict | None = None
) -> RateBreakdown:
    return RateBreakdown(
        r_rep=r_rep,
        p_click=p_click,
        r_sift=r_sift,
        r_secret_fraction=r_inf,
        r_qkd=r_rep * p_click * r_sift * max(r_inf, 0.0),
        meta=dict(meta or {}),
    )


def mc_waiting_time(N: int, P: float, trials: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo mean number of rounds until all 2^N segments hold a pair.

    Segments that succeed keep their pair until the last one succeeds, so the
    waiting time is the maximum of 2^N independent geometric variables.
    Returns (mean, standard error).
    """
    if trials < 2:
        raise DomainError("need at least two trials for a standard error")
    if not (0.0 < P <= 1.0):
        raise DomainError(f"P={P!r} must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    samples = rng.geometric(P, size=(trials, 2**N)).max(axis=1)
    return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(trials))
