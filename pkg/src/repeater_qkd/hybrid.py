"""Hybrid repeater: coherent-state qubus links heralded by unambiguous state
discrimination, dissipative two-qubit gates, deterministic swapping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core_states import BellDiagonalState, DomainError, secret_fraction
from .original import DetectorModel, DistillationFailure, swap_map, DepolarizingGate
from .rate_engine import (
    ChannelModel,
    RateBreakdown,
    compose_qkd_rate,
    p_l0_recursion,
    rate_deterministic,
    transmittivity,
)


@dataclass(frozen=True)
class HybridLinkParams:
    alpha: float
    theta: float
    L0: float

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise DomainError("alpha must be non-negative")
        if not (0.0 < self.theta <= np.pi):
            raise DomainError("theta must lie in (0, pi]")
        if self.L0 < 0:
            raise DomainError("L0 must be non-negative")

    @property
    def excitation(self) -> float:
        """alpha^2 sin^2(theta/2), the only combination the link depends on."""
        return self.alpha**2 * np.sin(self.theta / 2.0) ** 2


@dataclass(frozen=True)
class DissipativeGate:
    """Two-qubit gate whose photon loss (local transmission p_G) dephases qubits."""

    p_G: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.p_G <= 1.0):
            raise DomainError(f"p_G={self.p_G!r} outside (0, 1]")

    @property
    def x(self) -> float:
        p = self.p_G
        return np.pi * (1.0 - p * p) / (np.sqrt(p) * (1.0 + p))

    @property
    def p_c(self) -> float:
        """Probability that a qubit acted on by the gate suffers no Z error."""
        return 0.5 * (1.0 + np.exp(-self.x / 2.0))


def _coupling(eta_t: float, eta_d: float) -> float:
    den = 1.0 + eta_t * (1.0 - 2.0 * eta_d)
    if den <= 0:
        raise DomainError("1 + eta_t (1 - 2 eta_d) must be positive")
    return den


def fidelity_from_excitation(excitation: float, eta_t: float, eta_d: float) -> float:
    return 0.5 * (1.0 + np.exp(-2.0 * _coupling(eta_t, eta_d) * excitation))


def hybrid_initial_fidelity(
    link: HybridLinkParams,
    channel: ChannelModel = ChannelModel(),
    d: DetectorModel = DetectorModel(),
) -> float:
    eta_t = transmittivity(link.L0, channel)
    return fidelity_from_excitation(link.excitation, eta_t, d.eta_d)


def success_probability_from_eta(
    F0: float, eta_t: float, eta_d: float, form: str = "exponent"
) -> float:
    """Heralding probability of a link prepared with fidelity F0.

    ``exponent`` (default) is 1 - (2F0 - 1)^c with c = eta_t eta_d / (1 + eta_t(1 - 2 eta_d)),
    which equals the click probability 1 - exp(-2 eta_t eta_d alpha^2 sin^2(theta/2)).
    ``linear`` evaluates 1 - (2F0 - 1) c, kept for comparison only.
    """
    if not (0.5 - 1e-15 <= F0 <= 1.0 + 1e-15):
        raise DomainError(f"F0={F0!r} outside [1/2, 1]")
    c = eta_t * eta_d / _coupling(eta_t, eta_d)
    y = min(max(2.0 * F0 - 1.0, 0.0), 1.0)
    if form == "exponent":
        return float(-np.expm1(c * np.log(y))) + 0.0 if y > 0 else 1.0
    if form == "linear":
        return 1.0 - y * c
    raise DomainError(f"unknown success-probability form {form!r}")


def hybrid_success_probability(
    F0: float,
    L0: float,
    channel: ChannelModel = ChannelModel(),
    d: DetectorModel = DetectorModel(),
    form: str = "exponent",
) -> float:
    return success_probability_from_eta(F0, transmittivity(L0, channel), d.eta_d, form)


def hybrid_swap_map(
    left: BellDiagonalState, right: BellDiagonalState, g: DissipativeGate = DissipativeGate()
) -> BellDiagonalState:
    """Deterministic swap through a dissipative CNOT.

    The gate puts independent Z errors on control and target with
    probability 1 - p_c; after the basis change before measurement both act
    as outcome flips, so this is the binary-flip swap with gamma = p_c and
    no depolarization.
    """
    return swap_map(left, right, DepolarizingGate(1.0), g.p_c)


def hybrid_distill_map(
    s: BellDiagonalState, g: DissipativeGate = DissipativeGate()
) -> tuple[BellDiagonalState, float]:
    """Recurrence distillation with two dissipative bilateral CNOTs.

    Each bilateral CNOT acts on one qubit per side; the Z errors on the two
    target (measured) qubits flip the parity comparison with probability
    t = 2 v (1 - v), and the errors on the two kept qubits apply a relative
    phase flip with the same probability.
    """
    v = g.p_c
    t = 2.0 * v * (1.0 - v)
    A, B, C, D = s.as_array()
    succ = np.array([A * A + D * D, 2 * A * D, B * B + C * C, 2 * B * C])
    # Pairs rejected by the ideal protocol that pass after one parity flip.
    flipped = np.array([A * C + B * D, A * B + C * D, A * C + B * D, A * B + C * D])
    u = (1.0 - t) * succ + t * flipped
    u = (1.0 - t) * u + t * u[[1, 0, 3, 2]]
    p_d = float(u.sum())
    if p_d <= 0:
        raise DistillationFailure("distillation success probability is zero")
    return BellDiagonalState.from_array(u / p_d, renormalize=True), p_d


def hybrid_distill_success_closed_form(s: BellDiagonalState, g: DissipativeGate) -> float:
    v = g.p_c
    A, B, C, D = s.as_array()
    return (B + C) ** 2 + (A + D) ** 2 - 2.0 * v * (1.0 - v) * (A - B - C + D) ** 2


def hybrid_initial_state(F0: float) -> BellDiagonalState:
    """Phase-flipped pair F0 |phi+><phi+| + (1 - F0) |phi-><phi-|."""
    if not (0.0 <= F0 <= 1.0):
        raise DomainError(f"F0={F0!r} outside [0, 1]")
    return BellDiagonalState(F0, 1.0 - F0, 0.0, 0.0)


def hybrid_chain_evaluate(
    F0: float, g: DissipativeGate, N: int, k: int
) -> tuple[BellDiagonalState, list[float]]:
    s = hybrid_initial_state(F0)
    p_ds: list[float] = []
    for _ in range(k):
        s, p_d = hybrid_distill_map(s, g)
        p_ds.append(p_d)
    for _ in range(N):
        s = hybrid_swap_map(s, s, g)
    return s, p_ds


@dataclass(frozen=True)
class HybridParams:
    F0: float
    p_G: float
    L: float
    N: int
    k: int
    detector: DetectorModel = field(default_factory=DetectorModel)
    channel: ChannelModel = field(default_factory=ChannelModel)
    qkd: str = "bb84"
    p0_form: str = "exponent"


def secret_key_rate_hybrid(params: HybridParams) -> RateBreakdown:
    """Deterministic-swapping rate; final QKD measurements are taken as perfect."""
    L0 = params.L / 2**params.N
    T0 = 2.0 * L0 / params.channel.c
    g = DissipativeGate(params.p_G)
    P0 = hybrid_success_probability(params.F0, L0, params.channel, params.detector, params.p0_form)
    state, p_ds = hybrid_chain_evaluate(params.F0, g, params.N, params.k)
    r_inf = secret_fraction(state, params.qkd)
    meta = {
        "protocol": "hybrid",
        "N": params.N,
        "k": params.k,
        "P0": P0,
        "final_fidelity": state.A,
        "eta_d_applied_to": "F0 and P0",
    }
    if P0 <= 0.0:
        return compose_qkd_rate(0.0, 1.0, 1.0, r_inf, meta | {"diagnostic": "P0 = 0"})
    p_l = p_l0_recursion(P0, p_ds)
    r_rep = rate_deterministic(T0, params.N, p_l[-1])
    return compose_qkd_rate(r_rep, 1.0, 1.0, r_inf, meta)
