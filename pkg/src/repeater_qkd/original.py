"""Repeater with depolarized initial pairs, depolarizing two-qubit gates and
imperfect binary measurements in swapping and distillation."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .core_states import BellDiagonalState, DomainError, depolarized_state, secret_fraction
from .rate_engine import (
    ChannelModel,
    RateBreakdown,
    a_factor,
    compose_qkd_rate,
    p_l0_recursion,
    rate_deterministic,
    rate_probabilistic,
    transmittivity,
)


class DistillationFailure(ArithmeticError):
    """The distillation round can never succeed for this input."""


@dataclass(frozen=True)
class DepolarizingGate:
    p_G: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_G <= 1.0):
            raise DomainError(f"p_G={self.p_G!r} outside [0, 1]")


@dataclass(frozen=True)
class DetectorModel:
    eta_d: float = 1.0
    p_dark: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.eta_d <= 1.0):
            raise DomainError(f"eta_d={self.eta_d!r} outside (0, 1]")
        if not (0.0 <= self.p_dark < 1.0):
            raise DomainError(f"p_dark={self.p_dark!r} outside [0, 1)")


def initial_success_probability(L0: float, channel: ChannelModel = ChannelModel()) -> float:
    return transmittivity(L0, channel)


def detection_gamma(d: DetectorModel) -> float:
    """Probability that a conditioned binary measurement reports the right outcome."""
    num = d.eta_d + d.p_dark * (1.0 - d.eta_d)
    den = d.eta_d + 2.0 * d.p_dark * (1.0 - d.eta_d)
    if den <= 0:
        raise DomainError("detector with eta_d = 0 and p_dark = 0 never clicks")
    return num / den


def swap_success_probability(d: DetectorModel) -> float:
    return ((1.0 - d.p_dark) * (d.eta_d + 2.0 * d.p_dark * (1.0 - d.eta_d))) ** 2


def swap_map(
    left: BellDiagonalState,
    right: BellDiagonalState,
    g: DepolarizingGate = DepolarizingGate(),
    gamma: float = 1.0,
) -> BellDiagonalState:
    """Swap two Bell-diagonal pairs with a noisy CNOT and flipping measurements.

    The closed form is stated for identical inputs. For unequal inputs the
    products A*A etc. are replaced by their symmetrized cross terms, which is
    what the brute-force oracle produces.
    """
    if not (0.0 <= gamma <= 1.0):
        raise DomainError(f"gamma={gamma!r} outside [0, 1]")
    x = left.as_array()
    y = right.as_array()
    A1, B1, C1, D1 = x
    A2, B2, C2, D2 = y
    S = float(x @ y)
    # Symmetrized pair products; for x == y these reduce to A*D + B*C etc.
    AD_BC = 0.5 * (A1 * D2 + D1 * A2 + B1 * C2 + C1 * B2)
    AB_CD = 0.5 * (A1 * B2 + B1 * A2 + C1 * D2 + D1 * C2)
    AC_BD = 0.5 * (A1 * C2 + C1 * A2 + B1 * D2 + D1 * B2)
    cross = 0.5 * ((A1 + D1) * (B2 + C2) + (B1 + C1) * (A2 + D2))
    gg, ff, gf = gamma * gamma, (1.0 - gamma) ** 2, gamma * (1.0 - gamma)
    ideal = np.array(
        [
            gg * S + 2 * ff * AD_BC + 2 * gf * cross,
            2 * gg * AB_CD + 2 * ff * AC_BD + gf * (S + 2 * AD_BC),
            2 * gg * AC_BD + 2 * ff * AB_CD + gf * (S + 2 * AD_BC),
            2 * gg * AD_BC + ff * S + 2 * gf * cross,
        ]
    )
    out = (1.0 - g.p_G) / 4.0 + g.p_G * ideal
    return BellDiagonalState.from_array(out, renormalize=True)


def distill_map(
    s: BellDiagonalState, g: DepolarizingGate = DepolarizingGate()
) -> tuple[BellDiagonalState, float]:
    """One round of the two-copy recurrence protocol with depolarizing CNOTs.

    Each bilateral CNOT fully depolarizes its two qubits with probability
    1 - p_G; if either does, the four measured and kept qubits end up
    maximally mixed, contributing 1/8 to each unnormalized output weight.
    """
    A, B, C, D = s.as_array()
    x = g.p_G**2
    unnorm = x * np.array([A * A + D * D, 2 * A * D, B * B + C * C, 2 * B * C]) + (1.0 - x) / 8.0
    p_d = float(unnorm.sum())
    if p_d <= 0:
        raise DistillationFailure("distillation success probability is zero")
    return BellDiagonalState.from_array(unnorm / p_d, renormalize=True), p_d


def distill_success_closed_form(s: BellDiagonalState, g: DepolarizingGate) -> float:
    return 0.5 * (1.0 + g.p_G**2 * (-1.0 + 2.0 * s.A + 2.0 * s.D) ** 2)


def chain_evaluate(
    F0: float, g: DepolarizingGate, gamma: float, N: int, k: int
) -> tuple[BellDiagonalState, list[float]]:
    """Distill k times, then swap through N levels of a balanced tree."""
    s = depolarized_state(F0)
    p_ds: list[float] = []
    for _ in range(k):
        s, p_d = distill_map(s, g)
        p_ds.append(p_d)
    for _ in range(N):
        s = swap_map(s, s, g, gamma)
    return s, p_ds


@dataclass(frozen=True)
class OriginalParams:
    F0: float
    p_G: float
    L: float
    N: int
    k: int
    detector: DetectorModel = field(default_factory=DetectorModel)
    channel: ChannelModel = field(default_factory=ChannelModel)
    qkd: str = "bb84"


def raw_key_rate(
    T0: float, N: int, k: int, P0: float, p_d: list[float], d: DetectorModel
) -> float:
    """R_REP * P_click for lossy detection, with an explicit a-factor.

    Every distillation round, swap and the final QKD measurement needs a
    two-fold detection, so each contributes eta_d^2.
    """
    eta2 = d.eta_d**2
    p_d_eff = [eta2 * x for x in p_d]
    a = a_factor(p_l0_recursion(P0, p_d_eff)[-1])
    return rate_probabilistic(T0, N, k, P0, [eta2] * N, p_d_eff, a) * eta2


def secret_key_rate_original(params: OriginalParams) -> RateBreakdown:
    d = params.detector
    g = DepolarizingGate(params.p_G)
    gamma = detection_gamma(d)
    L0 = params.L / 2**params.N
    T0 = 2.0 * L0 / params.channel.c
    P0 = initial_success_probability(L0, params.channel)
    state, p_ds = chain_evaluate(params.F0, g, gamma, params.N, params.k)
    r_inf = secret_fraction(state, params.qkd)
    p_es = swap_success_probability(d)
    meta = {"protocol": "original", "N": params.N, "k": params.k, "final_fidelity": state.A}
    if p_es == 1.0:
        p_l = p_l0_recursion(P0, p_ds)
        r_rep = rate_deterministic(T0, params.N, p_l[-1])
        meta["rate_model"] = "deterministic"
    else:
        # A distillation round also needs its two measurements to click.
        eta2 = d.eta_d**2
        p_d_eff = [eta2 * x for x in p_ds]
        a = a_factor(p_l0_recursion(P0, p_d_eff)[-1])
        r_rep = rate_probabilistic(T0, params.N, params.k, P0, [p_es] * params.N, p_d_eff, a)
        meta.update(rate_model="probabilistic", a=a, a_near_one=a > 0.999)
    return compose_qkd_rate(r_rep, d.eta_d**2, 1.0, r_inf, meta)


# --- brute-force density-operator oracle ------------------------------------

_I2 = np.eye(2)
_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_Z = np.diag([1.0, -1.0])
_Y = np.array([[0.0, -1j], [1j, 0.0]])
_H = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
_PAULIS = (_I2, _X, _Y, _Z)


def bell_basis() -> np.ndarray:
    """Columns |phi+>, |phi->, |psi+>, |psi-> in the |00>,|01>,|10>,|11> basis."""
    r = 1.0 / np.sqrt(2.0)
    return np.array(
        [[r, r, 0, 0], [0, 0, r, r], [0, 0, r, -r], [r, -r, 0, 0]], dtype=complex
    )


def bell_diagonal_matrix(s: BellDiagonalState) -> np.ndarray:
    U = bell_basis()
    return U @ np.diag(s.as_array()).astype(complex) @ U.conj().T


def bell_weights(rho: np.ndarray) -> np.ndarray:
    U = bell_basis()
    return np.real(np.diag(U.conj().T @ rho @ U))


def _kron(*ops: np.ndarray) -> np.ndarray:
    return reduce(np.kron, ops)


def _swap_outcomes(
    left: np.ndarray, right: np.ndarray, p_G: float, gamma: float
) -> list[np.ndarray]:
    """Unnormalized (a, d) states for each outcome (m_b, m_c), before correction."""
    rho = np.kron(left, right)  # qubit order a, b, c, d
    cnot = np.zeros((4, 4))
    for b in range(2):
        for c in range(2):
            cnot[2 * b + (c ^ b), 2 * b + c] = 1.0
    U = _kron(_I2, cnot, _I2)
    t = rho.reshape((2,) * 8)
    rho_ad = np.einsum("abcdebch->adeh", t)
    # With probability 1 - p_G the gate replaces qubits b, c by the maximally mixed state.
    depolarized = np.einsum("adeh,bf,cg->abcdefgh", rho_ad, _I2, _I2).reshape(16, 16) / 4.0
    rho = p_G * (U @ rho @ U.conj().T) + (1.0 - p_G) * depolarized
    Hb = _kron(_I2, _H, _I2, _I2)
    t = (Hb @ rho @ Hb.conj().T).reshape((2,) * 8)
    povm = [np.diag([gamma, 1.0 - gamma]), np.diag([1.0 - gamma, gamma])]
    return [
        np.einsum("abcdefgh,fb,gc->adeh", t, povm[mb], povm[mc]).reshape(4, 4)
        for mb in range(2)
        for mc in range(2)
    ]


def _corrections() -> list[np.ndarray]:
    """Pauli on qubit d per outcome, fixed so that ideal inputs give |phi+>."""
    phi = bell_diagonal_matrix(BellDiagonalState(1.0, 0.0, 0.0, 0.0))
    fixes = []
    for out in _swap_outcomes(phi, phi, 1.0, 1.0):
        scores = []
        for P in _PAULIS:
            Pd = np.kron(_I2, P)
            scores.append(bell_weights(Pd @ out @ Pd.conj().T)[0])
        fixes.append(np.kron(_I2, _PAULIS[int(np.argmax(scores))]))
    return fixes


def brute_force_two_pair_oracle(
    left: BellDiagonalState,
    right: BellDiagonalState,
    g: DepolarizingGate = DepolarizingGate(),
    gamma: float = 1.0,
) -> BellDiagonalState:
    """Swap computed on the explicit 16x16 density operator of four qubits."""
    outs = _swap_outcomes(bell_diagonal_matrix(left), bell_diagonal_matrix(right), g.p_G, gamma)
    total = sum(P @ out @ P.conj().T for P, out in zip(_corrections(), outs))
    w = bell_weights(total)
    return BellDiagonalState.from_array(w / w.sum(), renormalize=True)
