"""Cross-checks of closed-form maps against independent oracles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..core_states import BellDiagonalState
from ..fock import usd_link_oracle
from ..hybrid import (
    DissipativeGate,
    HybridLinkParams,
    hybrid_distill_map,
    hybrid_initial_fidelity,
    hybrid_success_probability,
)
from ..original import (
    DepolarizingGate,
    DetectorModel,
    brute_force_two_pair_oracle,
    distill_map,
    swap_map,
)
from ..rate_engine import ChannelModel, mc_waiting_time, z_average_attempts


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_deviation: float
    tolerance: float
    points: int

    @property
    def passed(self) -> bool:
        return bool(self.max_deviation < self.tolerance)


def random_bell_states(n: int, seed: int) -> list[BellDiagonalState]:
    rng = np.random.default_rng(seed)
    return [BellDiagonalState.from_array(w, renormalize=True) for w in rng.dirichlet(np.ones(4), size=n)]


def swap_oracle_check(n: int = 100, seed: int = 0) -> CheckResult:
    """Closed-form swap against the four-qubit density-operator computation."""
    rng = np.random.default_rng(seed + 1)
    states = random_bell_states(2 * n, seed)
    dev = 0.0
    for left, right in zip(states[:n], states[n:]):
        g = DepolarizingGate(float(rng.uniform(0.8, 1.0)))
        gamma = float(rng.uniform(0.8, 1.0))
        for a, b in ((left, left), (left, right)):
            fast = swap_map(a, b, g, gamma).as_array()
            slow = brute_force_two_pair_oracle(a, b, g, gamma).as_array()
            dev = max(dev, float(np.abs(fast - slow).max()))
    return CheckResult("swap_vs_density_operator", dev, 1e-10, 2 * n)


def hybrid_deutsch_check(n: int = 100, seed: int = 0) -> CheckResult:
    """Dissipative distillation with a perfect gate against the ideal recurrence map."""
    dev = 0.0
    for s in random_bell_states(n, seed):
        out_h, p_h = hybrid_distill_map(s, DissipativeGate(1.0))
        out_d, p_d = distill_map(s, DepolarizingGate(1.0))
        dev = max(dev, float(np.abs(out_h.as_array() - out_d.as_array()).max()), abs(p_h - p_d))
    return CheckResult("hybrid_distill_vs_ideal", dev, 1e-10, n)


USD_GRID = tuple(itertools.product((0.005, 0.01, 0.05), (1.0, 0.9), (20.0, 40.0)))


def usd_oracle_check(channel: ChannelModel = ChannelModel()) -> CheckResult:
    """Link fidelity and success probability against the truncated Fock computation."""
    dev = 0.0
    for excitation, eta_d, L0 in USD_GRID:
        link = HybridLinkParams(float(np.sqrt(excitation)), float(np.pi), L0)
        d = DetectorModel(eta_d)
        F_fock, P_fock = usd_link_oracle(link, channel, d)
        F = hybrid_initial_fidelity(link, channel, d)
        P = hybrid_success_probability(F, L0, channel, d)
        dev = max(dev, abs(F - F_fock), abs(P - P_fock))
    return CheckResult("usd_link_vs_fock", dev, 1e-8, len(USD_GRID))


def run_oracle_checks(seed: int = 0) -> list[CheckResult]:
    return [swap_oracle_check(seed=seed), hybrid_deutsch_check(seed=seed), usd_oracle_check()]


@dataclass(frozen=True)
class McResult:
    N: int
    P: float
    analytic: float
    mc_mean: float
    stderr: float

    @property
    def z_score(self) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.mc_mean == self.analytic else float("inf")
        return abs(self.mc_mean - self.analytic) / self.stderr


def mc_validate(N: int, P: float, trials: int = 100_000, seed: int = 0) -> McResult:
    mean, err = mc_waiting_time(N, P, trials, seed)
    return McResult(N, P, z_average_attempts(N, P), mean, err)
