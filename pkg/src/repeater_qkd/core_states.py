"""Bell-diagonal two-qubit states, QBER extraction and asymptotic secret fractions.

The Bell basis order is fixed throughout the package as
(phi+, phi-, psi+, psi-), with weights (A, B, C, D).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-12


class DomainError(ValueError):
    """Raised when an argument lies outside the physical domain of a formula."""


def _check_probability(name: str, p: float, slack: float = NORM_TOL) -> float:
    if not (-slack <= p <= 1.0 + slack) or not np.isfinite(p):
        raise DomainError(f"{name}={p!r} is not a probability")
    return min(max(float(p), 0.0), 1.0)


@dataclass(frozen=True)
class BellDiagonalState:
    """Weights of |phi+>, |phi->, |psi+>, |psi-> for a Bell-diagonal state."""

    A: float
    B: float
    C: float
    D: float

    def __post_init__(self) -> None:
        for name in "ABCD":
            value = getattr(self, name)
            if not np.isfinite(value) or value < -NORM_TOL or value > 1 + NORM_TOL:
                raise DomainError(f"weight {name}={value!r} outside [0, 1]")
        total = self.A + self.B + self.C + self.D
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"weights sum to {total!r}, expected 1")

    @classmethod
    def from_array(cls, w, renormalize: bool = False) -> "BellDiagonalState":
        """Build from a length-4 sequence, clipping round-off negatives.

        With ``renormalize`` the weights are divided by their sum first;
        maps use this to absorb last-ulp drift.
        """
        arr = np.asarray(w, dtype=float)
        if arr.shape != (4,):
            raise DomainError(f"expected 4 weights, got shape {arr.shape}")
        if np.any(arr < -1e-12):
            raise DomainError(f"negative weight in {arr}")
        arr = np.clip(arr, 0.0, None)
        if renormalize:
            arr = arr / arr.sum()
        return cls(*(float(x) for x in arr))

    def as_array(self) -> np.ndarray:
        return np.array([self.A, self.B, self.C, self.D])

    @property
    def fidelity(self) -> float:
        return self.A


@dataclass(frozen=True)
class QberTriple:
    e_X: float
    e_Z: float
    e_Y: float


def binary_entropy(p: float) -> float:
    """h(p) in bits, with 0 log 0 = 0."""
    p = _check_probability("p", p)
    if p == 0.0 or p == 1.0:
        return 0.0
    return float(-p * np.log2(p) - (1.0 - p) * np.log2(1.0 - p))


def qber_from_bell_diagonal(s: BellDiagonalState) -> QberTriple:
    return QberTriple(e_X=s.B + s.D, e_Z=s.C + s.D, e_Y=s.B + s.C)


def secret_fraction_bb84(e_X: float, e_Z: float) -> float:
    """Asymptotic BB84 secret fraction; negative values are returned unclamped."""
    return 1.0 - binary_entropy(e_Z) - binary_entropy(e_X)


def secret_fraction_six_state(e: QberTriple) -> float:
    """Asymptotic six-state secret fraction; negative values are returned unclamped.

    The terms weighted by e_Z (or 1 - e_Z) are dropped analytically when that
    weight vanishes.
    """
    e_X = _check_probability("e_X", e.e_X)
    e_Z = _check_probability("e_Z", e.e_Z)
    e_Y = _check_probability("e_Y", e.e_Y)
    r = 1.0 - binary_entropy(e_Z)
    if e_Z > 0.0:
        r -= e_Z * binary_entropy(_h_argument((1.0 + (e_X - e_Y) / e_Z) / 2.0))
    if e_Z < 1.0:
        r -= (1.0 - e_Z) * binary_entropy(
            _h_argument((1.0 - (e_X + e_Y + e_Z) / 2.0) / (1.0 - e_Z))
        )
    return r


def _h_argument(x: float) -> float:
    # Tolerate round-off just outside [0, 1]; reject genuinely unphysical triples.
    if x < -1e-9 or x > 1.0 + 1e-9:
        raise DomainError(f"entropy argument {x!r} outside [0, 1]: unphysical QBER triple")
    return min(max(x, 0.0), 1.0)


def von_neumann_entropy_bits(weights) -> float:
    """Shannon entropy of a probability vector in bits (Bell-diagonal eigenvalues)."""
    w = np.asarray(weights, dtype=float)
    w = w[w > 0]
    return float(-(w * np.log2(w)).sum())


def secret_fraction(s: BellDiagonalState, protocol: str) -> float:
    """Secret fraction of a Bell-diagonal state for ``bb84`` or ``six-state``."""
    e = qber_from_bell_diagonal(s)
    key = protocol.lower().replace("_", "-")
    if key == "bb84":
        return secret_fraction_bb84(e.e_X, e.e_Z)
    if key in ("six-state", "6s", "sixstate"):
        return secret_fraction_six_state(e)
    raise DomainError(f"unknown QKD protocol {protocol!r}")


def depolarized_state(F0: float) -> BellDiagonalState:
    if not (0.25 - 1e-15 <= F0 <= 1.0 + 1e-15):
        raise DomainError(f"depolarized fidelity {F0!r} outside [1/4, 1]")
    F0 = min(max(F0, 0.25), 1.0)
    off = (1.0 - F0) / 3.0
    return BellDiagonalState(F0, off, off, off)
