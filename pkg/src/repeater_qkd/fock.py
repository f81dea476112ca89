"""Truncated multimode Fock-space engine.

States are sparse maps from occupation tuples to amplitudes. Passive linear
optics is applied by substituting creation operators, a_i^dag -> sum_j M[i, j] b_j^dag,
and photon-number resolving detection with efficiency eta uses the binomial
loss POVM. Dense helpers build matrices from the same sparse rules for the
hot paths of the ensemble pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import comb, factorial, sqrt
from typing import Mapping, Sequence, Union

import numpy as np

from .rate_engine import transmittivity

Occupation = tuple[int, ...]

DEFAULT_N_MAX = 4
DEFAULT_MAX_PHOTONS = 6
IMPOSSIBLE = 1e-300
ISOMETRY_TOL = 1e-10


class ConfigurationError(ValueError):
    """A mode map that is not an isometry, or mismatched mode counts."""


class TruncationError(ValueError):
    """The requested state does not fit the truncated space to the required accuracy."""


class HeraldingImpossible(ArithmeticError):
    """A heralding pattern has (numerically) zero probability."""


@dataclass(frozen=True)
class PnrdElement:
    """Photon-number resolving detector outcome: n clicks at efficiency eta."""

    n: int
    eta: float = 1.0

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("detected photon number must be non-negative")
        if not (0.0 <= self.eta <= 1.0):
            raise ValueError(f"eta={self.eta!r} outside [0, 1]")

    def weight(self, t: int) -> float:
        """<t| Pi^(n) |t> = C(t, n) eta^n (1 - eta)^(t - n)."""
        if t < self.n:
            return 0.0
        return comb(t, self.n) * self.eta**self.n * (1.0 - self.eta) ** (t - self.n)


def pnrd_operator(elem: PnrdElement, n_max: int) -> np.ndarray:
    """Diagonal of the POVM element on photon numbers 0..n_max."""
    if elem.n > n_max:
        raise ValueError("detected photon number exceeds the truncation")
    return np.array([elem.weight(t) for t in range(n_max + 1)])


@dataclass(frozen=True)
class FockStateVector:
    modes: int
    amplitudes: Mapping[Occupation, complex]
    n_max: int = DEFAULT_N_MAX
    max_photons: int = DEFAULT_MAX_PHOTONS

    def __post_init__(self) -> None:
        for occ in self.amplitudes:
            _check_occupation(occ, self.modes, self.n_max, self.max_photons)

    @classmethod
    def vacuum(cls, modes: int, **kw) -> "FockStateVector":
        return cls(modes, {(0,) * modes: 1.0 + 0j}, **kw)

    @classmethod
    def basis(cls, occ: Sequence[int], **kw) -> "FockStateVector":
        occ = tuple(int(x) for x in occ)
        return cls(len(occ), {occ: 1.0 + 0j}, **kw)

    def norm(self) -> float:
        return float(sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values())))

    def amplitude(self, occ: Sequence[int]) -> complex:
        return self.amplitudes.get(tuple(occ), 0j)

    def tensor(self, other: "FockStateVector") -> "FockStateVector":
        amps = {a + b: x * y for a, x in self.amplitudes.items() for b, y in other.amplitudes.items()}
        return FockStateVector(
            self.modes + other.modes,
            amps,
            max(self.n_max, other.n_max),
            self.max_photons + other.max_photons,
        )

    def to_density(self) -> "DensityOperator":
        items = list(self.amplitudes.items())
        entries = {(r, c): x * np.conj(y) for r, x in items for c, y in items}
        return DensityOperator(self.modes, entries, self.n_max, self.max_photons)


@dataclass(frozen=True)
class DensityOperator:
    """Sparse operator with entries[(row, col)] = <row| rho |col>."""

    modes: int
    entries: Mapping[tuple[Occupation, Occupation], complex]
    n_max: int = DEFAULT_N_MAX
    max_photons: int = DEFAULT_MAX_PHOTONS

    def __post_init__(self) -> None:
        for r, c in self.entries:
            _check_occupation(r, self.modes, self.n_max, self.max_photons)
            _check_occupation(c, self.modes, self.n_max, self.max_photons)

    def trace(self) -> float:
        return float(sum(v for (r, c), v in self.entries.items() if r == c).real)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        for (r, c), v in self.entries.items():
            if abs(v - np.conj(self.entries.get((c, r), 0j))) > tol:
                return False
        return True

    def tensor(self, other: "DensityOperator") -> "DensityOperator":
        entries = {
            (r1 + r2, c1 + c2): v1 * v2
            for (r1, c1), v1 in self.entries.items()
            for (r2, c2), v2 in other.entries.items()
        }
        return DensityOperator(
            self.modes + other.modes,
            entries,
            max(self.n_max, other.n_max),
            self.max_photons + other.max_photons,
        )

    def scaled(self, factor: float) -> "DensityOperator":
        return DensityOperator(
            self.modes, {k: v * factor for k, v in self.entries.items()}, self.n_max, self.max_photons
        )

    def plus(self, other: "DensityOperator") -> "DensityOperator":
        if other.modes != self.modes:
            raise ConfigurationError("mode count mismatch")
        entries = dict(self.entries)
        for k, v in other.entries.items():
            entries[k] = entries.get(k, 0j) + v
        return DensityOperator(
            self.modes, entries, max(self.n_max, other.n_max), max(self.max_photons, other.max_photons)
        )

    def permute_modes(self, order: Sequence[int]) -> "DensityOperator":
        """New operator whose mode i is old mode order[i]."""
        order = list(order)
        if sorted(order) != list(range(self.modes)):
            raise ConfigurationError("order must be a permutation of the modes")
        pick = lambda occ: tuple(occ[i] for i in order)  # noqa: E731
        return DensityOperator(
            self.modes,
            {(pick(r), pick(c)): v for (r, c), v in self.entries.items()},
            self.n_max,
            self.max_photons,
        )

    def to_dense(self, basis: "FockBasis") -> np.ndarray:
        out = np.zeros((basis.dim, basis.dim), dtype=complex)
        for (r, c), v in self.entries.items():
            out[basis.index[r], basis.index[c]] += v
        return out

    @classmethod
    def from_dense(cls, rho: np.ndarray, basis: "FockBasis", tol: float = 0.0) -> "DensityOperator":
        entries = {}
        rows, cols = np.nonzero(np.abs(rho) > tol)
        for i, j in zip(rows, cols):
            entries[(basis.states[i], basis.states[j])] = complex(rho[i, j])
        return cls(basis.modes, entries, basis.n_max, basis.max_photons)


def _check_occupation(occ: Occupation, modes: int, n_max: int, max_photons: int) -> None:
    if len(occ) != modes:
        raise ConfigurationError(f"occupation {occ} does not have {modes} modes")
    if any(n < 0 for n in occ):
        raise ConfigurationError(f"negative occupation {occ}")
    if any(n > n_max for n in occ) or sum(occ) > max_photons:
        raise TruncationError(f"occupation {occ} exceeds the truncation")


# --- linear networks ----------------------------------------------------------

NetworkTable = Mapping[int, Mapping[int, complex]]


def network_matrix(table: Union[NetworkTable, np.ndarray], modes_in: int, modes_out: int | None = None) -> np.ndarray:
    """Matrix M[i, j] of the substitution a_i^dag -> sum_j M[i, j] b_j^dag.

    A mapping gives only the modes that change; every other input mode maps
    to the output mode with the same index.
    """
    if isinstance(table, np.ndarray):
        M = np.asarray(table, dtype=complex)
        modes_out = M.shape[1] if modes_out is None else modes_out
        if M.shape != (modes_in, modes_out):
            raise ConfigurationError(f"network shape {M.shape} != ({modes_in}, {modes_out})")
        return M
    modes_out = modes_in if modes_out is None else modes_out
    M = np.zeros((modes_in, modes_out), dtype=complex)
    for i in range(modes_in):
        if i in table:
            for j, coeff in table[i].items():
                M[i, j] = coeff
        elif i < modes_out:
            M[i, i] = 1.0
    return M


def check_isometry(M: np.ndarray, tol: float = ISOMETRY_TOL) -> None:
    gram = M @ M.conj().T
    if not np.allclose(gram, np.eye(M.shape[0]), atol=tol, rtol=0):
        raise ConfigurationError("mode map is not an isometry (rows not orthonormal)")


class _Expander:
    """Expands input occupations into output amplitudes, memoised per call."""

    def __init__(self, M: np.ndarray, n_max: int):
        self.M = M
        self.n_max = n_max
        self.cache: dict[Occupation, dict[Occupation, complex]] = {}
        self.nonzero = [np.nonzero(np.abs(row) > 0)[0] for row in M]

    def __call__(self, occ: Occupation) -> dict[Occupation, complex]:
        hit = self.cache.get(occ)
        if hit is not None:
            return hit
        modes_out = self.M.shape[1]
        mono: dict[tuple[int, ...], complex] = {(0,) * modes_out: 1.0 + 0j}
        for i, n_i in enumerate(occ):
            for _ in range(n_i):
                nxt: dict[tuple[int, ...], complex] = {}
                for o, coeff in mono.items():
                    for j in self.nonzero[i]:
                        if o[j] >= self.n_max:
                            continue
                        o2 = o[:j] + (o[j] + 1,) + o[j + 1 :]
                        nxt[o2] = nxt.get(o2, 0j) + coeff * self.M[i, j]
                mono = nxt
        denom = sqrt(np.prod([factorial(n) for n in occ]))
        out = {}
        for o, coeff in mono.items():
            amp = coeff * sqrt(np.prod([factorial(n) for n in o])) / denom
            if amp != 0:
                out[o] = amp
        self.cache[occ] = out
        return out


def apply_linear_network(state, table, modes_out: int | None = None):
    """Apply a passive mode map to a FockStateVector or DensityOperator."""
    M = network_matrix(table, state.modes, modes_out)
    check_isometry(M)
    expand = _Expander(M, state.n_max)
    if isinstance(state, FockStateVector):
        amps: dict[Occupation, complex] = {}
        for occ, a in state.amplitudes.items():
            for o, x in expand(occ).items():
                amps[o] = amps.get(o, 0j) + a * x
        return FockStateVector(M.shape[1], _prune(amps), state.n_max, state.max_photons)
    if isinstance(state, DensityOperator):
        entries: dict[tuple[Occupation, Occupation], complex] = {}
        for (r, c), v in state.entries.items():
            er, ec = expand(r), expand(c)
            for ro, x in er.items():
                for co, y in ec.items():
                    key = (ro, co)
                    entries[key] = entries.get(key, 0j) + v * x * np.conj(y)
        return DensityOperator(M.shape[1], _prune(entries), state.n_max, state.max_photons)
    raise TypeError(f"cannot apply a network to {type(state).__name__}")


def _prune(d: dict, tol: float = 0.0) -> dict:
    return {k: v for k, v in d.items() if abs(v) > tol}


# --- measurement --------------------------------------------------------------

def project_pattern(
    rho: DensityOperator, pattern: Mapping[int, PnrdElement]
) -> DensityOperator:
    """Unnormalized tr_measured(Pi rho) on the unmeasured modes (in original order)."""
    measured = sorted(pattern)
    if any(m < 0 or m >= rho.modes for m in measured):
        raise ConfigurationError("pattern refers to a non-existent mode")
    keep = [i for i in range(rho.modes) if i not in pattern]
    entries: dict[tuple[Occupation, Occupation], complex] = {}
    for (r, c), v in rho.entries.items():
        # PNRD POVMs are diagonal in the Fock basis of the measured modes.
        if any(r[m] != c[m] for m in measured):
            continue
        w = 1.0
        for m in measured:
            w *= pattern[m].weight(r[m])
            if w == 0.0:
                break
        if w == 0.0:
            continue
        key = (tuple(r[i] for i in keep), tuple(c[i] for i in keep))
        entries[key] = entries.get(key, 0j) + w * v
    return DensityOperator(len(keep), entries, rho.n_max, rho.max_photons)


def measure_pattern(
    rho: DensityOperator, pattern: Mapping[int, PnrdElement] | Sequence[PnrdElement | None]
) -> tuple[float, DensityOperator]:
    """Probability of a detection pattern and the normalized conditional state.

    ``pattern`` maps mode index to a detector outcome; a sequence may use None
    for unmeasured modes.
    """
    if not isinstance(pattern, Mapping):
        pattern = {i: e for i, e in enumerate(pattern) if e is not None}
    cond = project_pattern(rho, pattern)
    prob = cond.trace()
    if prob < IMPOSSIBLE:
        raise HeraldingImpossible(f"pattern probability {prob!r} is zero")
    return prob, cond.scaled(1.0 / prob)


def pattern_probability(rho: DensityOperator, pattern: Mapping[int, PnrdElement]) -> float:
    return project_pattern(rho, pattern).trace()


# --- dual-rail QKD measurement --------------------------------------------------

_S2 = 1.0 / np.sqrt(2.0)
_ROTATIONS = {
    "Z": np.eye(2, dtype=complex),
    # |+> -> first detector
    "X": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    # |+i> -> first detector on Alice's side, |-i> on Bob's side
    "Y_A": np.array([[_S2, _S2], [-1j * _S2, 1j * _S2]], dtype=complex),
    "Y_B": np.array([[_S2, _S2], [1j * _S2, -1j * _S2]], dtype=complex),
}


def basis_rotation(basis: str) -> np.ndarray:
    """4x4 mode map rotating Alice's (modes 0, 1) and Bob's (modes 2, 3) rails."""
    basis = basis.upper()
    if basis not in ("X", "Y", "Z"):
        raise ConfigurationError(f"unknown basis {basis!r}")
    a = _ROTATIONS["Y_A" if basis == "Y" else basis]
    b = _ROTATIONS["Y_B" if basis == "Y" else basis]
    M = np.zeros((4, 4), dtype=complex)
    M[:2, :2] = a
    M[2:, 2:] = b
    return M


CLICK_PATTERNS = ((1, 0, 1, 0), (1, 0, 0, 1), (0, 1, 1, 0), (0, 1, 0, 1))
ERROR_PATTERNS = ((1, 0, 0, 1), (0, 1, 1, 0))


def qkd_click_and_error(rho_ab: DensityOperator, basis: str, eta: float) -> tuple[float, float, float]:
    """(P_click, P_err, e) for a dual-rail pair measured in ``basis``.

    Modes are (A0, A1, B0, B1). A click event is exactly one photon on each
    side; an error is a discordant pair of rails.
    """
    if rho_ab.modes != 4:
        raise ConfigurationError("expected a 4-mode dual-rail operator")
    rotated = apply_linear_network(rho_ab, basis_rotation(basis))
    probs = {
        pat: pattern_probability(rotated, {i: PnrdElement(n, eta) for i, n in enumerate(pat)})
        for pat in CLICK_PATTERNS
    }
    p_click = sum(probs.values())
    p_err = sum(probs[p] for p in ERROR_PATTERNS)
    if p_click < IMPOSSIBLE:
        raise HeraldingImpossible("no click events: QBER undefined")
    return p_click, p_err, p_err / p_click


def dual_rail_bell_diagonal(weights: Sequence[float]) -> DensityOperator:
    """Bell-diagonal (A, B, C, D) pair with each qubit as one photon in two rails."""
    r = _S2
    # |0> = photon in rail 0, |1> = photon in rail 1; modes (A0, A1, B0, B1)
    ket = {
        (0, 0): (1, 0, 1, 0),
        (0, 1): (1, 0, 0, 1),
        (1, 0): (0, 1, 1, 0),
        (1, 1): (0, 1, 0, 1),
    }
    bells = [
        {(0, 0): r, (1, 1): r},
        {(0, 0): r, (1, 1): -r},
        {(0, 1): r, (1, 0): r},
        {(0, 1): r, (1, 0): -r},
    ]
    entries: dict = {}
    for w, bell in zip(weights, bells):
        for q1, x in bell.items():
            for q2, y in bell.items():
                key = (ket[q1], ket[q2])
                entries[key] = entries.get(key, 0j) + w * x * y
    return DensityOperator(4, entries, 1, 2)


# --- coherent states and the qubus link oracle ---------------------------------

def coherent_state(amplitude: complex, n_max: int, tol: float = 1e-12) -> FockStateVector:
    """Truncated single-mode coherent state; fails if the dropped tail exceeds tol."""
    mean = abs(amplitude) ** 2
    amps = {}
    term = np.exp(-mean / 2.0) + 0j
    captured = 0.0
    for n in range(n_max + 1):
        if n > 0:
            term *= amplitude / sqrt(n)
        amps[(n,)] = term
        captured += abs(term) ** 2
    if 1.0 - captured > tol:
        raise TruncationError(f"coherent-state tail {1.0 - captured:.3e} exceeds {tol:g}")
    return FockStateVector(1, amps, n_max, n_max)


class FockBasis:
    """Enumerated basis of occupations with per-mode and total bounds."""

    def __init__(self, modes: int, n_max: int, max_photons: int, exact_total: int | None = None):
        self.modes = modes
        self.n_max = n_max
        self.max_photons = max_photons
        states = [
            occ
            for occ in product(range(n_max + 1), repeat=modes)
            if sum(occ) <= max_photons and (exact_total is None or sum(occ) == exact_total)
        ]
        states.sort(key=lambda o: (sum(o), tuple(-x for x in o)))
        self.states: list[Occupation] = states
        self.index = {s: i for i, s in enumerate(states)}

    @property
    def dim(self) -> int:
        return len(self.states)


def dense_network(M: np.ndarray, basis_in: FockBasis, basis_out: FockBasis) -> np.ndarray:
    """Matrix U[out, in] of the Fock-space map induced by a mode isometry."""
    check_isometry(M)
    expand = _Expander(M, basis_out.n_max)
    U = np.zeros((basis_out.dim, basis_in.dim), dtype=complex)
    for j, occ in enumerate(basis_in.states):
        for o, x in expand(occ).items():
            i = basis_out.index.get(o)
            if i is not None:
                U[i, j] += x
    return U


def dense_pattern_weights(basis: FockBasis, pattern: Sequence[PnrdElement]) -> np.ndarray:
    """Diagonal of the product POVM element on a basis covering only measured modes."""
    return np.array(
        [np.prod([e.weight(t) for e, t in zip(pattern, occ)]) for occ in basis.states]
    )


def usd_link_oracle(link, channel, d, n_max: int = 10) -> tuple[float, float]:
    """(F0, P0) of a qubus link computed on qubits (x) two truncated probe modes.

    After the channel the probe modes b3, b5 carry +-beta with
    |beta|^2 = 2 eta_t alpha^2 sin^2(theta/2). Loss leaves the qubits phase
    flipped with probability 1 - p, p = (1 + exp(-2(1 - eta_t) alpha^2 sin^2(theta/2)))/2.
    Success is n >= 1 photons in exactly one probe mode; a click in b3 is
    corrected by X on qubit B, and an odd count by Z on qubit B.
    """
    eta_t = transmittivity(link.L0, channel)
    s2 = link.alpha**2 * np.sin(link.theta / 2.0) ** 2
    beta = 1j * np.sqrt(2.0 * eta_t * s2)
    p = 0.5 * (1.0 + np.exp(-2.0 * (1.0 - eta_t) * s2))
    dim = n_max + 1
    plus = np.array([coherent_state(beta, n_max).amplitude((n,)) for n in range(dim)])
    minus = np.array([coherent_state(-beta, n_max).amplitude((n,)) for n in range(dim)])
    vac = np.zeros(dim, dtype=complex)
    vac[0] = 1.0
    # psi[q, t3, t5], qubit index q = 2*a + b over |00>, |01>, |10>, |11>
    branches = []
    for sign in (1.0, -1.0):
        psi = np.zeros((4, dim, dim), dtype=complex)
        psi[0] = 0.5 * np.outer(vac, plus)
        psi[3] = 0.5 * sign * np.outer(vac, minus)
        psi[1] = 0.5 * np.outer(minus, vac)
        psi[2] = 0.5 * sign * np.outer(plus, vac)
        branches.append(psi)
    eta_d = d.eta_d
    w = np.array([[PnrdElement(n, eta_d).weight(t) for t in range(dim)] for n in range(dim)])
    X_B = np.kron(np.eye(2), np.array([[0, 1], [1, 0]]))
    Z_B = np.diag([1.0, -1.0, 1.0, -1.0])
    total = np.zeros((4, 4), dtype=complex)
    for weight, psi in zip((p, 1.0 - p), branches):
        for n in range(1, dim):
            # b3 silent, n clicks in b5
            rho5 = np.einsum("ast,bst,s,t->ab", psi, psi.conj(), w[0], w[n])
            # n clicks in b3, b5 silent
            rho3 = np.einsum("ast,bst,s,t->ab", psi, psi.conj(), w[n], w[0])
            rho3 = X_B @ rho3 @ X_B
            if n % 2:
                rho5 = Z_B @ rho5 @ Z_B
                rho3 = Z_B @ rho3 @ Z_B
            total += weight * (rho5 + rho3)
    P0 = float(np.real(np.trace(total)))
    if P0 < IMPOSSIBLE:
        raise HeraldingImpossible("the probe never triggers a detector")
    phi = np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2.0)
    F0 = float(np.real(phi @ total @ phi)) / P0
    return F0, P0
