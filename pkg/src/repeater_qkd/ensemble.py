"""Atomic-ensemble repeater with on-demand local pair sources.

A local source combines an SPDC pair (modes g, in) with two single photons
that are split into modes c and out; a four-detector network on (c, in)
heralds an entangled pair stored in (g, out). Distribution and swapping both
interfere one stored mode from each side on a second four-detector network.

Every node holds two polarization modes (H, V) with at most two photons, so
link states live on 6 x 6 = 36 dimensions. The pipeline runs on dense arrays
built from the sparse Fock engine; the sparse path is kept for cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial, sqrt

import numpy as np

from .core_states import DomainError, secret_fraction_bb84
from .fock import (
    CLICK_PATTERNS,
    ERROR_PATTERNS,
    IMPOSSIBLE,
    DensityOperator,
    FockBasis,
    FockStateVector,
    HeraldingImpossible,
    PnrdElement,
    apply_linear_network,
    basis_rotation,
    dense_network,
    dense_pattern_weights,
    measure_pattern,
)
from .original import DetectorModel
from .rate_engine import (
    ChannelModel,
    RateBreakdown,
    RepeaterGeometry,
    a_factor,
    compose_qkd_rate,
    rate_probabilistic,
    transmittivity,
)

M_MAX = 2
HERALD = (1, 0, 1, 0)
N_EQUIVALENT_HERALDS = 4

NODE = FockBasis(2, 2, 2)  # one stored node: modes (H, V), <= 2 photons
DET = FockBasis(4, 4, 4)  # four detectors, <= 4 photons in total
PAIR = 36

_R2 = 1.0 / np.sqrt(2.0)

# Local source: inputs (in_H, in_V, c_H, c_V) -> detectors (d1, d2, d3, d4).
SOURCE_NETWORK = np.array(
    [
        [0.5, 0.5, 0.5, -0.5],  # in_H -> (d2 + d1 + d3 - d4)/2
        [0.5, 0.5, -0.5, 0.5],  # in_V -> (d2 + d1 - d3 + d4)/2
        [-0.5, 0.5, 0.5, 0.5],  # c_H -> (d3 + d4 + d2 - d1)/2
        [0.5, -0.5, 0.5, 0.5],  # c_V -> (d3 + d4 - d2 + d1)/2
    ]
)

# Distribution and swapping: inputs (out_H, out_V, out'_H, out'_V) -> (d1, d2, d3, d4).
LINK_NETWORK = np.array(
    [
        [0.0, 0.0, _R2, _R2],
        [_R2, -_R2, 0.0, 0.0],
        [_R2, _R2, 0.0, 0.0],
        [0.0, 0.0, _R2, -_R2],
    ]
)


@dataclass(frozen=True)
class EnsembleSourceParams:
    p: float
    q: float = 1.0
    R: float = 0.5
    gamma_rep: float = float("inf")

    def __post_init__(self) -> None:
        if not (0.0 <= self.p <= 0.1):
            raise DomainError(f"pump parameter p={self.p!r} outside [0, 0.1]")
        if not (0.0 <= self.q <= 1.0):
            raise DomainError(f"q={self.q!r} outside [0, 1]")
        if not (0.0 <= self.R <= 1.0):
            raise DomainError(f"R={self.R!r} outside [0, 1]")
        if not self.gamma_rep > 0:
            raise DomainError("gamma_rep must be positive")


@dataclass(frozen=True)
class MemoryModel:
    eta_m: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.eta_m <= 1.0):
            raise DomainError(f"eta_m={self.eta_m!r} outside (0, 1]")


# --- sparse state constructors --------------------------------------------------

def spdc_state(p: float, m_max: int = M_MAX) -> DensityOperator:
    """Truncated SPDC state on modes (g_H, g_V, in_H, in_V); trace 1 - p^(m_max+1)."""
    if not (0.0 <= p < 0.1 + 1e-15):
        raise DomainError(f"pump parameter p={p!r} outside [0, 0.1)")
    total = DensityOperator(4, {}, 4, 2 * m_max)
    for m in range(m_max + 1):
        psi = _pair_vector(m)
        total = total.plus(psi.to_density().scaled((1.0 - p) * p**m))
    return total


@lru_cache(maxsize=None)
def _pair_vector(m: int) -> FockStateVector:
    """Normalized (B^dag)^m |0>, B^dag = (g_H^dag in_H^dag + g_V^dag in_V^dag)/sqrt(2)."""
    # Expand by placing the m pair creations in g_H, in_H or g_V, in_V.
    amps: dict = {}
    for j in range(m + 1):
        # j pairs in H, m - j pairs in V: coefficient C(m, j) 2^(-m/2) sqrt(j!^2 (m-j)!^2)
        coeff = comb(m, j) * 2 ** (-m / 2) * factorial(j) * factorial(m - j)
        amps[(j, m - j, j, m - j)] = coeff + 0j
    norm = sqrt(sum(abs(a) ** 2 for a in amps.values()))
    return FockStateVector(4, {k: v / norm for k, v in amps.items()}, 4, 2 * M_MAX)


def single_photon_state(q: float, polarization: str) -> DensityOperator:
    """(1 - q)|0><0| + q |1><1| on one mode; ``polarization`` only labels the mode."""
    if not (0.0 <= q <= 1.0):
        raise DomainError(f"q={q!r} outside [0, 1]")
    if polarization not in ("H", "V"):
        raise DomainError("polarization must be 'H' or 'V'")
    return DensityOperator(1, {((0,), (0,)): 1.0 - q + 0j, ((1,), (1,)): q + 0j}, 1, 1)


def _source_mode_map(R: float) -> np.ndarray:
    """Mode map (g_H, g_V, in_H, in_V, a_H, a_V) -> (g_H, g_V, d1..d4, out_H, out_V)."""
    M = np.zeros((6, 8))
    M[0, 0] = M[1, 1] = 1.0
    M[2:4, 2:6] = SOURCE_NETWORK[0:2]
    sr, st = np.sqrt(R), np.sqrt(1.0 - R)
    M[4, 2:6] = sr * SOURCE_NETWORK[2]
    M[4, 6] = st
    M[5, 2:6] = sr * SOURCE_NETWORK[3]
    M[5, 7] = st
    return M


def local_pair_source_sparse(
    src: EnsembleSourceParams, d: DetectorModel
) -> tuple[float, DensityOperator]:
    """Reference implementation on sparse operators: (P0_s, state on g_H, g_V, out_H, out_V)."""
    rho = spdc_state(src.p)
    rho = rho.tensor(single_photon_state(src.q, "H")).tensor(single_photon_state(src.q, "V"))
    rho = DensityOperator(6, rho.entries, 4, 6)
    rho = apply_linear_network(rho, _source_mode_map(src.R))
    pattern = {2 + i: PnrdElement(n, d.eta_d) for i, n in enumerate(HERALD)}
    prob, cond = measure_pattern(rho, pattern)
    return N_EQUIVALENT_HERALDS * prob, cond


# --- dense source templates -------------------------------------------------------

@lru_cache(maxsize=None)
def _source_templates() -> tuple:
    """Heralding amplitudes K[t, x] per (m, s_H, s_V, n_c) at unit weight.

    t indexes detector occupations and x the stored (g, out) pair. The
    template is computed at R = 1/2 and rescaled so that the physical
    amplitude is sqrt(R^n_c (1 - R)^(s - n_c)) times K.
    """
    M = _source_mode_map(0.5)
    templates = []
    for m in range(M_MAX + 1):
        pair = _pair_vector(m)
        for sH in (0, 1):
            for sV in (0, 1):
                s = sH + sV
                amps = {occ + (sH, sV): a for occ, a in pair.amplitudes.items()}
                psi = FockStateVector(6, amps, 4, 6)
                out = apply_linear_network(psi, M)
                blocks: dict[int, np.ndarray] = {}
                for occ, a in out.amplitudes.items():
                    g, det, o = occ[0:2], occ[2:6], occ[6:8]
                    n_c = sum(det) - m
                    K = blocks.setdefault(n_c, np.zeros((DET.dim, PAIR), dtype=complex))
                    x = NODE.index[g] * 6 + NODE.index[o]
                    K[DET.index[det], x] += a * 2 ** (s / 2)
                for n_c, K in blocks.items():
                    templates.append((m, s, n_c, K))
    return tuple(templates)


@lru_cache(maxsize=64)
def _heralded_templates(eta: float) -> tuple:
    W = dense_pattern_weights(DET, [PnrdElement(n, eta) for n in HERALD])
    return tuple(
        (m, s, n_c, K.T @ (W[:, None] * K.conj())) for m, s, n_c, K in _source_templates()
    )


def local_pair_source(src: EnsembleSourceParams, d: DetectorModel) -> tuple[float, np.ndarray]:
    """(P0_s, rho0_s) with rho0_s a 36 x 36 array on (g, out), frame-corrected."""
    rho = np.zeros((PAIR, PAIR), dtype=complex)
    p, q, R = src.p, src.q, src.R
    for m, s, n_c, block in _heralded_templates(float(d.eta_d)):
        w = (1.0 - p) * p**m * q**s * (1.0 - q) ** (2 - s) * R**n_c * (1.0 - R) ** (s - n_c)
        if w:
            rho += w * block
    tr = float(np.real(np.trace(rho)))
    if tr < IMPOSSIBLE:
        raise HeraldingImpossible("local source never heralds")
    F = _frames()[0]
    rho = F @ (rho / tr) @ F.conj().T
    return N_EQUIVALENT_HERALDS * tr, 0.5 * (rho + rho.conj().T)


# --- distribution and swapping ------------------------------------------------------

@lru_cache(maxsize=1)
def _link_isometry() -> np.ndarray:
    """U[t, (o, o')] for two stored nodes entering the link network."""
    two_nodes = FockBasis(4, 2, 4)
    U_full = dense_network(LINK_NETWORK, two_nodes, DET)
    # Restrict to node-pair occupations with <= 2 photons per node.
    cols = [two_nodes.index[a + b] for a in NODE.states for b in NODE.states]
    return U_full[:, cols]


@lru_cache(maxsize=64)
def _link_measurement(eta: float) -> np.ndarray:
    """G[o, o', p, p'] = sum_t W_t U[t, (o, o')] conj(U[t, (p, p')])."""
    U = _link_isometry()
    W = dense_pattern_weights(DET, [PnrdElement(n, eta) for n in HERALD])
    return (U.T @ (W[:, None] * U.conj())).reshape(6, 6, 6, 6)


_JOIN_SUBSCRIPTS = "aobp,xcyd,oxpy->acbd"


@lru_cache(maxsize=None)
def _join_path() -> list:
    z = np.zeros((6, 6, 6, 6), dtype=complex)
    return np.einsum_path(_JOIN_SUBSCRIPTS, z, z, z, optimize="optimal")[0]


def _join_raw(rho_left: np.ndarray, rho_right: np.ndarray, eta: float) -> np.ndarray:
    L = rho_left.reshape(6, 6, 6, 6)
    R = rho_right.reshape(6, 6, 6, 6)
    G = _link_measurement(float(eta))
    return np.einsum(_JOIN_SUBSCRIPTS, L, R, G, optimize=_join_path()).reshape(PAIR, PAIR)


def join_links(rho_left: np.ndarray, rho_right: np.ndarray, eta: float) -> tuple[float, np.ndarray]:
    """Measure the right node of ``rho_left`` and the left node of ``rho_right``.

    Both inputs are 36 x 36 on (kept, measured) and (measured, kept) node
    pairs. Returns the heralding probability summed over the four equivalent
    coincidences and the frame-corrected state on the two outer nodes.
    """
    out = _join_raw(rho_left, rho_right, eta)
    tr = float(np.real(np.trace(out)))
    if tr < IMPOSSIBLE:
        raise HeraldingImpossible("link measurement never heralds")
    F = _frames()[1]
    out = F @ (out / tr) @ F.conj().T
    return N_EQUIVALENT_HERALDS * tr, 0.5 * (out + out.conj().T)


def swap_nodes(rho: np.ndarray) -> np.ndarray:
    """Exchange the two nodes of a 36 x 36 pair state."""
    return rho.reshape(6, 6, 6, 6).transpose(1, 0, 3, 2).reshape(PAIR, PAIR)


def distribute_link(
    rho_left: np.ndarray,
    rho_right: np.ndarray,
    L0: float,
    mem: MemoryModel,
    d: DetectorModel,
    channel: ChannelModel = ChannelModel(),
) -> tuple[float, np.ndarray]:
    """Join two local sources (each on (g, out)) over a segment of length L0."""
    eta_md = mem.eta_m * transmittivity(L0 / 2.0, channel) * d.eta_d
    return join_links(rho_left, swap_nodes(rho_right), eta_md)


def swap_level(
    rho_left: np.ndarray, rho_right: np.ndarray, mem: MemoryModel, d: DetectorModel
) -> tuple[float, np.ndarray]:
    return join_links(rho_left, rho_right, mem.eta_m * d.eta_d)


# --- frame corrections ------------------------------------------------------------

def _phi_plus() -> np.ndarray:
    v = np.zeros(PAIR, dtype=complex)
    h, vv = NODE.index[(1, 0)], NODE.index[(0, 1)]
    v[h * 6 + h] = v[vv * 6 + vv] = _R2
    return v


def _candidate_node_maps() -> list[np.ndarray]:
    maps = []
    for ph in (1.0, -1.0, 1j, -1j):
        maps.append(np.array([[1.0, 0.0], [0.0, ph]], dtype=complex))
        maps.append(np.array([[0.0, 1.0], [ph, 0.0]], dtype=complex))
    return [dense_network(M, NODE, NODE) for M in maps]


def _best_fix(rho: np.ndarray) -> np.ndarray:
    phi = _phi_plus()
    best, best_f = None, -1.0
    for node_map in _candidate_node_maps():
        F = np.kron(np.eye(6), node_map)
        f = float(np.real(phi.conj() @ F @ rho @ F.conj().T @ phi))
        if f > best_f + 1e-9:
            best, best_f = F, f
    if best_f < 1.0 - 1e-3:
        raise RuntimeError(f"no relabeling brings the ideal state to phi+ (fidelity {best_f})")
    return best


@lru_cache(maxsize=1)
def _frames() -> tuple[np.ndarray, np.ndarray]:
    """Fixed relabelings of the right-hand node after a source herald and after a join.

    Chosen once from the ideal (q = 1, unit efficiency, tiny pump) states so
    that the heralded state is |phi+>, then applied unconditionally.
    """
    rho = np.zeros((PAIR, PAIR), dtype=complex)
    for m, s, n_c, block in _heralded_templates(1.0):
        if m == 1 and s == 2 and n_c == 1:
            rho += block
    rho /= np.trace(rho).real
    source_fix = _best_fix(rho)
    src = source_fix @ rho @ source_fix.conj().T
    joined = _join_raw(src, swap_nodes(src), 1.0)
    joined /= np.trace(joined).real
    return source_fix, _best_fix(joined)


# --- final QKD measurement and rate -------------------------------------------------

@lru_cache(maxsize=64)
def _qkd_operators(basis: str, eta: float) -> dict:
    """Pattern POVM elements pulled back onto the 36-dim pair space."""
    two_nodes = FockBasis(4, 2, 4)
    cols = [two_nodes.index[a + b] for a in NODE.states for b in NODE.states]
    U = dense_network(basis_rotation(basis), two_nodes, DET)[:, cols]
    ops = {}
    for pat in CLICK_PATTERNS:
        W = dense_pattern_weights(DET, [PnrdElement(n, eta) for n in pat])
        ops[pat] = U.conj().T @ (W[:, None] * U)
    return ops


def qkd_statistics(rho: np.ndarray, basis: str, eta: float) -> tuple[float, float, float]:
    """(P_click, P_err, e) of a 36 x 36 pair state, dense counterpart of the Fock routine."""
    probs = {
        pat: float(np.real(np.trace(op @ rho))) for pat, op in _qkd_operators(basis.upper(), float(eta)).items()
    }
    p_click = sum(probs.values())
    if p_click < IMPOSSIBLE:
        raise HeraldingImpossible("no click events: QBER undefined")
    p_err = sum(probs[p] for p in ERROR_PATTERNS)
    return p_click, p_err, p_err / p_click


def pair_to_density_operator(rho: np.ndarray) -> DensityOperator:
    """Sparse 4-mode operator (A_H, A_V, B_H, B_V) of a 36 x 36 pair state."""
    entries = {}
    for i, a in enumerate(NODE.states):
        for j, b in enumerate(NODE.states):
            for k, c in enumerate(NODE.states):
                for m, e in enumerate(NODE.states):
                    v = rho[i * 6 + j, k * 6 + m]
                    if v != 0:
                        entries[(a + b, c + e)] = complex(v)
    return DensityOperator(4, entries, 2, 4)


@dataclass(frozen=True)
class EnsembleChain:
    """Per-stage probabilities and the final link state of one chain evaluation."""

    P0_s: float
    P0: float
    p_es: tuple[float, ...]
    rho_final: np.ndarray = field(repr=False)


def ensemble_chain(
    src: EnsembleSourceParams,
    geom: RepeaterGeometry,
    mem: MemoryModel,
    d: DetectorModel,
    channel: ChannelModel = ChannelModel(),
) -> EnsembleChain:
    """Source, distribution over L0 and N swap levels with one state per level."""
    P0_s, rho_s = local_pair_source(src, d)
    P0, rho = distribute_link(rho_s, rho_s, geom.L0, mem, d, channel)
    p_es = []
    for _ in range(geom.N):
        p, rho = swap_level(rho, rho, mem, d)
        p_es.append(p)
    return EnsembleChain(P0_s, P0, tuple(p_es), rho)


def secret_key_rate_ensemble(
    src: EnsembleSourceParams,
    geom: RepeaterGeometry,
    mem: MemoryModel = MemoryModel(),
    d: DetectorModel = DetectorModel(),
    channel: ChannelModel = ChannelModel(),
) -> RateBreakdown:
    """BB84 key rate with probabilistic swapping and source preparation time."""
    if geom.N < 1:
        raise DomainError("the ensemble chain needs N >= 1")
    if geom.beta != 1:
        raise DomainError("the ensemble chain uses beta = 1")
    meta: dict = {"protocol": "ensemble", "N": geom.N, "p": src.p, "R": src.R}
    try:
        chain = ensemble_chain(src, geom, mem, d, channel)
    except HeraldingImpossible as exc:
        return compose_qkd_rate(0.0, 0.0, 1.0, 0.0, meta | {"diagnostic": str(exc)})
    eta_final = mem.eta_m * d.eta_d
    p_click, _, e_Z = qkd_statistics(chain.rho_final, "Z", eta_final)
    _, _, e_X = qkd_statistics(chain.rho_final, "X", eta_final)
    r_inf = secret_fraction_bb84(min(max(e_X, 0.0), 1.0), min(max(e_Z, 0.0), 1.0))
    T0 = geom.beta * geom.L0 / channel.c
    T0_s = 0.0 if np.isinf(src.gamma_rep) else 1.0 / (src.gamma_rep * chain.P0_s)
    a = a_factor(min(chain.P0, 1.0))
    r_rep = rate_probabilistic(T0 + T0_s, geom.N, 0, chain.P0, list(chain.p_es), [], a)
    meta.update(
        P0_s=chain.P0_s,
        P0=chain.P0,
        p_es=list(chain.p_es),
        e_X=e_X,
        e_Z=e_Z,
        a=a,
        a_near_one=a > 0.999,
        T0=T0,
        T0_s=T0_s,
    )
    return compose_qkd_rate(r_rep, p_click, 1.0, r_inf, meta)
