"""Threshold searches, rate optimization and parameter sweeps."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from ..core_states import secret_fraction
from ..ensemble import EnsembleSourceParams, MemoryModel, secret_key_rate_ensemble
from ..hybrid import DissipativeGate, HybridParams, hybrid_chain_evaluate, secret_key_rate_hybrid
from ..original import (
    DepolarizingGate,
    DetectorModel,
    OriginalParams,
    chain_evaluate,
    secret_key_rate_original,
)
from ..rate_engine import ChannelModel, RateBreakdown, RepeaterGeometry

PROTOCOLS = ("original", "hybrid", "ensemble")
DISCRETE = ("N", "k")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

NO_CONSTRAINT = "no constraint"
INFEASIBLE = "infeasible"


class ConfigError(ValueError):
    """Invalid sweep or query specification."""


# --- threshold search ---------------------------------------------------------

@dataclass(frozen=True)
class ThresholdQuery:
    protocol: str
    target: str  # "F0" or "p_G"
    N: int
    k: int
    qkd: str = "bb84"
    fixed_F0: float = 1.0
    fixed_p_G: float = 1.0

    def __post_init__(self) -> None:
        if self.protocol not in ("original", "hybrid"):
            raise ConfigError(f"threshold search is defined for original and hybrid, not {self.protocol!r}")
        if self.target not in ("F0", "p_G"):
            raise ConfigError(f"unknown threshold target {self.target!r}")


@dataclass(frozen=True)
class ThresholdResult:
    query: ThresholdQuery
    status: str  # "ok", NO_CONSTRAINT or INFEASIBLE
    value: float | None = None

    @property
    def rounded(self) -> float | None:
        return None if self.value is None else round(self.value, 3)


def _domain(q: ThresholdQuery) -> tuple[float, float]:
    if q.target == "F0":
        return (0.25, 1.0) if q.protocol == "original" else (0.5, 1.0)
    return (0.0, 1.0) if q.protocol == "original" else (1e-6, 1.0)


def signed_secret_fraction(q: ThresholdQuery, x: float) -> float:
    F0 = x if q.target == "F0" else q.fixed_F0
    p_G = x if q.target == "p_G" else q.fixed_p_G
    if q.protocol == "original":
        state, _ = chain_evaluate(F0, DepolarizingGate(p_G), 1.0, q.N, q.k)
    else:
        state, _ = hybrid_chain_evaluate(F0, DissipativeGate(p_G), q.N, q.k)
    return secret_fraction(state, q.qkd)


def bisect_threshold(q: ThresholdQuery, tol: float = 1e-4, scan_points: int = 200) -> ThresholdResult:
    """Smallest parameter value above which the secret fraction stays positive.

    The domain is scanned downwards from its top to find the first sign
    change, which is then refined to well below ``tol``.
    """
    lo, hi = _domain(q)
    f = lambda x: signed_secret_fraction(q, x)  # noqa: E731
    grid = np.linspace(hi, lo, scan_points + 1)
    values = [f(x) for x in grid]
    if values[0] <= 0:
        return ThresholdResult(q, INFEASIBLE)
    for i in range(1, len(grid)):
        if values[i] <= 0:
            root = brentq(f, grid[i], grid[i - 1], xtol=tol * 1e-3, rtol=4 * np.finfo(float).eps)
            return ThresholdResult(q, "ok", float(root))
    return ThresholdResult(q, NO_CONSTRAINT)


# --- rate evaluation ------------------------------------------------------------

PARAM_DEFAULTS: dict[str, dict[str, Any]] = {
    "original": {"F0": 0.9, "p_G": 1.0, "L": 600.0, "N": 2, "k": 0, "eta_d": 1.0, "p_dark": 0.0, "qkd": "bb84"},
    "hybrid": {"F0": 0.9, "p_G": 1.0, "L": 600.0, "N": 1, "k": 0, "eta_d": 1.0, "qkd": "bb84", "p0_form": "exponent"},
    "ensemble": {
        "p": 1e-3,
        "q": 1.0,
        "R": 0.5,
        "gamma_rep": math.inf,
        "eta_m": 1.0,
        "eta_d": 1.0,
        "L": 600.0,
        "N": 2,
    },
}
CHANNEL_KEYS = ("alpha_att", "c")


def evaluate(protocol: str, params: Mapping[str, Any], memory_normalize: bool = False) -> RateBreakdown:
    """Rate breakdown for one parameter point; unknown keys are rejected."""
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}")
    known = set(PARAM_DEFAULTS[protocol]) | set(CHANNEL_KEYS)
    extra = set(params) - known
    if extra:
        raise ConfigError(f"unknown parameters for {protocol}: {sorted(extra)}")
    p = {**PARAM_DEFAULTS[protocol], **params}
    try:
        # Coerce to the type of each default; channel keys are floats.
        p = {key: type(PARAM_DEFAULTS[protocol].get(key, 0.0))(value) for key, value in p.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameter value: {exc}") from None
    channel = ChannelModel(float(p.get("alpha_att", 0.17)), float(p.get("c", 2e5)))
    N = int(p["N"])
    if protocol == "original":
        k = int(p["k"])
        bd = secret_key_rate_original(
            OriginalParams(
                float(p["F0"]), float(p["p_G"]), float(p["L"]), N, k,
                DetectorModel(float(p["eta_d"]), float(p["p_dark"])), channel, str(p["qkd"]),
            )
        )
    elif protocol == "hybrid":
        k = int(p["k"])
        bd = secret_key_rate_hybrid(
            HybridParams(
                float(p["F0"]), float(p["p_G"]), float(p["L"]), N, k,
                DetectorModel(float(p["eta_d"])), channel, str(p["qkd"]), str(p["p0_form"]),
            )
        )
    else:
        k = 0
        bd = secret_key_rate_ensemble(
            EnsembleSourceParams(float(p["p"]), float(p["q"]), float(p["R"]), float(p["gamma_rep"])),
            RepeaterGeometry(float(p["L"]), N, 1),
            MemoryModel(float(p["eta_m"])),
            DetectorModel(float(p["eta_d"])),
            channel,
        )
    if memory_normalize and k:
        scale = 2.0**-k
        bd = RateBreakdown(
            bd.r_rep * scale, bd.p_click, bd.r_sift, bd.r_secret_fraction, bd.r_qkd * scale,
            bd.meta | {"memory_normalized": True},
        )
    return bd


# --- optimization -------------------------------------------------------------------

@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    log: bool = False

    def to_x(self, u: float) -> float:
        return 10.0**u if self.log else u

    @property
    def ulo(self) -> float:
        return math.log10(self.lo) if self.log else self.lo

    @property
    def uhi(self) -> float:
        return math.log10(self.hi) if self.log else self.hi


@dataclass(frozen=True)
class SweepSpec:
    protocol: str
    fixed: Mapping[str, Any] = field(default_factory=dict)
    swept: tuple[str, Sequence[Any]] | None = None
    optimized: Mapping[str, Axis | Sequence[int]] = field(default_factory=dict)
    n_grid: int = 40
    passes: int = 3
    memory_normalize: bool = False

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.swept and self.swept[0] in self.optimized:
            raise ConfigError("swept and optimized parameters must be disjoint")
        overlap = set(self.fixed) & set(self.optimized)
        if overlap:
            raise ConfigError(f"parameters both fixed and optimized: {sorted(overlap)}")
        if self.n_grid < 2:
            raise ConfigError("n_grid must be at least 2")
        for name, dom in self.optimized.items():
            if isinstance(dom, Axis):
                if name in DISCRETE:
                    raise ConfigError(f"{name} is discrete; give a list of values")
                if not dom.lo < dom.hi or (dom.log and dom.lo <= 0):
                    raise ConfigError(f"bad bounds for {name}: {dom}")
            elif len(dom) == 0:
                raise ConfigError(f"empty value list for {name}")


@dataclass
class OptimizeResult:
    params: dict[str, Any]
    breakdown: RateBreakdown
    grid_best: float
    evaluations: int
    diagnostics: dict = field(default_factory=dict)


def _golden(f: Callable[[float], float], a: float, b: float, iters: int = 40) -> tuple[float, float]:
    """Maximize a unimodal f on [a, b]; returns (argmax, max)."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _optimize_continuous(
    f: Callable[[dict[str, float]], float], axes: Mapping[str, Axis], n_grid: int, passes: int
) -> tuple[dict[str, float], float, float, int]:
    names = list(axes)
    if not names:
        v = f({})
        return {}, v, v, 1
    calls = 0
    inner = f

    def f(x: dict[str, float]) -> float:
        nonlocal calls
        calls += 1
        return inner(x)

    grids = {n: np.linspace(axes[n].ulo, axes[n].uhi, n_grid) for n in names}
    best_u, best_v = None, -math.inf
    for combo in itertools.product(*(grids[n] for n in names)):
        u = dict(zip(names, combo))
        v = f({n: axes[n].to_x(u[n]) for n in names})
        if v > best_v:
            best_u, best_v = u, v
    grid_best = best_v
    steps = {n: (axes[n].uhi - axes[n].ulo) / (n_grid - 1) for n in names}
    u = dict(best_u)
    for _ in range(passes):
        for n in names:
            a = max(axes[n].ulo, u[n] - steps[n])
            b = min(axes[n].uhi, u[n] + steps[n])

            def g(x: float, n: str = n) -> float:
                trial = dict(u, **{n: x})
                return f({m: axes[m].to_x(trial[m]) for m in names})

            x, v = _golden(g, a, b)
            if v > best_v:
                best_v, u[n] = v, x
        steps = {n: s / 2.0 for n, s in steps.items()}
    return {n: axes[n].to_x(u[n]) for n in names}, best_v, grid_best, calls


def score(bd: RateBreakdown) -> float:
    """Objective for the optimizer: the rate where a key exists, else the (negative) secret fraction.

    Points without a key then still point towards the feasible region, which
    may be narrower than the coarse grid spacing; the argmax of the rate is
    unchanged whenever any point has a positive rate.
    """
    return bd.r_qkd if bd.r_secret_fraction > 0.0 else bd.r_secret_fraction


def optimize(spec: SweepSpec, extra_fixed: Mapping[str, Any] | None = None) -> OptimizeResult:
    """Maximize r_qkd: exhaustive over discrete parameters, grid plus golden section otherwise."""
    fixed = {**spec.fixed, **(extra_fixed or {})}
    discrete = {n: list(v) for n, v in spec.optimized.items() if not isinstance(v, Axis)}
    axes = {n: v for n, v in spec.optimized.items() if isinstance(v, Axis)}
    best: OptimizeResult | None = None
    total = 0
    grid_best = -math.inf
    for combo in itertools.product(*discrete.values()) if discrete else [()]:
        point = dict(fixed, **dict(zip(discrete, combo)))

        def f(x: dict[str, float], point: dict = point) -> float:
            return score(evaluate(spec.protocol, {**point, **x}, spec.memory_normalize))

        xs, v, gb, count = _optimize_continuous(f, axes, spec.n_grid, spec.passes)
        total += count
        grid_best = max(grid_best, gb, 0.0)
        if best is None or v > score(best.breakdown):
            params = {**point, **xs}
            best = OptimizeResult(params, evaluate(spec.protocol, params, spec.memory_normalize), gb, 0)
    assert best is not None
    best.evaluations = total
    best.grid_best = grid_best
    if best.breakdown.r_qkd <= 0.0:
        best.diagnostics["all_zero"] = True
    return best


def _sweep_row(args: tuple[SweepSpec, str, Any]) -> tuple[Any, OptimizeResult]:
    spec, name, value = args
    return value, optimize(spec, {name: value})


def sweep(spec: SweepSpec, workers: int = 1) -> list[tuple[Any, OptimizeResult]]:
    """One independently optimized row per swept value, in input order."""
    if spec.swept is None:
        return [(None, optimize(spec))]
    name, values = spec.swept
    jobs = [(spec, name, v) for v in values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(j) for j in jobs]


def memory_normalized(rate: float, k: int) -> float:
    """Rate per memory when each distillation round doubles the memory cost."""
    return rate / 2.0**k
