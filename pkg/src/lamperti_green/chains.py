"""Markov chains with state-dependent jump laws.

A :class:`ChainModel` bundles the jump law ``xi(x)`` of a time-homogeneous
chain on the half line (lattice or continuum) together with exact moment
evaluation where the law is finite-support.  The builtin families cover the
canonical vanishing-drift regimes:

* ``nearest_neighbour`` - skip-free lattice chains, jumps in {-1, 0, +1},
  including the ``lambda_chain`` with p_pm(x) = (1 +- lam/(x+lam))/2;
* ``lamperti_regular`` - continuum chain with drift exactly mu/(1+x) and
  second jump moment exactly b (two-point law);
* ``lamperti_critical`` - drift tuned so 2*m1/m2 = 1/x + ... +
  (gamma+1)/(x log x ... log_m x), the critically transient regime;
* ``lamperti_weibull`` - drift exactly mu/(1+x)^alpha, alpha in (0,1);
* ``sqrt_branching`` - square root of a critical branching process with
  immigration, drift ~ ((a - s2/4)/2)/x;
* ``constant_drift`` - two-point law with constant m1 = a, m2 = b.

All models are immutable after construction and safe to share across
threads; simulation state lives in per-path generators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .rng import path_stream

__all__ = [
    "ChainModel",
    "TruncatedMoments",
    "Trajectory",
    "make_builtin",
    "nearest_neighbour",
    "lambda_chain",
    "critical_nn_chain",
    "lamperti_regular",
    "lamperti_critical",
    "lamperti_weibull",
    "sqrt_branching",
    "constant_drift",
    "simulate_path",
    "truncated_moments",
    "default_truncation",
]

# Drift cap for two-point laws: |m1| <= DRIFT_CAP * sqrt(m2) keeps the
# law well defined; the cap only binds at small states, below the region
# where any asymptotic statement is read off.
DRIFT_CAP = 0.9


def default_truncation(x):
    """Default truncation level s(x) = (1+x)/log(e+x).

    Increasing, o(x), and o(1/v) for every builtin drift profile, so it
    satisfies the moment-truncation hypotheses of all three regimes while
    keeping truncation effects negligible at desk scale.
    """
    x = np.asarray(x, dtype=float)
    return (1.0 + x) / np.log(np.e + x)


@dataclass(frozen=True)
class TruncatedMoments:
    """Moments of the jump at x restricted to |jump| <= s."""

    m1: float
    m2: float
    m3_abs: float
    tail_mass: float
    s: float
    method: str           # "exact" or "monte_carlo"
    n_samples: int = 0
    stderr_m1: float = 0.0
    stderr_m2: float = 0.0

    def __post_init__(self):
        if self.m2 < -1e-15 or self.m3_abs < -1e-15:
            raise ValueError("even truncated moments must be non-negative")
        if not -1e-12 <= self.tail_mass <= 1 + 1e-12:
            raise ValueError("tail mass must be a probability")
        tol = 1e-9 if self.method == "exact" else 6 * (self.stderr_m1 + self.stderr_m2) + 1e-9
        if self.m1 ** 2 > self.m2 * (1 + tol) + tol:
            raise ValueError("m1^2 <= m2 violated (Cauchy-Schwarz)")


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    termination: str      # "escaped" or "step_budget"

    @property
    def steps(self) -> int:
        return len(self.states) - 1


@dataclass(frozen=True)
class ChainModel:
    """State-indexed jump law with optional exact finite support.

    ``sample_many(x, rng)`` draws one jump per entry of ``x``.
    ``support(x)`` returns (values, probs) when the law at x is finite;
    None otherwise (sampling-only laws such as sqrt_branching).
    ``reflect`` maps a proposed next state back into the state space.
    """

    name: str
    family_params: dict
    sample_many: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    support: Callable[[float], Optional[tuple]]
    lattice: bool
    state_floor: float = 0.0
    # present only for skip-free lattice chains
    p_plus: Optional[Callable] = None
    p_minus: Optional[Callable] = None
    positive_jump_floor: tuple = (0.0, 0.0)   # (threshold state, min P{jump > 0})

    def reflect(self, x: np.ndarray) -> np.ndarray:
        return np.abs(x - self.state_floor) + self.state_floor

    def step(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.reflect(x + self.sample_many(np.asarray(x, dtype=float), rng))

    def is_nearest_neighbour(self) -> bool:
        return self.lattice and self.p_plus is not None


# ---------------------------------------------------------------------------
# builtin families
# ---------------------------------------------------------------------------

def _as_func(f):
    if callable(f):
        return f
    c = float(f)
    return lambda x: np.full_like(np.asarray(x, dtype=float), c)


def nearest_neighbour(p, eps_plus=0.0, eps_minus=0.0, name="nearest_neighbour",
                      params=None) -> ChainModel:
    """Skip-free chain on Z+ with p+(k) = p + eps+(k), p-(k) = p - eps-(k).

    p-(0) is forced to 0 (reflecting origin).  Probabilities are validated
    on a probe grid; p0 = 1 - p+ - p- must be a probability everywhere.
    """
    ep, em = _as_func(eps_plus), _as_func(eps_minus)

    def p_plus(x):
        x = np.asarray(x, dtype=float)
        return p + ep(x)

    def p_minus(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0, 0.0, p - em(x))

    probe = np.arange(0, 2001, dtype=float)
    pp, pm = p_plus(probe), p_minus(probe)
    if np.any(pp < -1e-12) or np.any(pm < -1e-12) or np.any(pp + pm > 1 + 1e-12):
        raise ValueError(f"{name}: p+ and p- must satisfy 0 <= p+, p-, p+ + p- <= 1")

    def sample_many(x, rng):
        u = rng.random(x.shape)
        pp = p_plus(x)
        return np.where(u < pp, 1.0, np.where(u < pp + p_minus(x), -1.0, 0.0))

    def support(x):
        pp = float(p_plus(np.asarray(x, dtype=float)))
        pm = float(p_minus(np.asarray(x, dtype=float)))
        return np.array([-1.0, 0.0, 1.0]), np.array([pm, 1.0 - pp - pm, pp])

    eps0 = float(min(pp[pp > 0].min(), 1.0)) if np.any(pp > 0) else 0.0
    return ChainModel(
        name=name,
        family_params=dict(params or {}, p=p),
        sample_many=sample_many,
        support=support,
        lattice=True,
        p_plus=p_plus,
        p_minus=p_minus,
        positive_jump_floor=(0.0, eps0),
    )


def lambda_chain(lam: float) -> ChainModel:
    """The nearest-neighbour chain with p_pm(x) = (1 +- lam/(x+lam))/2.

    Transient for lam > 1/2 (drift lam/(x+lam), m2 = 1), with renewal
    density 2(x+1)/(2*lam - 1) asymptotically.
    """
    if lam <= 0.5:
        raise ValueError(
            "lambda_chain requires lam > 1/2 (drift mu = lam must exceed b/2 = 1/2 "
            "for transience)")

    return nearest_neighbour(
        0.5,
        eps_plus=lambda x: 0.5 * lam / (x + lam),
        eps_minus=lambda x: 0.5 * lam / (x + lam),
        name="lambda_chain",
        params={"lam": lam},
    )


def _iterlog_terms(x, m):
    """[x, log x, loglog x, ...] evaluated with no shift; caller guards domain."""
    out = [np.asarray(x, dtype=float)]
    for _ in range(m):
        out.append(np.log(out[-1]))
    return out


def critical_nn_chain(m: int = 1, gamma: float = 1.0) -> ChainModel:
    """Skip-free realization of the critical regime (b = 1).

    2*m1/m2 = 1/x + 1/(x log x) + ... + (gamma+1)/(x log x ... log_m x)
    exactly for x >= x_floor, frozen below.  m2 = 1 exactly (no holds).
    """
    if m < 1 or gamma <= 0:
        raise ValueError("critical_nn_chain requires m >= 1, gamma > 0")
    # need log_m(x_floor) comfortably positive
    x_floor = 3.0
    for _ in range(m - 1):
        x_floor = math.exp(x_floor)

    def drift(x):
        x = np.maximum(np.asarray(x, dtype=float), x_floor)
        terms = _iterlog_terms(x, m)
        prod = terms[0].copy()
        tot = 1.0 / prod
        for i in range(1, m):
            prod = prod * terms[i]
            tot = tot + 1.0 / prod
        prod = prod * terms[m]
        tot = tot + (gamma + 1.0) / prod
        return 0.5 * tot   # m1 = (b/2) * (2 m1/m2), b = 1

    return nearest_neighbour(
        0.5,
        eps_plus=lambda x: 0.5 * drift(x),
        eps_minus=lambda x: 0.5 * drift(x),
        name="critical_nn_chain",
        params={"m": m, "gamma": gamma, "b": 1.0, "x_floor": x_floor},
    )


def _two_point_model(name, drift_fn, b, params, extra_positive=(0.0, 0.5)) -> ChainModel:
    """Two-point law at x: values d(x) +- sqrt(b - d(x)^2), each w.p. 1/2.

    Gives m1(x) = d(x) and m2(x) = b exactly wherever d is not capped.
    Reflection at 0 perturbs moments only below sqrt(b).
    """
    sqrt_b = math.sqrt(b)

    def d_capped(x):
        return np.minimum(drift_fn(np.asarray(x, dtype=float)), DRIFT_CAP * sqrt_b)

    def sample_many(x, rng):
        d = d_capped(x)
        c = np.sqrt(b - d * d)
        u = rng.random(x.shape)
        return np.where(u < 0.5, d + c, d - c)

    def support(x):
        d = float(d_capped(np.asarray(x, dtype=float)))
        c = math.sqrt(b - d * d)
        return np.array([d - c, d + c]), np.array([0.5, 0.5])

    return ChainModel(
        name=name,
        family_params=params,
        sample_many=sample_many,
        support=support,
        lattice=False,
        positive_jump_floor=extra_positive,
    )


def lamperti_regular(mu: float, b: float) -> ChainModel:
    """Continuum chain with m1(x) = mu/(1+x) and m2(x) = b, exactly.

    Requires mu > b/2: below that the chain is not transient and no renewal
    measure exists (hypothesis of the 1/x-drift renewal theorem).
    """
    if b <= 0:
        raise ValueError("b must be positive")
    if mu <= b / 2:
        raise ValueError(
            f"lamperti_regular requires mu > b/2 (got mu={mu}, b={b}): transience "
            "hypothesis of the regular-drift renewal theorem")
    return _two_point_model(
        "lamperti_regular", lambda x: mu / (1.0 + x), b, {"mu": mu, "b": b})


def lamperti_critical(m: int, gamma: float, b: float) -> ChainModel:
    """Continuum two-point chain in the critical regime.

    2*m1/m2 matches 1/x + ... + (gamma+1)/(x log x ... log_m x) exactly for
    x above a floor where all iterated logs are positive.
    """
    if m < 1 or gamma <= 0 or b <= 0:
        raise ValueError("lamperti_critical requires m >= 1, gamma > 0, b > 0")
    x_floor = 3.0
    for _ in range(m - 1):
        x_floor = math.exp(x_floor)

    def drift(x):
        x = np.maximum(np.asarray(x, dtype=float), x_floor)
        terms = _iterlog_terms(x, m)
        prod = terms[0].copy()
        tot = 1.0 / prod
        for i in range(1, m):
            prod = prod * terms[i]
            tot = tot + 1.0 / prod
        prod = prod * terms[m]
        tot = tot + (gamma + 1.0) / prod
        return 0.5 * b * tot

    return _two_point_model(
        "lamperti_critical", drift, b,
        {"m": m, "gamma": gamma, "b": b, "x_floor": x_floor})


def lamperti_weibull(alpha: float, mu: float, b: float) -> ChainModel:
    """Continuum chain with m1(x) = mu/(1+x)^alpha, m2(x) = b, exactly.

    alpha in (0,1): drift vanishes slower than 1/x, renewal density ~ 1/m1.
    """
    if not 0 < alpha < 1:
        raise ValueError("lamperti_weibull requires alpha in (0, 1)")
    if mu <= 0 or b <= 0:
        raise ValueError("mu and b must be positive")
    return _two_point_model(
        "lamperti_weibull", lambda x: mu / (1.0 + x) ** alpha, b,
        {"alpha": alpha, "mu": mu, "b": b})


def constant_drift(a: float, b: float) -> ChainModel:
    """Two-point law with m1 = a > 0, m2 = b, classical renewal regime."""
    if not 0 < a * a < b:
        raise ValueError("constant_drift requires 0 < a^2 < b")
    return _two_point_model("constant_drift", lambda x: np.full_like(x, a), b,
                            {"a": a, "b": b})


def sqrt_branching(sigma2: float, a: float) -> ChainModel:
    """Square root of a critical branching process with immigration.

    Offspring law: mean 1, variance sigma2, supported on {0, 1, k}.
    Immigration: floor(a) plus a Bernoulli remainder, mean a.  The chain
    X = sqrt(Z) has drift ~ mu/x with mu = (a - sigma2/4)/2 and second
    moment -> b = sigma2/4; transience requires a > sigma2/2.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if a <= sigma2 / 2:
        raise ValueError(
            f"sqrt_branching requires a > sigma2/2 (got a={a}, sigma2={sigma2}): "
            "equivalent to mu > b/2 for the transformed chain")
    k = math.ceil(sigma2) + 1
    p_k = sigma2 / (k * (k - 1))
    p_1 = 1.0 - sigma2 / (k - 1)
    p_0 = 1.0 - p_1 - p_k
    assert min(p_0, p_1, p_k) >= -1e-12
    a_floor = math.floor(a)
    a_frac = a - a_floor

    def sample_many(x, rng):
        z = np.rint(np.asarray(x, dtype=float) ** 2).astype(np.int64)
        counts = rng.multinomial(z, [p_0, p_1, p_k])
        children = counts[..., 1] + k * counts[..., 2]
        imm = a_floor + (rng.random(z.shape) < a_frac)
        return np.sqrt(children + imm) - np.asarray(x, dtype=float)

    return ChainModel(
        name="sqrt_branching",
        family_params={"sigma2": sigma2, "a": a, "offspring_high": k},
        sample_many=sample_many,
        support=lambda x: None,
        lattice=False,
        positive_jump_floor=(0.0, min(p_1, 0.5)),
    )


_FAMILIES = {
    "nearest_neighbour": nearest_neighbour,
    "lambda_chain": lambda_chain,
    "critical_nn_chain": critical_nn_chain,
    "lamperti_regular": lamperti_regular,
    "lamperti_critical": lamperti_critical,
    "lamperti_weibull": lamperti_weibull,
    "sqrt_branching": sqrt_branching,
    "constant_drift": constant_drift,
}


def make_builtin(family: str, params: dict) -> ChainModel:
    """Construct a builtin chain family from a name and parameter map."""
    try:
        ctor = _FAMILIES[family]
    except KeyError:
        raise ValueError(
            f"unknown chain family {family!r}; known: {sorted(_FAMILIES)}") from None
    return ctor(**params)


# ---------------------------------------------------------------------------
# simulation and truncated moments
# ---------------------------------------------------------------------------

def simulate_path(model: ChainModel, x0: float, escape_level: float,
                  step_budget: int, seed: int, path_index: int = 0) -> Trajectory:
    """Simulate one path until it exceeds escape_level or exhausts the budget.

    Identical (seed, path_index) always reproduces the same trajectory.
    Budget exhaustion is a recorded outcome, not an error.
    """
    if escape_level <= x0:
        raise ValueError("escape level must exceed the starting state")
    if step_budget < 0:
        raise ValueError("step budget must be >= 0")
    rng = path_stream(seed, path_index)
    states = [float(x0)]
    x = np.array([float(x0)])
    block = 4096
    while len(states) - 1 < step_budget:
        n = min(block, step_budget - (len(states) - 1))
        for _ in range(n):
            x = model.step(x, rng)
            states.append(float(x[0]))
            if x[0] > escape_level:
                return Trajectory(np.array(states), "escaped")
    return Trajectory(np.array(states), "step_budget")


def truncated_moments(model: ChainModel, x: float, s: float,
                      n: Optional[int] = None, seed: int = 0) -> TruncatedMoments:
    """Moments of the jump at x truncated to |jump| <= s.

    Exact summation for finite-support laws; Monte Carlo (n required) with
    reported standard errors otherwise.
    """
    if s <= 0:
        raise ValueError("truncation level s must be positive")
    sup = model.support(x)
    if sup is not None:
        v, p = sup
        inside = np.abs(v) <= s + 1e-12
        m1 = float(np.sum(p[inside] * v[inside]))
        m2 = float(np.sum(p[inside] * v[inside] ** 2))
        m3 = float(np.sum(p[inside] * np.abs(v[inside]) ** 3))
        tail = float(np.sum(p[~inside]))
        return TruncatedMoments(m1, m2, m3, tail, s, "exact")
    if n is None:
        raise ValueError(
            f"{model.name} has no closed-form jump law at x={x}; pass a sample "
            "count n for Monte Carlo moments")
    rng = path_stream(seed, 0)
    xs = np.full(n, float(x))
    j = model.sample_many(xs, rng)
    inside = np.abs(j) <= s
    ji = np.where(inside, j, 0.0)
    m1, m2 = float(ji.mean()), float((ji ** 2).mean())
    m3 = float((np.abs(ji) ** 3).mean())
    tail = float((~inside).mean())
    se1 = float(ji.std(ddof=1) / math.sqrt(n))
    se2 = float((ji ** 2).std(ddof=1) / math.sqrt(n))
    return TruncatedMoments(m1, m2, m3, tail, s, "monte_carlo", n, se1, se2)
