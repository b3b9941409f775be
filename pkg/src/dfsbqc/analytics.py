"""Closed-form success probabilities, random-walk combinatorics and exact cascade oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import NoiseParams, mode_qubits
from .quantum import (
    ATOL_TRUNCATION,
    Pol,
    Spatial,
    dfse_table,
    qubit_state_vector,
    state_fidelity,
    tensor,
)

POISSON_TAIL_TOL = ATOL_TRUNCATION
MAX_ORACLE_ANCILLAS = 40


def _kahan_cumsum(values) -> np.ndarray:
    out = np.empty(len(values))
    total = 0.0
    comp = 0.0
    for i, x in enumerate(values):
        y = float(x) - comp
        t = total + y
        comp = (t - total) - y
        total = t
        out[i] = total
    return out


def _check_T(T: float) -> None:
    if not 0.0 <= T <= 1.0:
        raise ValueError(f"transmission must lie in [0, 1], got {T}")


def p_entanglement(T: float) -> float:
    """Both photons of the pair must arrive."""
    _check_T(T)
    return T * T


def p_single_photon(T: float, N: int) -> float:
    """Success probability of a batch of 2N photons: M arrive, floor(M/2) pairs each succeed w.p. 1/2."""
    _check_T(T)
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    n = 2 * N
    terms = []
    for m in range(n + 1):
        pairs = m // 2
        if pairs == 0:
            continue
        terms.append(math.comb(n, m) * T**m * (1.0 - T) ** (n - m) * (1.0 - 0.5**pairs))
    return math.fsum(terms)


def catalan(t: int) -> int:
    if t < 0:
        raise ValueError(f"catalan index must be non-negative, got {t}")
    return math.comb(2 * t, t) // (t + 1)


@dataclass(frozen=True)
class WalkParams:
    """Walk from position 1 that steps toward the absorbing origin with probability ``q``.

    ``max_steps`` of None means an unlimited number of steps.
    """

    q: float
    max_steps: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        if self.max_steps is not None and self.max_steps < 0:
            raise ValueError(f"max_steps must be non-negative, got {self.max_steps}")


def walk_terms(q: float, count: int) -> np.ndarray:
    """C_k (1-q)^k q^(k+1) for k < count: probability of absorption at step 2k+1."""
    out = np.zeros(count)
    if count == 0 or q == 0.0:
        return out
    term = q
    out[0] = term
    pq = q * (1.0 - q)
    for k in range(count - 1):
        term *= 2.0 * (2 * k + 1) / (k + 2) * pq
        if term == 0.0:
            break
        out[k + 1] = term
    return out


def walk_absorption_table(q: float, max_steps: int) -> np.ndarray:
    """Absorption probability within t steps for every t in 0..max_steps."""
    terms = walk_terms(q, (max_steps + 1) // 2)
    prefix = np.concatenate(([0.0], _kahan_cumsum(terms)))
    # absorption can only happen on odd steps, so t and t+1 share a value
    idx = (np.arange(max_steps + 1) + 1) // 2
    return prefix[idx]


def walk_absorption(params: WalkParams | float, max_steps: int | None = None) -> float:
    """Probability that the walk reaches the origin within ``max_steps`` steps."""
    if not isinstance(params, WalkParams):
        params = WalkParams(float(params), max_steps)
    q, steps = params.q, params.max_steps
    if steps is None:
        if q >= 0.5:
            return 1.0
        return q / (1.0 - q)
    return math.fsum(walk_terms(q, (steps + 1) // 2))


def absorption_closed_form(q: float) -> float:
    """(1 - |1 - 2q|) / (2(1 - q)), the unlimited-walk absorption as a |1-2q| closed form."""
    if q == 1.0:
        return 1.0
    return (1.0 - abs(1.0 - 2.0 * q)) / (2.0 * (1.0 - q))


def signal_weight_s(delta: NoiseParams) -> float:
    """Probability that the signal photon exits in mode s: (|a|^2 + |d|^2) / 2."""
    a2, _, _, d2 = delta.moduli2
    return 0.5 * (a2 + d2)


def q1(delta: NoiseParams) -> float:
    """First-step extraction probability in mode s: 2|ad|^2 / (|a|^2 + |d|^2)^2."""
    a2, _, _, d2 = delta.moduli2
    if a2 + d2 == 0.0:
        raise ValueError("mode s is never populated (|a|^2 + |d|^2 = 0)")
    return 2.0 * a2 * d2 / (a2 + d2) / (a2 + d2)


def q2(delta: NoiseParams) -> float:
    """{2 - 2(|a|^2+|d|^2) + |a|^4 + |d|^4} / (2 - |a|^2 - |d|^2)^2.

    In terms of |b| and |c| this is (|b|^4 + |c|^4)/(|b|^2 + |c|^2)^2, the
    per-step failure weight of the mode-l walk.
    """
    a2, _, _, d2 = delta.moduli2
    den = 2.0 - a2 - d2
    if den == 0.0:
        raise ValueError("mode l is never populated (|a|^2 + |d|^2 = 2)")
    return (2.0 - 2.0 * (a2 + d2) + a2 * a2 + d2 * d2) / den / den


def q_mode_l(delta: NoiseParams) -> float:
    """First-step extraction probability in mode l: 2|bc|^2 / (|b|^2 + |c|^2)^2."""
    _, b2, c2, _ = delta.moduli2
    if b2 + c2 == 0.0:
        raise ValueError("mode l is never populated (|b|^2 + |c|^2 = 0)")
    return 2.0 * b2 * c2 / (b2 + c2) / (b2 + c2)


def q_mode_l_from_ad(delta: NoiseParams) -> float:
    """Mode-l extraction probability written with |a|, |d|: {2 - 2(|a|^2+|d|^2) + 2|ad|^2}/(2-|a|^2-|d|^2)^2."""
    a2, _, _, d2 = delta.moduli2
    den = 2.0 - a2 - d2
    if den == 0.0:
        raise ValueError("mode l is never populated (|a|^2 + |d|^2 = 2)")
    return (2.0 - 2.0 * (a2 + d2) + 2.0 * a2 * d2) / den / den


def pair_branch_probabilities(delta: NoiseParams) -> dict[str, float]:
    """Per-pair success probability split by the QND branch that produced it (lossless pair).

    Keys: ``ss`` both photons in s, ``ll`` both in l, ``mixed_ac`` and ``mixed_bd``
    the two ways a (1,1) outcome is rescued by the polarization flip.
    """
    a2, b2, c2, d2 = delta.moduli2
    return {"ss": a2 * d2 / 2, "ll": b2 * c2 / 2, "mixed_ac": a2 * c2 / 2, "mixed_bd": b2 * d2 / 2}


# ---------------------------------------------------------------------------
# Coherent-light-assisted protocol
# ---------------------------------------------------------------------------


def _poisson_logpmf(lam: float, n: int) -> np.ndarray:
    k = np.arange(n + 1)
    if lam == 0.0:
        out = np.full(n + 1, -np.inf)
        out[0] = 0.0
        return out
    lg = np.array([math.lgamma(i + 1) for i in range(n + 1)])
    return k * math.log(lam) - lam - lg


def poisson_pmf(lam: float, n: int) -> np.ndarray:
    return np.exp(_poisson_logpmf(lam, n))


def poisson_survival(lam: float, n: int) -> float:
    """P(X > n) for X ~ Poisson(lam), summed from the upper tail to avoid cancellation."""
    if lam == 0.0:
        return 0.0
    top = int(lam + 40.0 * math.sqrt(lam) + 60)
    if n >= top:
        return 0.0
    pmf = poisson_pmf(lam, top)
    return math.fsum(pmf[n + 1 :])


def poisson_cutoff(lam: float, tol: float = POISSON_TAIL_TOL) -> int:
    """Smallest n with P(X > n) < tol for X ~ Poisson(lam)."""
    if lam == 0.0:
        return 0
    top = int(lam + 40.0 * math.sqrt(lam) + 60)
    pmf = poisson_pmf(lam, top)
    # survival[n] = P(X > n)
    tail = np.concatenate((np.cumsum(pmf[::-1])[::-1][1:], [0.0]))
    return int(np.argmax(tail < tol))


def _resolve_n_max(lam: float, n_max: int | None) -> int:
    if n_max is None:
        return poisson_cutoff(lam)
    tail = poisson_survival(lam, n_max)
    if tail >= POISSON_TAIL_TOL:
        raise ValueError(f"n_max={n_max} leaves Poisson tail {tail:.3g} >= {POISSON_TAIL_TOL}")
    return n_max


def _mode_branches(delta: NoiseParams, q_for_l) -> list[tuple[float, float]]:
    """(signal weight, step success probability) for the populated output modes."""
    w = signal_weight_s(delta)
    out = []
    if w > 0.0:
        out.append((w, q1(delta)))
    if w < 1.0:
        out.append((1.0 - w, q_for_l(delta)))
    return out


def p_coherent(T: float, mu: float, delta: NoiseParams, n_max: int | None = None) -> float:
    """Success probability under the i.i.d. random-walk model of the extraction cascade.

    The double sum over the pulse photon number n and the matching-mode count t
    is evaluated through Poisson thinning: the count in a mode of weight w is
    Poisson(mu T w), truncated at ``n_max``.
    """
    _check_T(T)
    if mu < 0:
        raise ValueError(f"mu must be non-negative, got {mu}")
    lam = mu * T
    n_max = _resolve_n_max(lam, n_max)
    if n_max == 0:
        return 0.0
    total = []
    for w, q in _mode_branches(delta, q_mode_l):
        pmf = poisson_pmf(lam * w, n_max)
        absorb = walk_absorption_table(q, n_max)
        total.append(w * math.fsum(pmf * absorb))
    return T * math.fsum(total)


def p_coherent_double_sum(T: float, mu: float, delta: NoiseParams, n_max: int | None = None) -> float:
    """Literal double sum over (n, t) with binomial splitting; quadratic cost, for small mu."""
    _check_T(T)
    lam = mu * T
    n_max = _resolve_n_max(lam, n_max)
    pois = poisson_pmf(lam, n_max)
    terms = []
    for w, q in _mode_branches(delta, q_mode_l_from_ad):
        absorb = walk_absorption_table(q, n_max)
        for n in range(1, n_max + 1):
            for t in range(1, n + 1):
                terms.append(pois[n] * math.comb(n, t) * w ** (t + 1) * (1.0 - w) ** (n - t) * absorb[t])
    return T * math.fsum(terms)


def p_coherent_limit_coeff(delta: NoiseParams, *, use_q2: bool = False) -> float:
    """Large-mu value of p/T: signal-weighted unlimited absorption in each mode.

    By default the mode-l bracket uses the mode-l extraction probability
    2|bc|^2/(|b|^2+|c|^2)^2. ``use_q2=True`` substitutes q2, the mode-l
    failure weight, in the closed form written with q2.
    """
    q_for_l = q2 if use_q2 else q_mode_l
    return math.fsum(w * absorption_closed_form(q) for w, q in _mode_branches(delta, q_for_l))


# ---------------------------------------------------------------------------
# Exact extraction cascade
# ---------------------------------------------------------------------------


def cascade_step_probability(delta: NoiseParams, mode: Spatial, exponent: int) -> float:
    """Exact extraction probability when the signal is in exponent state ``exponent``.

    With ancilla weights A, B the signal (alpha^e, beta^e) succeeds with
    probability |alpha beta|^2 (A^(e-1) + B^(e-1)) / ((A^e + B^e)(A + B)).
    """
    a2, b2, c2, d2 = delta.moduli2
    A, B = (a2, d2) if Spatial(mode) == Spatial.S else (c2, b2)
    return float(cascade_step_table(A, B, exponent + 1)[exponent])


def cascade_step_table(A: float, B: float, size: int) -> np.ndarray:
    """Per-exponent extraction probabilities for e in 0..size-1 (entry 0 unused, set to 0)."""
    if A + B == 0.0:
        raise ValueError("ancilla mode is empty")
    lo, hi = min(A, B), max(A, B)
    out = np.zeros(size)
    if lo == 0.0:
        return out
    r = lo / hi
    e = np.arange(1, size)
    with np.errstate(under="ignore"):
        out[1:] = lo * (1.0 + r ** (e - 1)) / ((1.0 + r**e) * (A + B))
    return out


@lru_cache(maxsize=256)
def _oracle_states(delta: NoiseParams, mode: int, depth: int):
    """Exact collapsed signal state for every reachable exponent, built by chaining DFSE tables."""
    sig, anc = mode_qubits(delta, Spatial(mode))
    signal = qubit_state_vector(sig, 1)
    ancilla = qubit_state_vector(anc, 2)
    control, target = (1, Spatial.S), (2, Spatial.S)
    states = {1: signal}
    steps = {}
    for e in range(1, depth + 2):
        if e not in states:
            break
        table = dfse_table(tensor(states[e], ancilla), control, target)
        p_ok = table[Pol.V][0] if Pol.V in table else 0.0
        steps[e] = p_ok
        for pol, nxt in ((Pol.V, e - 1), (Pol.H, e + 1)):
            if pol not in table or nxt == 0:
                continue
            post = table[pol][1]
            if nxt in states:
                if state_fidelity(states[nxt], post) < 1.0 - 1e-12:
                    raise AssertionError(f"collapsed state at exponent {nxt} depends on the outcome history")
            else:
                states[nxt] = post
    return states, steps


def oracle_dfse_cascade(delta: NoiseParams, mode: Spatial, ancilla_count: int, *, brute_force: bool = False) -> float:
    """Exact success probability of the repeated extraction with ``ancilla_count`` ancillas.

    Every per-step probability comes from an explicit CNOT and Z measurement on
    the collapsed signal state. Outcome histories that reach the same exponent
    leave the same state (checked), so histories are merged by exponent; with
    ``brute_force=True`` every outcome sequence is enumerated instead.
    """
    if ancilla_count < 0:
        raise ValueError(f"ancilla_count must be non-negative, got {ancilla_count}")
    if ancilla_count > MAX_ORACLE_ANCILLAS:
        raise ValueError(f"ancilla_count above {MAX_ORACLE_ANCILLAS} is not supported by the oracle")
    if ancilla_count == 0:
        return 0.0
    _, steps = _oracle_states(delta, int(mode), ancilla_count)
    if brute_force:
        if ancilla_count > 20:
            raise ValueError("brute-force enumeration is limited to 20 ancillas")

        def walk(e: int, left: int) -> float:
            if e == 0:
                return 1.0
            if left == 0:
                return 0.0
            p = steps[e]
            return p * walk(e - 1, left - 1) + (1.0 - p) * walk(e + 1, left - 1)

        return walk(1, ancilla_count)
    mass = {1: 1.0}
    absorbed = []
    for _ in range(ancilla_count):
        nxt: dict[int, float] = {}
        for e, m in mass.items():
            p = steps[e]
            if e == 1:
                absorbed.append(m * p)
            else:
                nxt[e - 1] = nxt.get(e - 1, 0.0) + m * p
            nxt[e + 1] = nxt.get(e + 1, 0.0) + m * (1.0 - p)
        mass = nxt
    return math.fsum(absorbed)


def cascade_absorption_table(A: float, B: float, max_steps: int, tol: float = 1e-15) -> np.ndarray:
    """Exact cascade success within t ancillas for every t in 0..max_steps.

    Dynamic programming over the exponent with the exact per-step probability.
    For a biased cascade the exponent range is cut where the chance of ever
    returning is below ``tol``; the iteration stops once the in-range mass is
    below ``tol``.
    """
    lo, hi = min(A, B), max(A, B)
    out = np.zeros(max_steps + 1)
    if lo == 0.0 or max_steps == 0:
        return out
    if lo == hi:
        return walk_absorption_table(0.5, max_steps)
    ratio = lo / hi
    # returning from exponent e needs an excursion of probability about ratio^e
    cap = min(max_steps + 2, int(math.log(tol) / math.log(ratio)) + 8)
    p = cascade_step_table(A, B, cap + 2)
    mass = np.zeros(cap + 2)
    mass[1] = 1.0
    total = 0.0
    for t in range(1, max_steps + 1):
        move = mass * p
        total += move[1]
        nxt = np.zeros_like(mass)
        nxt[1:-1] += move[2:]
        nxt[2:] += (mass - move)[1:-1]
        mass = nxt
        out[t] = total
        if mass.sum() < tol:
            out[t + 1 :] = total
            break
    return out


def p_coherent_exact(T: float, mu: float, delta: NoiseParams, n_max: int | None = None) -> float:
    """Success probability with the exact exponent-dependent extraction probabilities."""
    _check_T(T)
    lam = mu * T
    n_max = _resolve_n_max(lam, n_max)
    if n_max == 0:
        return 0.0
    a2, b2, c2, d2 = delta.moduli2
    w = signal_weight_s(delta)
    total = []
    for weight, (A, B) in ((w, (a2, d2)), (1.0 - w, (c2, b2))):
        if weight == 0.0:
            continue
        pmf = poisson_pmf(lam * weight, n_max)
        total.append(weight * math.fsum(pmf * cascade_absorption_table(A, B, n_max)))
    return T * math.fsum(total)
