"""Trial-level simulation of the three rotated-qubit delivery protocols."""

from __future__ import annotations

import cmath
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Sequence

import numpy as np

from .channel import ChannelModel, NoiseParams, mode_qubits, transmit
from .quantum import (
    Pol,
    QubitState,
    Spatial,
    StateVector,
    apply_arm_swap_and_x,
    apply_pauli_x,
    apply_pol_flip,
    arm_modes,
    bin_modes,
    dfse_table,
    extract_photon,
    extract_qubit,
    fidelity,
    make_bell_psi_plus,
    make_coherent_pulse,
    make_rotated_qubit,
    measure_photon_number,
    photon_number_table,
    qubit_state_vector,
    relabel_bins,
    rotate_z,
    sample_outcome,
    tensor,
)

FIDELITY_TOL = 1e-9
# per-step extraction probabilities closer than this to their limit are treated as constant
HOMOGENEOUS_TOL = 1e-14
THREADS_ENV = "DFSBQC_THREADS"


class CorrectnessError(AssertionError):
    """A branch that should deliver the rotated qubit produced something else."""


@dataclass(frozen=True)
class Angle8:
    k: int

    def __post_init__(self):
        if not (isinstance(self.k, (int, np.integer)) and 0 <= self.k <= 7):
            raise ValueError(f"angle index must be an integer in 0..7, got {self.k}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def value(self) -> float:
        return self.k * math.pi / 4

    @classmethod
    def random(cls, rng: np.random.Generator) -> Angle8:
        return cls(int(rng.integers(8)))


def _angle(theta: Angle8 | int | float) -> float:
    if isinstance(theta, Angle8):
        return theta.value
    if isinstance(theta, (int, np.integer)):
        return Angle8(int(theta)).value
    return float(theta)


class Protocol(str, Enum):
    ENTANGLEMENT = "entanglement"
    SINGLE_PHOTON = "single_photon"
    COHERENT = "coherent"


@dataclass(frozen=True)
class ProtocolConfig:
    protocol: Protocol
    channel: ChannelModel
    N: int = 1
    mu: float = 0.0
    cutoff: int | None = None
    seed: int = 42
    # "sampling" draws pulse photon counts; "fock" propagates the truncated pulse state
    coherent_path: str = "sampling"

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if self.N < 1:
            raise ValueError(f"N must be at least 1, got {self.N}")
        if self.mu < 0 or not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite and non-negative, got {self.mu}")
        if self.coherent_path not in ("sampling", "fock"):
            raise ValueError(f"unknown coherent path {self.coherent_path!r}")


@dataclass
class TrialOutcome:
    success: bool
    channel_uses: int
    output: QubitState | None = None
    output_angle: float | None = None
    transcript: list[tuple[str, object]] = field(default_factory=list)

    def __post_init__(self):
        if self.success and self.output is None:
            raise ValueError("a successful trial must carry its output qubit")


def _check_output(output: QubitState, angle: float, where: str) -> None:
    f = fidelity(output, make_rotated_qubit(angle))
    if f < 1.0 - FIDELITY_TOL:
        raise CorrectnessError(f"{where}: fidelity {f:.15f} with |+_{angle:.6f}>")


def dfse(state: StateVector, control, target, rng: np.random.Generator) -> tuple[bool, StateVector]:
    """CNOT control -> target, then a destructive Z measurement of the target; V means success."""
    table = dfse_table(state, tuple(control), tuple(target))
    pol = sample_outcome(table, rng)
    return pol == Pol.V, table[pol][1]


def _qnd_arms(state: StateVector, bins: tuple[int, ...], rng) -> tuple[int, int, StateVector]:
    """Photon-number measurements of Bob's s modes, then l modes, over the listed bins."""
    n_s, state, _ = measure_photon_number(state, arm_modes(bins, Spatial.S), rng)
    n_l, state, _ = measure_photon_number(state, arm_modes(bins, Spatial.L), rng)
    return n_s, n_l, state


@lru_cache(maxsize=64)
def _rotated_bell(theta: float) -> StateVector:
    return rotate_z(make_bell_psi_plus(1, 2), (1, Spatial.S), theta)


@lru_cache(maxsize=64)
def _rotated_photon(theta: float) -> StateVector:
    return qubit_state_vector(make_rotated_qubit(theta), 1)


# ---------------------------------------------------------------------------
# Entanglement-based protocol
# ---------------------------------------------------------------------------


def _require(cfg: ProtocolConfig, protocol: Protocol) -> None:
    if cfg.protocol is not protocol:
        raise ValueError(f"config is for {cfg.protocol.value}, not {protocol.value}")


def run_entanglement_trial(cfg: ProtocolConfig, theta: Angle8 | int | float, rng: np.random.Generator) -> TrialOutcome:
    _require(cfg, Protocol.ENTANGLEMENT)
    angle = _angle(theta)
    log: list[tuple[str, object]] = []
    bins = (1, 2)
    state, _ = transmit(_rotated_bell(angle), cfg.channel, bins, rng)
    n_s, n_l, state = _qnd_arms(state, bins, rng)
    log.append(("qnd", (n_s, n_l)))
    if n_s + n_l < 2:
        return TrialOutcome(False, 2, transcript=log)
    if (n_s, n_l) == (1, 1):
        for b in bins:
            state = apply_pol_flip(state, b)
        n_s, n_l, state = _qnd_arms(state, bins, rng)
        log.append(("qnd_after_flip", (n_s, n_l)))
        if (n_s, n_l) == (1, 1):
            raise CorrectnessError("polarization flip left the pair split across s and l")
    if (n_s, n_l) == (0, 2):
        state = apply_arm_swap_and_x(state, bins)
        log.append(("correction", "swap_x"))
    ok, state = dfse(state, (1, Spatial.S), (2, Spatial.S), rng)
    log.append(("target", "V" if ok else "H"))
    if not ok:
        raise CorrectnessError("decoding CNOT left the target in H")
    output = extract_qubit(state, (1, Spatial.S))
    _check_output(output, angle, "entanglement trial")
    return TrialOutcome(True, 2, output, angle, log)


# ---------------------------------------------------------------------------
# Single-photon-based protocol
# ---------------------------------------------------------------------------


def _receive_photon(theta: float, channel: ChannelModel, rng) -> StateVector | None:
    state, _ = transmit(_rotated_photon(theta), channel, (1,), rng)
    n, state, _ = measure_photon_number(state, frozenset(bin_modes(1)), rng)
    return state if n == 1 else None


def _extract_in_mode(state: StateVector, mode: Spatial, rng) -> tuple[bool, StateVector]:
    ok, state = dfse(state, (1, mode), (2, mode), rng)
    if ok and mode == Spatial.L:
        state = apply_pauli_x(state, (1, Spatial.L))
    return ok, state


def _pair_attempt(first: StateVector, second: StateVector, rng, log) -> tuple[bool, StateVector | None, Spatial | None]:
    state = tensor(first, relabel_bins(second, ((1, 2),)))
    bins = (1, 2)
    n_s, n_l, state = _qnd_arms(state, bins, rng)
    log.append(("qnd", (n_s, n_l)))
    rescued = False
    if (n_s, n_l) == (1, 1):
        for b in bins:
            state = apply_pol_flip(state, b)
        n_s, n_l, state = _qnd_arms(state, bins, rng)
        log.append(("qnd_after_flip", (n_s, n_l)))
        if (n_s, n_l) == (1, 1):
            log.append(("discard", None))
            return False, None, None
        rescued = True
    mode = Spatial.S if n_s == 2 else Spatial.L
    ok, state = _extract_in_mode(state, mode, rng)
    log.append(("dfse", "V" if ok else "H"))
    if rescued and not ok:
        raise CorrectnessError("extraction after the polarization flip failed")
    return ok, state, mode


def run_single_photon_trial(
    cfg: ProtocolConfig, thetas: Sequence[Angle8 | int | float], rng: np.random.Generator
) -> TrialOutcome:
    """One batch of 2N photons; succeeds on the first pair whose extraction heralds V.

    Photons are received in order and paired as they arrive. The batch stops at
    the first success, which does not change any statistic because photons
    are independent.
    """
    _require(cfg, Protocol.SINGLE_PHOTON)
    if len(thetas) != 2 * cfg.N:
        raise ValueError(f"need {2 * cfg.N} angles, got {len(thetas)}")
    angles = [_angle(t) for t in thetas]
    uses = 2 * cfg.N
    log: list[tuple[str, object]] = []
    waiting: tuple[int, StateVector] | None = None
    for k, angle in enumerate(angles):
        state = _receive_photon(angle, cfg.channel, rng)
        if state is None:
            continue
        log.append(("arrived", k + 1))
        if waiting is None:
            waiting = (k, state)
            continue
        j, first = waiting
        waiting = None
        log.append(("pair", (j + 1, k + 1)))
        ok, post, mode = _pair_attempt(first, state, rng, log)
        if not ok:
            continue
        out_angle = (angles[j] - angles[k]) % (2 * math.pi)
        output = extract_qubit(post, (1, mode))
        _check_output(output, out_angle, "single-photon trial")
        return TrialOutcome(True, uses, output, out_angle, log)
    return TrialOutcome(False, uses, transcript=log)


def pair_branch_table(delta: NoiseParams, theta_1: float = 0.0, theta_2: float = 0.0) -> dict[str, float]:
    """Exact per-branch success probabilities of one lossless pair, from explicit state evolution.

    Keys follow the first QND result: ``ss`` (2,0), ``ll`` (0,2), and the rescued
    (1,1) outcomes ``flip_ss`` and ``flip_ll``.
    """
    channel = ChannelModel(delta, 1.0)
    rng = np.random.default_rng(0)
    first, _ = transmit(_rotated_photon(theta_1), channel, (1,), rng)
    second, _ = transmit(_rotated_photon(theta_2), channel, (1,), rng)
    state = tensor(first, relabel_bins(second, ((1, 2),)))
    bins = (1, 2)
    out = {"ss": 0.0, "ll": 0.0, "flip_ss": 0.0, "flip_ll": 0.0}

    def arms_table(st):
        rows = []
        for n_s, (p_s, post_s) in photon_number_table(st, arm_modes(bins, Spatial.S)).items():
            for n_l, (p_l, post) in photon_number_table(post_s, arm_modes(bins, Spatial.L)).items():
                rows.append(((n_s, n_l), p_s * p_l, post))
        return rows

    def extraction(st, mode):
        table = dfse_table(st, (1, mode), (2, mode))
        return table[Pol.V][0] if Pol.V in table else 0.0

    for outcome, p, post in arms_table(state):
        if outcome == (2, 0):
            out["ss"] += p * extraction(post, Spatial.S)
        elif outcome == (0, 2):
            out["ll"] += p * extraction(post, Spatial.L)
        elif outcome == (1, 1):
            flipped = apply_pol_flip(apply_pol_flip(post, 1), 2)
            for second_outcome, p2, post2 in arms_table(flipped):
                if second_outcome == (2, 0):
                    out["flip_ss"] += p * p2 * extraction(post2, Spatial.S)
                elif second_outcome == (0, 2):
                    out["flip_ll"] += p * p2 * extraction(post2, Spatial.L)
    return out


# ---------------------------------------------------------------------------
# Coherent-light-assisted protocol
# ---------------------------------------------------------------------------


_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def _dfse_amplitudes(signal: np.ndarray, ancilla: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact extraction on a signal qubit and a fresh ancilla, both given as (H, V) amplitudes.

    Returns (success probability, normalized success posterior, normalized failure posterior).
    """
    joint = _CNOT @ np.kron(signal, ancilla)
    ok = joint[[1, 3]]
    bad = joint[[0, 2]]
    p_ok = float(np.vdot(ok, ok).real)
    p_bad = float(np.vdot(bad, bad).real)
    total = p_ok + p_bad
    post_ok = ok / math.sqrt(p_ok) if p_ok > 0 else ok
    post_bad = bad / math.sqrt(p_bad) if p_bad > 0 else bad
    return p_ok / total, post_ok, post_bad


class ExtractionCascade:
    """Collapsed signal states of the repeated extraction, indexed by exponent.

    ``state(e)`` is the signal after net ``1 - e`` successes; ``prob(e)`` is the
    exact probability that the next ancilla heralds success from there. States
    are built at theta = 0; the secret phase rides along unchanged.
    """

    def __init__(self, delta: NoiseParams, mode: Spatial):
        self.mode = Spatial(mode)
        sig, anc = mode_qubits(delta, self.mode)
        self.ancilla = anc.vector
        self._states = {1: sig.vector}
        self._probs: dict[int, float] = {}
        self._top = 1
        a2, b2, c2, d2 = delta.moduli2
        A, B = (a2, d2) if self.mode == Spatial.S else (c2, b2)
        self.p_limit = min(A, B) / (A + B)
        self.homogeneous_from = self._find_homogeneous()

    def _extend(self) -> None:
        e = self._top
        p, post_ok, post_bad = _dfse_amplitudes(self._states[e], self.ancilla)
        self._probs[e] = p
        if e == 1:
            self._states[0] = post_ok
        self._states[e + 1] = post_bad
        self._top = e + 1

    def prob(self, e: int) -> float:
        while e not in self._probs:
            self._extend()
        return self._probs[e]

    def state(self, e: int) -> np.ndarray:
        while e not in self._states:
            self._extend()
        return self._states[e]

    def _find_homogeneous(self, limit: int = 4096) -> int:
        for e in range(1, limit):
            if abs(self.prob(e) - self.p_limit) <= HOMOGENEOUS_TOL:
                return e
        return limit

    def success_posterior(self, e: int) -> np.ndarray:
        """Signal state after a success from exponent ``e``."""
        _, post_ok, _ = _dfse_amplitudes(self.state(e), self.ancilla)
        return post_ok

    def walk(self, ancillas: int, rng: np.random.Generator) -> tuple[bool, int, int]:
        """Run the cascade with ``ancillas`` photons; returns (success, ancillas used, final exponent)."""
        e, used, e_h = 1, 0, self.homogeneous_from
        chunk = 64
        while used < ancillas:
            left = ancillas - used
            if e > left:
                # too few ancillas remain to bring the exponent back to zero
                break
            if e < e_h:
                e += -1 if rng.random() < self.prob(e) else 1
                used += 1
            else:
                if self.p_limit == 0.0:
                    break
                n = min(chunk, left)
                path = e + np.cumsum(np.where(rng.random(n) < self.p_limit, -1, 1))
                below = np.flatnonzero(path < e_h)
                if below.size:
                    used += int(below[0]) + 1
                    e = e_h - 1
                else:
                    used += n
                    e = int(path[-1])
                    chunk *= 2
            if e == 0:
                return True, used, 0
        return False, used, e


@lru_cache(maxsize=512)
def extraction_cascade(delta: NoiseParams, mode: Spatial) -> ExtractionCascade:
    return ExtractionCascade(delta, mode)


def _coherent_output(cascade: ExtractionCascade, angle: float) -> QubitState:
    h, v = cascade.state(0)
    ph = cmath.exp(1j * angle)
    if cascade.mode == Spatial.S:
        return QubitState.from_vector((h, ph * v))
    # the secret phase sits on H in mode l; Pauli X restores |+_theta>
    return QubitState.from_vector((v, ph * h))


def _run_coherent_sampling(cfg: ProtocolConfig, angle: float, rng) -> TrialOutcome:
    ch = cfg.channel
    delta = ch.delta
    log: list[tuple[str, object]] = []
    a2, _, _, d2 = delta.moduli2
    w_s = 0.5 * (a2 + d2)
    if rng.random() >= ch.transmission:
        log.append(("signal", "lost"))
        return TrialOutcome(False, 2, transcript=log)
    mode = Spatial.S if rng.random() < w_s else Spatial.L
    lam = cfg.mu * ch.transmission
    counts = {Spatial.S: int(rng.poisson(lam * w_s)), Spatial.L: int(rng.poisson(lam * (1.0 - w_s)))}
    log.append(("signal", mode.name.lower()))
    log.append(("ancillas", (counts[Spatial.S], counts[Spatial.L])))
    ancillas = counts[mode]
    if ancillas == 0:
        return TrialOutcome(False, 2, transcript=log)
    cascade = extraction_cascade(delta, mode)
    ok, used, e = cascade.walk(ancillas, rng)
    log.append(("extractions", used))
    log.append(("exponent", e))
    if not ok:
        return TrialOutcome(False, 2, transcript=log)
    output = _coherent_output(cascade, angle)
    _check_output(output, angle, "coherent trial")
    return TrialOutcome(True, 2, output, angle, log)


@lru_cache(maxsize=16)
def _pulse(mu: float, cutoff: int | None) -> StateVector:
    return make_coherent_pulse(mu, None, cutoff, time_bin=2)


def _run_coherent_fock(cfg: ProtocolConfig, angle: float, rng) -> TrialOutcome:
    ch = cfg.channel
    log: list[tuple[str, object]] = []
    signal, _ = transmit(_rotated_photon(angle), ch, (1,), rng)
    pulse, _ = transmit(_pulse(cfg.mu, cfg.cutoff), ch, (2,), rng)
    n_s, n_l, signal = _qnd_arms(signal, (1,), rng)
    p_s, p_l, pulse = _qnd_arms(pulse, (2,), rng)
    log.append(("qnd_signal", (n_s, n_l)))
    log.append(("qnd_pulse", (p_s, p_l)))
    if n_s + n_l == 0:
        return TrialOutcome(False, 2, transcript=log)
    mode = Spatial.S if n_s else Spatial.L
    ancillas = p_s if mode == Spatial.S else p_l
    state = tensor(signal, pulse)
    e, used = 1, 0
    while e > 0 and used < ancillas:
        state = extract_photon(state, (2, mode), 3)
        ok, state = dfse(state, (1, mode), (3, mode), rng)
        e += -1 if ok else 1
        used += 1
    log.append(("extractions", used))
    log.append(("exponent", e))
    if e != 0:
        return TrialOutcome(False, 2, transcript=log)
    if mode == Spatial.L:
        state = apply_pauli_x(state, (1, Spatial.L))
    output = extract_qubit(state, (1, mode))
    _check_output(output, angle, "coherent trial (Fock path)")
    return TrialOutcome(True, 2, output, angle, log)


def run_coherent_trial(cfg: ProtocolConfig, theta: Angle8 | int | float, rng: np.random.Generator) -> TrialOutcome:
    _require(cfg, Protocol.COHERENT)
    angle = _angle(theta)
    if cfg.coherent_path == "fock":
        return _run_coherent_fock(cfg, angle, rng)
    return _run_coherent_sampling(cfg, angle, rng)


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for trial ``index`` of the stream ``seed``."""
    return np.random.default_rng((seed, index))


def run_trial(cfg: ProtocolConfig, index: int) -> TrialOutcome:
    """Trial ``index`` of the stream defined by ``cfg.seed``; angles are drawn from the trial's own RNG."""
    rng = trial_rng(cfg.seed, index)
    if cfg.protocol is Protocol.ENTANGLEMENT:
        return run_entanglement_trial(cfg, Angle8.random(rng), rng)
    if cfg.protocol is Protocol.SINGLE_PHOTON:
        thetas = [Angle8(int(k)) for k in rng.integers(8, size=2 * cfg.N)]
        return run_single_photon_trial(cfg, thetas, rng)
    return run_coherent_trial(cfg, Angle8.random(rng), rng)


def _count_successes(cfg: ProtocolConfig, start: int, stop: int) -> int:
    return sum(run_trial(cfg, i).success for i in range(start, stop))


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def estimate_success(cfg: ProtocolConfig, trials: int, workers: int | None = None) -> tuple[float, float]:
    """Monte Carlo success probability and its binomial standard error.

    Trial i draws from ``trial_rng(cfg.seed, i)``, so the estimate does not
    depend on the worker count.
    """
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    n_workers = min(worker_count(workers), trials)
    if n_workers == 1:
        successes = _count_successes(cfg, 0, trials)
    else:
        bounds = np.linspace(0, trials, n_workers + 1).astype(int)
        with ProcessPoolExecutor(n_workers) as pool:
            parts = pool.map(_count_successes, [cfg] * n_workers, bounds[:-1], bounds[1:])
            successes = sum(parts)
    p = successes / trials
    return p, math.sqrt(p * (1.0 - p) / trials)


# ---------------------------------------------------------------------------
# Measurement-angle compensation
# ---------------------------------------------------------------------------


def angle_compensation_stats(
    theta: Angle8 | int | float, phi_prime: float, r: int, rng: np.random.Generator, samples: int
) -> tuple[float, float, float]:
    """Measure |+_theta> at xi = theta + phi' + r pi and undo r on the outcome bit.

    Returns (observed frequency of the de-randomized "+" outcome, expected
    cos^2(phi'/2), binomial standard deviation of the frequency).
    """
    if r not in (0, 1):
        raise ValueError(f"r must be 0 or 1, got {r}")
    angle = _angle(theta)
    xi = angle + phi_prime + r * math.pi
    qubit = make_rotated_qubit(angle)
    plus_xi = make_rotated_qubit(xi)
    p_plus = fidelity(plus_xi, qubit)
    raw_plus = rng.random(samples) < p_plus
    derandomized_plus = raw_plus if r == 0 else ~raw_plus
    expected = math.cos(phi_prime / 2) ** 2
    return float(derandomized_plus.mean()), expected, math.sqrt(expected * (1 - expected) / samples)


def verify_angle_compensation(
    theta: Angle8 | int | float, phi_prime: float, r: int, rng: np.random.Generator, samples: int
) -> bool:
    freq, expected, sigma = angle_compensation_stats(theta, phi_prime, r, rng, samples)
    if sigma < 1e-12:
        return abs(freq - expected) < 1e-12
    return abs(freq - expected) <= 3 * sigma
