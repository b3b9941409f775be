"""Polarizing beam splitters and the lossy two-fiber channel with a collective unitary."""

from __future__ import annotations

import cmath
import math
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable

import numpy as np

from .quantum import (
    ATOL_EXACT,
    BasisState,
    ModeLabel,
    Pol,
    QubitState,
    Spatial,
    StateVector,
    _permute,
    bin_modes,
    sample_outcome,
)


@dataclass(frozen=True)
class NoiseParams:
    """Collective-unitary parameters.

    Arm S maps H to ``a|H> + b|V>``; arm L maps V to ``c|H> + d|V>``. The
    unexcited columns are completed as ``V -> -b*|H> + a*|V>`` in arm S and
    ``H -> d*|H> - c*|V>`` in arm L.
    """

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, complex(getattr(self, name)))
        if not self.is_unitary():
            raise ValueError(
                f"non-unitary noise parameters: |a|^2+|b|^2={abs(self.a)**2 + abs(self.b)**2!r}, "
                f"|c|^2+|d|^2={abs(self.c)**2 + abs(self.d)**2!r}"
            )

    @classmethod
    def unchecked(cls, a: complex, b: complex, c: complex, d: complex) -> NoiseParams:
        """Build without validation; used to feed corrupted channels to negative tests."""
        obj = object.__new__(cls)
        for name, value in zip("abcd", (a, b, c, d)):
            object.__setattr__(obj, name, complex(value))
        return obj

    @classmethod
    def identity(cls) -> NoiseParams:
        return cls(1, 0, 0, 1)

    @classmethod
    def from_moduli(
        cls, a_abs2: float, d_abs2: float, phases: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    ) -> NoiseParams:
        """Parameters with ``|a|^2 = a_abs2``, ``|d|^2 = d_abs2`` and the given phases of a, b, c, d."""
        for name, v in (("a_abs2", a_abs2), ("d_abs2", d_abs2)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        pa, pb, pc, pd = phases
        return cls(
            cmath.rect(math.sqrt(a_abs2), pa),
            cmath.rect(math.sqrt(1.0 - a_abs2), pb),
            cmath.rect(math.sqrt(1.0 - d_abs2), pc),
            cmath.rect(math.sqrt(d_abs2), pd),
        )

    def is_unitary(self, tol: float = ATOL_EXACT) -> bool:
        return (
            abs(abs(self.a) ** 2 + abs(self.b) ** 2 - 1.0) <= tol
            and abs(abs(self.c) ** 2 + abs(self.d) ** 2 - 1.0) <= tol
        )

    @property
    def moduli2(self) -> tuple[float, float, float, float]:
        return abs(self.a) ** 2, abs(self.b) ** 2, abs(self.c) ** 2, abs(self.d) ** 2

    def arm_matrix(self, arm: Spatial) -> tuple[tuple[complex, complex], tuple[complex, complex]]:
        """2x2 matrix of one arm in the (H, V) basis, rows indexed by output polarization."""
        a, b, c, d = self.a, self.b, self.c, self.d
        if arm == Spatial.S:
            return ((a, -b.conjugate()), (b, a.conjugate()))
        return ((d.conjugate(), c), (-c.conjugate(), d))


@dataclass(frozen=True)
class ChannelModel:
    delta: NoiseParams
    transmission: float

    def __post_init__(self):
        if not 0.0 <= self.transmission <= 1.0:
            raise ValueError(f"transmission must lie in [0, 1], got {self.transmission}")


def _swap_sv_lv(time_bins: Iterable[int]) -> dict[ModeLabel, ModeLabel]:
    mapping = {}
    for t in time_bins:
        sv = ModeLabel(t, Spatial.S, Pol.V)
        lv = ModeLabel(t, Spatial.L, Pol.V)
        mapping[sv], mapping[lv] = lv, sv
    return mapping


@lru_cache(maxsize=1 << 14)
def _pbs_split(state: StateVector, time_bins: tuple[int, ...]) -> StateVector:
    for t in time_bins:
        arm_l = set(bin_modes(t)[2:])
        for basis in state:
            if basis.total(arm_l):
                raise ValueError(f"time bin {t} already has photons in arm L before the splitter")
    return _permute(state, _swap_sv_lv(time_bins))


def pbs_split(state: StateVector, time_bins: Iterable[int]) -> StateVector:
    """Route Alice's input register (spatial S) into the two fibers: H stays in S, V goes to L."""
    return _pbs_split(state, tuple(sorted(set(time_bins))))


@lru_cache(maxsize=1 << 14)
def _pbs_merge(state: StateVector, time_bins: tuple[int, ...]) -> StateVector:
    return _permute(state, _swap_sv_lv(time_bins))


def pbs_merge(state: StateVector, time_bins: Iterable[int]) -> StateVector:
    """Recombine the fibers onto Bob's output modes s, l.

    (S,H) -> s H, (S,V) -> l V, (L,H) -> l H, (L,V) -> s V. Bob's modes reuse the
    ``Spatial`` labels, so S stands for s and L for l after this call.
    """
    return _pbs_merge(state, tuple(sorted(set(time_bins))))


@lru_cache(maxsize=4096)
def _fock_rotation(matrix: tuple, nh: int, nv: int) -> tuple[tuple[int, int, complex], ...]:
    """Image of |nh, nv> under the single-photon map ``matrix``, as (kh, kv, amplitude) triples.

    Uses (a_H^dag)^nh (a_V^dag)^nv / sqrt(nh! nv!) with each creation operator
    replaced by its image, then normalizes monomials to Fock amplitudes.
    """
    (u_hh, u_hv), (u_vh, u_vv) = matrix
    # polynomial in the output H creation operator, indexed by its power
    poly = np.zeros(nh + nv + 1, dtype=complex)
    poly[0] = 1.0
    deg = 0
    for col, k in (((u_hh, u_vh), nh), ((u_hv, u_vv), nv)):
        for _ in range(k):
            nxt = np.zeros_like(poly)
            # multiply by (col_h x + col_v y); y-powers follow from total degree
            nxt[1 : deg + 2] += col[0] * poly[: deg + 1]
            nxt[: deg + 1] += col[1] * poly[: deg + 1]
            poly = nxt
            deg += 1
    norm = math.lgamma(nh + 1) + math.lgamma(nv + 1)
    out = []
    for kh in range(deg + 1):
        coef = poly[kh]
        if coef == 0:
            continue
        kv = deg - kh
        out.append((kh, kv, complex(coef * math.exp(0.5 * (math.lgamma(kh + 1) + math.lgamma(kv + 1) - norm)))))
    return tuple(out)


@lru_cache(maxsize=1 << 14)
def _apply_collective_unitary(state: StateVector, delta: NoiseParams, time_bins: tuple[int, ...]) -> StateVector:
    arms = []
    for t in time_bins:
        for arm in Spatial:
            h = ModeLabel(t, arm, Pol.H)
            v = ModeLabel(t, arm, Pol.V)
            arms.append((h, v, delta.arm_matrix(arm)))
    out: dict[BasisState, complex] = defaultdict(complex)
    for basis, amp in state.items():
        counts = dict(basis)
        partial = [({m: n for m, n in counts.items()}, amp)]
        for h, v, matrix in arms:
            nh, nv = counts.get(h, 0), counts.get(v, 0)
            if nh == 0 and nv == 0:
                continue
            image = _fock_rotation(matrix, nh, nv)
            nxt = []
            for occ, x in partial:
                for kh, kv, c in image:
                    d = dict(occ)
                    d[h], d[v] = kh, kv
                    nxt.append((d, x * c))
            partial = nxt
        for occ, x in partial:
            out[BasisState._from_counts(occ)] += x
    arm_modes = [m for h, v, _ in arms for m in (h, v)]
    return StateVector(out, (*state.modes, *arm_modes))


def apply_collective_unitary(state: StateVector, delta: NoiseParams, time_bins: Iterable[int]) -> StateVector:
    """Apply the same arm unitaries to every photon of the listed bins (fiber-side modes)."""
    if not delta.is_unitary():
        raise ValueError(f"collective channel is not unitary: {delta}")
    return _apply_collective_unitary(state, delta, tuple(sorted(set(time_bins))))


def _loss_mode_table(state: StateVector, mode: ModeLabel, T: float) -> dict[int, tuple[float, StateVector]]:
    """Lost-photon count in ``mode`` -> (probability, posterior) under per-photon survival T."""
    branches: dict[int, dict[BasisState, complex]] = defaultdict(lambda: defaultdict(complex))
    for basis, amp in state.items():
        n = basis.count(mode)
        counts = dict(basis)
        for k in range(n + 1):
            w = math.comb(n, k) * T ** (n - k) * (1.0 - T) ** k
            if w == 0.0:
                continue
            counts[mode] = n - k
            branches[k][BasisState._from_counts(counts)] += amp * math.sqrt(w)
    table = {}
    for k, terms in sorted(branches.items()):
        prob = math.fsum(abs(a) ** 2 for a in terms.values())
        if prob > 0.0:
            table[k] = (prob, StateVector(terms, state.modes))
    return table


@lru_cache(maxsize=1 << 14)
def loss_table(state: StateVector, T: float, time_bins: tuple[int, ...]) -> dict[tuple, tuple[float, StateVector]]:
    """Full loss-record distribution for the listed bins.

    A record is the tuple of (mode, lost count) pairs with non-zero counts; the
    environment keeps the lost photons, so each record is a separate branch.
    """
    table: dict[tuple, tuple[float, StateVector]] = {(): (1.0, state)}
    for t in time_bins:
        for mode in bin_modes(t):
            nxt = {}
            for record, (p, post) in table.items():
                if not any(b.count(mode) for b in post):
                    nxt[record] = (p, post)
                    continue
                for k, (pk, sub) in _loss_mode_table(post, mode, T).items():
                    key = record + ((mode, k),) if k else record
                    nxt[key] = (p * pk, sub)
            table = nxt
    return table


def apply_loss(
    state: StateVector, T: float, time_bins: Iterable[int], rng: np.random.Generator
) -> tuple[StateVector | None, tuple]:
    """Sample which photons of the listed bins survive a fiber with transmission T.

    Returns the posterior and the loss record; the posterior is None only if
    every photon was lost and nothing else remains.
    """
    if not 0.0 <= T <= 1.0:
        raise ValueError(f"transmission must lie in [0, 1], got {T}")
    if T == 1.0:
        return state, ()
    table = loss_table(state, float(T), tuple(sorted(set(time_bins))))
    record = sample_outcome(table, rng)
    return table[record][1], record


def attenuate_coherent(mu: float, T: float) -> float:
    """Mean photon number of a coherent pulse after a fiber of transmission T."""
    if not 0.0 <= T <= 1.0:
        raise ValueError(f"transmission must lie in [0, 1], got {T}")
    return mu * T


def transmit(
    state: StateVector, channel: ChannelModel, time_bins: Iterable[int], rng: np.random.Generator
) -> tuple[StateVector, tuple]:
    """Send the listed bins from Alice's register to Bob's output modes.

    Loss is sampled before the collective unitary: both arm maps act within one
    fiber and loss is polarization independent, so the two orders give the same
    channel while the early loss keeps multi-photon states small.
    """
    bins = tuple(sorted(set(time_bins)))
    state = pbs_split(state, bins)
    state, record = apply_loss(state, channel.transmission, bins, rng)
    state = apply_collective_unitary(state, channel.delta, bins)
    return pbs_merge(state, bins), record


def mode_qubits(delta: NoiseParams, mode: Spatial, theta: float = 0.0) -> tuple[QubitState, QubitState]:
    """Polarization of a |+_theta> photon and of a |+> pulse photon found in output ``mode``.

    Mode s carries (a, e^{i theta} d) and (a, d); mode l carries
    (e^{i theta} c, b) and (c, b), all in the (H, V) basis.
    """
    ph = cmath.exp(1j * theta)
    if Spatial(mode) == Spatial.S:
        sig, anc = (delta.a, ph * delta.d), (delta.a, delta.d)
    else:
        sig, anc = (ph * delta.c, delta.b), (delta.c, delta.b)
    return QubitState.from_vector(sig), QubitState.from_vector(anc)


class DeltaScheme(str, Enum):
    UNIFORM_MODULI = "uniform_moduli"
    HAAR_PER_ARM = "haar_per_arm"
    FIXED = "fixed"


def sample_delta(
    rng: np.random.Generator, scheme: DeltaScheme | str = DeltaScheme.UNIFORM_MODULI, fixed: NoiseParams | tuple | None = None
) -> NoiseParams:
    """Draw collective-noise parameters.

    ``uniform_moduli``: |a|^2 and |d|^2 uniform on [0, 1], all four phases uniform.
    ``haar_per_arm``: each arm's excited column is a Haar-random unit vector.
    ``fixed``: validate and return ``fixed``.
    """
    scheme = DeltaScheme(scheme)
    if scheme is DeltaScheme.FIXED:
        if fixed is None:
            raise ValueError("fixed scheme needs explicit parameters")
        return fixed if isinstance(fixed, NoiseParams) else NoiseParams(*fixed)
    if scheme is DeltaScheme.UNIFORM_MODULI:
        a2, d2 = rng.random(2)
        return NoiseParams.from_moduli(float(a2), float(d2), tuple(float(x) for x in rng.uniform(0, 2 * math.pi, 4)))
    cols = []
    for _ in range(2):
        z = rng.normal(size=2) + 1j * rng.normal(size=2)
        z /= np.linalg.norm(z)
        cols.append(z)
    (a, b), (c, d) = cols
    return NoiseParams(a, b, c, d)
