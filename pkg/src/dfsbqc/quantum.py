"""Sparse photon-occupation state vectors over labelled optical modes.

A mode is addressed by (time bin, spatial arm, polarization). States are
immutable maps from occupation patterns to complex amplitudes; every public
operation returns a new, normalized state. Deterministic operations are
memoized, so repeated protocol trials reuse the same state objects.
"""

from __future__ import annotations

import cmath
import math
from collections import defaultdict
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, NamedTuple

import numpy as np

ATOL_EXACT = 1e-12
ATOL_TRUNCATION = 1e-9

# terms with |amp|^2 below this fraction of the total weight are dropped
_PRUNE_REL = 1e-30
_RENORM_SLACK = 1e-14

_memo = lru_cache(maxsize=1 << 15)


class Spatial(IntEnum):
    S = 0
    L = 1


class Pol(IntEnum):
    H = 0
    V = 1


class _Mode(NamedTuple):
    time_bin: int
    spatial: int
    pol: int


class ModeLabel(_Mode):
    """One optical mode. Tuple order (time_bin, spatial, pol) is the canonical order."""

    __slots__ = ()

    def __new__(cls, time_bin: int, spatial: Spatial | str | int, pol: Pol | str | int):
        if int(time_bin) < 0:
            raise ValueError(f"time_bin must be non-negative, got {time_bin}")
        if isinstance(spatial, str):
            spatial = Spatial[spatial.upper()]
        if isinstance(pol, str):
            pol = Pol[pol.upper()]
        return super().__new__(cls, int(time_bin), int(Spatial(spatial)), int(Pol(pol)))

    def __repr__(self) -> str:
        return f"{self.time_bin}{Spatial(self.spatial).name}{Pol(self.pol).name}"

    __str__ = __repr__


Qubit = tuple[int, Spatial]
"""A polarization qubit address: (time bin, spatial arm)."""


@lru_cache(maxsize=None)
def qubit_modes(time_bin: int, spatial: int) -> tuple[ModeLabel, ModeLabel]:
    """The (H, V) mode pair holding the polarization qubit at ``(time_bin, spatial)``."""
    return ModeLabel(time_bin, spatial, Pol.H), ModeLabel(time_bin, spatial, Pol.V)


@lru_cache(maxsize=None)
def bin_modes(time_bin: int) -> tuple[ModeLabel, ...]:
    return tuple(ModeLabel(time_bin, s, p) for s in Spatial for p in Pol)


@lru_cache(maxsize=None)
def arm_modes(time_bins: tuple[int, ...], spatial: int) -> frozenset[ModeLabel]:
    return frozenset(m for t in time_bins for m in qubit_modes(t, spatial))


class BasisState(tuple):
    """Canonical occupation pattern: sorted ``((mode, count), ...)`` with zero counts absent."""

    __slots__ = ()

    def __new__(cls, occupation: Mapping[ModeLabel, int] | Iterable[tuple[ModeLabel, int]] = ()):
        items = occupation.items() if isinstance(occupation, Mapping) else occupation
        counts: dict[ModeLabel, int] = {}
        for mode, n in items:
            mode = mode if isinstance(mode, ModeLabel) else ModeLabel(*mode)
            if n < 0:
                raise ValueError(f"negative photon count {n} in mode {mode}")
            if mode in counts:
                raise ValueError(f"duplicate mode {mode}")
            counts[mode] = int(n)
        return tuple.__new__(cls, sorted((m, n) for m, n in counts.items() if n))

    @classmethod
    def _from_counts(cls, counts: Mapping[ModeLabel, int]) -> BasisState:
        return tuple.__new__(cls, sorted((m, n) for m, n in counts.items() if n))

    def count(self, mode: ModeLabel) -> int:
        for m, n in self:
            if m == mode:
                return n
        return 0

    def total(self, modes: Iterable[ModeLabel] | None = None) -> int:
        if modes is None:
            return sum(n for _, n in self)
        modes = modes if isinstance(modes, (set, frozenset)) else set(modes)
        return sum(n for m, n in self if m in modes)

    def modes(self) -> tuple[ModeLabel, ...]:
        return tuple(m for m, _ in self)

    def __repr__(self) -> str:
        if not self:
            return "vac"
        return ",".join(f"{m}:{n}" for m, n in self)

    __str__ = __repr__


class StateVector:
    """Normalized complex amplitudes over occupation patterns of a finite mode set.

    Instances are immutable and hashable; equality is exact equality of the
    canonical term list, which is what memoization needs. Compare physical
    states with :func:`state_fidelity` instead.
    """

    __slots__ = ("_items", "_lookup", "modes", "_hash")

    def __init__(
        self,
        terms: Mapping[BasisState, complex] | Iterable[tuple[BasisState, complex]],
        modes: Iterable[ModeLabel] = (),
        *,
        normalize: bool = True,
    ):
        pairs = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[BasisState, complex] = defaultdict(complex)
        for basis, amp in pairs:
            if not isinstance(basis, BasisState):
                basis = BasisState(basis)
            acc[basis] += amp
        weight = math.fsum(abs(a) ** 2 for a in acc.values())
        if weight == 0.0:
            raise ValueError("state has zero norm")
        floor = weight * _PRUNE_REL
        kept = [(b, complex(a)) for b, a in acc.items() if abs(a) ** 2 > floor]
        if normalize:
            kept_weight = math.fsum(abs(a) ** 2 for _, a in kept)
            # already-normalized input is left untouched so equal inputs stay bit-identical
            if abs(kept_weight - 1.0) > _RENORM_SLACK:
                scale = 1.0 / math.sqrt(kept_weight)
                kept = [(b, a * scale) for b, a in kept]
        kept.sort(key=lambda item: item[0])
        used = {m for b, _ in kept for m in b.modes()}
        self._items = tuple(kept)
        self._lookup = None
        self.modes = tuple(sorted(used.union(modes)))
        self._hash = hash((self._items, self.modes))

    # -- mapping-like access -------------------------------------------------
    def items(self) -> tuple[tuple[BasisState, complex], ...]:
        return self._items

    @property
    def terms(self) -> dict[BasisState, complex]:
        return dict(self._items)

    def amplitude(self, basis: BasisState | Mapping[ModeLabel, int]) -> complex:
        if self._lookup is None:
            self._lookup = dict(self._items)
        if not isinstance(basis, BasisState):
            basis = BasisState(basis)
        return self._lookup.get(basis, 0j)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[BasisState]:
        return (b for b, _ in self._items)

    def norm(self) -> float:
        return math.sqrt(math.fsum(abs(a) ** 2 for _, a in self._items))

    def inner(self, other: StateVector) -> complex:
        """<self|other>."""
        if self._lookup is None:
            self._lookup = dict(self._items)
        return sum((self._lookup.get(b, 0j).conjugate() * a for b, a in other._items), 0j)

    def photon_numbers(self, modes: Iterable[ModeLabel] | None = None) -> set[int]:
        return {b.total(modes) for b, _ in self._items}

    # -- identity ------------------------------------------------------------
    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, StateVector):
            return NotImplemented
        return self._hash == other._hash and self._items == other._items and self.modes == other.modes

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        body = " + ".join(f"({a.real:.4g}{a.imag:+.4g}j)|{b}>" for b, a in self._items[:6])
        more = f" + ... ({len(self)} terms)" if len(self) > 6 else ""
        return f"StateVector({body}{more})"

    def serialize(self) -> str:
        """Debug text form: one ``pattern<TAB>re<TAB>im`` line per term, canonical order."""
        return "".join(f"{b}\t{a.real!r}\t{a.imag!r}\n" for b, a in self._items)


def _rebuild(state: StateVector, fn, extra_modes: Iterable[ModeLabel] = ()) -> StateVector:
    """Apply a linear map given per basis state as ``fn(basis) -> [(basis', coef), ...]``."""
    out: dict[BasisState, complex] = defaultdict(complex)
    for basis, amp in state.items():
        for new_basis, coef in fn(basis):
            out[new_basis] += amp * coef
    return StateVector(out, (*state.modes, *extra_modes))


def _project(state: StateVector, keep) -> tuple[float, StateVector | None]:
    """Project onto basis states where ``keep(basis)`` holds; returns (probability, posterior)."""
    kept = [(b, a) for b, a in state.items() if keep(b)]
    prob = math.fsum(abs(a) ** 2 for _, a in kept)
    if prob == 0.0:
        return 0.0, None
    return prob, StateVector(kept, state.modes)


def _permute(state: StateVector, mapping: Mapping[ModeLabel, ModeLabel]) -> StateVector:
    def fn(basis):
        counts: dict[ModeLabel, int] = {}
        for m, n in basis:
            counts[mapping.get(m, m)] = n
        return ((BasisState._from_counts(counts), 1.0),)

    return _rebuild(state, fn, mapping.values())


def _qubit_occupation(basis: BasisState, pair: tuple[ModeLabel, ModeLabel]) -> tuple[int, int]:
    return basis.count(pair[0]), basis.count(pair[1])


# ---------------------------------------------------------------------------
# Single-qubit states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QubitState:
    """A single-photon polarization qubit ``amp_h|H> + amp_v|V>``."""

    amp_h: complex
    amp_v: complex

    def __post_init__(self):
        object.__setattr__(self, "amp_h", complex(self.amp_h))
        object.__setattr__(self, "amp_v", complex(self.amp_v))
        n2 = abs(self.amp_h) ** 2 + abs(self.amp_v) ** 2
        if abs(n2 - 1.0) > ATOL_EXACT:
            raise ValueError(f"qubit not normalized: |h|^2+|v|^2 = {n2!r}")

    @classmethod
    def from_vector(cls, vec, *, normalize: bool = True) -> QubitState:
        h, v = complex(vec[0]), complex(vec[1])
        if normalize:
            n = math.hypot(abs(h), abs(v))
            if n == 0.0:
                raise ValueError("cannot normalize the zero vector")
            h, v = h / n, v / n
        return cls(h, v)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp_h, self.amp_v], dtype=complex)

    def density(self) -> np.ndarray:
        v = self.vector
        return np.outer(v, v.conj())


def make_rotated_qubit(theta: float) -> QubitState:
    """|+_theta> = (|H> + e^{i theta}|V>)/sqrt(2)."""
    if not math.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta}")
    s = 1 / math.sqrt(2)
    return QubitState(s, cmath.exp(1j * theta) * s)


def qubit_state_vector(q: QubitState, time_bin: int, spatial: Spatial = Spatial.S) -> StateVector:
    """Embed a polarization qubit as a single photon at ``(time_bin, spatial)``."""
    h, v = qubit_modes(time_bin, spatial)
    return StateVector({BasisState({h: 1}): q.amp_h, BasisState({v: 1}): q.amp_v}, (h, v))


def vacuum(modes: Iterable[ModeLabel] = ()) -> StateVector:
    return StateVector({BasisState(): 1.0}, modes)


def make_bell_psi_plus(bin_a: int, bin_b: int, spatial: Spatial = Spatial.S) -> StateVector:
    """(|H>_a|V>_b + |V>_a|H>_b)/sqrt(2) on two time bins of one spatial register."""
    if bin_a == bin_b:
        raise ValueError("Bell pair needs two distinct time bins")
    ha, va = qubit_modes(bin_a, spatial)
    hb, vb = qubit_modes(bin_b, spatial)
    s = 1 / math.sqrt(2)
    return StateVector({BasisState({ha: 1, vb: 1}): s, BasisState({va: 1, hb: 1}): s}, (ha, va, hb, vb))


@_memo
def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Product state of two states on disjoint modes."""
    if set(a.modes) & set(b.modes):
        raise ValueError("tensor product needs disjoint mode sets")
    terms = {}
    for ba, xa in a.items():
        for bb, xb in b.items():
            terms[BasisState._from_counts({**dict(ba), **dict(bb)})] = xa * xb
    return StateVector(terms, (*a.modes, *b.modes))


@_memo
def relabel_bins(state: StateVector, mapping: tuple[tuple[int, int], ...]) -> StateVector:
    """Move every mode of time bin ``old`` to bin ``new`` for each ``(old, new)`` pair."""
    table = dict(mapping)
    modes = {m: ModeLabel(table.get(m.time_bin, m.time_bin), m.spatial, m.pol) for m in state.modes}
    if len(set(modes.values())) != len(modes):
        raise ValueError(f"bin relabelling {mapping} collides with existing modes")

    def fn(basis):
        return ((BasisState._from_counts({modes[m]: n for m, n in basis}), 1.0),)

    out: dict[BasisState, complex] = defaultdict(complex)
    for basis, amp in state.items():
        for nb, c in fn(basis):
            out[nb] += amp * c
    return StateVector(out, modes.values())


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------


@_memo
def rotate_z(state: StateVector, target: Qubit, theta: float) -> StateVector:
    """Apply R_z(theta) = exp(-i theta Z / 2) to the polarization qubit at ``target``.

    Basis terms with no photon at the target are left alone; a term with more
    than one photon there is rejected.
    """
    h, v = qubit_modes(*target)
    ph, pv = cmath.exp(-0.5j * theta), cmath.exp(0.5j * theta)

    def fn(basis):
        nh, nv = _qubit_occupation(basis, (h, v))
        if nh + nv > 1:
            raise ValueError(f"qubit {target} multiply occupied in {basis}")
        return ((basis, ph if nh else pv if nv else 1.0),)

    return _rebuild(state, fn)


def _single(basis: BasisState, pair, label) -> int:
    nh, nv = _qubit_occupation(basis, pair)
    if nh + nv != 1:
        raise ValueError(f"{label} qubit must hold exactly one photon, found {nh + nv} in {basis}")
    return nv


@_memo
def apply_cnot_pol(state: StateVector, control: Qubit, target: Qubit) -> StateVector:
    """CNOT on polarization qubits with |0>=|H>, |1>=|V>."""
    cpair = qubit_modes(*control)
    th, tv = qubit_modes(*target)

    def fn(basis):
        c = _single(basis, cpair, "control")
        t = _single(basis, (th, tv), "target")
        if not c:
            return ((basis, 1.0),)
        counts = dict(basis)
        counts[th], counts[tv] = t, 1 - t
        return ((BasisState._from_counts(counts), 1.0),)

    return _rebuild(state, fn)


@_memo
def apply_pauli_x(state: StateVector, target: Qubit) -> StateVector:
    """Exchange H and V at ``target`` (Pauli X on the polarization qubit)."""
    h, v = qubit_modes(*target)
    return _permute(state, {h: v, v: h})


def _check_bin_single_occupancy(state: StateVector, time_bins: Iterable[int], label: str) -> None:
    for t in time_bins:
        modes = set(bin_modes(t))
        for basis in state:
            if basis.total(modes) > 1:
                raise ValueError(f"{label}: time bin {t} holds more than one photon in {basis}")


@_memo
def apply_pol_flip(state: StateVector, time_bin: int) -> StateVector:
    """The polarization-flip map: (S,V) -> (L,H), (L,H) -> (S,V); (S,H) and (L,V) fixed."""
    _check_bin_single_occupancy(state, (time_bin,), "pol_flip")
    sv = ModeLabel(time_bin, Spatial.S, Pol.V)
    lh = ModeLabel(time_bin, Spatial.L, Pol.H)
    return _permute(state, {sv: lh, lh: sv})


def apply_arm_swap_and_x(state: StateVector, time_bins: Iterable[int]) -> StateVector:
    """Exchange the S and L arms, then H and V, on every listed time bin."""
    return _arm_swap_and_x(state, tuple(sorted(set(time_bins))))


@_memo
def _arm_swap_and_x(state: StateVector, time_bins: tuple[int, ...]) -> StateVector:
    mapping = {}
    for t in time_bins:
        for s in Spatial:
            for p in Pol:
                mapping[ModeLabel(t, s, p)] = ModeLabel(t, 1 - s, 1 - p)
    return _permute(state, mapping)


# ---------------------------------------------------------------------------
# Measurements
# ---------------------------------------------------------------------------


def sample_outcome(table: Mapping, rng: np.random.Generator):
    """Draw one key of ``{outcome: (prob, posterior)}`` with its Born weight."""
    u = rng.random()
    acc = 0.0
    last = None
    for outcome, (prob, _) in table.items():
        acc += prob
        last = outcome
        if u < acc:
            return outcome
    return last


@_memo
def photon_number_table(state: StateVector, modes: frozenset[ModeLabel]) -> dict[int, tuple[float, StateVector]]:
    """Outcome -> (probability, posterior) for a QND count of the photons in ``modes``."""
    if not modes:
        raise ValueError("photon-number measurement needs a non-empty mode set")
    missing = set(modes) - set(state.modes)
    if missing:
        raise ValueError(f"modes {sorted(missing)} are not part of the state")
    groups: dict[int, list] = defaultdict(list)
    for basis, amp in state.items():
        groups[sum(n for m, n in basis if m in modes)].append((basis, amp))
    table = {}
    for n in sorted(groups):
        terms = groups[n]
        prob = math.fsum(abs(a) ** 2 for _, a in terms)
        if prob > 0.0:
            table[n] = (prob, StateVector(terms, state.modes))
    return table


def measure_photon_number(
    state: StateVector, modes: Iterable[ModeLabel], rng: np.random.Generator
) -> tuple[int, StateVector, float]:
    """Non-demolition count of the total photon number in ``modes``."""
    table = photon_number_table(state, frozenset(modes))
    n = sample_outcome(table, rng)
    prob, post = table[n]
    return n, post, prob


@_memo
def pol_z_table(state: StateVector, target: Qubit, destructive: bool = False) -> dict[Pol, tuple[float, StateVector]]:
    """Z-basis outcome -> (probability, posterior) for the photon at ``target``.

    A destructive measurement removes the detected photon from the posterior.
    """
    h, v = qubit_modes(*target)
    for basis in state:
        _single(basis, (h, v), "measured")
    table = {}
    for pol, mode in ((Pol.H, h), (Pol.V, v)):
        prob, post = _project(state, lambda b, m=mode: b.count(m) == 1)
        if post is None:
            continue
        if destructive:
            remaining = [m for m in post.modes if m not in (h, v)]
            post = StateVector(
                [(BasisState._from_counts({k: n for k, n in b if k != mode}), a) for b, a in post.items()], remaining
            )
        table[pol] = (prob, post)
    return table


def measure_pol_z(
    state: StateVector, target: Qubit, rng: np.random.Generator, *, destructive: bool = False
) -> tuple[Pol, StateVector, float]:
    table = pol_z_table(state, target, destructive)
    pol = sample_outcome(table, rng)
    prob, post = table[pol]
    return pol, post, prob


@_memo
def dfse_table(state: StateVector, control: Qubit, target: Qubit) -> dict[Pol, tuple[float, StateVector]]:
    """CNOT(control -> target) followed by a destructive Z measurement of the target.

    Outcome V heralds a successful extraction; the posterior keeps the control.
    """
    return pol_z_table(apply_cnot_pol(state, control, target), target, True)


# ---------------------------------------------------------------------------
# Coherent light
# ---------------------------------------------------------------------------


def poisson_tail(mu: float, cutoff: int) -> float:
    """P(N > cutoff) for N ~ Poisson(mu)."""
    if mu == 0:
        return 0.0
    log_mu = math.log(mu)
    head = math.fsum(math.exp(n * log_mu - mu - math.lgamma(n + 1)) for n in range(cutoff + 1))
    return max(0.0, 1.0 - head)


def coherent_cutoff(mu: float, tol: float = ATOL_TRUNCATION) -> int:
    """Smallest Fock cutoff whose truncated Poisson mass deficit is below ``tol``."""
    n = max(0, int(mu))
    while poisson_tail(mu, n) >= tol:
        n += 1
    return n


@_memo
def make_coherent_pulse(
    mu: float,
    pol: QubitState | None = None,
    cutoff: int | None = None,
    time_bin: int = 0,
    spatial: Spatial = Spatial.S,
) -> StateVector:
    """Truncated coherent pulse with mean photon number ``mu`` and polarization ``pol``.

    The pulse is the product of coherent states in the H and V modes with
    amplitudes sqrt(mu)*pol.amp_h and sqrt(mu)*pol.amp_v, truncated to at most
    ``cutoff`` photons in total and renormalized. ``pol`` defaults to |+>.
    """
    if mu < 0 or not math.isfinite(mu):
        raise ValueError(f"mean photon number must be a finite non-negative number, got {mu}")
    pol = pol if pol is not None else make_rotated_qubit(0.0)
    h, v = qubit_modes(time_bin, spatial)
    if mu == 0:
        return vacuum((h, v))
    if cutoff is None:
        cutoff = coherent_cutoff(mu)
    deficit = poisson_tail(mu, cutoff)
    if deficit >= ATOL_TRUNCATION:
        raise ValueError(f"cutoff {cutoff} leaves truncated norm deficit {deficit:.3g} >= {ATOL_TRUNCATION}")
    terms = {}
    amps = [(abs(pol.amp_h), cmath.phase(pol.amp_h)), (abs(pol.amp_v), cmath.phase(pol.amp_v))]
    for n in range(cutoff + 1):
        for nh in range(n + 1):
            nv = n - nh
            log_mag = -mu / 2 + 0.5 * n * math.log(mu) - 0.5 * (math.lgamma(nh + 1) + math.lgamma(nv + 1))
            mag = 1.0
            phase = 0.0
            for k, (r, phi) in zip((nh, nv), amps):
                if k:
                    if r == 0:
                        mag = 0.0
                        break
                    log_mag += k * math.log(r)
                    phase += k * phi
            if mag == 0.0:
                continue
            terms[BasisState._from_counts({h: nh, v: nv})] = cmath.rect(math.exp(log_mag), phase)
    return StateVector(terms, (h, v))


@_memo
def extract_photon(state: StateVector, source: Qubit, new_bin: int) -> StateVector:
    """Split one photon off the multi-photon polarization mode at ``source`` into ``new_bin``.

    Implemented as the isometry (a_H'^dag a_H + a_V'^dag a_V)/sqrt(h) on the
    h-photon sector; for h photons sharing one polarization this leaves h-1
    photons behind and one photon of the same polarization in the new bin.
    """
    h, v = qubit_modes(*source)
    nh_new, nv_new = qubit_modes(new_bin, source[1])
    counts = {b.count(h) + b.count(v) for b in state}
    if len(counts) != 1 or 0 in counts:
        raise ValueError(f"extraction needs a definite, non-zero photon number at {source}, found {sorted(counts)}")
    for b in state:
        if b.count(nh_new) or b.count(nv_new):
            raise ValueError(f"target bin {new_bin} is already occupied")
    total = counts.pop()

    def fn(basis):
        c = dict(basis)
        out = []
        for mode, new_mode in ((h, nh_new), (v, nv_new)):
            k = c.get(mode, 0)
            if k:
                d = dict(c)
                d[mode] = k - 1
                d[new_mode] = 1
                out.append((BasisState._from_counts(d), math.sqrt(k / total)))
        return out

    return _rebuild(state, fn, (nh_new, nv_new))


# ---------------------------------------------------------------------------
# Reduced states and distances
# ---------------------------------------------------------------------------


def reduced_qubit_density(state: StateVector, target: Qubit) -> np.ndarray:
    """2x2 density matrix of the single photon at ``target`` (partial trace over everything else)."""
    h, v = qubit_modes(*target)
    rest: dict[BasisState, np.ndarray] = defaultdict(lambda: np.zeros(2, dtype=complex))
    for basis, amp in state.items():
        idx = _single(basis, (h, v), "reduced")
        env = BasisState._from_counts({m: n for m, n in basis if m not in (h, v)})
        rest[env][idx] += amp
    rho = np.zeros((2, 2), dtype=complex)
    for vec in rest.values():
        rho += np.outer(vec, vec.conj())
    return rho


@_memo
def extract_qubit(state: StateVector, target: Qubit, *, purity_tol: float = ATOL_TRUNCATION) -> QubitState:
    """The pure polarization qubit at ``target``; raises if it is entangled with the rest."""
    rho = reduced_qubit_density(state, target)
    evals, evecs = np.linalg.eigh(rho)
    if evals[-1] < 1 - purity_tol:
        raise ValueError(f"qubit at {target} is not pure (largest eigenvalue {evals[-1]:.12f})")
    vec = evecs[:, -1]
    # fix the global phase so the larger amplitude is real and positive
    pivot = vec[np.argmax(np.abs(vec))]
    return QubitState.from_vector(vec * abs(pivot) / pivot)


def fidelity(a: QubitState, b: QubitState) -> float:
    """|<a|b>|^2 for two pure qubits."""
    overlap = a.amp_h.conjugate() * b.amp_h + a.amp_v.conjugate() * b.amp_v
    return min(1.0, abs(overlap) ** 2)


def state_fidelity(a: StateVector, b: StateVector) -> float:
    return min(1.0, abs(a.inner(b)) ** 2)


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma`` for two density matrices of equal size."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape or rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"incompatible density matrix shapes {rho.shape} and {sigma.shape}")
    for m in (rho, sigma):
        if abs(np.trace(m) - 1) > ATOL_TRUNCATION:
            raise ValueError(f"density matrix has trace {np.trace(m)}")
        if not np.allclose(m, m.conj().T, atol=ATOL_EXACT):
            raise ValueError("density matrix is not Hermitian")
    diff = rho - sigma
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2))))
