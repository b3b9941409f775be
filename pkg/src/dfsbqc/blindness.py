"""Exact averages of the server's view over the client's secret angles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .channel import NoiseParams, apply_collective_unitary, pbs_merge, pbs_split
from .quantum import (
    ATOL_EXACT,
    BasisState,
    Pol,
    Spatial,
    StateVector,
    apply_cnot_pol,
    fidelity,
    make_coherent_pulse,
    make_bell_psi_plus,
    make_rotated_qubit,
    qubit_modes,
    qubit_state_vector,
    rotate_z,
    tensor,
    trace_distance,
)

BLINDNESS_TOL = 1e-12
ALL_ANGLES = tuple(k * math.pi / 4 for k in range(8))


@dataclass(frozen=True)
class DensityMatrix2:
    """Validated 2x2 density matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        if not np.allclose(m, m.conj().T, atol=ATOL_EXACT):
            raise ValueError("matrix is not Hermitian")
        if abs(np.trace(m) - 1) > ATOL_EXACT:
            raise ValueError(f"trace is {np.trace(m)}")
        if np.linalg.eigvalsh(m).min() < -ATOL_EXACT:
            raise ValueError("matrix is not positive semidefinite")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class SecretSet:
    theta_k: int
    r: int

    def __post_init__(self):
        if not 0 <= self.theta_k <= 7:
            raise ValueError(f"theta index must lie in 0..7, got {self.theta_k}")
        if self.r not in (0, 1):
            raise ValueError(f"r must be 0 or 1, got {self.r}")


@dataclass(frozen=True)
class Verdict:
    protocol: str
    identity: str
    trace_distance: float

    @property
    def passed(self) -> bool:
        return self.trace_distance < BLINDNESS_TOL

    def row(self) -> tuple[str, str, str, str]:
        return self.protocol, self.identity, f"{self.trace_distance:.3e}", "pass" if self.passed else "FAIL"


MAXIMALLY_MIXED = np.eye(2, dtype=complex) / 2


def average_rotated_qubit(thetas: Iterable[float] = ALL_ANGLES) -> DensityMatrix2:
    thetas = list(thetas)
    rho = sum(make_rotated_qubit(t).density() for t in thetas) / len(thetas)
    return DensityMatrix2(rho)


def _dense_pair(lhs_states, lhs_w, rhs_states, rhs_w) -> tuple[np.ndarray, np.ndarray]:
    """Both mixtures expressed on one shared basis."""
    basis = sorted({b for s in (*lhs_states, *rhs_states) for b in s})
    index = {b: i for i, b in enumerate(basis)}

    def build(states, weights):
        rho = np.zeros((len(basis), len(basis)), dtype=complex)
        for s, w in zip(states, weights):
            v = np.zeros(len(basis), dtype=complex)
            for b, a in s.items():
                v[index[b]] = a
            rho += w * np.outer(v, v.conj())
        return rho

    return build(lhs_states, lhs_w), build(rhs_states, rhs_w)


def _pol_product(bin_pols: dict[int, Pol]) -> StateVector:
    occ = {qubit_modes(t, Spatial.S)[p]: 1 for t, p in bin_pols.items()}
    return StateVector({BasisState(occ): 1.0})


def _through_channel(state: StateVector, delta: NoiseParams, bins: tuple[int, ...]) -> StateVector:
    return pbs_merge(apply_collective_unitary(pbs_split(state, bins), delta, bins), bins)


def average_entanglement_view(
    delta_free: bool = True, delta: NoiseParams | None = None, thetas: Iterable[float] = ALL_ANGLES
) -> tuple[np.ndarray, np.ndarray]:
    """Server's view of the rotated pair, averaged over the secret angle, and the product-form target.

    The target is CNOT (I/2 (x) |V><V|) CNOT. With ``delta_free`` both sides are
    4x4 matrices in the (HH, HV, VH, VV) basis before the splitter; otherwise
    both are propagated through the splitter and the collective unitary
    ``delta`` and compared on the output modes.
    """
    thetas = list(thetas)
    bell = make_bell_psi_plus(1, 2)
    lhs_states = [rotate_z(bell, (1, Spatial.S), t) for t in thetas]
    rhs_states = [
        apply_cnot_pol(_pol_product({1: p, 2: Pol.V}), (1, Spatial.S), (2, Spatial.S)) for p in (Pol.H, Pol.V)
    ]
    if not delta_free:
        delta = delta if delta is not None else NoiseParams.identity()
        lhs_states = [_through_channel(s, delta, (1, 2)) for s in lhs_states]
        rhs_states = [_through_channel(s, delta, (1, 2)) for s in rhs_states]
        return _dense_pair(lhs_states, [1 / len(thetas)] * len(thetas), rhs_states, [0.5, 0.5])
    order = [_pol_product({1: p1, 2: p2}) for p1 in Pol for p2 in Pol]

    def to_matrix(states, weight):
        rho = np.zeros((4, 4), dtype=complex)
        for s in states:
            v = np.array([s.inner(o).conjugate() for o in order])
            rho += weight * np.outer(v, v.conj())
        return rho

    return to_matrix(lhs_states, 1 / len(thetas)), to_matrix(rhs_states, 0.5)


def partial_trace_second(rho4: np.ndarray) -> np.ndarray:
    """Reduce a 4x4 two-qubit operator to the first qubit."""
    return np.trace(rho4.reshape(2, 2, 2, 2), axis1=1, axis2=3)


@dataclass(frozen=True)
class CoherentView:
    signal_distance: float
    joint_distance: float
    pulse_identical: bool
    pulse_serialization: str

    @property
    def passed(self) -> bool:
        return self.signal_distance < BLINDNESS_TOL and self.joint_distance < BLINDNESS_TOL and self.pulse_identical


def average_coherent_view(mu: float, cutoff: int | None = None, thetas: Iterable[float] = ALL_ANGLES) -> CoherentView:
    """Signal qubit and pulse as the server receives them from the splitter, averaged over theta.

    Checks that the signal average is I/2, that the pulse factor read off each
    joint state is the same for every theta, and that the averaged joint
    operator equals (I/2) (x) (pulse after the splitter).
    """
    thetas = list(thetas)
    pulse = pbs_split(make_coherent_pulse(mu, None, cutoff, time_bin=2), (2,))
    joints = [tensor(pbs_split(qubit_state_vector(make_rotated_qubit(t), 1), (1,)), pulse) for t in thetas]
    signal_h = qubit_modes(1, Spatial.S)[0]
    factors = []
    for joint in joints:
        # condition on the signal photon being H in arm S; the rest is the pulse factor
        terms = [(BasisState._from_counts({m: n for m, n in b if m != signal_h}), a) for b, a in joint.items() if b.count(signal_h)]
        factors.append(StateVector(terms, pulse.modes).serialize())
    identical = all(f == factors[0] for f in factors)
    signal = average_rotated_qubit(thetas).matrix
    rhs_states = [tensor(pbs_split(qubit_state_vector(make_rotated_qubit(0.0 if p == Pol.H else math.pi), 1), (1,)), pulse) for p in (Pol.H, Pol.V)]
    lhs, rhs = _dense_pair(joints, [1 / len(thetas)] * len(thetas), rhs_states, [0.5, 0.5])
    return CoherentView(trace_distance(signal, MAXIMALLY_MIXED), trace_distance(lhs, rhs), identical, factors[0])


def theta_halves_agree(thetas_a: Iterable[float], thetas_b: Iterable[float]) -> float:
    """Trace distance between rotated-qubit averages over two angle subsets."""
    return trace_distance(average_rotated_qubit(thetas_a).matrix, average_rotated_qubit(thetas_b).matrix)


def outcome_marginal(theta: float, phi_prime: float) -> float:
    """Probability of the raw "+" outcome at xi = theta + phi' + r pi, with r uniform."""
    qubit = make_rotated_qubit(theta)
    return math.fsum(0.5 * fidelity(make_rotated_qubit(theta + phi_prime + r * math.pi), qubit) for r in (0, 1))


def blindness_report(
    mu: float = 4.0, cutoff: int | None = None, deltas: Sequence[NoiseParams] = ()
) -> list[Verdict]:
    """All exact blindness identities as named verdicts."""
    out = [
        Verdict("single_photon", "avg_rotated_qubit=I/2", trace_distance(average_rotated_qubit().matrix, MAXIMALLY_MIXED)),
        Verdict(
            "single_photon",
            "avg_over_{0,pi}=I/2",
            trace_distance(average_rotated_qubit((0.0, math.pi)).matrix, MAXIMALLY_MIXED),
        ),
        Verdict(
            "single_photon",
            "pi_closed_halves_agree",
            theta_halves_agree(ALL_ANGLES[0::2], ALL_ANGLES[1::2]),
        ),
    ]
    lhs, rhs = average_entanglement_view(True)
    out.append(Verdict("entanglement", "avg_pair=CNOT(I/2xVV)CNOT", trace_distance(lhs, rhs)))
    out.append(
        Verdict("entanglement", "reduced_first_photon=I/2", trace_distance(partial_trace_second(lhs), MAXIMALLY_MIXED))
    )
    for i, delta in enumerate(deltas):
        lhs, rhs = average_entanglement_view(False, delta)
        out.append(Verdict("entanglement", f"avg_pair_after_channel[{i}]", trace_distance(lhs, rhs)))
    view = average_coherent_view(mu, cutoff)
    out.append(Verdict("coherent", "avg_signal=I/2", view.signal_distance))
    out.append(Verdict("coherent", "avg_joint=(I/2)x(pulse)", view.joint_distance))
    out.append(Verdict("coherent", "pulse_factor_theta_independent", 0.0 if view.pulse_identical else 1.0))
    worst = max(
        abs(outcome_marginal(t, phi) - 0.5) for t in ALL_ANGLES for phi in (0.0, math.pi / 4, math.pi / 2, math.pi)
    )
    out.append(Verdict("measurement", "raw_outcome_marginal=1/2", worst))
    return out
