from __future__ import annotations

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfsbqc.quantum import (
    BasisState,
    ModeLabel,
    Pol,
    QubitState,
    Spatial,
    StateVector,
    apply_arm_swap_and_x,
    apply_cnot_pol,
    apply_pauli_x,
    apply_pol_flip,
    extract_photon,
    extract_qubit,
    fidelity,
    make_bell_psi_plus,
    make_coherent_pulse,
    make_rotated_qubit,
    measure_photon_number,
    measure_pol_z,
    photon_number_table,
    qubit_modes,
    qubit_state_vector,
    rotate_z,
    sample_outcome,
    state_fidelity,
    tensor,
    trace_distance,
    vacuum,
)

S = Spatial.S
L = Spatial.L
R2 = 1 / math.sqrt(2)
angles = st.floats(min_value=-10, max_value=10, allow_nan=False)


def mode(t, s, p):
    return ModeLabel(t, s, p)


def ket(**occ):
    """ket(1SH=1, 2SV=1) style helper."""
    return BasisState({ModeLabel(int(k[0]), k[1], k[2]): n for k, n in occ.items()})


def pair_state(terms):
    return StateVector({ket(**{k: 1 for k in occ}): amp for occ, amp in terms})


# ---------------------------------------------------------------------------


def test_mode_label_order_and_text():
    modes = [mode(2, S, Pol.H), mode(1, L, Pol.V), mode(1, S, Pol.V), mode(1, S, Pol.H)]
    assert sorted(modes) == [mode(1, S, Pol.H), mode(1, S, Pol.V), mode(1, L, Pol.V), mode(2, S, Pol.H)]
    assert str(mode(3, "l", "v")) == "3LV"
    with pytest.raises(ValueError):
        ModeLabel(-1, S, Pol.H)


def test_basis_state_canonical_form():
    a = BasisState({mode(1, S, Pol.H): 1, mode(1, S, Pol.V): 0})
    b = BasisState([(mode(1, S, Pol.H), 1)])
    assert a == b and hash(a) == hash(b)
    assert a.count(mode(1, S, Pol.V)) == 0
    with pytest.raises(ValueError):
        BasisState({mode(1, S, Pol.H): -1})


@pytest.mark.parametrize(
    "theta, expected",
    [(0.0, (R2, R2)), (math.pi, (R2, -R2)), (math.pi / 4, (R2, cmath.exp(1j * math.pi / 4) * R2))],
)
def test_make_rotated_qubit(theta, expected):
    q = make_rotated_qubit(theta)
    assert q.amp_h == pytest.approx(expected[0], abs=1e-15)
    assert q.amp_v == pytest.approx(expected[1], abs=1e-15)
    assert abs(q.amp_h) ** 2 + abs(q.amp_v) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_make_rotated_qubit_rejects_non_finite():
    with pytest.raises(ValueError):
        make_rotated_qubit(float("nan"))


def test_qubit_state_rejects_unnormalized():
    with pytest.raises(ValueError):
        QubitState(1.0, 1.0)


def test_bell_pair_amplitudes():
    bell = make_bell_psi_plus(1, 2)
    assert bell.amplitude(ket(**{"1SH": 1, "2SV": 1})) == pytest.approx(R2)
    assert bell.amplitude(ket(**{"1SV": 1, "2SH": 1})) == pytest.approx(R2)
    assert len(bell) == 2
    assert abs(bell.inner(bell)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        make_bell_psi_plus(3, 3)


def test_rotate_z_on_bell_gives_relative_phase():
    bell = make_bell_psi_plus(1, 2)
    out = rotate_z(bell, (1, S), math.pi)
    hv = out.amplitude(ket(**{"1SH": 1, "2SV": 1}))
    vh = out.amplitude(ket(**{"1SV": 1, "2SH": 1}))
    assert vh / hv == pytest.approx(-1.0)


@given(angles)
def test_rotate_z_matches_psi_theta_up_to_global_phase(theta):
    out = rotate_z(make_bell_psi_plus(1, 2), (1, S), theta)
    psi = pair_state([(("1SH", "2SV"), R2), (("1SV", "2SH"), cmath.exp(1j * theta) * R2)])
    assert state_fidelity(out, psi) == pytest.approx(1.0, abs=1e-12)


def test_rotate_z_identity_and_full_turn():
    bell = make_bell_psi_plus(1, 2)
    assert state_fidelity(rotate_z(bell, (1, S), 0.0), bell) == pytest.approx(1.0)
    full = rotate_z(bell, (1, S), 2 * math.pi)
    assert full.inner(bell) == pytest.approx(-1.0)


def test_rotate_z_rejects_multiply_occupied_target():
    st2 = StateVector({ket(**{"1SH": 2}): 1.0})
    with pytest.raises(ValueError):
        rotate_z(st2, (1, S), 0.3)


def _dense_pol(state, qubits):
    """Amplitude vector over |p1 p2 ...> for one photon per listed qubit (H=0, V=1)."""
    n = len(qubits)
    vec = np.zeros(2**n, dtype=complex)
    for idx in range(2**n):
        occ = {}
        for j, (t, s) in enumerate(qubits):
            bit = (idx >> (n - 1 - j)) & 1
            occ[qubit_modes(t, s)[bit]] = 1
        vec[idx] = state.amplitude(BasisState(occ))
    return vec


@given(angles)
def test_cnot_matches_matrix_oracle(theta):
    psi = rotate_z(make_bell_psi_plus(1, 2), (1, S), theta)
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    expected = cnot @ _dense_pol(psi, [(1, S), (2, S)])
    got = _dense_pol(apply_cnot_pol(psi, (1, S), (2, S)), [(1, S), (2, S)])
    assert np.allclose(got, expected, atol=1e-14)


def test_cnot_decodes_rotated_pair():
    theta = 0.7
    out = apply_cnot_pol(rotate_z(make_bell_psi_plus(1, 2), (1, S), theta), (1, S), (2, S))
    target = tensor(qubit_state_vector(make_rotated_qubit(theta), 1), qubit_state_vector(QubitState(0, 1), 2))
    assert state_fidelity(out, target) == pytest.approx(1.0, abs=1e-12)
    hh = StateVector({ket(**{"1SH": 1, "2SH": 1}): 1.0})
    assert apply_cnot_pol(hh, (1, S), (2, S)).items() == hh.items()


@given(angles)
def test_cnot_is_involution(theta):
    psi = rotate_z(make_bell_psi_plus(1, 2), (1, S), theta)
    twice = apply_cnot_pol(apply_cnot_pol(psi, (1, S), (2, S)), (1, S), (2, S))
    assert state_fidelity(twice, psi) == pytest.approx(1.0, abs=1e-12)


def test_cnot_occupancy_violation():
    st1 = qubit_state_vector(make_rotated_qubit(0.1), 1)
    with pytest.raises(ValueError):
        apply_cnot_pol(st1, (1, S), (2, S))


def test_pol_flip_maps():
    sv = StateVector({ket(**{"1SV": 1}): 1.0})
    assert sv.amplitude(ket(**{"1SV": 1})) == 1.0
    assert apply_pol_flip(sv, 1).amplitude(ket(**{"1LH": 1})) == pytest.approx(1.0)
    sh = StateVector({ket(**{"1SH": 1}): 1.0})
    assert apply_pol_flip(sh, 1).items() == sh.items()
    lv = StateVector({ket(**{"1LV": 1}): 1.0})
    assert apply_pol_flip(lv, 1).items() == lv.items()


@given(st.lists(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False), min_size=4, max_size=4))
@settings(max_examples=30)
def test_pol_flip_and_arm_swap_are_involutions(amps):
    if sum(abs(a) ** 2 for a in amps) < 1e-6:
        return
    labels = ["1SH", "1SV", "1LH", "1LV"]
    state = StateVector({ket(**{k: 1}): a for k, a in zip(labels, amps)})
    assert state_fidelity(apply_pol_flip(apply_pol_flip(state, 1), 1), state) == pytest.approx(1.0, abs=1e-12)
    assert state_fidelity(apply_arm_swap_and_x(apply_arm_swap_and_x(state, {1}), {1}), state) == pytest.approx(
        1.0, abs=1e-12
    )


def test_arm_swap_and_x_case_two_state():
    theta = 1.3
    before = pair_state([(("1LH", "2LV"), R2), (("1LV", "2LH"), cmath.exp(-1j * theta) * R2)])
    after = apply_arm_swap_and_x(before, {1, 2})
    expected = pair_state([(("1SH", "2SV"), R2), (("1SV", "2SH"), cmath.exp(1j * theta) * R2)])
    assert state_fidelity(after, expected) == pytest.approx(1.0, abs=1e-12)
    lv = StateVector({ket(**{"1LV": 1}): 1.0})
    assert apply_arm_swap_and_x(lv, [1]).amplitude(ket(**{"1SH": 1})) == pytest.approx(1.0)


def test_pauli_x_swaps_polarization():
    q = qubit_state_vector(QubitState(0.6, 0.8j), 1)
    out = extract_qubit(apply_pauli_x(q, (1, S)), (1, S))
    assert fidelity(out, QubitState(0.8j, 0.6)) == pytest.approx(1.0, abs=1e-12)


def test_photon_number_measurement(rng):
    vac = vacuum([mode(1, S, Pol.H)])
    n, post, p = measure_photon_number(vac, {mode(1, S, Pol.H)}, rng)
    assert (n, p) == (0, 1.0)
    with pytest.raises(ValueError):
        measure_photon_number(vac, set(), rng)
    with pytest.raises(ValueError):
        measure_photon_number(vac, {mode(9, S, Pol.H)}, rng)


def test_photon_number_table_complete_and_posterior_consistent(rng):
    pulse = make_coherent_pulse(1.5, cutoff=25)
    modes = frozenset(pulse.modes)
    table = photon_number_table(pulse, modes)
    assert math.fsum(p for p, _ in table.values()) == pytest.approx(1.0, abs=1e-12)
    n, post, _ = measure_photon_number(pulse, modes, rng)
    assert photon_number_table(post, modes)[n][0] == pytest.approx(1.0, abs=1e-12)


def test_measure_pol_z_certain_and_occupancy(rng):
    v = qubit_state_vector(QubitState(0, 1), 1)
    pol, _, p = measure_pol_z(v, (1, S), rng)
    assert pol == Pol.V and p == pytest.approx(1.0)
    with pytest.raises(ValueError):
        measure_pol_z(v, (2, S), rng)


def test_destructive_measurement_removes_target_modes(rng):
    pair = tensor(qubit_state_vector(make_rotated_qubit(0.2), 1), qubit_state_vector(QubitState(0, 1), 2))
    _, post, _ = measure_pol_z(pair, (2, S), rng, destructive=True)
    assert all(m.time_bin == 1 for m in post.modes)


def test_coherent_pulse_vacuum_and_poisson():
    assert make_coherent_pulse(0.0).items()[0][0] == BasisState()
    pulse = make_coherent_pulse(1.0, cutoff=20)
    table = photon_number_table(pulse, frozenset(pulse.modes))
    assert table[0][0] == pytest.approx(math.exp(-1), rel=1e-9)
    assert table[3][0] == pytest.approx(math.exp(-1) / 6, rel=1e-9)


def test_coherent_pulse_polarization_split():
    pol = QubitState(math.sqrt(0.2), math.sqrt(0.8))
    pulse = make_coherent_pulse(2.0, pol, cutoff=30)
    h, v = qubit_modes(0, S)
    table = photon_number_table(pulse, frozenset({h}))
    # the H mode alone is coherent with mean 0.4
    assert table[1][0] == pytest.approx(0.4 * math.exp(-0.4), rel=1e-8)


def test_coherent_pulse_cutoff_too_small():
    with pytest.raises(ValueError):
        make_coherent_pulse(4.0, cutoff=5)


def test_coherent_pulse_sampled_mean(rng):
    mu = 3.0
    pulse = make_coherent_pulse(mu)
    table = photon_number_table(pulse, frozenset(pulse.modes))
    samples = np.array([sample_outcome(table, rng) for _ in range(20000)])
    assert abs(samples.mean() - mu) <= 3 * math.sqrt(mu / len(samples))


def test_extract_photon_from_fock_state():
    h = mode(2, S, Pol.H)
    state = StateVector({BasisState({h: 3}): 1.0})
    out = extract_photon(state, (2, S), 3)
    assert out.amplitude(BasisState({h: 2, mode(3, S, Pol.H): 1})) == pytest.approx(1.0)


def test_extract_photon_keeps_polarization_product():
    pol = QubitState(0.6, 0.8)
    pulse = make_coherent_pulse(2.0, pol, cutoff=30, time_bin=2)
    table = photon_number_table(pulse, frozenset(pulse.modes))
    out = extract_photon(table[3][1], (2, S), 5)
    assert fidelity(extract_qubit(out, (5, S)), pol) == pytest.approx(1.0, abs=1e-12)


def test_extract_qubit_rejects_entangled():
    with pytest.raises(ValueError):
        extract_qubit(make_bell_psi_plus(1, 2), (1, S))


def test_fidelity_and_trace_distance_examples():
    plus0, plus_pi = make_rotated_qubit(0), make_rotated_qubit(math.pi)
    assert fidelity(plus0, plus0) == pytest.approx(1.0)
    assert fidelity(plus0, plus_pi) == pytest.approx(0.0, abs=1e-15)
    rho = plus0.density()
    assert trace_distance(rho, rho) == pytest.approx(0.0, abs=1e-15)
    assert trace_distance(np.eye(2) / 2, np.diag([1.0, 0.0])) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        trace_distance(np.eye(2), np.eye(2) / 2)


def test_norm_preserved_by_every_gate():
    psi = rotate_z(make_bell_psi_plus(1, 2), (1, S), 0.9)
    for out in (
        apply_cnot_pol(psi, (1, S), (2, S)),
        apply_pol_flip(psi, 1),
        apply_arm_swap_and_x(psi, {1, 2}),
        apply_pauli_x(psi, (2, S)),
    ):
        assert out.norm() == pytest.approx(1.0, abs=1e-12)


def test_serialization_is_canonical():
    a = StateVector({ket(**{"2SV": 1}): 0.6, ket(**{"1SH": 1}): 0.8})
    b = StateVector({ket(**{"1SH": 1}): 0.8, ket(**{"2SV": 1}): 0.6})
    assert a.serialize() == b.serialize()
    assert a.serialize().splitlines()[0].startswith("1SH:1\t")
