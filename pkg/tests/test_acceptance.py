"""Acceptance criteria; each test prints one PASS/FAIL line."""

from __future__ import annotations

import math
import time

import mpmath as mp
import numpy as np
import pytest

from dfsbqc import analytics, harness
from dfsbqc.blindness import BLINDNESS_TOL, blindness_report
from dfsbqc.channel import ChannelModel, DeltaScheme, NoiseParams, sample_delta
from dfsbqc.protocols import (
    FIDELITY_TOL,
    Protocol,
    ProtocolConfig,
    estimate_success,
    pair_branch_table,
    run_trial,
    verify_angle_compensation,
)
from dfsbqc.quantum import Spatial, fidelity, make_rotated_qubit

from conftest import PHASE_SETTINGS, moduli_grid

SIGMA = 3.0
MC_TRIALS = 100_000
SEED = 42

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(criterion: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        assert ok, detail

    return emit


def _sigma_failures(rows):
    return [r for r in rows if r.sigma_ratio > SIGMA]


def test_criterion_1_entanglement_success_is_T_squared(report):
    spec = harness.SweepSpec(
        Protocol.ENTANGLEMENT,
        (0.25, 0.5, 1.0),
        delta_scheme=DeltaScheme.UNIFORM_MODULI,
        delta_samples=20,
        trials=MC_TRIALS,
        seed=SEED,
    )
    times = []
    clock = [time.perf_counter()]

    def tick(_row):
        now = time.perf_counter()
        times.append(now - clock[0])
        clock[0] = now

    rows = harness.run_sweep(spec, progress=tick).rows
    bad = _sigma_failures(rows)
    ok = len(rows) == 60 and not bad and max(times) < 60.0
    worst = max(r.sigma_ratio for r in rows)
    report(1, ok, f"60 points x 1e5 trials, worst {worst:.2f} sigma, slowest point {max(times):.1f} s, {len(bad)} outside 3 sigma")


def test_criterion_2_successful_outputs_have_unit_fidelity(report):
    deltas = [NoiseParams.from_moduli(a2, d2, ph) for a2, d2 in moduli_grid() for ph in PHASE_SETTINGS]
    worst = 1.0
    successes = 0
    trials = 300
    index = 0
    for delta in deltas:
        for T in (0.25, 0.5, 1.0):
            channel = ChannelModel(delta, T)
            configs = [
                ProtocolConfig(Protocol.ENTANGLEMENT, channel, seed=SEED + index),
                ProtocolConfig(Protocol.SINGLE_PHOTON, channel, N=2, seed=SEED + index),
                ProtocolConfig(Protocol.COHERENT, channel, mu=50.0, seed=SEED + index),
            ]
            index += 1
            for cfg in configs:
                for i in range(trials):
                    out = run_trial(cfg, i)
                    if out.success:
                        successes += 1
                        worst = min(worst, fidelity(out.output, make_rotated_qubit(out.output_angle)))
    # full Fock-vector coherent path on the moduli grid
    for a2, d2 in moduli_grid():
        cfg = ProtocolConfig(
            Protocol.COHERENT,
            ChannelModel(NoiseParams.from_moduli(a2, d2, PHASE_SETTINGS[2]), 1.0),
            mu=1.0,
            cutoff=20,
            coherent_path="fock",
            seed=SEED,
        )
        for i in range(20):
            out = run_trial(cfg, i)
            if out.success:
                successes += 1
                worst = min(worst, fidelity(out.output, make_rotated_qubit(out.output_angle)))
    ok = successes > 0 and worst >= 1.0 - FIDELITY_TOL
    report(2, ok, f"{successes} successful trials over 100 deltas x 3 T x 3 protocols, min fidelity 1-{1 - worst:.1e}")


def test_criterion_3_single_photon_formula(report):
    spec = harness.SweepSpec(
        Protocol.SINGLE_PHOTON,
        (0.25, 0.5, 1.0),
        N_grid=(1, 5, 20),
        a_abs2=0.3,
        d_abs2=0.8,
        phases=PHASE_SETTINGS[2],
        trials=MC_TRIALS,
        seed=SEED,
    )
    rows = harness.run_sweep(spec).rows
    bad = _sigma_failures(rows)
    exact_half = analytics.p_single_photon(1.0, 1) == 0.5
    ok = len(rows) == 9 and not bad and exact_half
    worst = max(r.sigma_ratio for r in rows)
    report(3, ok, f"9 points x 1e5 trials, worst {worst:.2f} sigma; p(T=1, N=1) = {analytics.p_single_photon(1.0, 1)!r}")


def test_criterion_4_pair_success_independent_of_delta(report):
    rng = np.random.default_rng(SEED)
    worst_closed = worst_state = 0.0
    for _ in range(100):
        delta = sample_delta(rng, DeltaScheme.UNIFORM_MODULI)
        worst_closed = max(worst_closed, abs(math.fsum(analytics.pair_branch_probabilities(delta).values()) - 0.5))
        worst_state = max(worst_state, abs(math.fsum(pair_branch_table(delta, 0.7, 2.1).values()) - 0.5))
    ok = worst_closed < 1e-12 and worst_state < 1e-12
    report(4, ok, f"100 deltas, max |sum - 1/2| = {worst_closed:.1e} (branch formulas), {worst_state:.1e} (state evolution)")


def test_criterion_5_coherent_symmetric_point(report):
    spec = harness.SweepSpec(
        Protocol.COHERENT,
        (0.25, 0.5, 0.75),
        mu_grid=(1e5,),
        a_abs2=0.5,
        d_abs2=0.5,
        phases=PHASE_SETTINGS[3],
        trials=MC_TRIALS,
        seed=SEED,
    )
    rows = harness.run_sweep(spec).rows
    bad = _sigma_failures(rows)
    ratios = [r.p_analytic / r.T for r in rows]
    delta = NoiseParams.from_moduli(0.5, 0.5, PHASE_SETTINGS[1])
    fock_trials = 10_000
    fock_cfg = ProtocolConfig(
        Protocol.COHERENT, ChannelModel(delta, 0.75), mu=4.0, cutoff=30, coherent_path="fock", seed=SEED
    )
    p_fock, se_fock = estimate_success(fock_cfg, fock_trials)
    p_ref = analytics.p_coherent(0.75, 4.0, delta)
    fock_sigma = abs(p_fock - p_ref) / math.sqrt(p_ref * (1 - p_ref) / fock_trials)
    ok = len(rows) == 3 and not bad and min(ratios) >= 0.99 and fock_sigma <= SIGMA
    worst = max(r.sigma_ratio for r in rows)
    report(
        5,
        ok,
        f"mu=1e5: worst {worst:.2f} sigma, min p/T {min(ratios):.5f}; Fock path mu=4 cutoff 30: "
        f"{p_fock:.4f} vs {p_ref:.4f} ({fock_sigma:.2f} sigma)",
    )


def _series_absorption(q: float) -> mp.mpf:
    """Independent evaluation of sum_k C_k (1-q)^k q^(k+1) in extended precision."""
    with mp.workdps(30):
        q = mp.mpf(q)
        term = lambda k: mp.gamma(2 * k + 1) / mp.gamma(k + 1) ** 2 / (k + 1) * (1 - q) ** k * q ** (k + 1)
        if q == mp.mpf("0.5"):
            # terms decay like k^(-3/2); plain extrapolation stalls, Levin acceleration converges
            return +mp.nsum(term, [0, mp.inf], method="levin")
        return +mp.nsum(term, [0, mp.inf])


def test_criterion_6_random_walk_layer(report):
    recurrence = all(
        analytics.catalan(t + 1) == sum(analytics.catalan(i) * analytics.catalan(t - i) for i in range(t + 1))
        for t in range(16)
    )
    qs = [round(0.1 * k, 1) for k in range(1, 10)]
    series_gap = max(abs(float(_series_absorption(q)) - analytics.walk_absorption(q)) for q in qs)
    delta = NoiseParams.from_moduli(0.5, 0.5, PHASE_SETTINGS[2])
    oracle_gap = max(
        abs(analytics.oracle_dfse_cascade(delta, mode, n) - analytics.walk_absorption(0.5, n))
        for mode in Spatial
        for n in range(analytics.MAX_ORACLE_ANCILLAS + 1)
    )
    ok = recurrence and series_gap <= 1e-12 and oracle_gap <= 1e-10
    report(
        6,
        ok,
        f"Catalan recurrence t<=15 {'holds' if recurrence else 'BROKEN'}; series vs closed form max gap "
        f"{series_gap:.1e}; oracle vs walk (<=40 ancillas) max gap {oracle_gap:.1e}",
    )


def test_criterion_7_blindness_identities(report):
    rng = np.random.default_rng(SEED)
    deltas = [sample_delta(rng) for _ in range(3)]
    verdicts = blindness_report(mu=4.0, deltas=deltas)
    worst = max(v.trace_distance for v in verdicts)
    failed = [f"{v.protocol}:{v.identity}" for v in verdicts if not v.passed]
    ok = not failed and worst < BLINDNESS_TOL
    report(7, ok, f"{len(verdicts)} identities, max trace distance {worst:.1e}" + (f", failed {failed}" if failed else ""))


def test_criterion_8_angle_compensation(report):
    rng = np.random.default_rng(SEED)
    failures = []
    for k in range(8):
        for phi in (0.0, math.pi / 4, math.pi / 2, math.pi):
            for r in (0, 1):
                if not verify_angle_compensation(k, phi, r, rng, MC_TRIALS):
                    failures.append((k, phi, r))
    report(8, not failures, f"8 theta x 4 phi' x 2 r at 1e5 samples, {len(failures)} outside 3 sigma {failures or ''}".rstrip())


def test_criterion_9_documented_discrepancy_gate(report):
    spec = harness.SweepSpec(
        Protocol.COHERENT,
        (0.5,),
        mu_grid=(1000.0,),
        a_abs2=0.9,
        d_abs2=0.1,
        phases=PHASE_SETTINGS[2],
        trials=MC_TRIALS,
        seed=SEED,
    )
    rows = harness.run_sweep(spec).rows
    flags = [r.flag for r in rows]
    iid = next((r for r in rows if r.flag == harness.FLAG_IID_WALK), None)
    exact = next((r for r in rows if r.flag in (harness.FLAG_EXACT, harness.FLAG_OUTSIDE)), None)
    ok = iid is not None and exact is not None and exact.flag == harness.FLAG_EXACT and exact.sigma_ratio <= SIGMA
    detail = f"flags {flags}"
    if iid and exact:
        detail += (
            f"; p_hat {exact.p_hat:.5f}, exact cascade {exact.p_analytic:.5f} ({exact.sigma_ratio:.2f} sigma), "
            f"i.i.d. walk {iid.p_analytic:.5f} ({iid.sigma_ratio:.1f} sigma)"
        )
    report(9, ok, detail)
