"""Parameter sweeps, coefficient surfaces, blindness tables and the invariant suite."""

from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import analytics
from .blindness import blindness_report
from .channel import ChannelModel, DeltaScheme, NoiseParams, apply_collective_unitary, pbs_split, sample_delta
from .protocols import Protocol, ProtocolConfig, estimate_success, pair_branch_table
from .quantum import (
    ATOL_EXACT,
    Spatial,
    apply_arm_swap_and_x,
    apply_cnot_pol,
    apply_pol_flip,
    make_bell_psi_plus,
    photon_number_table,
    rotate_z,
    state_fidelity,
)

SWEEP_HEADER = (
    "protocol",
    "T",
    "N",
    "mu",
    "a_abs2",
    "d_abs2",
    "trials",
    "p_hat",
    "stderr",
    "p_analytic",
    "abs_diff",
    "sigma_ratio",
    "flag",
)
DEFAULT_TRIALS = 100_000
DEFAULT_SEED = 42
SIGMA_LIMIT = 3.0
FLAG_IID_WALK = "paper-formula"
FLAG_EXACT = "exact-cascade"
FLAG_OUTSIDE = "outside-3sigma"


@dataclass(frozen=True)
class SweepSpec:
    protocol: Protocol
    T_grid: tuple[float, ...]
    N_grid: tuple[int, ...] = (1,)
    mu_grid: tuple[float, ...] = (0.0,)
    a_abs2: float = 0.5
    d_abs2: float = 0.5
    phases: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    delta_scheme: DeltaScheme = DeltaScheme.FIXED
    delta_samples: int = 1
    trials: int = DEFAULT_TRIALS
    seed: int = DEFAULT_SEED
    out: str | None = None
    coherent_path: str = "sampling"
    cutoff: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        object.__setattr__(self, "delta_scheme", DeltaScheme(self.delta_scheme))
        for name in ("T_grid", "N_grid", "mu_grid"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, values)
        if self.trials < 100:
            raise ValueError(f"trials must be at least 100, got {self.trials}")
        if self.delta_samples < 1:
            raise ValueError("delta_samples must be at least 1")

    def deltas(self) -> list[NoiseParams]:
        if self.delta_scheme is DeltaScheme.FIXED:
            return [NoiseParams.from_moduli(self.a_abs2, self.d_abs2, self.phases)]
        rng = np.random.default_rng((self.seed, 0xDE17A))
        return [sample_delta(rng, self.delta_scheme) for _ in range(self.delta_samples)]


@dataclass(frozen=True)
class SweepRow:
    protocol: str
    T: float
    N: int | None
    mu: float | None
    a_abs2: float
    d_abs2: float
    trials: int
    p_hat: float
    stderr: float
    p_analytic: float
    flag: str = ""

    @property
    def abs_diff(self) -> float:
        return abs(self.p_hat - self.p_analytic)

    @property
    def sigma_ratio(self) -> float:
        if self.stderr > 0:
            return self.abs_diff / self.stderr
        # all-success or all-failure samples have zero empirical spread; use the analytic binomial sigma
        sigma = math.sqrt(max(self.p_analytic * (1.0 - self.p_analytic), 0.0) / self.trials)
        if sigma > 0:
            return self.abs_diff / sigma
        return 0.0 if self.abs_diff < ATOL_EXACT else math.inf

    def cells(self) -> list[str]:
        def num(x):
            return "" if x is None else repr(float(x)) if not isinstance(x, int) else str(x)

        return [
            self.protocol,
            num(self.T),
            num(self.N),
            num(self.mu),
            num(self.a_abs2),
            num(self.d_abs2),
            str(self.trials),
            num(self.p_hat),
            num(self.stderr),
            num(self.p_analytic),
            num(self.abs_diff),
            num(self.sigma_ratio),
            self.flag,
        ]


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[SweepRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# seed={self.spec.seed}\n# trials={self.spec.trials}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for row in self.rows:
            writer.writerow(row.cells())
        return buf.getvalue()

    def failures(self) -> list[SweepRow]:
        """Rows outside 3 sigma that are not the documented i.i.d.-walk rows."""
        return [r for r in self.rows if r.flag == FLAG_OUTSIDE]


def _point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence((seed, index)).generate_state(1, np.uint64)[0])


def _with_flag(row: SweepRow, flag: str | None = None) -> SweepRow:
    if flag is None:
        flag = FLAG_OUTSIDE if row.sigma_ratio > SIGMA_LIMIT else ""
    return replace(row, flag=flag)


def run_sweep(spec: SweepSpec, workers: int | None = None, progress: Callable[[SweepRow], None] | None = None) -> SweepResult:
    """Run every grid point in deterministic order and pair it with its analytic value."""
    result = SweepResult(spec)
    index = 0
    for delta in spec.deltas():
        if spec.delta_scheme is DeltaScheme.FIXED:
            a2, d2 = spec.a_abs2, spec.d_abs2
        else:
            a2, _, _, d2 = delta.moduli2
        for T in spec.T_grid:
            channel = ChannelModel(delta, float(T))
            if spec.protocol is Protocol.ENTANGLEMENT:
                points = [(None, None)]
            elif spec.protocol is Protocol.SINGLE_PHOTON:
                points = [(int(n), None) for n in spec.N_grid]
            else:
                points = [(None, float(mu)) for mu in spec.mu_grid]
            for N, mu in points:
                cfg = ProtocolConfig(
                    spec.protocol,
                    channel,
                    N=N or 1,
                    mu=mu or 0.0,
                    cutoff=spec.cutoff,
                    seed=_point_seed(spec.seed, index),
                    coherent_path=spec.coherent_path,
                )
                index += 1
                p_hat, stderr = estimate_success(cfg, spec.trials, workers)
                base = dict(
                    protocol=spec.protocol.value,
                    T=float(T),
                    N=N,
                    mu=mu,
                    a_abs2=a2,
                    d_abs2=d2,
                    trials=spec.trials,
                    p_hat=p_hat,
                    stderr=stderr,
                )
                new_rows = []
                if spec.protocol is Protocol.ENTANGLEMENT:
                    new_rows.append(_with_flag(SweepRow(p_analytic=analytics.p_entanglement(T), **base)))
                elif spec.protocol is Protocol.SINGLE_PHOTON:
                    new_rows.append(_with_flag(SweepRow(p_analytic=analytics.p_single_photon(T, N), **base)))
                elif abs(a2 - d2) <= ATOL_EXACT:
                    new_rows.append(_with_flag(SweepRow(p_analytic=analytics.p_coherent(T, mu, delta), **base)))
                else:
                    new_rows.append(SweepRow(p_analytic=analytics.p_coherent(T, mu, delta), flag=FLAG_IID_WALK, **base))
                    exact = SweepRow(p_analytic=analytics.p_coherent_exact(T, mu, delta), **base)
                    new_rows.append(_with_flag(exact, FLAG_OUTSIDE if exact.sigma_ratio > SIGMA_LIMIT else FLAG_EXACT))
                for row in new_rows:
                    result.rows.append(row)
                    if progress:
                        progress(row)
    return result


def write_text(text: str, out: str | None) -> None:
    if out is None:
        print(text, end="")
        return
    Path(out).write_text(text, encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# Coefficient surface
# ---------------------------------------------------------------------------


def coeff_surface(resolution: int = 21) -> list[tuple[float, float, float, float]]:
    """(|a|, |d|, large-mu p/T, the same with q2 as the mode-l parameter) on a square grid."""
    if resolution < 11:
        raise ValueError(f"resolution must be at least 11, got {resolution}")
    axis = np.linspace(0.0, 1.0, resolution)
    rows = []
    for a in axis:
        for d in axis:
            delta = NoiseParams.from_moduli(min(1.0, a * a), min(1.0, d * d))
            rows.append(
                (
                    float(a),
                    float(d),
                    analytics.p_coherent_limit_coeff(delta),
                    analytics.p_coherent_limit_coeff(delta, use_q2=True),
                )
            )
    return rows


def coeff_surface_csv(resolution: int = 21) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("a_abs", "d_abs", "coefficient", "coefficient_q2"))
    for row in coeff_surface(resolution):
        writer.writerow([repr(x) for x in row])
    return buf.getvalue()


def blindness_csv(mu: float = 4.0, cutoff: int | None = None, deltas: Sequence[NoiseParams] = ()) -> tuple[str, bool]:
    verdicts = blindness_report(mu, cutoff, deltas)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("protocol", "identity", "trace_distance", "pass"))
    for v in verdicts:
        writer.writerow(v.row())
    return buf.getvalue(), all(v.passed for v in verdicts)


# ---------------------------------------------------------------------------
# Invariant suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


def _default_deltas(seed: int, count: int = 6) -> list[NoiseParams]:
    rng = np.random.default_rng((seed, 0x5EED))
    return [sample_delta(rng, DeltaScheme.UNIFORM_MODULI) for _ in range(count)]


def _check(name: str, fn: Callable[[], tuple[bool, str]]) -> Check:
    try:
        ok, detail = fn()
    except Exception as exc:  # noqa: BLE001 - any exception is a named failure
        return Check(name, False, f"{type(exc).__name__}: {exc}")
    return Check(name, bool(ok), detail)


def run_verify(seed: int = DEFAULT_SEED, extra_deltas: Iterable[NoiseParams] = (), mu: float = 4.0) -> list[Check]:
    """Exact identities and property checks; every entry is named so failures are traceable."""
    deltas = _default_deltas(seed)
    extra = list(extra_deltas)
    checks: list[Check] = []

    for i, delta in enumerate([*deltas, *extra]):
        tag = f"[{i}]"

        def unitarity(delta=delta):
            bell = pbs_split(rotate_z(make_bell_psi_plus(1, 2), (1, Spatial.S), 0.7), (1, 2))
            out = apply_collective_unitary(bell, delta, (1, 2))
            return abs(out.norm() - 1) < ATOL_EXACT, f"norm={out.norm()!r}"

        def pair_sum(delta=delta):
            total = math.fsum(pair_branch_table(delta, 0.3, 1.9).values())
            return abs(total - 0.5) < ATOL_EXACT, f"sum={total!r}"

        checks.append(_check(f"channel_unitarity{tag}", unitarity))
        checks.append(_check(f"pair_success_half{tag}", pair_sum))

    def involutions():
        st = rotate_z(make_bell_psi_plus(1, 2), (1, Spatial.S), 0.9)
        worst = 1.0
        worst = min(worst, state_fidelity(st, apply_cnot_pol(apply_cnot_pol(st, (1, 0), (2, 0)), (1, 0), (2, 0))))
        split = pbs_split(st, (1, 2))
        worst = min(worst, state_fidelity(split, apply_pol_flip(apply_pol_flip(split, 1), 1)))
        worst = min(worst, state_fidelity(split, apply_arm_swap_and_x(apply_arm_swap_and_x(split, (1, 2)), (1, 2))))
        return worst > 1 - ATOL_EXACT, f"min fidelity={worst!r}"

    def qnd_complete():
        st = pbs_split(rotate_z(make_bell_psi_plus(1, 2), (1, Spatial.S), 0.4), (1, 2))
        table = photon_number_table(st, frozenset(m for m in st.modes if m.spatial == Spatial.S))
        total = math.fsum(p for p, _ in table.values())
        return abs(total - 1) < ATOL_EXACT, f"sum={total!r}"

    def catalan_recurrence():
        bad = [
            t
            for t in range(16)
            if analytics.catalan(t + 1) != sum(analytics.catalan(i) * analytics.catalan(t - i) for i in range(t + 1))
        ]
        return not bad, f"mismatch at {bad}" if bad else "t<=15"

    def walk_closed_form():
        worst = 0.0
        for q in np.round(np.arange(0.1, 0.91, 0.1), 10):
            if q == 0.5:
                continue
            series = math.fsum(analytics.walk_terms(float(q), 20000))
            worst = max(worst, abs(series - analytics.walk_absorption(float(q))))
        return worst < ATOL_EXACT, f"max diff={worst:.3e}"

    def cascade_symmetric():
        delta = NoiseParams.from_moduli(0.5, 0.5, (0.3, 1.1, 2.0, 0.7))
        worst = max(
            abs(analytics.oracle_dfse_cascade(delta, m, n) - analytics.walk_absorption(0.5, n))
            for m in Spatial
            for n in range(41)
        )
        return worst < 1e-10, f"max diff={worst:.3e}"

    def single_photon_half():
        v = analytics.p_single_photon(1.0, 1)
        return v == 0.5, repr(v)

    def coeff_symmetric_point():
        v = analytics.p_coherent_limit_coeff(NoiseParams.from_moduli(0.5, 0.5))
        return abs(v - 1) < ATOL_EXACT, repr(v)

    def substitution_identity():
        worst = 0.0
        for delta in deltas:
            worst = max(worst, abs(analytics.q_mode_l(delta) - analytics.q_mode_l_from_ad(delta)))
            worst = max(worst, abs(analytics.q2(delta) - (1 - analytics.q_mode_l(delta))))
        return worst < 1e-12, f"max diff={worst:.3e}"

    def lossless_entanglement():
        for i, delta in enumerate(deltas[:3]):
            cfg = ProtocolConfig(Protocol.ENTANGLEMENT, ChannelModel(delta, 1.0), seed=seed + i)
            p, _ = estimate_success(cfg, 200, workers=1)
            if p != 1.0:
                return False, f"delta[{i}] success {p}"
        return True, "200 trials x 3 deltas"

    checks += [
        _check("involutions", involutions),
        _check("qnd_completeness", qnd_complete),
        _check("catalan_recurrence", catalan_recurrence),
        _check("walk_series_closed_form", walk_closed_form),
        _check("cascade_equals_walk_symmetric", cascade_symmetric),
        _check("single_photon_N1_T1_half", single_photon_half),
        _check("limit_coefficient_symmetric_one", coeff_symmetric_point),
        _check("mode_l_substitution_identity", substitution_identity),
        _check("lossless_entanglement_deterministic", lossless_entanglement),
    ]
    for v in blindness_report(mu, None, deltas[:2]):
        checks.append(Check(f"blindness:{v.protocol}:{v.identity}", v.passed, f"trace_distance={v.trace_distance:.3e}"))
    return checks


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

CONFIG_ALIASES = {
    "channel.t": "T",
    "channel.a_abs2": "a2",
    "channel.d_abs2": "d2",
    "channel.scheme": "scheme",
    "t": "T",
    "t_grid": "T_grid",
    "t-grid": "T_grid",
}


def load_config(path: str | Path) -> dict[str, str]:
    """Read a flat ``key = value`` file; keys are case-insensitive except T."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string("[config]\n" + Path(path).read_text(encoding="utf-8"))
    out = {}
    for key, value in parser["config"].items():
        out[CONFIG_ALIASES.get(key, key)] = value.strip()
    return out


def parse_grid(text: str) -> tuple[float, ...]:
    """Comma list ``0.25,0.5,1`` or inclusive ``start:stop:count``."""
    text = text.strip()
    if ":" in text:
        start, stop, count = text.split(":")
        return tuple(float(x) for x in np.linspace(float(start), float(stop), int(count)))
    return tuple(float(x) for x in text.split(",") if x.strip())
