"""Logical error per cycle fits, Lambda, scale-factor scans, sensitivities, budgets and subsampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import InitialBitstring, _record_index, build_memory_circuit
from .geometry import Basis, CodeKind, CodeLayout, repetition_layout, surface_layout
from .noise import COMPONENTS, ComponentRates, NoiseModel, build_noise_model
from .rng import derive_seed
from .simulator import SampleBatch

LN10 = math.log(10.0)

# Weights at the half-operation point and the budget inputs they multiply.
BUDGET_WEIGHTS = {
    "sq_gate": 78.7,
    "cz_gate": 54.5,
    "data_idle": 7.0,
    "readout": 5.6,
    "reset": 5.6,
    "heating_leakage": 125.0,
    "cz_leakage": 125.0,
    "cz_crosstalk": 158.0,
}
LEAKAGE_PAULI_FACTOR = 1.25


@dataclass(frozen=True)
class FitResult:
    epsilon: float
    sigma: float
    residual_scale: float
    start_round: int
    intercept: float = 0.0
    n_points: int = 0
    dropped: tuple = ()  # rounds dropped for non-positive fidelity

    def __post_init__(self):
        if not 0 <= self.epsilon <= 0.5 + 1e-12 and not math.isnan(self.epsilon):
            raise ValueError(f"epsilon {self.epsilon} outside [0, 0.5]")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def fit_epsilon(points, start_round: int = 3) -> FitResult:
    """Weighted straight-line fit of log10 F(r), F = 1 - 2 p_L, over rounds >= start_round.

    ``points`` is a sequence of (rounds, p_L, shots); shots may be inf for exact data.
    The slope gives 1 - 2 eps = 10**b.  The uncertainty is the binomial one scaled up by
    the ratio of observed to expected residual RMS when that ratio exceeds one.
    """
    pts = [(int(r), float(p), float(n)) for r, p, n in points if int(r) >= start_round]
    dropped = tuple(r for r, p, _ in pts if 1 - 2 * p <= 0)
    pts = [(r, p, n) for r, p, n in pts if 1 - 2 * p > 0]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points at rounds >= {start_round} with positive fidelity")
    r = np.array([x[0] for x in pts], dtype=float)
    p = np.array([x[1] for x in pts])
    n = np.array([x[2] for x in pts])
    F = 1 - 2 * p
    y = np.log10(F)
    sig_p = np.sqrt(p * (1 - p) / n)
    sig_y = 2 * sig_p / (F * LN10)
    exact = np.all(sig_y == 0)
    w = np.ones_like(y) if exact else 1.0 / np.maximum(sig_y, 1e-300) ** 2
    A = np.stack([np.ones_like(r), r], axis=1)
    cov = np.linalg.inv(A.T @ (A * w[:, None]))
    a, b = cov @ (A.T @ (w * y))
    resid = y - (a + b * r)
    dof = len(r) - 2
    if exact:
        scale = 1.0
        sig_b = 0.0
    else:
        chi2 = float(np.sum(w * resid**2))
        ratio = math.sqrt(chi2 / dof) if dof > 0 else 1.0
        scale = max(1.0, ratio)
        sig_b = math.sqrt(cov[1, 1]) * scale
    g = 10.0**b
    eps = (1 - g) / 2
    sig_eps = LN10 * g / 2 * sig_b
    return FitResult(float(min(max(eps, 0.0), 0.5)), float(sig_eps), float(scale), start_round, float(a), len(r), dropped)


def average_fits(fits) -> FitResult:
    """Mean epsilon over independent fits (e.g. X and Z bases); sigma is the mean sigma."""
    fits = list(fits)
    if not fits:
        raise ValueError("no fits to average")
    return FitResult(
        float(np.mean([f.epsilon for f in fits])),
        float(np.mean([f.sigma for f in fits])),
        float(np.mean([f.residual_scale for f in fits])),
        fits[0].start_round,
        float(np.mean([f.intercept for f in fits])),
        sum(f.n_points for f in fits),
        tuple(r for f in fits for r in f.dropped),
    )


def lambda_factor(eps_d: float, eps_d2: float, sigma_d: float = 0.0, sigma_d2: float = 0.0) -> tuple[float, float]:
    """Lambda = eps_d / eps_{d+2} with first-order error propagation."""
    if eps_d2 == 0:
        raise ZeroDivisionError("eps_{d+2} is zero")
    lam = eps_d / eps_d2
    rel = math.hypot(sigma_d / eps_d if eps_d else 0.0, sigma_d2 / eps_d2)
    return lam, abs(lam) * rel


# ---------------------------------------------------------------------------
# simulation drivers


def memory_point(
    layout: CodeLayout,
    basis: Basis | str,
    rounds: int,
    noise: NoiseModel,
    shots: int,
    seed: int,
    decoder="correlated",
    chunk: int = 50_000,
) -> tuple[float, int]:
    """Sample one memory experiment and decode it with the model's own hypergraph; returns (p_L, shots)."""
    from .decoding import dem_from_noise, make_decoder
    from .simulator import compile_program, reference_records, sample_detection_events

    circuit = build_memory_circuit(layout, basis, rounds)
    prog = compile_program(circuit, noise)
    if not prog.has_noise:
        return 0.0, shots
    h = dem_from_noise(circuit, noise)
    dec = make_decoder(h, decoder)
    ref = reference_records(circuit)
    fails = 0
    for lo in range(0, shots, chunk):
        n = min(chunk, shots - lo)
        det, obs = sample_detection_events(circuit, noise, n, seed, shot_start=lo, _prog=prog, _ref=ref)
        fails += int(np.count_nonzero(dec.decode_batch(det) ^ obs))
    return fails / shots, shots


def measure_epsilon(
    layout: CodeLayout,
    rounds_list,
    noise: NoiseModel,
    shots: int,
    seed: int,
    bases=("Z", "X"),
    decoder="correlated",
    start_round: int = 3,
) -> tuple[FitResult, list]:
    """Per-basis fits averaged; also returns the (basis, rounds, p_L, shots) table."""
    table = []
    fits = []
    for bi, basis in enumerate(bases):
        pts = []
        for r in rounds_list:
            p, n = memory_point(layout, basis, r, noise, shots, derive_seed(seed, bi, r), decoder)
            pts.append((r, p, n))
            table.append((Basis(basis).value, r, p, n))
        fits.append(fit_epsilon(pts, start_round))
    return average_fits(fits), table


@dataclass
class ScanCell:
    s: float
    d: int
    fit: FitResult
    shots: int
    table: list = field(default_factory=list)

    @property
    def epsilon(self) -> float:
        return self.fit.epsilon

    @property
    def interval(self) -> tuple[float, float]:
        return self.fit.epsilon - 2 * self.fit.sigma, self.fit.epsilon + 2 * self.fit.sigma


@dataclass
class ScanGrid:
    s_values: tuple
    distances: tuple
    cells: dict  # (s, d) -> ScanCell

    def epsilon(self, s, d) -> float:
        return self.cells[(s, d)].epsilon

    def lam(self, s, d) -> tuple[float, float]:
        a, b = self.cells[(s, d)].fit, self.cells[(s, d + 2)].fit
        return lambda_factor(a.epsilon, b.epsilon, a.sigma, b.sigma)

    def rows(self) -> list[dict]:
        out = []
        for (s, d), c in sorted(self.cells.items()):
            out.append({"s": s, "d": d, "epsilon": c.fit.epsilon, "sigma": c.fit.sigma, "shots": c.shots})
        return out


def scale_scan(
    rates: ComponentRates,
    s_values,
    distances,
    rounds,
    shots: int,
    seed: int = 0,
    *,
    bases=("Z", "X"),
    decoder="correlated",
    mode: str = "Pauli",
) -> ScanGrid:
    """Scale every component probability by s and fit eps_d per (s, d) cell."""
    for d in distances:
        if d % 2 == 0 or d > 7:
            raise ValueError("distances must be odd and at most 7")
    if shots > 10**6:
        raise ValueError("at most 10^6 shots per point")
    cells = {}
    for si, s in enumerate(s_values):
        if s < 0:
            raise ValueError("scale factor must be non-negative")
        noise = build_noise_model(rates.scaled(s), mode)
        for d in distances:
            if s == 0:
                fit = FitResult(0.0, 0.0, 1.0, 3)
                cells[(s, d)] = ScanCell(s, d, fit, shots)
                continue
            fit, table = measure_epsilon(
                surface_layout(d), rounds, noise, shots, derive_seed(seed, si, d), bases, decoder
            )
            cells[(s, d)] = ScanCell(s, d, fit, shots, table)
    return ScanGrid(tuple(s_values), tuple(distances), cells)


def offset_rates(base: ComponentRates, component: str, delta: float, mode="Pauli") -> ComponentRates:
    """Offset one component; in PauliPlus mode the CZ depolarizing remainder is held fixed.

    The CZ gate rate there includes crosstalk and 1.25x the CZ leakage, so offsetting
    either of those alone would shrink the depolarizing part by the same amount.
    """
    r = base.with_offset(component, delta)
    if str(getattr(mode, "value", mode)) == "PauliPlus":
        share = {"cz_crosstalk": 1.0, "cz_leakage": LEAKAGE_PAULI_FACTOR}.get(component)
        if share:
            r = r.with_offset("cz_gate", share * delta)
    return r


def sensitivity(
    component: str,
    deltas,
    base: ComponentRates,
    d: int,
    rounds,
    shots: int,
    seed: int = 0,
    *,
    bases=("Z",),
    decoder="correlated",
    mode: str = "Pauli",
) -> tuple[float, float]:
    """Slope of eps_L against an offset of one component probability (weighted linear fit)."""
    if component not in COMPONENTS:
        raise ValueError(f"unknown component {component!r}")
    deltas = [float(x) for x in deltas]
    if len(set(deltas)) < 3 or 0.0 not in deltas:
        raise ValueError("need at least 3 distinct deltas including 0")
    eps, sig = [], []
    for k, dl in enumerate(deltas):
        noise = build_noise_model(offset_rates(base, component, dl, mode), mode)
        fit, _ = measure_epsilon(surface_layout(d), rounds, noise, shots, derive_seed(seed, k), bases, decoder)
        eps.append(fit.epsilon)
        sig.append(max(fit.sigma, 1e-12))
    x = np.array(deltas)
    w = 1 / np.array(sig) ** 2
    A = np.stack([np.ones_like(x), x], axis=1)
    cov = np.linalg.inv(A.T @ (A * w[:, None]))
    coef = cov @ (A.T @ (w * np.array(eps)))
    return float(coef[1]), float(math.sqrt(cov[1, 1]))


# ---------------------------------------------------------------------------
# budget


@dataclass(frozen=True)
class BudgetRow:
    component: str
    p_expt: float
    weight: float

    @property
    def contribution(self) -> float:
        return self.weight * self.p_expt


@dataclass(frozen=True)
class BudgetTable:
    rows: tuple

    @property
    def total(self) -> float:
        return float(sum(r.contribution for r in self.rows))

    def shares(self) -> dict:
        t = self.total
        return {r.component: (r.contribution / t if t else 0.0) for r in self.rows}


def budget_inputs(rates: ComponentRates, deduplicate_cz: bool = True) -> dict:
    """Per-component p_expt; the CZ entry excludes the crosstalk and CZ-leakage parts it double counts."""
    p = {name: getattr(rates, name) for name in COMPONENTS}
    if deduplicate_cz:
        p["cz_gate"] = max(0.0, p["cz_gate"] - p["cz_crosstalk"] - LEAKAGE_PAULI_FACTOR * p["cz_leakage"])
    return p


def budget(weights: dict, rates: ComponentRates | dict, deduplicate_cz: bool = True) -> BudgetTable:
    """1/Lambda budget rows w_i * p_i for every component of ``rates``."""
    p = budget_inputs(rates, deduplicate_cz) if isinstance(rates, ComponentRates) else dict(rates)
    missing = [k for k in p if k not in weights]
    if missing:
        raise KeyError(f"missing weight for {missing}")
    return BudgetTable(tuple(BudgetRow(k, float(v), float(weights[k])) for k, v in p.items()))


# ---------------------------------------------------------------------------
# repetition-code subsampling


def subsample_repetition(batch: SampleBatch, target_d: int, offset: int = 0) -> SampleBatch:
    """Restrict a repetition-code batch to the chain of ``target_d`` data qubits starting at ``offset``.

    The sub-batch carries its own circuit (same rounds, restricted initial bits) so
    detectors and the observable are recomputed on the sub-chain.
    """
    c = batch.circuit
    layout = c.layout
    if layout.kind != CodeKind.REPETITION:
        raise ValueError("subsampling is defined for repetition codes")
    if target_d % 2 == 0 or target_d < 3 or target_d > layout.distance:
        raise ValueError(f"target distance must be odd, >= 3 and <= {layout.distance}")
    if offset < 0 or offset + target_d > layout.distance:
        raise ValueError("sub-chain does not fit in the parent chain")
    base_offset = _chain_offset(layout)
    sub_layout = repetition_layout(target_d, base_offset + offset)
    if sub_layout.data_qubits != layout.data_qubits[offset : offset + target_d]:
        raise ValueError("parent layout is not a standard chain")
    bits = c.init.bits()[offset : offset + target_d]
    value = int("".join(str(int(b)) for b in bits), 2)
    sub = build_memory_circuit(sub_layout, c.basis, c.rounds, InitialBitstring(value, target_d))
    parent_idx = _record_index(c.moments)
    sub_idx = _record_index(sub.moments)
    cols = np.empty(len(sub_idx), dtype=np.int64)
    for key, k in sub_idx.items():
        cols[k] = parent_idx[key]
    return SampleBatch(sub, batch.records[:, cols], batch.master_seed, batch.shot_start, batch.symbols)


def _chain_offset(layout: CodeLayout) -> int:
    for off in range(0, 64):
        cand = repetition_layout(layout.distance, off)
        if cand.data_qubits == layout.data_qubits:
            return off
    raise ValueError("could not locate the parent chain")
