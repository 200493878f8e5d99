import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qeclab.analysis import (
    BUDGET_WEIGHTS,
    FitResult,
    budget,
    budget_inputs,
    fit_epsilon,
    lambda_factor,
    offset_rates,
    scale_scan,
    sensitivity,
    subsample_repetition,
)
from qeclab.circuit import build_memory_circuit
from qeclab.geometry import repetition_layout
from qeclab.noise import COMPONENTS, ComponentRates, build_noise_model
from qeclab.simulator import sample

# published 1/Lambda budget rows: (p_expt, w_i, contribution as printed, share % as printed)
PUBLISHED_BUDGET = {
    "sq_gate": (1.09e-3, 78.7, "0.086", "9.6"),
    "cz_gate": (4.85e-3, 54.5, "0.264", "29.4"),
    "data_idle": (2.46e-2, 7.0, "0.172", "19.2"),
    "readout": (1.96e-2, 5.6, "0.11", "12.2"),
    "reset": (1.86e-3, 5.6, "0.0104", "1.2"),
    "heating_leakage": (6.4e-4, 125.0, "0.08", "8.9"),
    "cz_leakage": (2.0e-4, 125.0, "0.025", "2.8"),
    "cz_crosstalk": (9.5e-4, 158.0, "0.15", "16.7"),
}


def printed(x: float, like: str) -> str:
    decimals = len(like.split(".")[1]) if "." in like else 0
    return f"{x:.{decimals}f}"


# ---------------------------------------------------------------------------
# fitting


def test_fit_exact_series():
    pts = [(r, (1 - 0.94**r) / 2, math.inf) for r in range(1, 26)]
    f = fit_epsilon(pts)
    assert f.epsilon == pytest.approx(0.03, abs=1e-12)
    assert f.sigma == 0.0 and f.residual_scale == 1.0 and f.start_round == 3


@given(st.lists(st.floats(0.0, 0.2), min_size=6, max_size=6), st.floats(0.0, 0.49))
def test_fit_ignores_points_before_start(noise, p1):
    eps = 0.03
    pts = [(r, (1 - (1 - 2 * eps) ** r) / 2 * (1 + 0.1 * z), 1e5) for r, z in zip(range(3, 9), noise)]
    a = fit_epsilon(pts)
    b = fit_epsilon([(1, p1, 1e5), (2, p1 / 2, 1e5)] + pts)
    assert a == b


def test_fit_drops_nonpositive_fidelity():
    pts = [(3, 0.1, 1e4), (5, 0.15, 1e4), (7, 0.2, 1e4), (9, 0.6, 1e4)]
    f = fit_epsilon(pts)
    assert f.dropped == (9,) and f.n_points == 3
    with pytest.raises(ValueError):
        fit_epsilon(pts[:2])


def test_fit_residual_scale_inflates_sigma():
    rng = np.random.default_rng(1)
    pts = [(r, (1 - 0.94**r) / 2 * (1 + 0.05 * rng.standard_normal()), 1e6) for r in range(3, 26)]
    f = fit_epsilon(pts)
    assert f.residual_scale > 1


def test_fit_result_validation():
    with pytest.raises(ValueError):
        FitResult(0.7, 0.0, 1.0, 3)
    with pytest.raises(ValueError):
        FitResult(0.1, -1.0, 1.0, 3)


def test_lambda_examples():
    lam, _ = lambda_factor(0.03028, 0.02914)
    assert round(lam, 3) == 1.039
    assert lambda_factor(0.02, 0.02)[0] == 1.0
    lam, sig = lambda_factor(0.03, 0.02, 0.003, 0.002)
    assert sig == pytest.approx(1.5 * math.hypot(0.1, 0.1))
    with pytest.raises(ZeroDivisionError):
        lambda_factor(0.03, 0.0)


# ---------------------------------------------------------------------------
# budget


def test_budget_reproduces_published_rows():
    table = budget(BUDGET_WEIGHTS, ComponentRates())
    assert {r.component for r in table.rows} == set(PUBLISHED_BUDGET)
    shares = table.shares()
    for row in table.rows:
        p, w, contrib, share = PUBLISHED_BUDGET[row.component]
        assert row.p_expt == pytest.approx(p, rel=1e-12)
        assert row.weight == w
        assert printed(row.contribution, contrib) == contrib
        assert printed(100 * shares[row.component], share) == share
    assert f"{table.total:.2f}" == "0.90"


def test_budget_cz_deduplication():
    p = budget_inputs(ComponentRates())
    assert p["cz_gate"] == pytest.approx(6.05e-3 - 9.5e-4 - 1.25 * 2.0e-4, rel=1e-12)
    assert budget_inputs(ComponentRates(), deduplicate_cz=False)["cz_gate"] == 6.05e-3


@given(st.lists(st.floats(0, 1e-2), min_size=len(COMPONENTS), max_size=len(COMPONENTS)))
def test_budget_total_is_dot_product(ps):
    rates = dict(zip(COMPONENTS, ps))
    t = budget(BUDGET_WEIGHTS, rates)
    assert abs(t.total - sum(BUDGET_WEIGHTS[k] * v for k, v in rates.items())) < 1e-12


def test_budget_zero_and_missing():
    assert budget(BUDGET_WEIGHTS, ComponentRates.zero()).total == 0
    with pytest.raises(KeyError):
        budget({"sq_gate": 1.0}, ComponentRates())


# ---------------------------------------------------------------------------
# scans and sensitivities


def test_scan_zero_scale_and_limits():
    g = scale_scan(ComponentRates(), [0.0], [3, 5], [3, 5, 7], 1000)
    assert g.epsilon(0.0, 3) == 0.0 and g.epsilon(0.0, 5) == 0.0
    with pytest.raises(ValueError):
        scale_scan(ComponentRates(), [1.0], [9], [3, 5, 7], 1000)
    with pytest.raises(ValueError):
        scale_scan(ComponentRates(), [1.0], [3], [3, 5, 7], 2_000_000)


@pytest.mark.slow
def test_lambda_decreases_with_scale():
    s_values = [0.7, 0.9, 1.1, 1.3]
    g = scale_scan(ComponentRates(), s_values, [3, 5], [3, 5, 7, 9], 30_000, seed=1)
    lams = [g.lam(s, 3) for s in s_values]
    for (a, sa), (b, sb) in zip(lams, lams[1:]):
        assert a > b - 2 * math.hypot(sa, sb)


def test_sensitivity_rejects_degenerate_design():
    with pytest.raises(ValueError):
        sensitivity("sq_gate", [0, 0, 0], ComponentRates(), 3, [3, 5, 7], 100)
    with pytest.raises(ValueError):
        sensitivity("sq_gate", [0.001, 0.002, 0.003], ComponentRates(), 3, [3, 5, 7], 100)
    with pytest.raises(ValueError):
        sensitivity("bogus", [0, 0.001, 0.002], ComponentRates(), 3, [3, 5, 7], 100)


def test_offset_rates_holds_cz_remainder():
    base = ComponentRates()
    r = offset_rates(base, "cz_crosstalk", 1e-3, "PauliPlus")
    assert r.cz_gate - r.cz_crosstalk == pytest.approx(base.cz_gate - base.cz_crosstalk)
    r = offset_rates(base, "cz_leakage", 1e-3, "PauliPlus")
    assert r.cz_gate - 1.25 * r.cz_leakage == pytest.approx(base.cz_gate - 1.25 * base.cz_leakage)
    assert offset_rates(base, "cz_leakage", 1e-3, "Pauli").cz_gate == base.cz_gate


PAULI_STEPS = {"sq_gate": 0.002, "cz_gate": 0.006, "data_idle": 0.02, "readout": 0.03, "reset": 0.03}
PLUS_STEPS = {"heating_leakage": 0.003, "cz_leakage": 0.002, "cz_crosstalk": 0.003}


@pytest.mark.slow
def test_sensitivity_positive_and_grows_with_distance():
    base = ComponentRates()
    nu = {}
    for d in (3, 5):
        for comp, step in PAULI_STEPS.items():
            v, s = sensitivity(comp, [0, step, 2 * step], base, d, [3, 5, 7], 20_000, seed=2)
            assert v > 2 * s, (d, comp, v, s)
            nu[(d, comp)] = (v, s)
    for comp in ("sq_gate", "cz_gate", "data_idle", "readout"):
        (a, sa), (b, sb) = nu[(3, comp)], nu[(5, comp)]
        assert b >= a - 2 * math.hypot(sa, sb), comp


@pytest.mark.slow
@pytest.mark.parametrize("d", [3, 5])
def test_leakage_and_crosstalk_sensitivity_positive(d):
    base = ComponentRates()
    for comp, step in PLUS_STEPS.items():
        v, s = sensitivity(comp, [0, step, 2 * step], base, d, [3, 5, 7], 10_000, seed=2, mode="PauliPlus")
        assert v > 2 * s, (d, comp, v, s)


# ---------------------------------------------------------------------------
# subsampling


@pytest.fixture(scope="module")
def rep25():
    c = build_memory_circuit(repetition_layout(25), "Z", 6)
    return sample(c, build_noise_model(ComponentRates()), 2000, 5)


def test_subsample_identity(rep25):
    sub = subsample_repetition(rep25, 25)
    assert np.array_equal(sub.records, rep25.records)
    assert np.array_equal(sub.detectors(), rep25.detectors())
    assert np.array_equal(sub.observable_flips(), rep25.observable_flips())


def test_subsample_noiseless_zero():
    c = build_memory_circuit(repetition_layout(25), "Z", 4)
    b = sample(c, None, 100, 1)
    for t in (3, 7, 11):
        assert not subsample_repetition(b, t).detectors().any()
        assert not subsample_repetition(b, t).observable_flips().any()


def test_subsample_nested_equals_direct(rep25):
    for outer, inner, o1, o2 in [(11, 5, 0, 0), (11, 5, 4, 2), (21, 3, 2, 16)]:
        a = subsample_repetition(subsample_repetition(rep25, outer, o1), inner, o2)
        b = subsample_repetition(rep25, inner, o1 + o2)
        assert np.array_equal(a.records, b.records)
        assert np.array_equal(a.detectors(), b.detectors())
        assert np.array_equal(a.observable_flips(), b.observable_flips())


def test_subsample_matches_direct_small_code_statistics(rep25):
    # a d=5 sub-chain has the detector structure of a native d=5 circuit
    sub = subsample_repetition(rep25, 5)
    native = build_memory_circuit(repetition_layout(5), "Z", 6)
    assert len(sub.circuit.detectors) == len(native.detectors)
    assert [d.id for d in sub.circuit.detectors] == [d.id for d in native.detectors]


def test_subsample_invalid(rep25):
    for t in (4, 1, 27):
        with pytest.raises(ValueError):
            subsample_repetition(rep25, t)
    with pytest.raises(ValueError):
        subsample_repetition(rep25, 5, offset=22)
