import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import gpc_oracle, random_kraus
from qeclab.channels import (
    KrausChannel,
    cz_leakage_channel,
    depolarizing_distribution,
    depolarizing_gpc,
    identity_channel,
    idle_channel,
    leakage_rotation_unitary,
    pauli_kraus,
    readout_confusion,
    twirl,
    unitary_channel,
)
from qeclab.noise import COMPONENTS, ComponentRates, NoiseMode, build_noise_model

LABELS = (0, 2, 3)


def _pop(ch, level, rho_in):
    return float(np.real(ch.apply(rho_in)[level, level]))


def _ket(level, dim=4):
    v = np.zeros(dim)
    v[level] = 1
    return np.outer(v, v).astype(complex)


def test_idle_zero_duration_is_identity():
    ch = idle_channel(20e3, 30e3, 1e-6, 0.0)
    assert len(ch.operators) == 1
    assert np.allclose(ch.operators[0], np.eye(4))


@pytest.mark.parametrize("t", [100.0, 1000.0, 20e3])
def test_idle_amplitude_damping(t):
    T1 = 20e3
    ch = idle_channel(T1, math.inf, 0.0, t)
    assert _pop(ch, 1, _ket(1)) == pytest.approx(math.exp(-t / T1), abs=1e-10)
    # |2> decays at 2/T1 under the sqrt(j+1) ladder
    assert _pop(ch, 2, _ket(2)) == pytest.approx(math.exp(-2 * t / T1), abs=1e-10)


def test_heating_leak_per_cycle():
    gamma = 1 / 700e3  # 1 / (700 us) in 1/ns
    t_cycle = 896.0
    ch = idle_channel(math.inf, math.inf, gamma, t_cycle)
    rho = 0.5 * (_ket(0) + _ket(1))
    assert _pop(ch, 2, rho) == pytest.approx(6.4e-4, rel=2e-3)


def test_idle_rejects_bad_input():
    with pytest.raises(ValueError):
        idle_channel(float("nan"), 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        idle_channel(-1.0, 1.0, 0.0, 1.0)


def test_cz_leakage():
    assert np.allclose(sum(k.conj().T @ k for k in cz_leakage_channel(0.0).operators), np.eye(16))
    ch = cz_leakage_channel(0.0)
    rho = np.eye(16, dtype=complex) / 16
    assert np.allclose(ch.apply(rho), rho)
    assert cz_leakage_channel(0.5).completeness_error() < 1e-12
    # computational input, |11> occupation 1/4
    comp = [a * 4 + b for a in range(2) for b in range(2)]
    rho = np.zeros((16, 16), dtype=complex)
    for i in comp:
        rho[i, i] = 0.25
    out = cz_leakage_channel(8e-4).apply(rho)
    assert float(np.real(out[0 * 4 + 2, 0 * 4 + 2])) == pytest.approx(2.0e-4, abs=1e-15)
    with pytest.raises(ValueError):
        cz_leakage_channel(1.5)


@pytest.mark.parametrize("theta", [0.0, np.pi / 6, np.pi / 4, np.pi / 2])
def test_twirl_leakage_rotation_table(theta):
    g = twirl(unitary_channel(leakage_rotation_unitary(theta)))
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    assert g.pauli_prob((0,), (0,), "I") == pytest.approx(c**4, abs=1e-10)
    assert g.pauli_prob((0,), (0,), "Z") == pytest.approx(s**4, abs=1e-10)
    assert g.transition_prob((0,), (2,)) == pytest.approx(math.sin(theta) ** 2 / 2, abs=1e-10)
    assert g.transition_prob((2,), (0,)) == pytest.approx(math.sin(theta) ** 2, abs=1e-10)
    assert g.transition_prob((2,), (2,)) == pytest.approx(math.cos(theta) ** 2, abs=1e-10)
    assert g.transition_prob((3,), (3,)) == pytest.approx(1.0, abs=1e-10)


def test_twirl_identity():
    for a in (1, 2):
        g = twirl(identity_channel(a))
        assert g.is_identity(1e-12)
        for init in itertools.product(LABELS, repeat=a):
            assert g.transition_prob(init, init) == pytest.approx(1.0)


@pytest.mark.parametrize("gamma", [0.0, 0.01, 0.3, 1.0])
def test_twirl_amplitude_damping_closed_form(gamma):
    k0 = np.diag([1, math.sqrt(1 - gamma), 1, 1]).astype(complex)
    k1 = np.zeros((4, 4), dtype=complex)
    k1[0, 1] = math.sqrt(gamma)
    ops = (k0, k1)
    g = twirl(KrausChannel(ops, 1))
    r = math.sqrt(1 - gamma)
    want = {"I": (1 + r) ** 2 / 4, "X": gamma / 4, "Y": gamma / 4, "Z": (1 - r) ** 2 / 4}
    oracle = gpc_oracle(ops, 1, (0,), (0,))
    for p, v in want.items():
        assert g.pauli_prob((0,), (0,), p) == pytest.approx(v, abs=1e-12)
        assert oracle[p] == pytest.approx(v, abs=1e-12)


@pytest.mark.parametrize("arity", [1, 2])
@pytest.mark.parametrize("seed", range(3))
def test_twirl_matches_entangled_pair_oracle(arity, seed):
    ops = random_kraus(np.random.default_rng(seed), arity)
    ch = KrausChannel(tuple(ops), arity)
    assert ch.completeness_error() < 1e-10
    g = twirl(ch)
    assert g.normalization_error() < 1e-10
    for init in itertools.product(LABELS, repeat=arity):
        for final in itertools.product(LABELS, repeat=arity):
            ref = gpc_oracle(ops, arity, init, final)
            assert g.transition_prob(init, final) == pytest.approx(sum(ref.values()), abs=1e-10)
            for p, v in ref.items():
                assert g.pauli_prob(init, final, p) == pytest.approx(v, abs=1e-10)


def test_twirl_rejects_non_cptp():
    ops = (2 * np.eye(4, dtype=complex),)
    with pytest.raises(ValueError):
        twirl(KrausChannel(ops, 1))


@given(st.floats(0, 0.75), st.integers(1, 2))
def test_pauli_channel_is_twirl_fixed_point(p, arity):
    dist = depolarizing_distribution(p, arity)
    g = twirl(pauli_kraus(dist))
    ref = depolarizing_gpc(p, arity)
    c = (0,) * arity
    for name, v in dist.items():
        assert g.pauli_prob(c, c, name) == pytest.approx(ref.pauli_prob(c, c, name), abs=1e-10)
        assert g.pauli_prob(c, c, name) == pytest.approx(v, abs=1e-10)


@given(st.floats(0, 1), st.floats(0, 1))
def test_readout_rows_stochastic(e0, e1):
    m = readout_confusion(e0, e1).matrix
    assert np.allclose(m.sum(axis=1), 1)
    assert np.allclose(m[2:], 0.5)


def test_readout_examples():
    m = readout_confusion(0, 0).matrix
    assert np.array_equal(m[:2], np.eye(2))
    r = readout_confusion(1.96e-2, 1.96e-2)
    assert r.flip_to_one[0] == pytest.approx(1.96e-2)
    with pytest.raises(ValueError):
        readout_confusion(-0.1, 0)


def test_cz_depolarizing_share_pauli_plus():
    nm = build_noise_model(ComponentRates(), NoiseMode.PAULI_PLUS)
    assert nm.cz_depolarizing_share() == pytest.approx(4.85e-3, abs=1e-15)
    assert build_noise_model(ComponentRates(), "Pauli").cz_depolarizing_share() == pytest.approx(6.05e-3)


def test_zero_rates_give_identity_channels():
    from qeclab.circuit import build_memory_circuit
    from qeclab.geometry import surface_layout

    c = build_memory_circuit(surface_layout(3), "Z", 2)
    for mode in ("Pauli", "PauliPlus"):
        a = build_noise_model(ComponentRates.zero(), mode).assign(c)
        assert all(not ops for ops in a.after)
        assert all(r.is_identity() for r in a.readout)


@given(st.lists(st.floats(0, 1), min_size=len(COMPONENTS), max_size=len(COMPONENTS)))
def test_component_rates_validation(vals):
    r = ComponentRates(**dict(zip(COMPONENTS, vals)))
    assert r.scaled(0.5).sq_gate == pytest.approx(r.sq_gate * 0.5)
    with pytest.raises(ValueError):
        ComponentRates(sq_gate=1.5)
