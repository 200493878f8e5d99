import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qeclab.analysis import subsample_repetition
from qeclab.circuit import build_memory_circuit, default_initial_bitstrings
from qeclab.cli import (
    EXIT_CONFIG,
    EXIT_MISMATCH,
    EXIT_OK,
    datasets,
    main,
    shot_groups,
    subsample_events,
)
from qeclab.decoding import dem_from_noise, dem_from_text, dem_to_text
from qeclab.geometry import CodeKind, repetition_layout, surface_layout
from qeclab.io import (
    ConfigError,
    DataMismatch,
    circuit_from_text,
    circuit_to_text,
    config_from_dict,
    events_from_bytes,
    events_to_bytes,
    read_csv,
)
from qeclab.noise import ComponentRates, build_noise_model
from qeclab.simulator import sample

SRC = str(Path(__file__).resolve().parents[1] / "src")


def write_cfg(path, **kw):
    cfg = {"code": "surface", "distance": 3, "basis": ["Z"], "rounds": [1, 3], "shots": 200, "seed": 7}
    cfg.update(kw)
    path.write_text(json.dumps(cfg))
    return str(path)


# ---------------------------------------------------------------------------
# formats


@given(st.integers(0, 40), st.integers(0, 30), st.integers(0, 2**32 - 1))
def test_event_bytes_roundtrip(shots, D, seed):
    rng = np.random.default_rng(seed)
    det = rng.integers(0, 2, (shots, D), dtype=np.uint8)
    obs = rng.integers(0, 2, shots, dtype=np.uint8)
    blob = events_to_bytes(det, obs)
    d2, o2 = events_from_bytes(blob)
    assert np.array_equal(d2, det) and np.array_equal(o2, obs)
    assert events_to_bytes(d2, o2) == blob


def test_event_bit_layout():
    det = np.zeros((1, 10), np.uint8)
    det[0, [0, 9]] = 1
    body = events_to_bytes(det, np.array([1]))[18:]
    assert list(body) == [0b00000001, 0b00000010, 1]


def test_event_header_mismatch():
    blob = events_to_bytes(np.zeros((3, 9), np.uint8), np.zeros(3, np.uint8))
    for bad in (blob[:-1], b"XXXX" + blob[4:], blob[:4] + b"\x09\x00" + blob[6:], blob[:10]):
        with pytest.raises(DataMismatch):
            events_from_bytes(bad)


@pytest.mark.parametrize("code,d,basis,offset", [("surface", 3, "X", 0), ("surface", 5, "Z", 0), ("repetition", 5, "Z", 3)])
def test_circuit_text_roundtrip(code, d, basis, offset):
    layout = surface_layout(d) if code == "surface" else repetition_layout(d, offset)
    kind = CodeKind.SURFACE if code == "surface" else CodeKind.REPETITION
    c = build_memory_circuit(layout, basis, 3, default_initial_bitstrings(d, kind)[3])
    txt = circuit_to_text(c)
    c2 = circuit_from_text(txt)
    assert circuit_to_text(c2) == txt
    with pytest.raises(DataMismatch):
        circuit_from_text(txt.replace("detector 1 ", "detector 7 ", 1))
    with pytest.raises(DataMismatch):
        circuit_from_text(txt.replace("# code", "# cod", 1))


def test_dem_text_write_read_write():
    c = build_memory_circuit(surface_layout(3), "Z", 3)
    txt = dem_to_text(dem_from_noise(c, build_noise_model(ComponentRates())))
    assert dem_to_text(dem_from_text(txt)) == txt


@pytest.mark.parametrize(
    "bad",
    [
        {"seed": None},
        {"shots": 0},
        {"code": "color"},
        {"distance": 4},
        {"basis": ["Y"]},
        {"rounds": [0]},
        {"noise_mode": "magic"},
        {"rates": {"bogus": 0.1}},
        {"rates": {"readout": 2.0}},
        {"code": "repetition", "basis": ["X"]},
    ],
)
def test_config_validation(bad):
    d = {"code": "surface", "distance": 3, "basis": ["Z"], "rounds": [1], "shots": 10, "seed": 1}
    d.update(bad)
    d = {k: v for k, v in d.items() if v is not None}
    with pytest.raises(ConfigError):
        config_from_dict(d)


def test_config_requires_seed_and_shots():
    for key in ("seed", "shots"):
        d = {"code": "surface", "distance": 3, "rounds": [1], "shots": 10, "seed": 1}
        del d[key]
        with pytest.raises(ConfigError):
            config_from_dict(d)


# ---------------------------------------------------------------------------
# sample bookkeeping


def test_shot_groups_even_split():
    assert shot_groups(50_000) == [5000] * 10
    assert shot_groups(23) == [3, 3, 3, 2, 2, 2, 2, 2, 2, 2]
    assert len(default_initial_bitstrings(5, CodeKind.SURFACE)) == 10


def test_rounds_list_datasets():
    cfg = config_from_dict(
        {"code": "surface", "distance": 5, "basis": ["Z", "X"], "rounds": list(range(1, 26, 2)), "shots": 1, "seed": 0}
    )
    ds = list(datasets(cfg))
    assert len(ds) == 26 and sum(1 for _, b, _ in ds if b == "Z") == 13


# ---------------------------------------------------------------------------
# end-to-end commands


def test_cli_pipeline_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", rounds=[1, 3, 5, 7], shots=2000)
    out = tmp_path / "a"
    snapshots = []
    for _ in range(2):
        assert main(["sample", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert main(["dem", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert main(["decode", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert main(["analyze", "--mode", "fit", "--input", str(out / "p_L.csv"), "--out", str(out)]) == EXIT_OK
        snapshots.append({p.name: p.read_bytes() for p in out.iterdir()})
    assert snapshots[0] == snapshots[1]
    rows = read_csv(tmp_path / "a" / "p_L.csv", ("rounds", "basis", "code", "p_L", "shots"))
    assert [int(r["rounds"]) for r in rows] == [1, 3, 5, 7]
    assert all(0 < float(r["p_L"]) < 0.5 for r in rows)
    man = json.loads((tmp_path / "a" / "manifest_sample.json").read_text())
    assert man["seed"] == 7 and len(man["config_sha256"]) == 64 and man["version"]
    assert set(man["outputs"]) == {f"events_surface-d3_Z_r{r}.qed" for r in (1, 3, 5, 7)}


def test_cli_seed_override_changes_output(tmp_path):
    cfg = write_cfg(tmp_path / "c.json")
    main(["sample", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["sample", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "8"])
    f = "events_surface-d3_Z_r3.qed"
    assert (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()


def test_cli_noiseless_decode_zero(tmp_path):
    zero = {k: 0.0 for k in ComponentRates().as_dict()}
    cfg = write_cfg(tmp_path / "c.json", rates=zero)
    out = str(tmp_path / "o")
    assert main(["sample", "--config", cfg, "--out", out]) == EXIT_OK
    for dec in ("mwpm", "correlated", "belief_matching"):
        assert main(["decode", "--config", cfg, "--out", out, "--decoder", dec]) == EXIT_OK
        rows = read_csv(Path(out) / "p_L.csv")
        assert all(float(r["p_L"]) == 0.0 for r in rows)


def test_cli_calibrated_decode(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", rounds=[3], shots=4000)
    out = str(tmp_path / "o")
    main(["sample", "--config", cfg, "--out", out])
    assert main(["decode", "--config", cfg, "--out", out, "--calibrate"]) == EXIT_OK
    man = json.loads((Path(out) / "manifest_decode.json").read_text())
    assert man["calibrate"] is True
    assert 0 < float(read_csv(Path(out) / "p_L.csv")[0]["p_L"]) < 0.5


def test_cli_analyze_modes(tmp_path):
    out = tmp_path / "o"
    pl = tmp_path / "p.csv"
    lines = ["rounds,basis,code,p_L,shots"]
    for r in range(1, 12):
        lines.append(f"{r},Z,surface-d3,{(1 - 0.94 ** r) / 2!r},inf")
    pl.write_text("\n".join(lines) + "\n")
    assert main(["analyze", "--mode", "fit", "--input", str(pl), "--out", str(out)]) == EXIT_OK
    fit = read_csv(out / "fit.csv")
    assert float(fit[0]["epsilon"]) == pytest.approx(0.03, abs=1e-12)
    assert main(["analyze", "--mode", "lambda", "--eps", "0.03028", "0.02914", "--out", str(out)]) == EXIT_OK
    assert round(json.loads((out / "lambda.json").read_text())[0]["lambda"], 3) == 1.039
    assert main(["analyze", "--mode", "budget", "--out", str(out)]) == EXIT_OK
    total = [r for r in read_csv(out / "budget.csv") if r["component"] == "total"][0]
    assert f"{float(total['contribution']):.2f}" == "0.90"


def test_cli_exit_codes(tmp_path):
    assert main(["sample", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["sample", "--config", str(tmp_path / "bad.json")]) == EXIT_CONFIG
    cfg = write_cfg(tmp_path / "noseed.json")
    d = json.loads(Path(cfg).read_text())
    del d["seed"]
    Path(cfg).write_text(json.dumps(d))
    assert main(["sample", "--config", cfg]) == EXIT_CONFIG
    assert main(["analyze", "--mode", "fit", "--out", str(tmp_path)]) == EXIT_CONFIG
    # events of a d=3 run decoded under a d=5 config: detector count mismatch
    c3 = write_cfg(tmp_path / "c3.json", rounds=[3])
    c5 = write_cfg(tmp_path / "c5.json", rounds=[3], distance=5)
    out = tmp_path / "ev"
    main(["sample", "--config", c3, "--out", str(out)])
    (out / "events_surface-d3_Z_r3.qed").rename(out / "events_surface-d5_Z_r3.qed")
    assert main(["decode", "--config", c5, "--out", str(out)]) == EXIT_MISMATCH
    # corrupt event file
    (out / "events_surface-d3_Z_r3.qed").write_bytes(b"QEDE\x01\x00garbage")
    assert main(["decode", "--config", c3, "--out", str(out)]) == EXIT_MISMATCH
    # a DEM with the wrong detector count
    dem = tmp_path / "x.dem"
    dem.write_text("# detectors 3 basis Z\nerror(0.1) D0\n")
    main(["sample", "--config", c3, "--out", str(out)])
    assert main(["decode", "--config", c3, "--out", str(out), "--dem", str(dem)]) == EXIT_MISMATCH


def test_cli_console_exit_code(tmp_path):
    r = subprocess.run(
        [sys.executable, "-W", "ignore", "-m", "qeclab.cli", "sample", "--config", str(tmp_path / "nope.json")],
        env={"PYTHONPATH": SRC, "PATH": "/usr/bin:/bin"},
        capture_output=True,
    )
    assert r.returncode == EXIT_CONFIG


def test_cli_subsample_matches_analysis(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", code="repetition", distance=25, rounds=[4], shots=600)
    out = tmp_path / "o"
    assert main(["sample", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert main(["subsample", "--config", cfg, "--out", str(out), "--target-d", "5", "11"]) == EXIT_OK
    assert (out / "events_repetition-d5_Z_r4.qed").exists()
    sub_cfg = json.loads((out / "config_repetition-d5.json").read_text())
    assert sub_cfg["distance"] == 5 and sub_cfg["subsampled_from"] == 25
    d5 = ["--config", str(out / "config_repetition-d5.json"), "--events-dir", str(out), "--out", str(out / "d5")]
    assert main(["decode", *d5]) == EXIT_OK
    # column selection agrees with the record-level subsampler
    c = build_memory_circuit(repetition_layout(25), "Z", 4)
    b = sample(c, build_noise_model(ComponentRates()), 500, 3)
    for t in (5, 11):
        child = build_memory_circuit(repetition_layout(t), "Z", 4)
        ref = subsample_repetition(b, t)
        assert np.array_equal(subsample_events(b.detectors(), c, child), ref.detectors())
        assert np.array_equal(b.observable_flips(), ref.observable_flips())
    assert main(["subsample", "--config", cfg, "--out", str(out), "--target-d", "4"]) == EXIT_CONFIG
