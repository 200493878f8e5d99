"""File formats: detection-event files, DEM and circuit text, CSV tables, configs and manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .circuit import Circuit, InitialBitstring, build_memory_circuit
from .geometry import Basis, CodeKind, repetition_layout, surface_layout
from .noise import COMPONENTS, ComponentRates, NoiseMode

MAGIC = b"QEDE"
VERSION = 1
_HEADER = struct.Struct("<4sHIQ")  # magic, version, detectors, shots


class ConfigError(ValueError):
    """Invalid or incomplete configuration (CLI exit code 2)."""


class DataMismatch(ValueError):
    """Files that disagree with each other or with their own headers (CLI exit code 3)."""


# ---------------------------------------------------------------------------
# detection events


def events_to_bytes(det: np.ndarray, obs: np.ndarray) -> bytes:
    det = np.asarray(det, dtype=np.uint8)
    obs = np.asarray(obs, dtype=np.uint8).reshape(-1, 1)
    if det.ndim != 2 or det.shape[0] != obs.shape[0]:
        raise DataMismatch("detection matrix and observable column disagree on the shot count")
    body = np.packbits(det, axis=1, bitorder="little") if det.shape[1] else np.zeros((det.shape[0], 0), np.uint8)
    rows = np.concatenate([body, obs & 1], axis=1)
    return _HEADER.pack(MAGIC, VERSION, det.shape[1], det.shape[0]) + rows.tobytes()


def events_from_bytes(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) < _HEADER.size:
        raise DataMismatch("event file shorter than its header")
    magic, version, D, shots = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataMismatch("not a detection-event file")
    if version != VERSION:
        raise DataMismatch(f"unsupported event file version {version}")
    width = (D + 7) // 8 + 1
    body = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if body.size != width * shots:
        raise DataMismatch(f"body has {body.size} bytes, header implies {width * shots}")
    rows = body.reshape(shots, width)
    det = np.unpackbits(rows[:, :-1], axis=1, count=D, bitorder="little")
    return np.ascontiguousarray(det), rows[:, -1].copy()


def write_events(path, det, obs) -> None:
    Path(path).write_bytes(events_to_bytes(det, obs))


def read_events(path) -> tuple[np.ndarray, np.ndarray]:
    return events_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# circuit text


def circuit_to_text(c: Circuit) -> str:
    layout = c.layout
    offset = 0
    if layout.kind == CodeKind.REPETITION and "+" in layout.name:
        offset = int(layout.name.split("+")[1])
    lines = [
        f"# code {layout.kind.value} distance {layout.distance} offset {offset}",
        f"# basis {c.basis.value} rounds {c.rounds} init {c.init.value} width {c.init.width}",
        f"# observable_ref {c.observable_ref} logical_value {c.logical_value}",
    ]
    for k, m in enumerate(c.moments):
        parts = []
        for ins in m:
            parts.append(ins.kind.value + " " + " ".join(f"{q.row},{q.col}" for q in ins.targets))
        lines.append(f"moment {k}: " + " | ".join(parts))
    for d in c.detectors:
        lines.append(
            f"detector {d.id.round} {d.id.stabilizer_index} ref {d.ref} rec " + " ".join(str(r) for r in d.records)
        )
    lines.append("observable rec " + " ".join(str(r) for r in c.observable))
    return "\n".join(lines) + "\n"


def circuit_from_text(text: str) -> Circuit:
    """Rebuild from the header and check that the body matches the rebuilt circuit."""
    head = {}
    for line in text.splitlines():
        if line.startswith("#"):
            toks = line[1:].split()
            for a, b in zip(toks[::2], toks[1::2]):
                head[a] = b
    try:
        kind = CodeKind(head["code"])
        d = int(head["distance"])
        offset = int(head.get("offset", 0))
        layout = surface_layout(d) if kind == CodeKind.SURFACE else repetition_layout(d, offset)
        init = InitialBitstring(int(head["init"]), int(head["width"]))
        c = build_memory_circuit(layout, head["basis"], int(head["rounds"]), init)
    except (KeyError, ValueError) as exc:
        raise DataMismatch(f"bad circuit header: {exc}") from exc
    if circuit_to_text(c) != text:
        raise DataMismatch("circuit body does not match the circuit implied by its header")
    return c


# ---------------------------------------------------------------------------
# CSV


PL_COLUMNS = ("rounds", "basis", "code", "p_L", "shots")


def write_csv(path, rows, columns) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    Path(path).write_text(buf.getvalue())


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv(path, required=()) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        cols = reader.fieldnames or []
        missing = [c for c in required if c not in cols]
        if missing:
            raise ConfigError(f"{path}: missing columns {missing}")
        return list(reader)


# ---------------------------------------------------------------------------
# config and manifest


@dataclass
class ExperimentConfig:
    code: str
    distance: int
    basis: list
    rounds: list
    shots: int
    seed: int
    noise_mode: str = "Pauli"
    rates: dict = field(default_factory=dict)
    decoder: str = "correlated"
    output_dir: str = "out"
    extra: dict = field(default_factory=dict)

    def component_rates(self) -> ComponentRates:
        vals = {k: v for k, v in self.rates.items() if k != "overrides"}
        scale = self.extra.get("scale", 1.0)
        r = ComponentRates(**vals, overrides=dict(self.rates.get("overrides", {})))
        return r.scaled(scale) if scale != 1.0 else r

    def layout(self):
        if self.code == "surface":
            return surface_layout(self.distance)
        return repetition_layout(self.distance, int(self.extra.get("offset", 0)))

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


_KNOWN = {"code", "distance", "basis", "rounds", "shots", "seed", "noise_mode", "rates", "decoder", "output_dir"}


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("seed", "shots", "code", "distance", "rounds"):
        if key not in d:
            raise ConfigError(f"config is missing required key {key!r}")
    code = d["code"]
    if code not in ("surface", "repetition"):
        raise ConfigError(f"code must be 'surface' or 'repetition', got {code!r}")
    dist = d["distance"]
    if not isinstance(dist, int) or dist < 1 or (code == "surface" and dist % 2 == 0):
        raise ConfigError(f"bad distance {dist!r}")
    basis = d.get("basis", ["Z"])
    basis = [basis] if isinstance(basis, str) else list(basis)
    try:
        basis = [Basis(b).value for b in basis]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if code == "repetition" and basis != ["Z"]:
        raise ConfigError("repetition codes only support basis Z")
    rounds = d["rounds"]
    rounds = [rounds] if isinstance(rounds, int) else list(rounds)
    if not rounds or any(not isinstance(r, int) or r < 1 for r in rounds):
        raise ConfigError("rounds must be positive integers")
    shots, seed = d["shots"], d["seed"]
    if not isinstance(shots, int) or shots < 1:
        raise ConfigError("shots must be a positive integer")
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    mode = d.get("noise_mode", "Pauli")
    try:
        NoiseMode(mode)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rates = dict(d.get("rates", {}))
    bad = [k for k in rates if k not in COMPONENTS and k != "overrides"]
    if bad:
        raise ConfigError(f"unknown rate keys {bad}")
    cfg = ExperimentConfig(
        code=code,
        distance=dist,
        basis=basis,
        rounds=rounds,
        shots=shots,
        seed=seed,
        noise_mode=mode,
        rates=rates,
        decoder=d.get("decoder", "correlated"),
        output_dir=d.get("output_dir", "out"),
        extra={k: v for k, v in d.items() if k not in _KNOWN},
    )
    try:
        cfg.component_rates()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, command: str, cfg: ExperimentConfig | None, outputs, extra: dict | None = None) -> None:
    """Provenance record: config hash, seed, tool versions and digests of every output."""
    from . import __version__

    doc = {
        "tool": "qeclab",
        "version": __version__,
        "numpy": np.__version__,
        "command": command,
        "config_sha256": cfg.digest() if cfg else None,
        "config": json.loads(cfg.canonical()) if cfg else None,
        "seed": cfg.seed if cfg else None,
        "outputs": {Path(p).name: file_digest(p) for p in sorted(outputs, key=lambda x: Path(x).name)},
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
