"""Command-line front end: sample, decode, analyze, dem, subsample.

Exit codes: 0 success, 2 configuration error, 3 data mismatch.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .circuit import build_memory_circuit, default_initial_bitstrings
from .geometry import CodeKind
from .io import (
    PL_COLUMNS,
    ConfigError,
    DataMismatch,
    ExperimentConfig,
    circuit_to_text,
    load_config,
    read_csv,
    read_events,
    write_csv,
    write_events,
    write_manifest,
)
from .noise import build_noise_model
from .rng import derive_seed

EXIT_OK, EXIT_CONFIG, EXIT_MISMATCH = 0, 2, 3


def code_label(cfg: ExperimentConfig, d: int | None = None) -> str:
    return f"{cfg.code}-d{cfg.distance if d is None else d}"


def dataset_name(cfg: ExperimentConfig, basis: str, rounds: int) -> str:
    return f"{code_label(cfg)}_{basis}_r{rounds}"


def datasets(cfg: ExperimentConfig):
    """(basis index, basis, rounds) in config order."""
    for bi, b in enumerate(cfg.basis):
        for r in cfg.rounds:
            yield bi, b, r


def _noise(cfg: ExperimentConfig):
    return build_noise_model(cfg.component_rates(), cfg.noise_mode)


def _outdir(cfg: ExperimentConfig, override) -> Path:
    out = Path(override or cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("seed must be non-negative")
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "shots", None) is not None:
        if args.shots < 1:
            raise ConfigError("shots must be positive")
        cfg = replace(cfg, shots=args.shots)
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=str(args.out))
    return cfg


# ---------------------------------------------------------------------------
# sample


def shot_groups(shots: int, n_groups: int = 10) -> list[int]:
    """Split shots as evenly as possible; earlier groups take the remainder."""
    base, extra = divmod(shots, n_groups)
    return [base + (1 if k < extra else 0) for k in range(n_groups)]


def sample_dataset(cfg: ExperimentConfig, bi: int, basis: str, rounds: int) -> tuple[np.ndarray, np.ndarray]:
    """Detection events cycling through the ten default initial bitstrings."""
    from .simulator import compile_program, reference_records, sample_detection_events

    layout = cfg.layout()
    noise = _noise(cfg)
    kind = CodeKind.SURFACE if cfg.code == "surface" else CodeKind.REPETITION
    inits = default_initial_bitstrings(cfg.distance, kind)
    seed = derive_seed(cfg.seed, bi, rounds)
    dets, obss = [], []
    lo = 0
    for init, n in zip(inits, shot_groups(cfg.shots, len(inits))):
        if n == 0:
            continue
        c = build_memory_circuit(layout, basis, rounds, init)
        prog = compile_program(c, noise)
        for a in range(0, n, 50_000):
            k = min(50_000, n - a)
            det, obs = sample_detection_events(c, noise, k, seed, shot_start=lo + a, _prog=prog, _ref=reference_records(c))
            dets.append(det)
            obss.append(obs)
        lo += n
    return np.concatenate(dets), np.concatenate(obss)


def cmd_sample(cfg: ExperimentConfig, out: Path) -> list[Path]:
    written = []
    for bi, basis, r in datasets(cfg):
        det, obs = sample_dataset(cfg, bi, basis, r)
        p = out / f"events_{dataset_name(cfg, basis, r)}.qed"
        write_events(p, det, obs)
        written.append(p)
    write_manifest(out / "manifest_sample.json", "sample", cfg, written)
    return written


# ---------------------------------------------------------------------------
# dem


def cmd_dem(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .decoding import dem_from_noise, dem_to_text

    noise = _noise(cfg)
    written = []
    for _, basis, r in datasets(cfg):
        c = build_memory_circuit(cfg.layout(), basis, r)
        name = dataset_name(cfg, basis, r)
        p = out / f"dem_{name}.dem"
        p.write_text(dem_to_text(dem_from_noise(c, noise)))
        q = out / f"circuit_{name}.txt"
        q.write_text(circuit_to_text(c))
        written += [p, q]
    write_manifest(out / "manifest_dem.json", "dem", cfg, written)
    return written


# ---------------------------------------------------------------------------
# decode


def _decode_failures(h, det, obs, decoder) -> int:
    from .decoding import make_decoder

    dec = make_decoder(h, decoder)
    fails = 0
    for lo in range(0, det.shape[0], 50_000):
        hi = min(det.shape[0], lo + 50_000)
        fails += int(np.count_nonzero(dec.decode_batch(det[lo:hi]) ^ obs[lo:hi]))
    return fails


def calibrated_failures(h, det, obs, decoder, detector_rounds) -> int:
    """Decode even shots with p_ij from odd shots and vice versa."""
    from .decoding import dem_from_pij

    even, odd = slice(0, None, 2), slice(1, None, 2)
    fails = 0
    for fit_part, dec_part in ((odd, even), (even, odd)):
        hc = dem_from_pij(h, det[fit_part], detector_rounds=detector_rounds)
        fails += _decode_failures(hc, det[dec_part], obs[dec_part], decoder)
    return fails


def cmd_decode(cfg: ExperimentConfig, events_dir: Path, out: Path, dem_path=None, calibrate=False, decoder=None) -> Path:
    from .decoding import dem_from_noise, dem_from_text

    decoder = decoder or cfg.decoder
    noise = _noise(cfg)
    given = None
    if dem_path is not None:
        try:
            given = dem_from_text(Path(dem_path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read DEM {dem_path}: {exc}") from exc
    rows = []
    inputs = []
    for _, basis, r in datasets(cfg):
        p = events_dir / f"events_{dataset_name(cfg, basis, r)}.qed"
        if not p.exists():
            raise ConfigError(f"missing events file {p}")
        det, obs = read_events(p)
        inputs.append(p)
        c = build_memory_circuit(cfg.layout(), basis, r)
        if det.shape[1] != len(c.detectors):
            raise DataMismatch(f"{p.name}: {det.shape[1]} detectors, circuit has {len(c.detectors)}")
        h = given if given is not None else dem_from_noise(c, noise)
        if h.num_detectors != det.shape[1]:
            raise DataMismatch(f"DEM has {h.num_detectors} detectors, events have {det.shape[1]}")
        if calibrate:
            rounds_of = np.array([d.id.round for d in c.detectors])
            fails = calibrated_failures(h, det, obs, decoder, rounds_of)
        else:
            fails = _decode_failures(h, det, obs, decoder)
        n = det.shape[0]
        rows.append({"rounds": r, "basis": basis, "code": code_label(cfg), "p_L": fails / n, "shots": n})
    path = out / "p_L.csv"
    write_csv(path, rows, PL_COLUMNS)
    write_manifest(
        out / "manifest_decode.json",
        "decode",
        cfg,
        [path],
        {"decoder": decoder, "calibrate": bool(calibrate), "inputs": sorted(x.name for x in inputs)},
    )
    return path


# ---------------------------------------------------------------------------
# analyze


FIT_COLUMNS = ("code", "basis", "epsilon", "sigma", "residual_scale", "start_round", "n_points")
BUDGET_COLUMNS = ("component", "p_expt", "weight", "contribution", "share")
SCAN_COLUMNS = ("s", "d", "epsilon", "sigma", "shots", "lambda", "lambda_sigma")


def _num(row, key, cast=float):
    try:
        return cast(row[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {key} value {row.get(key)!r}") from exc


def analyze_fit(rows, start_round: int = 3) -> list[dict]:
    from .analysis import average_fits, fit_epsilon

    groups: dict = {}
    for row in rows:
        groups.setdefault(row["code"], {}).setdefault(row["basis"], []).append(
            (_num(row, "rounds", int), _num(row, "p_L"), _num(row, "shots"))
        )
    out = []
    for code in sorted(groups):
        fits = []
        for basis in sorted(groups[code]):
            f = fit_epsilon(groups[code][basis], start_round)
            fits.append(f)
            out.append(_fit_row(code, basis, f))
        if len(fits) > 1:
            out.append(_fit_row(code, "avg", average_fits(fits)))
    return out


def _fit_row(code, basis, f) -> dict:
    return {
        "code": code,
        "basis": basis,
        "epsilon": float(f.epsilon),
        "sigma": float(f.sigma),
        "residual_scale": float(f.residual_scale),
        "start_round": f.start_round,
        "n_points": f.n_points,
    }


def _distance(code: str) -> int:
    try:
        return int(code.rsplit("-d", 1)[1])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"cannot read a distance from code label {code!r}") from exc


def analyze_lambda(fit_rows) -> list[dict]:
    """Lambda between consecutive distances, using the averaged rows where present."""
    from .analysis import lambda_factor

    best: dict = {}
    for row in fit_rows:
        d = _distance(row["code"])
        if row["basis"] == "avg" or d not in best:
            best[d] = row
    ds = sorted(best)
    out = []
    for a, b in zip(ds, ds[1:]):
        ra, rb = best[a], best[b]
        lam, sig = lambda_factor(_num(ra, "epsilon"), _num(rb, "epsilon"), _num(ra, "sigma"), _num(rb, "sigma"))
        out.append({"d": a, "d2": b, "lambda": lam, "sigma": sig})
    return out


def analyze_budget(rows=None, deduplicate_cz: bool = True) -> tuple[list[dict], float]:
    from .analysis import BUDGET_WEIGHTS, budget
    from .noise import ComponentRates

    if rows is None:
        table = budget(BUDGET_WEIGHTS, ComponentRates(), deduplicate_cz)
    else:
        weights = {r["component"]: _num(r, "weight") for r in rows}
        p = {r["component"]: _num(r, "p_expt") for r in rows}
        table = budget(weights, p, deduplicate_cz=False)
    shares = table.shares()
    out = [
        {
            "component": r.component,
            "p_expt": r.p_expt,
            "weight": r.weight,
            "contribution": r.contribution,
            "share": shares[r.component],
        }
        for r in table.rows
    ]
    return out, table.total


def analyze_scan(cfg: ExperimentConfig) -> list[dict]:
    from .analysis import scale_scan

    s_values = cfg.extra.get("scale_values")
    distances = cfg.extra.get("distances", [3, 5])
    if not s_values:
        raise ConfigError("scan mode needs 'scale_values' in the config")
    if cfg.code != "surface":
        raise ConfigError("scan mode runs surface codes")
    try:
        grid = scale_scan(
            replace(cfg, extra={k: v for k, v in cfg.extra.items() if k != "scale"}).component_rates(),
            s_values,
            distances,
            cfg.rounds,
            cfg.shots,
            cfg.seed,
            bases=tuple(cfg.basis),
            decoder=cfg.decoder,
            mode=cfg.noise_mode,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = []
    for row in grid.rows():
        lam = sig = ""
        if (row["s"], row["d"] + 2) in grid.cells and row["epsilon"] > 0:
            lam, sig = grid.lam(row["s"], row["d"])
        rows.append({**row, "lambda": lam, "lambda_sigma": sig})
    return rows


def cmd_analyze(mode: str, out: Path, inp=None, cfg=None, start_round: int = 3, eps=None, sigmas=None) -> Path:
    extra = {"mode": mode}
    if inp is not None:
        from .io import file_digest

        extra["inputs"] = {Path(inp).name: file_digest(inp)}
    if mode == "fit":
        if inp is None:
            raise ConfigError("fit mode needs --input p_L.csv")
        rows = analyze_fit(read_csv(inp, PL_COLUMNS), start_round)
        path = out / "fit.csv"
        write_csv(path, rows, FIT_COLUMNS)
    elif mode == "lambda":
        if eps is not None:
            from .analysis import lambda_factor

            s = sigmas or [0.0, 0.0]
            lam, sig = lambda_factor(eps[0], eps[1], s[0], s[1])
            rows = [{"d": None, "d2": None, "lambda": lam, "sigma": sig}]
        elif inp is not None:
            rows = analyze_lambda(read_csv(inp, FIT_COLUMNS))
        else:
            raise ConfigError("lambda mode needs --input fit.csv or --eps A B")
        path = out / "lambda.json"
        path.write_text(json.dumps(rows, indent=2) + "\n")
    elif mode == "budget":
        rows, total = analyze_budget(read_csv(inp, ("component", "p_expt", "weight")) if inp else None)
        path = out / "budget.csv"
        write_csv(path, rows + [{"component": "total", "p_expt": "", "weight": "", "contribution": total, "share": 1.0}], BUDGET_COLUMNS)
    elif mode == "scan":
        if cfg is None:
            raise ConfigError("scan mode needs --config")
        path = out / "scan.csv"
        write_csv(path, analyze_scan(cfg), SCAN_COLUMNS)
    else:
        raise ConfigError(f"unknown analyze mode {mode!r}")
    write_manifest(out / f"manifest_analyze_{mode}.json", "analyze", cfg, [path], extra)
    return path


# ---------------------------------------------------------------------------
# subsample


def subsample_events(det: np.ndarray, parent, child) -> np.ndarray:
    """Columns of a prefix sub-chain's detectors inside the parent's detection events.

    The prefix keeps the first data qubit, so the observable column is unchanged.
    """
    col = {d.id: i for i, d in enumerate(parent.detectors)}
    try:
        idx = [col[d.id] for d in child.detectors]
    except KeyError as exc:
        raise DataMismatch(f"detector {exc} of the sub-chain is not in the parent") from exc
    return det[:, idx]


def cmd_subsample(cfg: ExperimentConfig, events_dir: Path, out: Path, targets) -> list[Path]:
    from .geometry import repetition_layout

    if cfg.code != "repetition":
        raise ConfigError("subsample needs a repetition-code config")
    if int(cfg.extra.get("offset", 0)) != 0:
        raise ConfigError("event files only support prefix sub-chains (offset 0)")
    for t in targets:
        if t % 2 == 0 or t < 3 or t > cfg.distance:
            raise ConfigError(f"target distance {t} must be odd, >= 3 and <= {cfg.distance}")
    written = []
    for _, basis, r in datasets(cfg):
        p = events_dir / f"events_{dataset_name(cfg, basis, r)}.qed"
        if not p.exists():
            raise ConfigError(f"missing events file {p}")
        det, obs = read_events(p)
        parent = build_memory_circuit(cfg.layout(), basis, r)
        if det.shape[1] != len(parent.detectors):
            raise DataMismatch(f"{p.name}: {det.shape[1]} detectors, circuit has {len(parent.detectors)}")
        for t in targets:
            child = build_memory_circuit(repetition_layout(t), basis, r)
            sub = replace(cfg, distance=t)
            q = out / f"events_{dataset_name(sub, basis, r)}.qed"
            write_events(q, subsample_events(det, parent, child), obs)
            written.append(q)
    for t in targets:
        d = json.loads(replace(cfg, distance=t, output_dir=str(out)).canonical())
        d.update(d.pop("extra"))
        d["subsampled_from"] = cfg.distance
        q = out / f"config_{cfg.code}-d{t}.json"
        q.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
        written.append(q)
    write_manifest(out / "manifest_subsample.json", "subsample", cfg, written, {"targets": list(targets)})
    return written


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qeclab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--shots", type=int, help="override the config shot count")
        p.add_argument("--out", help="output directory (defaults to the config's)")

    p = sub.add_parser("sample", help="simulate detection events")
    common(p)
    p = sub.add_parser("dem", help="write DEM and circuit text for every dataset")
    common(p)
    p = sub.add_parser("decode", help="decode event files into a p_L table")
    common(p)
    p.add_argument("--events-dir", help="directory holding the event files (defaults to the output dir)")
    p.add_argument("--dem", help="DEM text file used instead of the noise model's")
    p.add_argument("--calibrate", action="store_true", help="even/odd p_ij recalibration")
    p.add_argument("--decoder", help="decoder name or JSON spec")
    p = sub.add_parser("analyze", help="fits, Lambda, scale scans and budgets")
    common(p, config_required=False)
    p.add_argument("--mode", required=True, choices=["fit", "lambda", "scan", "budget"])
    p.add_argument("--input", help="input CSV")
    p.add_argument("--start-round", type=int, default=3)
    p.add_argument("--eps", type=float, nargs=2, metavar=("EPS_D", "EPS_D2"))
    p.add_argument("--sigma", type=float, nargs=2, metavar=("SIG_D", "SIG_D2"))
    p = sub.add_parser("subsample", help="cut smaller repetition codes out of event files")
    common(p)
    p.add_argument("--events-dir", help="directory holding the parent event files")
    p.add_argument("--target-d", type=int, nargs="+", required=True)
    return ap


def _decoder_arg(text):
    if text is None:
        return None
    text = text.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad decoder spec: {exc}") from exc
    return text


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = None
    if args.config:
        cfg = _apply_overrides(load_config(args.config), args)
    if args.verb == "sample":
        cmd_sample(cfg, _outdir(cfg, args.out))
    elif args.verb == "dem":
        cmd_dem(cfg, _outdir(cfg, args.out))
    elif args.verb == "decode":
        out = _outdir(cfg, args.out)
        cmd_decode(cfg, Path(args.events_dir) if args.events_dir else out, out, args.dem, args.calibrate, _decoder_arg(args.decoder))
    elif args.verb == "analyze":
        out = Path(args.out) if args.out else (_outdir(cfg, None) if cfg else Path("."))
        out.mkdir(parents=True, exist_ok=True)
        cmd_analyze(args.mode, out, args.input, cfg, args.start_round, args.eps, args.sigma)
    elif args.verb == "subsample":
        out = _outdir(cfg, args.out)
        cmd_subsample(cfg, Path(args.events_dir) if args.events_dir else out, out, args.target_d)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataMismatch as exc:
        print(f"data mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
