"""Error hypergraphs, their calibration, and decoders."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoders import (
    BeliefMatchingDecoder,
    BPConfig,
    CorrelatedMWPMDecoder,
    Decoder,
    MLBatchDecoder,
    MWPMDecoder,
    belief_match,
    belief_propagate,
    correlated_mwpm,
    ml_decode,
)
from .dem import (
    ErrorHypergraph,
    Hyperedge,
    build_hypergraph,
    dem_from_noise,
    dem_from_text,
    dem_to_text,
    undetectable_logical_probability,
    xor_prob,
)
from .matching import DecodeResult, MatchingGraph, Matcher, decompose, decompose_full, mwpm

__all__ = [
    "BPConfig",
    "DecodeResult",
    "Decoder",
    "ErrorHypergraph",
    "Hyperedge",
    "LogicalErrorRate",
    "MatchingGraph",
    "Matcher",
    "belief_match",
    "belief_propagate",
    "build_hypergraph",
    "correlated_mwpm",
    "decompose",
    "decompose_full",
    "dem_from_noise",
    "dem_from_pij",
    "dem_from_text",
    "dem_to_text",
    "logical_error_rate",
    "make_decoder",
    "ml_decode",
    "mwpm",
    "undetectable_logical_probability",
    "xor_prob",
]

DECODERS = {
    "mwpm": MWPMDecoder,
    "correlated": CorrelatedMWPMDecoder,
    "correlated_mwpm": CorrelatedMWPMDecoder,
    "belief_matching": BeliefMatchingDecoder,
    "bm": BeliefMatchingDecoder,
    "ml": MLBatchDecoder,
}


def make_decoder(h: ErrorHypergraph, spec: str | dict = "correlated") -> Decoder:
    """Decoder from a name or {"name": ..., options}; BP options go under "bp"."""
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name")
    if name not in DECODERS:
        raise ValueError(f"unknown decoder {name!r}; choose from {sorted(DECODERS)}")
    cls = DECODERS[name]
    if cls is BeliefMatchingDecoder and "bp" in spec:
        spec["cfg"] = BPConfig(**spec.pop("bp"))
    return cls(h, **spec)


@dataclass(frozen=True)
class LogicalErrorRate:
    p_L: float
    shots: int
    failures: int

    @property
    def fidelity(self) -> float:
        return 1 - 2 * self.p_L

    @property
    def sigma(self) -> float:
        return float(np.sqrt(max(self.p_L * (1 - self.p_L), 0.0) / self.shots)) if self.shots else 0.0


def logical_error_rate(batch, circuit=None, decoder: Decoder | str | dict = "correlated", *, dem=None) -> LogicalErrorRate:
    """Fraction of shots whose decoded logical value differs from the prepared one.

    ``batch`` is a SampleBatch or a (detection events, observable flips) pair; the
    observable flips are relative to the prepared logical value.
    """
    if isinstance(batch, tuple):
        det, obs = batch
    else:
        det, obs = batch.detectors(), batch.observable_flips()
    if not isinstance(decoder, Decoder):
        if dem is None:
            raise ValueError("a decoder spec needs dem= (an ErrorHypergraph)")
        decoder = make_decoder(dem, decoder)
    pred = decoder.decode_batch(det)
    fails = int(np.count_nonzero(pred ^ np.asarray(obs, dtype=np.uint8)))
    n = len(obs)
    return LogicalErrorRate(fails / n if n else 0.0, n, fails)


def dem_from_pij(ansatz, m, floor: float = 1e-4, detector_rounds=None):
    from ..diagnostics import dem_from_pij as _f

    return _f(ansatz, m, floor, detector_rounds)
