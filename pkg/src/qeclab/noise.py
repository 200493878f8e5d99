"""Component error rates and their assignment to circuit sites."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum

import numpy as np

from .channels import (
    GPChannel,
    KrausChannel,
    ReadoutConfusion,
    bitflip_gpc,
    conditional_phase_unitary,
    cz_leakage_channel,
    depolarizing_distribution,
    depolarizing_gpc,
    idle_channel,
    pauli_kraus,
    readout_confusion,
    swap_crosstalk_unitary,
    twirl,
    unitary_channel,
)
from .circuit import Circuit, Op
from .geometry import QubitCoord

COMPONENTS = (
    "sq_gate",
    "cz_gate",
    "data_idle",
    "reset",
    "readout",
    "cz_leakage",
    "heating_leakage",
    "cz_crosstalk",
)


class NoiseMode(str, Enum):
    PAULI = "Pauli"
    PAULI_PLUS = "PauliPlus"


def _element_key(qubits) -> str:
    return "|".join(str(q) for q in sorted(qubits))


@dataclass(frozen=True)
class ComponentRates:
    """Average component error probabilities, optionally overridden per element.

    Override keys look like ``"sq_gate@2,4"`` or ``"cz_gate@2,4|2,5"``.
    """

    sq_gate: float = 1.09e-3
    cz_gate: float = 6.05e-3
    data_idle: float = 2.46e-2
    reset: float = 1.86e-3
    readout: float = 1.96e-2
    cz_leakage: float = 2.0e-4
    heating_leakage: float = 6.4e-4
    cz_crosstalk: float = 9.5e-4
    overrides: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        for name in COMPONENTS:
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name}={v} outside [0, 1]")
        for key, v in self.overrides.items():
            comp = key.split("@")[0]
            if comp not in COMPONENTS or "@" not in key:
                raise ValueError(f"bad override key {key!r}")
            if not 0 <= v <= 1:
                raise ValueError(f"override {key}={v} outside [0, 1]")

    def get(self, component: str, qubits=()) -> float:
        if qubits and self.overrides:
            key = f"{component}@{_element_key(qubits)}"
            if key in self.overrides:
                return self.overrides[key]
        return getattr(self, component)

    def scaled(self, s: float) -> "ComponentRates":
        if s < 0:
            raise ValueError("scale factor must be non-negative")
        vals = {name: min(1.0, getattr(self, name) * s) for name in COMPONENTS}
        ov = {k: min(1.0, v * s) for k, v in self.overrides.items()}
        return ComponentRates(**vals, overrides=ov)

    def with_offset(self, component: str, delta: float) -> "ComponentRates":
        return replace(self, **{component: getattr(self, component) + delta})

    def as_dict(self) -> dict:
        d = {name: getattr(self, name) for name in COMPONENTS}
        if self.overrides:
            d["overrides"] = dict(self.overrides)
        return d

    @classmethod
    def zero(cls) -> "ComponentRates":
        return cls(**{name: 0.0 for name in COMPONENTS})


@dataclass(frozen=True)
class PauliPlusParams:
    """Physical constants used only by the leakage-aware model (times in ns)."""

    T1: float = 20_000.0
    T2: float = 30_000.0
    t_cycle: float = 896.0
    t_sq: float = 25.0
    t_measure: float = 500.0
    t_reset: float = 160.0
    phi2: float = math.pi / 2
    phi3: float = math.pi / 2
    leak_occupation: float = 0.25  # probability of |11> when a CZ fires
    heating_occupation: float = 0.5  # probability a qubit sits in |1>
    leakage_pauli_factor: float = 1.25
    transport_22_13: float = 0.0
    transport_21_03: float = 0.0

    @property
    def Tphi(self) -> float:
        inv = 1.0 / self.T2 - 0.5 / self.T1
        return math.inf if inv <= 0 else 1.0 / inv

    @property
    def t_cz(self) -> float:
        return max(0.0, (self.t_cycle - 5 * self.t_sq - self.t_measure - self.t_reset) / 4)


@dataclass
class NoiseAssignment:
    """Concrete channel placement for one circuit.

    ``after[k]`` lists (channel name, target qubits) applied after moment k.
    ``readout[i]`` is the confusion matrix of record i.
    """

    channels: dict
    after: list
    readout: list


@dataclass
class NoiseModel:
    mode: NoiseMode
    rates: ComponentRates
    params: PauliPlusParams = field(default_factory=PauliPlusParams)
    _cache: dict = field(default_factory=dict, repr=False)

    # -- channel factories (cached by parameters) --
    def _channel(self, key, build) -> str:
        name = "/".join(str(k) for k in key)
        if name not in self._cache:
            self._cache[name] = build()
        return name

    def sq(self, q) -> str:
        p = self.rates.get("sq_gate", (q,))
        return self._channel(("dep1", p), lambda: depolarizing_gpc(p, 1))

    def idle(self, q) -> str:
        p = self.rates.get("data_idle", (q,))
        return self._channel(("dep1", p), lambda: depolarizing_gpc(p, 1))

    def reset_flip(self, q) -> str:
        p = self.rates.get("reset", (q,))
        return self._channel(("flip", p), lambda: bitflip_gpc(p))

    def cz(self, a, b) -> str:
        p = self.rates.get("cz_gate", (a, b))
        if self.mode == NoiseMode.PAULI:
            return self._channel(("dep2", p), lambda: depolarizing_gpc(p, 2))
        pp = self.params
        leak = self.rates.get("cz_leakage", (a, b))
        xt = self.rates.get("cz_crosstalk", (a, b))
        dep = max(0.0, p - xt - pp.leakage_pauli_factor * leak)
        p_t = min(1.0, leak / pp.leak_occupation) if pp.leak_occupation > 0 else 0.0
        if not self._can_leak():
            # the conditional phase only acts next to a leaked partner
            return self._channel(("dep2", dep), lambda: depolarizing_gpc(dep, 2))

        def build():
            k = cz_leakage_channel(p_t, pp.transport_22_13, pp.transport_21_03)
            k = k.compose(unitary_channel(conditional_phase_unitary(pp.phi2, pp.phi3)))
            k = k.compose(pauli_kraus(depolarizing_distribution(dep, 2)))
            return twirl(k)

        return self._channel(("czplus", dep, p_t, pp.phi2, pp.phi3, pp.transport_22_13, pp.transport_21_03), build)

    def cz_depolarizing_share(self, a=None, b=None) -> float:
        qs = (a, b) if a is not None else ()
        p = self.rates.get("cz_gate", qs)
        if self.mode == NoiseMode.PAULI:
            return p
        return max(
            0.0,
            p
            - self.rates.get("cz_crosstalk", qs)
            - self.params.leakage_pauli_factor * self.rates.get("cz_leakage", qs),
        )

    def crosstalk(self, p_pair: float) -> str:
        theta = 2 * math.acos((1 - p_pair) ** 0.25)
        return self._channel(("xtalk", p_pair), lambda: twirl(unitary_channel(swap_crosstalk_unitary(theta))))

    def heating(self, q, duration: float) -> str:
        pp = self.params
        p2 = self.rates.get("heating_leakage", (q,))
        gamma = p2 / (pp.heating_occupation * pp.t_cycle) if pp.t_cycle > 0 else 0.0
        return self._channel(
            ("heat", gamma, duration, pp.T1),
            lambda: twirl(idle_channel(pp.T1, pp.Tphi, gamma, duration, computational_decay=False)),
        )

    def readout_for(self, q: QubitCoord, is_measure_qubit: bool) -> ReadoutConfusion:
        eps = self.rates.get("readout", (q,))
        if is_measure_qubit:
            eps = min(1.0, eps + self.rates.get("reset", (q,)))
        return readout_confusion(eps, eps)

    # -- assignment --
    def assign(self, circuit: Circuit) -> NoiseAssignment:
        qubits = set(circuit.qubits())
        for key in self.rates.overrides:
            elems = key.split("@", 1)[1].split("|")
            for e in elems:
                if QubitCoord.parse(e) not in qubits:
                    raise ValueError(f"override {key!r} references qubit {e} absent from the circuit")
        meas = set(circuit.layout.measure_qubits)
        data = set(circuit.layout.data_qubits)
        after = []
        readout = []
        plus = self.mode == NoiseMode.PAULI_PLUS
        pp = self.params
        # leaked-level dynamics only matter when something can leak
        leaks = plus and self._can_leak()
        for moment in circuit.moments:
            ops = []
            kinds = {ins.kind for ins in moment}
            for ins in moment:
                if ins.kind in (Op.H, Op.X):
                    ops += [(self.sq(q), (q,)) for q in ins.targets]
                elif ins.kind == Op.CZ:
                    ops += [(self.cz(a, b), (a, b)) for a, b in ins.pairs()]
                elif ins.kind == Op.DDX:
                    ops += [(self.idle(q), (q,)) for q in ins.targets]
                elif ins.kind == Op.PREPZ:
                    ops += [(self.reset_flip(q), (q,)) for q in ins.targets if q in data]
                elif ins.kind == Op.M:
                    readout += [self.readout_for(q, q in meas) for q in ins.targets]
            if plus:
                if Op.CZ in kinds:
                    ops += self._crosstalk_ops(moment)
                    duration = pp.t_cz
                elif Op.M in kinds:
                    duration = pp.t_measure
                elif Op.R in kinds or Op.PREPZ in kinds:
                    duration = pp.t_reset
                else:
                    duration = pp.t_sq
                if leaks:
                    ops += [(self.heating(q, duration), (q,)) for q in sorted(qubits)]
            after.append([op for op in ops if not self._cache[op[0]].is_identity()])
        return NoiseAssignment(dict(self._cache), after, readout)

    def _can_leak(self) -> bool:
        r = self.rates
        if r.heating_leakage > 0 or r.cz_leakage > 0:
            return True
        return any(v > 0 for k, v in r.overrides.items() if k.split("@")[0] in ("heating_leakage", "cz_leakage"))

    def _crosstalk_ops(self, moment) -> list:
        pairs = [p for ins in moment if ins.kind == Op.CZ for p in ins.pairs()]
        if not pairs:
            return []
        owner = {}
        for g, (a, b) in enumerate(pairs):
            owner[a] = g
            owner[b] = g
        neighbours = []
        for q, g in sorted(owner.items()):
            for dr, dc in ((0, 1), (1, 0)):
                r, c = q.row + dr, q.col + dc
                if r < 0 or c < 0:
                    continue
                o = QubitCoord(r, c)
                if o in owner and owner[o] != g:
                    neighbours.append((q, o))
        if not neighbours:
            return []
        budget = np.mean([self.rates.get("cz_crosstalk", p) for p in pairs])
        p_pair = min(0.75, budget * len(pairs) / len(neighbours))
        if p_pair <= 0:
            return []
        name = self.crosstalk(p_pair)
        return [(name, pair) for pair in neighbours]


def build_noise_model(
    rates: ComponentRates, mode: NoiseMode | str = NoiseMode.PAULI, params: PauliPlusParams | None = None
) -> NoiseModel:
    return NoiseModel(NoiseMode(mode), rates, params or PauliPlusParams())


def noiseless() -> NoiseModel:
    return build_noise_model(ComponentRates.zero(), NoiseMode.PAULI)
