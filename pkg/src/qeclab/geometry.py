"""Code layouts: rotated surface code, its distance-3 quadrants, and repetition chains.

Device coordinates follow the rotated (row, col) grid of the hardware heatmaps.
For a distance-d surface code the data qubit with code coordinates (u, v),
0 <= u, v < d, sits at row = u + v + 1, col = u - v + d.  Measure qubits sit at
plaquette centres (u + 1/2, v + 1/2), i.e. row = u + v + 2, col = u - v + d.
In the code picture u grows to the east and v to the north, so the corner data
qubit (u, v) = (0, 0) is the lower-left one.

Every stabilizer is measured as a ZXXZ operator: Z on its NE and SW corners and
X on its NW and SE corners.  The X/Z labels follow the traditional CSS
checkerboard (plaquette (u, v) is Z-type when u + v is even).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Sequence

# Directions of a data qubit relative to its plaquette centre, as offsets in
# code coordinates from the plaquette's SW corner.
CORNERS = {"NE": (1, 1), "NW": (0, 1), "SE": (1, 0), "SW": (0, 0)}
# The ZXXZ Pauli acting on each corner.
CORNER_PAULI = {"NE": "Z", "NW": "X", "SE": "X", "SW": "Z"}

DEFAULT_CZ_ORDER = {
    "X": ("NE", "SE", "NW", "SW"),
    "Z": ("NE", "NW", "SE", "SW"),
}


class Basis(str, Enum):
    X = "X"
    Z = "Z"

    def other(self) -> "Basis":
        return Basis.Z if self is Basis.X else Basis.X


class CodeKind(str, Enum):
    SURFACE = "surface"
    REPETITION = "repetition"


@dataclass(frozen=True, order=True)
class QubitCoord:
    row: int
    col: int

    def __post_init__(self):
        if self.row < 0 or self.col < 0:
            raise ValueError(f"negative coordinate {self.row},{self.col}")

    def __str__(self) -> str:
        return f"{self.row},{self.col}"

    @classmethod
    def parse(cls, text: str) -> "QubitCoord":
        r, c = text.split(",")
        return cls(int(r), int(c))

    def adjacent(self, other: "QubitCoord") -> bool:
        return abs(self.row - other.row) + abs(self.col - other.col) == 1


@dataclass(frozen=True)
class Stabilizer:
    """One parity check.

    ``support`` is stored in CZ order: ``support[k]`` interacts with the measure
    qubit in CZ layer ``layers[k]`` (0..3).  ``paulis[k]`` is the Pauli the
    check applies to ``support[k]``.
    """

    measure_qubit: QubitCoord
    basis: Basis
    support: tuple[QubitCoord, ...]
    layers: tuple[int, ...]
    paulis: tuple[str, ...]

    def __post_init__(self):
        if len(self.support) not in (2, 4):
            raise ValueError("stabilizer weight must be 2 or 4")
        if len(set(self.support)) != len(self.support):
            raise ValueError("repeated support qubit")
        if sorted(self.layers) != list(self.layers) or len(set(self.layers)) != len(self.layers):
            raise ValueError("layers must be strictly increasing")
        for q in self.support:
            if not q.adjacent(self.measure_qubit):
                raise ValueError(f"{q} is not adjacent to {self.measure_qubit}")

    @property
    def weight(self) -> int:
        return len(self.support)

    @property
    def cz_order(self) -> tuple[QubitCoord, ...]:
        return self.support

    def pauli_map(self) -> dict[QubitCoord, str]:
        return dict(zip(self.support, self.paulis))


@dataclass(frozen=True)
class CodeLayout:
    kind: CodeKind
    distance: int
    data_qubits: tuple[QubitCoord, ...]
    stabilizers: tuple[Stabilizer, ...]
    logical_z_support: tuple[QubitCoord, ...]
    logical_x_support: tuple[QubitCoord, ...]
    # Pauli letter of each logical operator on its support (ZXXZ frame).
    logical_z_paulis: tuple[str, ...] = ()
    logical_x_paulis: tuple[str, ...] = ()
    # Data qubits Hadamard-conjugated relative to the CSS picture.
    conjugated: frozenset = field(default_factory=frozenset)
    name: str = ""

    @property
    def measure_qubits(self) -> tuple[QubitCoord, ...]:
        return tuple(s.measure_qubit for s in self.stabilizers)

    @property
    def all_qubits(self) -> tuple[QubitCoord, ...]:
        return tuple(sorted(self.data_qubits + self.measure_qubits))

    def stabilizers_of(self, basis: Basis) -> list[int]:
        return [i for i, s in enumerate(self.stabilizers) if s.basis == basis]

    def logical(self, basis: Basis) -> dict[QubitCoord, str]:
        if basis == Basis.Z:
            return dict(zip(self.logical_z_support, self.logical_z_paulis))
        return dict(zip(self.logical_x_support, self.logical_x_paulis))

    def data_index(self) -> dict[QubitCoord, int]:
        return {q: i for i, q in enumerate(self.data_qubits)}


@dataclass(frozen=True, order=True)
class DetectorId:
    round: int
    stabilizer_index: int


def _device(u: int, v: int, dist: int) -> QubitCoord:
    return QubitCoord(u + v + 1, u - v + dist)


def _plaquette_device(u: int, v: int, dist: int) -> QubitCoord:
    return QubitCoord(u + v + 2, u - v + dist)


def _plaquette_basis(u: int, v: int) -> Basis:
    return Basis.Z if (u + v) % 2 == 0 else Basis.X


def _surface_from_grid(
    d: int,
    origin: tuple[int, int],
    embed: int,
    cz_order: dict[str, Sequence[str]] | None,
    name: str,
) -> CodeLayout:
    """Distance-d patch whose code coordinates start at ``origin`` of a distance-``embed`` grid."""
    order = dict(DEFAULT_CZ_ORDER)
    if cz_order:
        order.update({k: tuple(v) for k, v in cz_order.items()})
    for key, seq in order.items():
        if sorted(seq) != sorted(CORNERS):
            raise ValueError(f"cz order for {key} must permute NE, NW, SE, SW")
    ou, ov = origin
    if (ou + ov) % 2:
        raise ValueError("patch origin must preserve the checkerboard parity")

    data = {}
    for u in range(d):
        for v in range(d):
            data[(u, v)] = _device(ou + u, ov + v, embed)

    stabs = []
    for pu in range(-1, d):
        for pv in range(-1, d):
            corners = {}
            for name_c, (du, dv) in CORNERS.items():
                key = (pu + du, pv + dv)
                if key in data:
                    corners[name_c] = key
            basis = _plaquette_basis(pu, pv)
            interior = 0 <= pu < d - 1 and 0 <= pv < d - 1
            if interior:
                pass
            elif len(corners) == 2:
                # boundary checks: X-type on the west/east edges, Z-type on south/north
                if pu in (-1, d - 1) and basis != Basis.X:
                    continue
                if pv in (-1, d - 1) and basis != Basis.Z:
                    continue
            else:
                continue
            seq = order[basis.value]
            support, layers, paulis = [], [], []
            for layer, corner in enumerate(seq):
                if corner in corners:
                    support.append(data[corners[corner]])
                    layers.append(layer)
                    paulis.append(CORNER_PAULI[corner])
            stabs.append(
                Stabilizer(
                    measure_qubit=_plaquette_device(ou + pu, ov + pv, embed),
                    basis=basis,
                    support=tuple(support),
                    layers=tuple(layers),
                    paulis=tuple(paulis),
                )
            )
    stabs.sort(key=lambda s: s.measure_qubit)

    conj = frozenset(q for (u, v), q in data.items() if (u + v) % 2 == 1)
    # CSS logical Z runs along u = 0 (south to north), logical X along v = 0.
    lz = [data[(0, v)] for v in range(d)]
    lx = [data[(u, 0)] for u in range(d)]
    lz_p = ["X" if q in conj else "Z" for q in lz]
    lx_p = ["Z" if q in conj else "X" for q in lx]
    return CodeLayout(
        kind=CodeKind.SURFACE,
        distance=d,
        data_qubits=tuple(sorted(data.values())),
        stabilizers=tuple(stabs),
        logical_z_support=tuple(lz),
        logical_x_support=tuple(lx),
        logical_z_paulis=tuple(lz_p),
        logical_x_paulis=tuple(lx_p),
        conjugated=conj,
        name=name,
    )


def surface_layout(d: int, cz_order: dict[str, Sequence[str]] | None = None) -> CodeLayout:
    if not isinstance(d, int) or d < 1 or d % 2 == 0:
        raise ValueError(f"surface code distance must be a positive odd integer, got {d}")
    return _surface_from_grid(d, (0, 0), d, cz_order, name=f"surface-d{d}")


def quadrant_layouts(d5: CodeLayout, cz_order: dict[str, Sequence[str]] | None = None) -> list[CodeLayout]:
    """The four distance-3 patches in the corners of a distance-5 layout."""
    if d5.kind != CodeKind.SURFACE or d5.distance != 5:
        raise ValueError("quadrant_layouts needs a distance-5 surface layout")
    out = []
    for ou, ov in ((0, 0), (2, 0), (0, 2), (2, 2)):
        out.append(_surface_from_grid(3, (ou, ov), 5, cz_order, name=f"quadrant-{ou}{ov}"))
    return out


@lru_cache(maxsize=None)
def _footprint_chain() -> tuple[tuple[QubitCoord, ...], tuple[QubitCoord, ...]]:
    """Alternating data/measure path covering all 49 qubits of the distance-5 footprint.

    Data qubits are visited column by column in a snake (u = 0 going north,
    u = 1 going south, ...).  Each link is assigned a distinct measure qubit
    adjacent to both ends by backtracking.
    """
    d5 = surface_layout(5)
    measures = set(d5.measure_qubits)
    path = []
    for u in range(5):
        vs = range(5) if u % 2 == 0 else range(4, -1, -1)
        path.extend(_device(u, v, 5) for v in vs)
    links = list(zip(path[:-1], path[1:]))
    cands = []
    for a, b in links:
        common = [m for m in measures if m.adjacent(a) and m.adjacent(b)]
        cands.append(sorted(common))

    chosen: list[QubitCoord] = []
    used: set = set()

    def search(k: int) -> bool:
        if k == len(links):
            return True
        for m in cands[k]:
            if m in used:
                continue
            used.add(m)
            chosen.append(m)
            if search(k + 1):
                return True
            used.discard(m)
            chosen.pop()
        return False

    if not search(0):
        raise RuntimeError("no Hamiltonian chain through the distance-5 footprint")
    return tuple(path), tuple(chosen)


def repetition_layout(d: int, offset: int = 0) -> CodeLayout:
    """Bit-flip repetition code on a chain of d data qubits.

    For d + offset <= 25 the chain is a contiguous piece of a path through the
    distance-5 surface-code footprint; longer chains use a synthetic straight line.
    ``data_qubits`` are listed in chain order and the logical support is the first one.
    """
    if not isinstance(d, int) or d < 2:
        raise ValueError(f"repetition code needs d >= 2, got {d}")
    if offset < 0:
        raise ValueError("offset must be non-negative")
    if d + offset <= 25:
        data_path, meas_path = _footprint_chain()
        data = data_path[offset : offset + d]
        meas = meas_path[offset : offset + d - 1]
    else:
        data = tuple(QubitCoord(0, 2 * (i + offset)) for i in range(d))
        meas = tuple(QubitCoord(0, 2 * (i + offset) + 1) for i in range(d - 1))
    stabs = tuple(
        Stabilizer(
            measure_qubit=meas[i],
            basis=Basis.Z,
            support=(data[i], data[i + 1]),
            layers=(0, 1),
            paulis=("Z", "Z"),
        )
        for i in range(d - 1)
    )
    return CodeLayout(
        kind=CodeKind.REPETITION,
        distance=d,
        data_qubits=tuple(data),
        stabilizers=stabs,
        logical_z_support=(data[0],),
        logical_x_support=tuple(data),
        logical_z_paulis=("Z",),
        logical_x_paulis=tuple("X" for _ in data),
        name=f"repetition-d{d}" + (f"+{offset}" if offset else ""),
    )


def detector_count(layout: CodeLayout, basis: Basis | str, rounds: int) -> int:
    basis = Basis(basis)
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if layout.kind == CodeKind.REPETITION:
        n_same, n_other = len(layout.stabilizers), 0
    else:
        n_same = sum(1 for s in layout.stabilizers if s.basis == basis)
        n_other = len(layout.stabilizers) - n_same
    return n_same * (rounds + 1) + n_other * (rounds - 1)


def symplectic_product(a: dict[QubitCoord, str], b: dict[QubitCoord, str]) -> int:
    """Parity of the number of positions where two Pauli strings anticommute."""
    n = 0
    for q, p in a.items():
        o = b.get(q)
        if o is not None and o != p and p != "I" and o != "I":
            n += 1
    return n % 2
