"""Gate-level circuit IR restricted to single-qubit gates and nearest-neighbour CZ.

Composite two-qubit operations (SWAP, singlet preparation, interaction
unitaries) are compiled into this gate set, and circuits are scheduled into
layers that never mix single- and two-qubit gates so that single and double
layer depths can be counted separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import qcore
from .qcore import I2, X, Y, Z

SINGLE_KINDS = ("RX", "RY", "RZ", "X", "Y", "Z", "H", "PHASE", "CUSTOM1")
DOUBLE_KINDS = ("CZ", "CUSTOM2")
ROTATIONS = ("RX", "RY", "RZ", "PHASE")
CZ_MATRIX = np.diag([1, 1, 1, -1]).astype(complex)
SWAP_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)


def rx(theta: float) -> np.ndarray:
    return np.cos(theta / 2) * I2 - 1j * np.sin(theta / 2) * X


def ry(theta: float) -> np.ndarray:
    return np.cos(theta / 2) * I2 - 1j * np.sin(theta / 2) * Y


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None
    matrix: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if self.kind not in SINGLE_KINDS + DOUBLE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        want = 2 if self.kind in DOUBLE_KINDS else 1
        if len(self.qubits) != want:
            raise ValueError(f"{self.kind} acts on {want} qubit(s), got {self.qubits}")
        if want == 2:
            a, b = self.qubits
            if abs(a - b) != 1:
                raise ValueError(f"{self.kind} needs adjacent qubits, got {self.qubits}")
        if self.kind in ROTATIONS and self.angle is None:
            raise ValueError(f"{self.kind} needs an angle")
        if self.kind.startswith("CUSTOM"):
            if self.matrix is None:
                raise ValueError("custom gate needs a matrix")
            m = np.asarray(self.matrix, dtype=complex)
            if m.shape != (2**want, 2**want) or not qcore.is_unitary(m):
                raise ValueError("custom gate matrix must be unitary of matching size")
            object.__setattr__(self, "matrix", m)

    @property
    def duration_class(self) -> str:
        return "double" if self.kind in DOUBLE_KINDS else "single"

    def __eq__(self, other):
        if not isinstance(other, GateOp):
            return NotImplemented
        if (self.kind, self.qubits, self.angle) != (other.kind, other.qubits, other.angle):
            return False
        if self.matrix is None or other.matrix is None:
            return self.matrix is None and other.matrix is None
        return np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash((self.kind, self.qubits, self.angle))


def gate_matrix(g: GateOp) -> np.ndarray:
    k = g.kind
    if k == "RX":
        return rx(g.angle)
    if k == "RY":
        return ry(g.angle)
    if k == "RZ":
        return rz(g.angle)
    if k == "PHASE":
        return np.diag([1, np.exp(1j * g.angle)])
    if k == "H":
        return (X + Z) / np.sqrt(2)
    if k == "CZ":
        return CZ_MATRIX.copy()
    if k in ("X", "Y", "Z"):
        return qcore.PAULIS[k].copy()
    return g.matrix.copy()


@dataclass
class DepthReport:
    depth_single: int
    depth_double: int
    count_single: int
    count_double: int

    @property
    def depth(self) -> int:
        return self.depth_single + self.depth_double


@dataclass
class Circuit:
    n_qubits: int
    ops: list[GateOp] = field(default_factory=list)
    layers: list[list[GateOp]] | None = None

    def append(self, op_or_ops: GateOp | Iterable[GateOp]) -> "Circuit":
        if isinstance(op_or_ops, GateOp):
            op_or_ops = [op_or_ops]
        for op in op_or_ops:
            if any(not 0 <= q < self.n_qubits for q in op.qubits):
                raise IndexError(f"{op} outside a {self.n_qubits}-qubit register")
            self.ops.append(op)
        self.layers = None
        return self

    def depth_report(self) -> DepthReport:
        layers = self.layers if self.layers is not None else schedule(self).layers
        single = sum(1 for layer in layers if layer[0].duration_class == "single")
        n_double = sum(1 for op in self.ops if op.duration_class == "double")
        return DepthReport(
            depth_single=single,
            depth_double=len(layers) - single,
            count_single=len(self.ops) - n_double,
            count_double=n_double,
        )

    def unitary(self) -> np.ndarray:
        u = np.eye(2**self.n_qubits, dtype=complex)
        for op in self.ops:
            u = qcore.lift(gate_matrix(op), op.qubits, self.n_qubits) @ u
        return u


def composite_unitary(ops: Sequence[GateOp], n_qubits: int) -> np.ndarray:
    return Circuit(n_qubits, list(ops)).unitary()


def schedule(c: Circuit, exclusive_double: bool = True) -> Circuit:
    """ASAP layering with duration-homogeneous layers.

    With ``exclusive_double`` a two-qubit layer holds a single CZ and every
    other qubit idles, which is how the device applies CZ gates.
    """
    layers: list[list[GateOp]] = []
    kinds: list[str] = []

    def last_layer(q: int) -> int:
        for i in range(len(layers) - 1, -1, -1):
            if any(q in op.qubits for op in layers[i]):
                return i
        return -1

    for op in c.ops:
        earliest = max(last_layer(q) for q in op.qubits) + 1
        placed = False
        for i in range(earliest, len(layers)):
            if kinds[i] != op.duration_class:
                continue
            if op.duration_class == "double" and exclusive_double:
                continue
            busy = {q for other in layers[i] for q in other.qubits}
            if busy.isdisjoint(op.qubits):
                layers[i].append(op)
                placed = True
                break
        if not placed:
            layers.insert(earliest, [op])
            kinds.insert(earliest, op.duration_class)
    out = Circuit(c.n_qubits, list(c.ops))
    out.layers = layers
    return out


def apply_noiseless(c: Circuit, psi) -> np.ndarray:
    """Apply every gate of ``c`` (layer order if scheduled) to a state vector."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (2**c.n_qubits,):
        raise ValueError(f"state of size {psi.size} does not fit {c.n_qubits} qubits")
    ops = [op for layer in c.layers for op in layer] if c.layers is not None else c.ops
    for op in ops:
        if any(not 0 <= q < c.n_qubits for q in op.qubits):
            raise IndexError(f"{op} outside a {c.n_qubits}-qubit register")
        psi = qcore.apply_operator(gate_matrix(op), psi, op.qubits, c.n_qubits)
    return psi


def merge_adjacent_rz(ops: Sequence[GateOp]) -> list[GateOp]:
    """Fuse RZ gates that follow each other on the same qubit."""
    out: list[GateOp] = []
    pending: dict[int, int] = {}  # qubit -> index in out of a mergeable RZ
    for op in ops:
        if op.kind == "RZ":
            q = op.qubits[0]
            if q in pending:
                prev = out[pending[q]]
                out[pending[q]] = GateOp("RZ", (q,), prev.angle + op.angle)
                continue
            pending[q] = len(out)
            out.append(op)
            continue
        for q in op.qubits:
            pending.pop(q, None)
        out.append(op)
    return [op for op in out if not (op.kind == "RZ" and np.isclose(np.mod(op.angle, 4 * np.pi), 0))]


def _check_adjacent(a: int, b: int):
    if abs(a - b) != 1:
        raise ValueError(f"qubits {a} and {b} are not nearest neighbours")


def compile_swap(qa: int, qb: int) -> list[GateOp]:
    """SWAP from three CZs: (I, -Y/2) CZ (-Y/2, Y/2) CZ (Y/2, -Y/2) CZ (I, Y/2)."""
    _check_adjacent(qa, qb)
    h = np.pi / 2
    return [
        GateOp("RY", (qb,), h),
        GateOp("CZ", (qa, qb)),
        GateOp("RY", (qa,), h),
        GateOp("RY", (qb,), -h),
        GateOp("CZ", (qa, qb)),
        GateOp("RY", (qa,), -h),
        GateOp("RY", (qb,), h),
        GateOp("CZ", (qa, qb)),
        GateOp("RY", (qb,), -h),
    ]


def compile_singlet_prep(qa: int, qb: int) -> list[GateOp]:
    """Prepare (|01> - |10>)/sqrt(2) on (qa, qb) from |00> with one CZ."""
    _check_adjacent(qa, qb)
    h = np.pi / 2
    # |00> -> |++> -> CZ -> (|01> + |10>)/sqrt2 -> Z on qa
    return [
        GateOp("RY", (qa,), h),
        GateOp("RY", (qb,), h),
        GateOp("CZ", (qa, qb)),
        GateOp("RY", (qb,), h),
        GateOp("RZ", (qa,), np.pi),
    ]


# Deterministic interactions written as (A + iB)/sqrt2 with commuting
# Pauli products A, B; entries are (sign, target letter, probe letter).
DETERMINISTIC_INTERACTIONS = {
    "XZ_iYX": ((1, "X", "Z"), (1, "Y", "X")),
    "mZZ_iYX": ((-1, "Z", "Z"), (1, "Y", "X")),
}

# C with C Z C^dagger = P, as a time-ordered gate list on one qubit
_TO_PAULI_FROM_Z = {
    "Z": [],
    "X": [("RY", np.pi / 2)],
    "Y": [("RX", -np.pi / 2)],
}


def _pauli_product(p: str, q: str) -> tuple[complex, str]:
    if p == "I":
        return 1, q
    if q == "I" or p == q:
        return 1, (p if q == "I" else "I")
    cyc = {"XY": (1j, "Z"), "YZ": (1j, "X"), "ZX": (1j, "Y")}
    if p + q in cyc:
        return cyc[p + q]
    ph, r = cyc[q + p]
    return -ph, r


def interaction_matrix(spec: str) -> np.ndarray:
    """Target matrix (A + iB)/sqrt2 with the target as the left tensor factor."""
    if spec not in DETERMINISTIC_INTERACTIONS:
        raise ValueError(f"unknown deterministic interaction {spec!r}")
    (sa, a1, a2), (sb, b1, b2) = DETERMINISTIC_INTERACTIONS[spec]
    P = qcore.PAULIS
    return (sa * np.kron(P[a1], P[a2]) + 1j * sb * np.kron(P[b1], P[b2])) / np.sqrt(2)


def compile_deterministic_u(spec: str, target: int, probe: int) -> list[GateOp]:
    """One-CZ realization of a deterministic interaction on (target, probe).

    (A + iB)/sqrt2 = A exp(i pi/4 AB) when A, B are commuting involutions, and
    AB = c P(x)Q is locally equivalent to ZZ, which one CZ plus RZs realizes.
    """
    _check_adjacent(target, probe)
    if spec not in DETERMINISTIC_INTERACTIONS:
        raise ValueError(f"unknown deterministic interaction {spec!r}")
    (sa, a1, a2), (sb, b1, b2) = DETERMINISTIC_INTERACTIONS[spec]
    ph1, p = _pauli_product(a1, b1)
    ph2, q = _pauli_product(a2, b2)
    c = (sa * sb * ph1 * ph2).real
    theta = c * np.pi / 4
    ops: list[GateOp] = []
    # exp(i theta P(x)Q) = (C_P (x) C_Q) exp(i theta Z(x)Z) (C_P (x) C_Q)^dagger
    for qubit, letter in ((target, p), (probe, q)):
        for kind, ang in reversed(_TO_PAULI_FROM_Z[letter]):
            ops.append(GateOp(kind, (qubit,), -ang))
    ops.append(GateOp("RZ", (target,), -2 * theta))
    ops.append(GateOp("RZ", (probe,), -2 * theta))
    ops.append(GateOp("CZ", (target, probe)))
    for qubit, letter in ((target, p), (probe, q)):
        for kind, ang in _TO_PAULI_FROM_Z[letter]:
            ops.append(GateOp(kind, (qubit,), ang))
    for qubit, letter in ((target, a1), (probe, a2)):
        if letter != "I":
            ops.append(GateOp(letter, (qubit,)))
    return ops


@dataclass(frozen=True)
class RandomUnitarySpec:
    """Twelve Euler angles of a random CZ-based interaction.

    Layout: target before, probe before, target after, probe after; each a
    (alpha, beta, gamma) triple applied as RZ(alpha), RY(beta), RZ(gamma).
    """

    angles: tuple[float, ...]
    seed: int | None = None

    def __post_init__(self):
        a = tuple(float(x) for x in self.angles)
        if len(a) != 12:
            raise ValueError("a random interaction needs 12 angles")
        if any(not 0 <= x < 2 * np.pi for x in a):
            raise ValueError("angles must lie in [0, 2pi)")
        object.__setattr__(self, "angles", a)

    @classmethod
    def from_seed(cls, seed: int) -> "RandomUnitarySpec":
        rng = np.random.default_rng(seed)
        return cls(tuple(rng.uniform(0, 2 * np.pi, 12)), seed)


def compile_random_u(spec: RandomUnitarySpec, target: int, probe: int) -> list[GateOp]:
    _check_adjacent(target, probe)
    a = spec.angles
    ops: list[GateOp] = []

    def euler(qubit, triple):
        alpha, beta, gamma = triple
        ops.extend(
            [
                GateOp("RZ", (qubit,), alpha),
                GateOp("RY", (qubit,), beta),
                GateOp("RZ", (qubit,), gamma),
            ]
        )

    euler(target, a[0:3])
    euler(probe, a[3:6])
    ops.append(GateOp("CZ", (target, probe)))
    euler(target, a[6:9])
    euler(probe, a[9:12])
    return ops


def random_interaction_matrix(spec: RandomUnitarySpec) -> np.ndarray:
    """Dense 4x4 matrix of ``compile_random_u`` with the target as the left factor."""
    a = spec.angles

    def euler(t):
        return rz(t[2]) @ ry(t[1]) @ rz(t[0])

    before = np.kron(euler(a[0:3]), euler(a[3:6]))
    after = np.kron(euler(a[6:9]), euler(a[9:12]))
    return after @ CZ_MATRIX @ before


def format_circuit(c: Circuit) -> str:
    """One gate per line: ``GATE q[,q] [angle]``; custom gates carry their matrix."""
    lines = []
    ops = [op for layer in c.layers for op in layer] if c.layers is not None else c.ops
    for op in ops:
        qs = ",".join(str(q) for q in op.qubits)
        if op.kind.startswith("CUSTOM"):
            flat = " ".join(f"{z.real:.12g}{z.imag:+.12g}j" for z in op.matrix.reshape(-1))
            lines.append(f"{op.kind} {qs} {flat}")
        elif op.angle is not None:
            lines.append(f"{op.kind} {qs} {op.angle:.12g}")
        else:
            lines.append(f"{op.kind} {qs}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_circuit(text: str, n_qubits: int) -> Circuit:
    c = Circuit(n_qubits)
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, qs = parts[0], tuple(int(q) for q in parts[1].split(","))
        if kind.startswith("CUSTOM"):
            vals = np.array([complex(v) for v in parts[2:]])
            d = int(round(np.sqrt(vals.size)))
            c.append(GateOp(kind, qs, matrix=vals.reshape(d, d)))
        else:
            angle = float(parts[2]) if len(parts) > 2 else None
            c.append(GateOp(kind, qs, angle))
    return c
