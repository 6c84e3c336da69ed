"""The five-qubit W4 resetting circuit, its success subspace and reset metrics.

Device layout is a chain Q1..Q5 (indices 0..4) with the target in the middle
(index 2) and probe singlets on (0, 1) and (3, 4). Probes on the far ends are
reached through their neighbour and one SWAP per pair.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import circuit as circ
from . import qcore
from .circuit import Circuit, GateOp, RandomUnitarySpec
from .noise import NoiseModel, apply_channel, idle_channel, simulate_density

N_QUBITS = 5
TARGET = 2
PROBES = (0, 1, 3, 4)
PAIRS = ((0, 1), (3, 4))
NEIGHBOUR = {0: 1, 1: 1, 3: 3, 4: 3}
DEFAULT_PROBE_ORDER = (0, 1, 3, 4)

Interaction = Union[str, RandomUnitarySpec, np.ndarray]


class ResetFailed(RuntimeError):
    """The state has no weight in the success subspace."""

    def __init__(self, message: str, p_success: float = 0.0):
        super().__init__(message)
        self.p_success = p_success


def _bits(s: str) -> np.ndarray:
    v = np.zeros(16, dtype=complex)
    v[int(s, 2)] = 1
    return v


def _sym(*words: str) -> np.ndarray:
    v = sum(_bits(w) for w in words)
    return v / np.linalg.norm(v)


SUCCESS_BASIS = (
    _bits("0000"),
    _bits("1111"),
    _sym("0011", "1100"),
    _sym("1000", "0100", "0010", "0001"),
    _sym("0111", "1011", "1101", "1110"),
    _sym("1010", "0101", "1001", "0110"),
)


@dataclass(frozen=True)
class SuccessSubspace:
    basis: tuple[np.ndarray, ...]
    projector: np.ndarray  # 16 x 16 on the probes in logical order

    @property
    def rank(self) -> int:
        return len(self.basis)

    def lifted(self, probe_devices: Sequence[int], n: int = N_QUBITS) -> np.ndarray:
        """Projector on the full register, logical probe k placed on ``probe_devices[k]``."""
        return qcore.lift(self.projector, list(probe_devices), n)


def success_projector(mode: str = "full6") -> SuccessSubspace:
    if mode == "full6":
        basis = SUCCESS_BASIS
    elif mode == "reduced3":
        basis = SUCCESS_BASIS[:3]
    else:
        raise ValueError(f"unknown projector mode {mode!r}")
    proj = sum(np.outer(v, v.conj()) for v in basis)
    return SuccessSubspace(tuple(basis), proj)


def rotation(axis: str, phi: float) -> np.ndarray:
    return {"x": circ.rx, "y": circ.ry, "z": circ.rz}[axis](phi)


@dataclass
class ProtocolConfig:
    """Everything that defines one run of the resetting experiment.

    ``initial_target`` is a Bloch-axis label ("0", "1", "+", "-", "i", "-i")
    or a state vector. ``prep_idle_us`` lets the target decohere after G1 to
    produce a mixed initial state; the idle uses ``noise`` or, for a noiseless
    protocol, the default NoiseModel.
    """

    initial_target: Union[str, np.ndarray] = "-"
    axis: str = "z"
    phi: float = 0.0
    free_evolution: np.ndarray | None = None
    interaction: Interaction = "XZ_iYX"
    probe_order: tuple[int, ...] = DEFAULT_PROBE_ORDER
    projector_mode: str | None = None
    noise: NoiseModel | None = None
    prep_idle_us: float = 0.0
    seed: int = 0
    projector_probes: tuple[int, ...] = PROBES

    def __post_init__(self):
        if sorted(self.probe_order) != sorted(PROBES):
            raise ValueError(f"probe_order {self.probe_order} is not a permutation of {PROBES}")
        if sorted(self.projector_probes) != sorted(PROBES):
            raise ValueError("projector_probes must be a permutation of the probe qubits")
        if self.axis not in ("x", "y", "z"):
            raise ValueError(f"unknown rotation axis {self.axis!r}")
        if not 0 <= self.phi < 2 * np.pi:
            raise ValueError("phi must lie in [0, 2pi)")
        if self.prep_idle_us < 0:
            raise ValueError("prep_idle_us must be non-negative")
        if isinstance(self.interaction, str) and self.interaction not in circ.DETERMINISTIC_INTERACTIONS:
            raise ValueError(f"unknown interaction {self.interaction!r}")
        if isinstance(self.interaction, np.ndarray) and not qcore.is_unitary(self.interaction):
            raise ValueError("explicit interaction must be a 4x4 unitary")
        self.probe_order = tuple(self.probe_order)
        self.projector_probes = tuple(self.projector_probes)

    @property
    def is_deterministic(self) -> bool:
        return isinstance(self.interaction, str)

    @property
    def mode(self) -> str:
        if self.projector_mode is not None:
            return self.projector_mode
        return "reduced3" if self.is_deterministic else "full6"

    def target_ket(self) -> np.ndarray:
        if isinstance(self.initial_target, str):
            return qcore.BLOCH_STATES[self.initial_target]
        return qcore.state_vector(self.initial_target)

    def evolution(self) -> np.ndarray:
        if self.free_evolution is not None:
            return np.asarray(self.free_evolution, dtype=complex)
        return rotation(self.axis, self.phi)

    def interaction_matrix(self) -> np.ndarray:
        """Dense 4x4 target-probe unitary, target as the left factor."""
        if isinstance(self.interaction, str):
            return circ.interaction_matrix(self.interaction)
        if isinstance(self.interaction, RandomUnitarySpec):
            return circ.random_interaction_matrix(self.interaction)
        return np.asarray(self.interaction, dtype=complex)


def prep_gates(psi: np.ndarray, qubit: int) -> list[GateOp]:
    """Single-qubit gates taking |0> to ``psi`` up to a global phase."""
    a, b = psi
    theta = 2 * np.arctan2(abs(b), abs(a))
    ops = []
    if np.isclose(theta, np.pi):
        return [GateOp("X", (qubit,))]
    if not np.isclose(theta, 0):
        ops.append(GateOp("RY", (qubit,), float(theta)))
        lam = float(np.angle(b) - np.angle(a)) if abs(a) > 1e-12 else 0.0
        if not np.isclose(np.mod(lam, 2 * np.pi), 0):
            ops.append(GateOp("RZ", (qubit,), lam))
    return ops


def _evolution_gates(cfg: ProtocolConfig) -> list[GateOp]:
    if cfg.free_evolution is not None:
        return [GateOp("CUSTOM1", (TARGET,), matrix=cfg.evolution())]
    if np.isclose(cfg.phi, 0):
        return []
    return [GateOp("R" + cfg.axis.upper(), (TARGET,), float(cfg.phi))]


def _interaction_gates(cfg: ProtocolConfig, probe: int) -> list[GateOp]:
    if isinstance(cfg.interaction, str):
        return circ.compile_deterministic_u(cfg.interaction, TARGET, probe)
    if isinstance(cfg.interaction, RandomUnitarySpec):
        return circ.compile_random_u(cfg.interaction, TARGET, probe)
    # CUSTOM2 matrices act with their first factor on qubits[0]
    return [GateOp("CUSTOM2", (TARGET, probe), matrix=cfg.interaction_matrix())]


@dataclass
class ProtocolCircuit:
    prep: Circuit  # G1 on the target only
    body: Circuit  # singlet preparation, evolution and interactions
    full: Circuit  # prep followed by body, scheduled together
    probe_devices: tuple[int, ...]  # device of logical probe k at readout


def build_protocol_circuit(cfg: ProtocolConfig) -> ProtocolCircuit:
    """Assemble and schedule the resetting circuit for ``cfg``.

    A far probe whose partner is still untouched is reached as U on the
    neighbour followed by SWAP: on an antisymmetric singlet this equals U on
    the far probe. Otherwise the SWAP comes first and the probes trade places.
    """
    prep_ops = prep_gates(cfg.target_ket(), TARGET)
    body = Circuit(N_QUBITS)
    for a, b in PAIRS:
        body.append(circ.compile_singlet_prep(a, b))

    location = {p: p for p in PROBES}  # logical probe -> device
    touched: set[int] = set()
    for logical in cfg.probe_order:
        body.append(_evolution_gates(cfg))
        dev = location[logical]
        near = NEIGHBOUR[dev]
        if dev == near:
            body.append(_interaction_gates(cfg, dev))
        else:
            partner = next(p for p, d in location.items() if d == near)
            if partner not in touched:
                body.append(_interaction_gates(cfg, near))
                body.append(circ.compile_swap(dev, near))
            else:
                body.append(circ.compile_swap(dev, near))
                body.append(_interaction_gates(cfg, near))
                location[logical], location[partner] = near, dev
        touched.add(logical)

    prep = Circuit(N_QUBITS, prep_ops)
    full = circ.schedule(Circuit(N_QUBITS, prep_ops + body.ops))
    probe_devices = tuple(location[p] for p in cfg.projector_probes)
    return ProtocolCircuit(circ.schedule(prep), circ.schedule(body), full, probe_devices)


@dataclass
class RunResult:
    rho_final: np.ndarray
    p_success: float
    rho_reset: np.ndarray
    rho_initial: np.ndarray
    trace_distance_to_initial: float
    fidelity_to_initial: float
    depth_report: circ.DepthReport
    p_success_overlap: float = float("nan")
    state_fidelity: float = 1.0
    rho_evolved: np.ndarray | None = field(default=None, repr=False)


def initial_target_state(cfg: ProtocolConfig) -> np.ndarray:
    """Target density matrix right after preparation (including any idle)."""
    rho = qcore.ket_to_dm(cfg.target_ket())
    if cfg.prep_idle_us > 0:
        model = cfg.noise or NoiseModel()
        rho = idle_channel(cfg.prep_idle_us, model, TARGET)(rho)
    return rho


def _ground(n: int = N_QUBITS) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1
    return psi


def final_state(cfg: ProtocolConfig, pc: ProtocolCircuit | None = None) -> np.ndarray:
    """Five-qubit output: a state vector when noiseless and pure, else a density matrix."""
    pc = pc or build_protocol_circuit(cfg)
    noisy = cfg.noise is not None and not cfg.noise.is_noiseless
    if not noisy and cfg.prep_idle_us == 0:
        return circ.apply_noiseless(pc.full, _ground())
    if cfg.prep_idle_us == 0:
        return simulate_density(pc.full, qcore.ket_to_dm(_ground()), cfg.noise)
    model = cfg.noise if noisy else NoiseModel.noiseless()
    rho = simulate_density(pc.prep, qcore.ket_to_dm(_ground()), model)
    idle_model = cfg.noise or NoiseModel()
    for q in range(N_QUBITS):
        rho = apply_channel(idle_channel(cfg.prep_idle_us, idle_model, q), rho, q)
    return simulate_density(pc.body, rho, model)


def project_success(state: np.ndarray, projector: np.ndarray):
    """Return (p_success, rho_projected, literal trace overlap)."""
    if state.ndim == 1:
        phi = projector @ state
        p = float(np.vdot(phi, phi).real)
        if p < 1e-12:
            raise ResetFailed("reset never succeeds", p)
        phi = phi / np.sqrt(p)
        rho_ps = np.outer(phi, phi.conj())
        return p, rho_ps, p
    p = float(np.real(np.trace(projector @ state)))
    m = projector @ state @ projector
    norm = float(np.real(np.trace(m)))
    if norm < 1e-12:
        raise ResetFailed("reset never succeeds", max(p, 0.0))
    rho_ps = m / norm
    overlap = float(np.real(np.trace(state @ rho_ps)))
    return p, rho_ps, overlap


def run_protocol(cfg: ProtocolConfig, ideal_reference: bool = True) -> RunResult:
    pc = build_protocol_circuit(cfg)
    out = final_state(cfg, pc)
    proj = success_projector(cfg.mode).lifted(pc.probe_devices)
    p, rho_ps, overlap = project_success(out, proj)
    rho_reset = qcore.make_physical(qcore.partial_trace(rho_ps, [TARGET]))
    rho0 = initial_target_state(cfg)
    rho_final = qcore.ket_to_dm(out) if out.ndim == 1 else out

    state_fid = 1.0
    if out.ndim == 2 and ideal_reference:
        ideal = circ.apply_noiseless(pc.full, _ground())
        state_fid = float(np.real(np.vdot(ideal, out @ ideal)))
    return RunResult(
        rho_final=rho_final,
        p_success=min(max(p, 0.0), 1.0),
        rho_reset=rho_reset,
        rho_initial=rho0,
        trace_distance_to_initial=qcore.trace_distance(rho_reset, rho0),
        fidelity_to_initial=qcore.fidelity(rho_reset, rho0),
        depth_report=pc.full.depth_report(),
        p_success_overlap=overlap,
        state_fidelity=state_fid,
    )


def run_no_reset_baseline(cfg: ProtocolConfig, steps: int = 4) -> list[np.ndarray]:
    """Target state after k = 1..steps free evolutions with no probes."""
    rho = initial_target_state(cfg)
    r = cfg.evolution()
    out = []
    for _ in range(steps):
        rho = r @ rho @ r.conj().T
        out.append(rho)
    return out


def random_trial_config(rng: np.random.Generator, probe_order=DEFAULT_PROBE_ORDER, haar: bool = False, **kw) -> ProtocolConfig:
    """Noiseless config with a random target state, evolution and interaction."""
    psi = qcore.random_state_vector(1, rng)
    r = qcore.haar_unitary(2, rng)
    if haar:
        u = qcore.haar_unitary(4, rng)
    else:
        u = RandomUnitarySpec.from_seed(int(rng.integers(2**63)))
    return ProtocolConfig(
        initial_target=psi, free_evolution=r, interaction=u, probe_order=probe_order, **kw
    )


def discover_probe_order(n_trials: int = 50, seed: int = 0, tol: float = 1e-8) -> list[tuple[int, ...]]:
    """All probe interaction orders under which noiseless random runs reset exactly."""
    passing = []
    for order in itertools.permutations(PROBES):
        rng = np.random.default_rng(seed)
        ok = True
        for _ in range(n_trials):
            cfg = random_trial_config(rng, probe_order=order)
            try:
                res = run_protocol(cfg)
            except ResetFailed:
                continue
            if res.p_success > 1e-6 and res.trace_distance_to_initial >= tol:
                ok = False
                break
        if ok:
            passing.append(order)
    if not passing:
        raise RuntimeError("no probe order resets the target; check the circuit wiring")
    return passing
