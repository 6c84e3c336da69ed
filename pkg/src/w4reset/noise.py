"""Relaxation and dephasing in operator-sum form, applied layer by layer."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import qcore
from .circuit import Circuit, gate_matrix

COMPLETENESS_TOL = 1e-12


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class KrausChannel:
    ops: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(np.asarray(e, dtype=complex) for e in self.ops)
        if not ops:
            raise ChannelError("a channel needs at least one operation element")
        object.__setattr__(self, "ops", ops)

    def completeness_error(self) -> float:
        d = self.ops[0].shape[0]
        s = sum(e.conj().T @ e for e in self.ops)
        return float(np.max(np.abs(s - np.eye(d))))

    def superoperator(self) -> np.ndarray:
        """Tensor S[a, b, c, d] with rho'[a, b] = sum_cd S[a, b, c, d] rho[c, d]."""
        stack = np.stack(self.ops)
        return np.einsum("kac,kbd->abcd", stack, stack.conj())

    def __call__(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        return sum(e @ rho @ e.conj().T for e in self.ops)


def _check_prob(name: str, value: float):
    if not 0.0 <= value <= 1.0 or math.isnan(value):
        raise ChannelError(f"{name}={value} outside [0, 1]")


def amplitude_damping(gamma: float) -> KrausChannel:
    _check_prob("gamma", gamma)
    e1 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    e2 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return KrausChannel((e1, e2))


def dephasing(gamma_phi: float) -> KrausChannel:
    _check_prob("gamma_phi", gamma_phi)
    e3 = np.array([[1, 0], [0, np.sqrt(1 - gamma_phi)]], dtype=complex)
    e4 = np.array([[0, 0], [0, np.sqrt(gamma_phi)]], dtype=complex)
    return KrausChannel((e3, e4))


def combined_channel(gamma: float, gamma_phi: float) -> KrausChannel:
    """Products E1E3, E1E4, E2E3, E2E4 of the damping and dephasing elements."""
    e1, e2 = amplitude_damping(gamma).ops
    e3, e4 = dephasing(gamma_phi).ops
    return KrausChannel((e1 @ e3, e1 @ e4, e2 @ e3, e2 @ e4))


def _apply_superop(t: np.ndarray, sop: np.ndarray, qubit: int, n: int) -> np.ndarray:
    # t has 2n axes of size 2; contract the (row, col) axes of ``qubit``
    t = np.tensordot(sop, t, axes=([2, 3], [qubit, n + qubit]))
    return np.moveaxis(t, [0, 1], [qubit, n + qubit])


def apply_channel(ch: KrausChannel, rho, qubit: int) -> np.ndarray:
    """Apply a single-qubit channel to one qubit of an n-qubit density matrix."""
    rho = np.asarray(rho, dtype=complex)
    n = qcore.num_qubits(rho.shape[0])
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n} qubits")
    if ch.completeness_error() > COMPLETENESS_TOL:
        raise ChannelError("operation elements do not sum to the identity")
    t = rho.reshape([2] * (2 * n))
    return _apply_superop(t, ch.superoperator(), qubit, n).reshape(rho.shape)


def _per_qubit(value, n: int) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        return (float(value),) * n
    vals = tuple(float(v) for v in value)
    if len(vals) != n:
        raise ValueError(f"expected {n} per-qubit values, got {len(vals)}")
    return vals


@dataclass(frozen=True)
class NoiseModel:
    """Per-qubit T1 and T_phi in microseconds, gate durations in nanoseconds.

    ``math.inf`` for a coherence time switches that process off.
    """

    t1: tuple[float, ...] = (30.0,) * 5
    t_phi: tuple[float, ...] = (5.0,) * 5
    duration_single: float = 30.0
    duration_double: float = 45.0
    idle_decoherence: bool = True
    exponential: bool = False

    def __post_init__(self):
        n = len(self.t1) if not isinstance(self.t1, (int, float)) else 5
        object.__setattr__(self, "t1", _per_qubit(self.t1, n))
        object.__setattr__(self, "t_phi", _per_qubit(self.t_phi, n))
        for name in ("t1", "t_phi"):
            if any(not v > 0 for v in getattr(self, name)):
                raise ValueError(f"{name} values must be strictly positive")
        if not (self.duration_single > 0 and self.duration_double > 0):
            raise ValueError("gate durations must be strictly positive")

    @classmethod
    def noiseless(cls, n_qubits: int = 5) -> "NoiseModel":
        return cls(t1=(math.inf,) * n_qubits, t_phi=(math.inf,) * n_qubits)

    @classmethod
    def uniform(cls, t1: float, t_phi: float, n_qubits: int = 5, **kw) -> "NoiseModel":
        return cls(t1=(t1,) * n_qubits, t_phi=(t_phi,) * n_qubits, **kw)

    def with_t_phi(self, t_phi: float) -> "NoiseModel":
        return replace(self, t_phi=(float(t_phi),) * len(self.t1))

    @property
    def n_qubits(self) -> int:
        return len(self.t1)

    @property
    def is_noiseless(self) -> bool:
        return all(math.isinf(v) for v in self.t1 + self.t_phi)

    def rate(self, duration_us: float, coherence_us: float) -> float:
        if math.isinf(coherence_us):
            return 0.0
        x = duration_us / coherence_us
        return min(1.0, -math.expm1(-x) if self.exponential else x)

    def channel(self, qubit: int, duration_us: float) -> KrausChannel:
        return combined_channel(
            self.rate(duration_us, self.t1[qubit]), self.rate(duration_us, self.t_phi[qubit])
        )

    def layer_duration_us(self, duration_class: str) -> float:
        ns = self.duration_double if duration_class == "double" else self.duration_single
        return ns / 1000.0

    def to_dict(self) -> dict:
        return {
            "t1": list(self.t1),
            "t_phi": list(self.t_phi),
            "duration_single": self.duration_single,
            "duration_double": self.duration_double,
            "idle_decoherence": self.idle_decoherence,
            "exponential": self.exponential,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        return cls(**d)


def idle_channel(duration_us: float, model: NoiseModel, qubit: int) -> KrausChannel:
    if duration_us < 0:
        raise ValueError("idle duration must be non-negative")
    return model.channel(qubit, duration_us)


def apply_noisy_layer(layer: Sequence, rho, model: NoiseModel) -> np.ndarray:
    """Apply the layer's gates, then decoherence for the layer duration."""
    rho = np.asarray(rho, dtype=complex)
    n = qcore.num_qubits(rho.shape[0])
    for op in layer:
        rho = qcore.apply_operator(gate_matrix(op), rho, op.qubits, n)
    if model.is_noiseless or not layer:
        return rho
    sops = _layer_superops(model, layer[0].duration_class)
    touched = {q for op in layer for q in op.qubits}
    qubits = range(n) if model.idle_decoherence else sorted(touched)
    t = rho.reshape([2] * (2 * n))
    for q in qubits:
        t = _apply_superop(t, sops[q], q, n)
    return t.reshape(rho.shape)


@lru_cache(maxsize=256)
def _layer_superops(model: NoiseModel, duration_class: str) -> tuple[np.ndarray, ...]:
    duration = model.layer_duration_us(duration_class)
    return tuple(model.channel(q, duration).superoperator() for q in range(model.n_qubits))


def simulate_density(c: Circuit, rho, model: NoiseModel) -> np.ndarray:
    """Run a scheduled circuit on a density matrix under ``model``."""
    if c.layers is None:
        raise ValueError("circuit must be scheduled before noisy simulation")
    for layer in c.layers:
        rho = apply_noisy_layer(layer, rho, model)
    return rho
