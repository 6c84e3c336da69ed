"""Pauli-basis state tomography, single-qubit process tomography and bootstrap error bars."""

from __future__ import annotations

import csv
import io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import qcore
from .circuit import ry, rx

PAULI_ORDER = "IXYZ"
PAULI_STACK = np.stack([qcore.PAULIS[p] for p in PAULI_ORDER])

# V with V P V^dagger = Z, so measuring Z after V measures P
_BASIS_CHANGE = {
    "Z": np.eye(2, dtype=complex),
    "X": ry(-np.pi / 2),
    "Y": rx(np.pi / 2),
}

QPT_INPUTS = ("0", "1", "+", "i")


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: dict | None = None):
        super().__init__(message)
        self.residuals = residuals or {}


@dataclass
class MeasurementRecord:
    """Outcome histogram of one Pauli setting; ``shots=None`` holds exact probabilities."""

    setting: str
    shots: int | None
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if set(self.setting) - set("XYZ"):
            raise ValueError(f"setting {self.setting!r} must use only X, Y, Z")
        if self.counts.shape != (2 ** len(self.setting),):
            raise ValueError("histogram length does not match the setting")
        if self.shots is not None and int(self.counts.sum()) != self.shots:
            raise ValueError("counts do not sum to shots")

    def frequencies(self) -> np.ndarray:
        if self.shots is None:
            return self.counts.astype(float)
        return self.counts / self.shots


def pauli_settings(n: int) -> list[str]:
    return ["".join(s) for s in itertools.product("XYZ", repeat=n)]


def probability_table(rho, settings: Sequence[str] | None = None) -> np.ndarray:
    """Born probabilities, one row per setting, outcome bit 0 meaning eigenvalue +1."""
    rho = np.asarray(rho, dtype=complex)
    n = qcore.num_qubits(rho.shape[0])
    settings = pauli_settings(n) if settings is None else list(settings)
    rows = []
    for s in settings:
        v = qcore.tensor(*[_BASIS_CHANGE[c] for c in s])
        rows.append(np.real(np.einsum("ij,jk,ik->i", v, rho, v.conj())))
    p = np.clip(np.array(rows), 0, None)
    return p / p.sum(axis=1, keepdims=True)


def sample_measurements(rho, shots: int | None = 10_000, seed=0, settings=None) -> list[MeasurementRecord]:
    """Simulated readout of every Pauli setting; ``shots=None`` gives exact expectations."""
    rho = np.asarray(rho, dtype=complex)
    n = qcore.num_qubits(rho.shape[0])
    settings = pauli_settings(n) if settings is None else list(settings)
    table = probability_table(rho, settings)
    return records_from_table(table, settings, shots, np.random.default_rng(seed))


def records_from_table(table, settings, shots, rng) -> list[MeasurementRecord]:
    if shots is None:
        return [MeasurementRecord(s, None, p) for s, p in zip(settings, table)]
    return [MeasurementRecord(s, shots, rng.multinomial(shots, p)) for s, p in zip(settings, table)]


def _walsh(freqs: np.ndarray, n: int) -> np.ndarray:
    """Signed sums over outcome bits for every subset mask, for each row."""
    h = np.array([[1.0, 1.0], [1.0, -1.0]])
    t = freqs.reshape((-1,) + (2,) * n)
    for q in range(n):
        t = np.moveaxis(np.tensordot(h, t, axes=([1], [q + 1])), 0, q + 1)
    return t.reshape(freqs.shape)


@lru_cache(maxsize=8)
def _pauli_index_map(n: int) -> np.ndarray:
    """Index into the 4^n Pauli strings for each (setting, mask) pair."""
    settings = list(itertools.product((1, 2, 3), repeat=n))
    out = np.zeros((len(settings), 2**n), dtype=np.int64)
    for si, s in enumerate(settings):
        for mask in range(2**n):
            idx = 0
            for q in range(n):
                bit = (mask >> (n - 1 - q)) & 1
                idx = idx * 4 + (s[q] if bit else 0)
            out[si, mask] = idx
    return out


def pauli_expectations(freq_table: np.ndarray, n: int) -> np.ndarray:
    """All 4^n Pauli expectation values, each averaged over the compatible settings."""
    idx = _pauli_index_map(n)
    vals = _walsh(np.asarray(freq_table, dtype=float), n)
    total = np.bincount(idx.ravel(), weights=vals.ravel(), minlength=4**n)
    count = np.bincount(idx.ravel(), minlength=4**n)
    return total / count


def state_from_expectations(expect: np.ndarray, n: int) -> np.ndarray:
    """rho = 2^-n sum_P <P> P."""
    t = np.asarray(expect, dtype=complex).reshape((4,) * n)
    for _ in range(n):
        # contract the leading Pauli axis and push its (row, col) pair to the back
        t = np.tensordot(t, PAULI_STACK, axes=([0], [0]))
    t = t.reshape((2,) * (2 * n))
    t = t.transpose(list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2)))
    return t.reshape(2**n, 2**n) / 2**n


def qst_linear_inversion(records: Iterable[MeasurementRecord]) -> np.ndarray:
    records = list(records)
    if not records:
        raise ValueError("no measurement records")
    n = len(records[0].setting)
    by_setting = {r.setting: r for r in records}
    missing = [s for s in pauli_settings(n) if s not in by_setting]
    if missing:
        raise ValueError(f"incomplete tomography: {len(missing)} settings missing, e.g. {missing[0]}")
    table = np.array([by_setting[s].frequencies() for s in pauli_settings(n)])
    return state_from_expectations(pauli_expectations(table, n), n)


def cp_project(rho_raw) -> np.ndarray:
    """Nearest unit-trace PSD matrix in Frobenius norm.

    Negative eigenvalues are zeroed from the bottom up while their weight is
    spread evenly over the remaining ones.
    """
    rho = np.asarray(rho_raw, dtype=complex)
    rho = (rho + rho.conj().T) / 2
    w, v = np.linalg.eigh(rho)
    w = w[::-1] / np.trace(rho).real
    v = v[:, ::-1]
    d = len(w)
    acc = 0.0
    i = d
    while i > 0 and w[i - 1] + acc / i < 0:
        acc += w[i - 1]
        w[i - 1] = 0.0
        i -= 1
    w[:i] += acc / i
    return (v * w) @ v.conj().T


# --- single-qubit process tomography -----------------------------------------

def _chi_design(inputs: Sequence[np.ndarray]) -> np.ndarray:
    cols = []
    for m in range(4):
        for k in range(4):
            cols.append(np.concatenate([(PAULI_STACK[m] @ r @ PAULI_STACK[k]).reshape(-1) for r in inputs]))
    return np.array(cols).T


def _tp_map() -> np.ndarray:
    # vec(sum_mn chi_mn P_n P_m) as a matrix on vec(chi)
    return np.array(
        [(PAULI_STACK[k] @ PAULI_STACK[m]).reshape(-1) for m in range(4) for k in range(4)]
    ).T


_TP = _tp_map()
_TP_PINV = np.linalg.pinv(_TP)
_VEC_I = np.eye(2, dtype=complex).reshape(-1)


@dataclass
class ChiMatrix:
    """Process matrix in the (I, X, Y, Z) basis."""

    elements: np.ndarray
    cptp_projected: bool = False
    error_bar: float | None = None
    iterations: int = 0
    tp_residual: float = float("nan")
    min_eigenvalue: float = float("nan")

    def __post_init__(self):
        self.elements = np.asarray(self.elements, dtype=complex)
        self.tp_residual = tp_residual(self.elements)
        self.min_eigenvalue = float(np.linalg.eigvalsh((self.elements + self.elements.conj().T) / 2).min())

    def apply(self, rho) -> np.ndarray:
        return sum(
            self.elements[m, k] * PAULI_STACK[m] @ rho @ PAULI_STACK[k]
            for m in range(4)
            for k in range(4)
        )


def tp_residual(chi) -> float:
    return float(np.max(np.abs(_TP @ np.asarray(chi).reshape(-1) - _VEC_I)))


def qpt_chi(input_states: Sequence, output_states: Sequence) -> ChiMatrix:
    """Solve sum_mn chi_mn P_m rho_j P_n = eps(rho_j) for four inputs."""
    inputs = [qcore.ket_to_dm(s) if np.ndim(s) == 1 else np.asarray(s, dtype=complex) for s in input_states]
    outputs = [np.asarray(s, dtype=complex) for s in output_states]
    if len(inputs) != 4 or len(outputs) != 4:
        raise ValueError("single-qubit process tomography needs four input/output pairs")
    a = _chi_design(inputs)
    if np.linalg.cond(a) > 1e10:
        raise ValueError("input states do not span the operator space")
    b = np.concatenate([o.reshape(-1) for o in outputs])
    chi = np.linalg.solve(a, b).reshape(4, 4)
    return ChiMatrix((chi + chi.conj().T) / 2)


def _psd_part(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    return (v * np.clip(w, 0, None)) @ v.conj().T


def _tp_part(m: np.ndarray) -> np.ndarray:
    x = m.reshape(-1)
    x = x - _TP_PINV @ (_TP @ x - _VEC_I)
    y = x.reshape(4, 4)
    return (y + y.conj().T) / 2


def cptp_project(chi_raw, tol: float = 1e-10, max_iter: int = 10_000) -> ChiMatrix:
    """Frobenius projection onto CPTP maps by Dykstra's alternating projections."""
    x = np.asarray(getattr(chi_raw, "elements", chi_raw), dtype=complex)
    x = (x + x.conj().T) / 2
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    y = x
    for it in range(1, max_iter + 1):
        y = _psd_part(x + p)
        p = x + p - y
        x_new = _tp_part(y + q)
        q = y + q - x_new
        step = np.linalg.norm(x_new - x)
        x = x_new
        if step < tol:
            break
    else:
        out = ChiMatrix(y, cptp_projected=False, iterations=max_iter)
        raise ConvergenceError(
            "CPTP projection did not converge",
            {"tp_residual": out.tp_residual, "min_eigenvalue": out.min_eigenvalue, "step": float(step)},
        )
    # the PSD iterate is exactly CP; its TP residual is at the convergence scale
    out = ChiMatrix(_psd_part(x), cptp_projected=True, iterations=it)
    if out.tp_residual > 1e-6:
        raise ConvergenceError("CPTP projection left a trace-preservation residual", {"tp_residual": out.tp_residual})
    return out


def process_fidelity(chi) -> float:
    """Overlap with the identity process, i.e. the (I, I) element."""
    elements = getattr(chi, "elements", chi)
    return float(np.real(elements[0, 0]))


# --- bootstrap -------------------------------------------------------------------

@dataclass
class BootstrapReport:
    n_sets: int
    shots_per_setting: int | None
    fidelity_samples: np.ndarray
    error_bar: float
    mean: float
    chi_mean: np.ndarray = field(repr=False, default=None)


def reset_target_from_state(rho5, projector: np.ndarray, target: int, order: str = "cp_first") -> np.ndarray:
    """Success-project a reconstructed register state and trace out everything but the target."""
    if order == "cp_first":
        rho5 = cp_project(rho5)
    m = projector @ rho5 @ projector
    norm = float(np.real(np.trace(m)))
    if norm < 1e-12:
        raise ValueError("replica has no weight in the success subspace")
    rho1 = qcore.partial_trace(m / norm, [target])
    return rho1 if order == "cp_first" else cp_project(rho1)


def _replica(args) -> tuple[float, np.ndarray]:
    tables, settings, shots, seed, replica, projector, target, order = args
    outputs = []
    for j, table in enumerate(tables):
        rng = np.random.default_rng([seed, replica, j])
        recs = records_from_table(table, settings, shots, rng)
        rho5 = qst_linear_inversion(recs)
        outputs.append(reset_target_from_state(rho5, projector, target, order))
    chi = cptp_project(qpt_chi([qcore.BLOCH_STATES[s] for s in QPT_INPUTS], outputs))
    return process_fidelity(chi), chi.elements


def bootstrap_qpt(
    rho_f_per_input: Sequence[np.ndarray],
    projector: np.ndarray,
    target: int = 2,
    n_sets: int = 200,
    shots: int | None = 10_000,
    seed: int = 0,
    order: str = "cp_first",
    workers: int = 1,
) -> BootstrapReport:
    """Resample full register tomography and propagate it to the process fidelity.

    ``rho_f_per_input`` holds the final register states for the target inputs
    |0>, |1>, |+>, |i> in that order. Replica r draws its data from a generator
    seeded by (seed, r, input index), so results do not depend on ``workers``.
    """
    if len(rho_f_per_input) != 4:
        raise ValueError("need final states for the inputs |0>, |1>, |+>, |i>")
    if order not in ("cp_first", "subspace_first"):
        raise ValueError(f"unknown projection order {order!r}")
    n = qcore.num_qubits(np.asarray(rho_f_per_input[0]).shape[0])
    settings = pauli_settings(n)
    tables = [probability_table(r, settings) for r in rho_f_per_input]
    jobs = [(tables, settings, shots, seed, r, projector, target, order) for r in range(n_sets)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_replica, jobs))
    else:
        results = [_replica(j) for j in jobs]
    fids = np.array([f for f, _ in results])
    std = float(np.std(fids)) if n_sets > 1 else 0.0
    return BootstrapReport(
        n_sets=n_sets,
        shots_per_setting=shots,
        fidelity_samples=fids,
        error_bar=1.96 * std,
        mean=float(fids.mean()),
        chi_mean=np.mean([c for _, c in results], axis=0),
    )


# --- CSV exchange ---------------------------------------------------------------

def records_to_csv(records: Iterable[MeasurementRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["setting", "bitstring", "count"])
    for r in records:
        n = len(r.setting)
        for b, c in enumerate(r.counts):
            w.writerow([r.setting, format(b, f"0{n}b"), f"{c:.12g}" if r.shots is None else int(c)])
    return buf.getvalue()


def records_from_csv(text: str) -> list[MeasurementRecord]:
    rows = list(csv.DictReader(io.StringIO(text)))
    grouped: dict[str, dict[int, float]] = {}
    for row in rows:
        grouped.setdefault(row["setting"], {})[int(row["bitstring"], 2)] = float(row["count"])
    out = []
    for setting, hist in grouped.items():
        counts = np.zeros(2 ** len(setting))
        for b, c in hist.items():
            counts[b] = c
        if np.allclose(counts, np.round(counts)) and counts.sum() > 1 + 1e-9:
            counts = counts.astype(np.int64)
            out.append(MeasurementRecord(setting, int(counts.sum()), counts))
        else:
            out.append(MeasurementRecord(setting, None, counts))
    return out
