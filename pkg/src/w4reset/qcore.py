"""Dense linear algebra primitives for small multi-qubit Hilbert spaces.

States and operators are plain complex numpy arrays: a state vector is 1-D,
a density matrix or operator is 2-D and square. Qubit 0 is the most
significant bit of the computational-basis index everywhere in the package.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

HERM_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = -1e-9
REJECT_TOL = -1e-6
MAX_DIM = 2**16

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}

KET_0 = np.array([1, 0], dtype=complex)
KET_1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
KET_MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)
KET_I = np.array([1, 1j], dtype=complex) / np.sqrt(2)
KET_MINUS_I = np.array([1, -1j], dtype=complex) / np.sqrt(2)
SINGLET = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)

BLOCH_STATES = {
    "0": KET_0,
    "1": KET_1,
    "+": KET_PLUS,
    "-": KET_MINUS,
    "i": KET_I,
    "-i": KET_MINUS_I,
}


class NotPhysicalError(ValueError):
    """Raised when a matrix required to be PSD has a significantly negative eigenvalue."""


def num_qubits(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def state_vector(amplitudes, normalize: bool = True) -> np.ndarray:
    """Validate (and by default normalize) a state vector on 2^n levels."""
    psi = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if psi.size < 2:
        raise ValueError("state vector needs at least two amplitudes")
    num_qubits(psi.size)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("zero vector is not a state")
    if normalize:
        psi = psi / norm
    elif abs(norm - 1) > 1e-12:
        raise ValueError(f"state vector norm {norm} differs from 1")
    return psi


def density_matrix(m, physical: bool = True) -> np.ndarray:
    """Validate a density matrix: Hermitian, unit trace, PSD if ``physical``."""
    rho = np.asarray(m, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {rho.shape}")
    num_qubits(rho.shape[0])
    if np.max(np.abs(rho - rho.conj().T)) > HERM_TOL:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > TRACE_TOL:
        raise ValueError(f"density matrix trace {np.trace(rho).real} differs from 1")
    if physical and np.linalg.eigvalsh(rho).min() < PSD_TOL:
        raise NotPhysicalError("density matrix has negative eigenvalues")
    return rho


def ket_to_dm(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def is_unitary(u, tol: float = 1e-10) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and np.allclose(
        u.conj().T @ u, np.eye(u.shape[0]), atol=tol, rtol=0
    )


def tensor(*factors) -> np.ndarray:
    """Kronecker product, left operand on the most significant qubits.

    All operands must be the same kind (all vectors or all matrices).
    """
    if not factors:
        raise ValueError("tensor needs at least one operand")
    arrays = [np.asarray(f, dtype=complex) for f in factors]
    if len({a.ndim for a in arrays}) != 1:
        raise ValueError("cannot tensor a vector with a matrix")
    dim = int(np.prod([a.shape[0] for a in arrays]))
    if dim > MAX_DIM:
        raise ValueError(f"tensor product dimension {dim} exceeds {MAX_DIM}")
    out = arrays[0]
    for a in arrays[1:]:
        out = np.kron(out, a)
    return out


def partial_trace(rho, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on the qubits in ``keep`` (in the given order)."""
    rho = np.asarray(rho, dtype=complex)
    n = num_qubits(rho.shape[0])
    keep = list(keep)
    if not keep:
        raise ValueError("keep list must not be empty")
    if len(set(keep)) != len(keep) or any(not 0 <= q < n for q in keep):
        raise ValueError(f"invalid qubit indices {keep} for {n} qubits")
    traced = [q for q in range(n) if q not in keep]
    t = rho.reshape([2] * (2 * n))
    # bring kept row axes, traced row axes, kept col axes, traced col axes together
    perm = keep + traced + [n + q for q in keep] + [n + q for q in traced]
    t = t.transpose(perm)
    dk, dt = 2 ** len(keep), 2 ** len(traced)
    t = t.reshape(dk, dt, dk, dt)
    return np.einsum("ajbj->ab", t)


def eig_hermitian(m, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of a Hermitian matrix."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    if np.max(np.abs(m - m.conj().T), initial=0.0) > tol:
        raise ValueError("matrix is not Hermitian")
    # LAPACK zheevd is deterministic for a fixed input
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    return w, v


def matrix_sqrt_psd(m) -> np.ndarray:
    w, v = eig_hermitian(m)
    if w.min(initial=0.0) < REJECT_TOL:
        raise NotPhysicalError(f"eigenvalue {w.min()} below {REJECT_TOL}")
    w = np.sqrt(np.clip(w, 0, None))
    return (v * w) @ v.conj().T


def trace_distance(a, b) -> float:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    w, _ = eig_hermitian(a - b)
    return float(min(max(0.5 * np.abs(w).sum(), 0.0), 1.0))


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch {rho.shape} vs {sigma.shape}")
    s = matrix_sqrt_psd(rho)
    if np.linalg.eigvalsh((sigma + sigma.conj().T) / 2).min() < REJECT_TOL:
        raise NotPhysicalError("second argument is not PSD")
    inner = s @ sigma @ s
    w = np.linalg.eigvalsh((inner + inner.conj().T) / 2)
    f = np.sqrt(np.clip(w, 0, None)).sum() ** 2
    return float(min(max(f, 0.0), 1.0))


def purity(rho) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


def make_physical(rho) -> np.ndarray:
    """Hermitize, clamp tiny negative eigenvalues to zero and renormalize the trace."""
    rho = np.asarray(rho, dtype=complex)
    rho = (rho + rho.conj().T) / 2
    w, v = np.linalg.eigh(rho)
    if w.min() < 0:
        w = np.clip(w, 0, None)
        rho = (v * w) @ v.conj().T
    return rho / np.trace(rho).real


def apply_operator(op, state, qubits: Sequence[int], n: int | None = None) -> np.ndarray:
    """Apply a k-qubit operator to ``qubits`` of a vector, or conjugate a density matrix.

    ``op`` acts with its first tensor factor on ``qubits[0]``.
    """
    state = np.asarray(state, dtype=complex)
    op = np.asarray(op, dtype=complex)
    if n is None:
        n = num_qubits(state.shape[0])
    qubits = list(qubits)
    k = len(qubits)
    if any(not 0 <= q < n for q in qubits) or len(set(qubits)) != k:
        raise IndexError(f"qubits {qubits} out of range for {n} qubits")
    opt = op.reshape([2] * (2 * k))
    if state.ndim == 1:
        t = state.reshape([2] * n)
        t = np.tensordot(opt, t, axes=(list(range(k, 2 * k)), qubits))
        t = np.moveaxis(t, list(range(k)), qubits)
        return t.reshape(-1)
    t = state.reshape([2] * (2 * n))
    t = np.tensordot(opt, t, axes=(list(range(k, 2 * k)), qubits))
    t = np.moveaxis(t, list(range(k)), qubits)
    cols = [n + q for q in qubits]
    t = np.tensordot(t, opt.conj(), axes=(cols, list(range(k, 2 * k))))
    t = np.moveaxis(t, list(range(2 * n - k, 2 * n)), cols)
    return t.reshape(2**n, 2**n)


def lift(op, qubits: Sequence[int], n: int) -> np.ndarray:
    """Full 2^n x 2^n matrix of ``op`` acting on ``qubits``."""
    eye = np.eye(2**n, dtype=complex)
    # columns of the lifted matrix are images of basis vectors
    cols = [apply_operator(op, eye[:, j], qubits, n) for j in range(2**n)]
    return np.stack(cols, axis=1)


def align_global_phase(a, b) -> np.ndarray:
    """Return ``a`` multiplied by the phase that best aligns it with ``b``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    overlap = np.vdot(a.reshape(-1), b.reshape(-1))
    if abs(overlap) < 1e-15:
        return a
    return a * overlap / abs(overlap)


def bloch_vector(rho) -> np.ndarray:
    rho = np.asarray(rho)
    return np.array([np.real(np.trace(rho @ p)) for p in (X, Y, Z)])


def random_density_matrix(n_qubits: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random mixed state from a Ginibre matrix (test and benchmark helper)."""
    d = 2**n_qubits
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_state_vector(n_qubits: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=2**n_qubits) + 1j * rng.normal(size=2**n_qubits)
    return psi / np.linalg.norm(psi)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph
