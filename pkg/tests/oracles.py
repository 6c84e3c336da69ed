"""Reference implementations used only by the tests.

Nothing here imports the package: every helper is a slow, direct
transcription of the defining formula so it can serve as an independent check.
"""

import itertools
import math

import numpy as np


def kron_loops(a, b):
    """Kronecker product by explicit index loops."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    ra, ca = a.shape
    rb, cb = b.shape
    out = np.zeros((ra * rb, ca * cb), dtype=complex)
    for i in range(ra):
        for j in range(ca):
            for k in range(rb):
                for l in range(cb):
                    out[i * rb + k, j * cb + l] = a[i, j] * b[k, l]
    return out


def bits_of(index, n):
    """Bits of a basis index, qubit 0 first (most significant)."""
    return [(index >> (n - 1 - q)) & 1 for q in range(n)]


def index_of(bits):
    out = 0
    for b in bits:
        out = 2 * out + b
    return out


def partial_trace_loops(rho, keep, n):
    """Reduced matrix on ``keep`` by summing matching traced-out bits."""
    traced = [q for q in range(n) if q not in keep]
    dk = 2 ** len(keep)
    out = np.zeros((dk, dk), dtype=complex)
    for i in range(2**n):
        bi = bits_of(i, n)
        for j in range(2**n):
            bj = bits_of(j, n)
            if all(bi[q] == bj[q] for q in traced):
                out[index_of([bi[q] for q in keep]), index_of([bj[q] for q in keep])] += rho[i, j]
    return out


def embed(op, qubits, n):
    """Dense 2^n matrix of ``op`` on ``qubits`` (first factor on qubits[0]), by index loops."""
    op = np.asarray(op, dtype=complex)
    k = len(qubits)
    out = np.zeros((2**n, 2**n), dtype=complex)
    for col in range(2**n):
        bc = bits_of(col, n)
        sub_in = index_of([bc[q] for q in qubits])
        for sub_out in range(2**k):
            amp = op[sub_out, sub_in]
            if amp == 0:
                continue
            br = list(bc)
            for q, b in zip(qubits, bits_of(sub_out, k)):
                br[q] = b
            out[index_of(br), col] += amp
    return out


def fidelity_2x2(rho, sigma):
    """Closed form for qubits: Tr(rho sigma) + 2 sqrt(det rho det sigma)."""
    t = np.real(np.trace(rho @ sigma))
    d = np.real(np.linalg.det(rho)) * np.real(np.linalg.det(sigma))
    return float(t + 2 * math.sqrt(max(d, 0.0)))


def rz(t):
    return np.array([[np.exp(-0.5j * t), 0], [0, np.exp(0.5j * t)]])


def ry(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def euler_cz_unitary(angles):
    """Target-left 4x4 matrix: per-qubit RZ RY RZ, CZ, per-qubit RZ RY RZ."""
    a = list(angles)

    def e(t):
        return rz(t[2]) @ ry(t[1]) @ rz(t[0])

    cz = np.diag([1, 1, 1, -1]).astype(complex)
    return kron_loops(e(a[6:9]), e(a[9:12])) @ cz @ kron_loops(e(a[0:3]), e(a[3:6]))


def random_angles(seed):
    """Same draw as the library's seeded spec: 12 uniform angles on [0, 2pi)."""
    return np.random.default_rng(seed).uniform(0, 2 * np.pi, 12)


def success_vectors():
    """The six listed success vectors over four probes."""

    def ket(*words):
        v = np.zeros(16, dtype=complex)
        for w in words:
            v[int(w, 2)] += 1
        return v / np.linalg.norm(v)

    return [
        ket("0000"),
        ket("1111"),
        ket("0011", "1100"),
        ket("1000", "0100", "0010", "0001"),
        ket("0111", "1011", "1101", "1110"),
        ket("1010", "0101", "1001", "0110"),
    ]


def w4_dense(psi_target, r, u, order=(0, 1, 3, 4), rank=6):
    """Ideal W4 run on a 5-qubit register with all-to-all coupling.

    Probes 0,1 and 3,4 start as singlets, the target (qubit 2) in
    ``psi_target``. Each round applies ``r`` to the target, then ``u`` to
    (target, probe). Returns (p_success, reset target density matrix).
    """
    singlet = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)
    psi = np.zeros(32, dtype=complex)
    for i in range(32):
        b = bits_of(i, 5)
        psi[i] = singlet[2 * b[0] + b[1]] * psi_target[b[2]] * singlet[2 * b[3] + b[4]]
    for p in order:
        psi = embed(r, [2], 5) @ psi
        psi = embed(u, [2, p], 5) @ psi
    p16 = sum(np.outer(v, v.conj()) for v in success_vectors()[:rank])
    proj = embed(p16, [0, 1, 3, 4], 5)
    phi = proj @ psi
    p = float(np.real(np.vdot(phi, phi)))
    if p < 1e-12:
        return p, None
    rho = np.outer(phi, phi.conj()) / p
    return p, partial_trace_loops(rho, [2], 5)


def depolarizing_chi(p):
    return np.diag([1 - 3 * p / 4, p / 4, p / 4, p / 4]).astype(complex)


def nearest_state_grid(m, steps=81):
    """Closest Bloch-ball state to a Hermitian 2x2 ``m`` (Frobenius), by grid search."""
    pauli = [np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.array([[1, 0], [0, -1]])]
    best, best_d = None, np.inf
    g = np.linspace(-1, 1, steps)
    for x, y, z in itertools.product(g, g, g):
        if x * x + y * y + z * z > 1 + 1e-12:
            continue
        s = 0.5 * (np.eye(2) + x * pauli[0] + y * pauli[1] + z * pauli[2])
        d = np.linalg.norm(s - m)
        if d < best_d:
            best, best_d = s, d
    return best, best_d


def dephasing_distance(t_phi_us, t1_us, idle_us=1.0):
    """Trace distance of |-> from itself after linear-rate damping and dephasing."""
    g = min(1.0, idle_us / t1_us) if math.isfinite(t1_us) else 0.0
    gp = min(1.0, idle_us / t_phi_us) if math.isfinite(t_phi_us) else 0.0
    c = math.sqrt((1 - g) * (1 - gp))  # surviving coherence
    return 0.5 * math.hypot(1 - c, g)


def bisect(f, lo, hi, tol=1e-12):
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)
