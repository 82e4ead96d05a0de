"""Dense linear algebra and state/measurement primitives.

Every matrix is a plain ``numpy.ndarray`` of complex dtype.  Multi-qubit
operators use the ordering ``kron(qubit_A, qubit_B, ...)``, so the bitstring
``"01"`` labels the basis vector with qubit A in 0 and qubit B in 1.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
PAULIS = {"I": I2, "X": SX, "Y": SY, "Z": SZ}

PREP_SYMBOLS = ("0", "1", "+", "-", "+i", "-i")
BASIS_SYMBOLS = ("z", "x", "y")


class DimensionError(ValueError):
    """Operands have incompatible or unsupported dimensions."""


def _rot(axis: np.ndarray, angle: float) -> np.ndarray:
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * axis


# Perfect pulses.  Preparation rotations take |0> to the named cardinal state;
# basis rotations take the named eigenbasis onto the z basis.
PREP_ROTATIONS = {
    "0": I2,
    "1": _rot(SX, np.pi),
    "+": _rot(SY, np.pi / 2),
    "-": _rot(SY, -np.pi / 2),
    "+i": _rot(SX, -np.pi / 2),
    "-i": _rot(SX, np.pi / 2),
}
BASIS_ROTATIONS = {
    "z": I2,
    "x": _rot(SY, -np.pi / 2),
    "y": _rot(SX, np.pi / 2),
}


def n_qubits_of(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if dim < 2 or 2**n != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return n


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of any number of matrices."""
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(a - dagger(a)), initial=0.0) <= tol)


def min_eigenvalue(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (a + dagger(a))).min())


def is_psd(a: np.ndarray, tol: float = PSD_TOL) -> bool:
    return is_hermitian(a, max(tol, HERMITIAN_TOL)) and min_eigenvalue(a) >= -tol


def is_density_matrix(rho: np.ndarray, tol: float = PSD_TOL) -> bool:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    return is_psd(rho, tol) and abs(np.trace(rho) - 1) <= max(TRACE_TOL, tol)


def is_povm(elements, tol: float = PSD_TOL) -> bool:
    elements = np.asarray(elements)
    dim = elements.shape[-1]
    total = elements.sum(axis=0)
    return all(is_psd(m, tol) for m in elements) and bool(
        np.max(np.abs(total - np.eye(dim))) <= max(TRACE_TOL, tol)
    )


def check_density_matrix(rho: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if not is_density_matrix(rho, tol):
        raise ValueError("matrix is not a valid density matrix")
    return rho


def check_povm(elements, tol: float = PSD_TOL) -> np.ndarray:
    elements = np.asarray(elements, dtype=complex)
    if elements.ndim != 3 or elements.shape[1] != elements.shape[2]:
        raise DimensionError("POVM must be a stack of square matrices")
    if not is_povm(elements, tol):
        raise ValueError("elements do not form a POVM")
    return elements


def abs_matrix(m: np.ndarray) -> np.ndarray:
    """Matrix absolute value sqrt(M^dagger M) through a Hermitian eigensolver."""
    w, v = np.linalg.eigh(dagger(m) @ m)
    return (v * np.sqrt(np.clip(w, 0, None))) @ dagger(v)


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (a + dagger(a)))
    return (v * np.sqrt(np.clip(w, 0, None))) @ dagger(v)


def trace_norm(m: np.ndarray) -> float:
    """Schatten-1 norm.  Hermitian input takes the fast eigenvalue path."""
    m = np.asarray(m)
    if is_hermitian(m, 1e-12):
        return float(np.abs(np.linalg.eigvalsh(0.5 * (m + dagger(m)))).sum(axis=-1))
    return float(np.trace(abs_matrix(m)).real)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """D(a, b) = Tr|a - b| / 2."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return 0.5 * trace_norm(a - b)


def trace_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched trace distance for stacks of Hermitian matrices."""
    diff = np.asarray(a) - np.asarray(b)
    diff = 0.5 * (diff + dagger(diff))
    return 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum(axis=-1)


def outcome_prob(rho: np.ndarray, element: np.ndarray) -> float:
    """Real part of Tr[rho M]."""
    rho = np.asarray(rho)
    element = np.asarray(element)
    if rho.shape != element.shape:
        raise DimensionError(f"shape mismatch {rho.shape} vs {element.shape}")
    p = np.einsum("ij,ji->", rho, element)
    if abs(p.imag) > 1e-10:
        raise ValueError(f"Tr[rho M] has imaginary part {p.imag:.3g}; operands not Hermitian")
    return float(p.real)


def outcome_probs(rho: np.ndarray, povm: np.ndarray) -> np.ndarray:
    return np.einsum("ij,kji->k", rho, povm).real


# Cholesky parameterisation: dim^2 reals fill the lower triangle of A row by
# row; the diagonal entries take one real each, off-diagonals take (re, im).


def cholesky_size(dim: int) -> int:
    return dim * dim


@lru_cache(maxsize=None)
def _tril_indices(dim: int):
    rows, cols = np.tril_indices(dim, -1)
    return rows, cols


def cholesky_factor(reals: np.ndarray, dim: int) -> np.ndarray:
    reals = np.asarray(reals, dtype=float)
    if reals.shape != (dim * dim,):
        raise DimensionError(f"expected {dim * dim} reals, got {reals.shape}")
    a = np.zeros((dim, dim), dtype=complex)
    a[np.diag_indices(dim)] = reals[:dim]
    rows, cols = _tril_indices(dim)
    m = len(rows)
    a[rows, cols] = reals[dim : dim + m] + 1j * reals[dim + m :]
    return a


def cholesky_decode(reals: np.ndarray, dim: int, normalize: bool = True) -> np.ndarray:
    """Return A A^dagger, optionally divided by its trace."""
    a = cholesky_factor(reals, dim)
    out = a @ dagger(a)
    if normalize:
        tr = np.trace(out).real
        if tr <= 0:
            raise ValueError("Cholesky factor has zero trace; cannot normalise")
        out = out / tr
    return out


def cholesky_encode(mat: np.ndarray, jitter: float = 1e-12) -> np.ndarray:
    """Inverse of :func:`cholesky_decode` for a PSD matrix.

    Singular matrices are factored after adding ``jitter`` times the identity,
    so the round trip is exact only up to that shift.
    """
    mat = np.asarray(mat, dtype=complex)
    dim = mat.shape[0]
    herm = 0.5 * (mat + dagger(mat))
    try:
        a = np.linalg.cholesky(herm)
    except np.linalg.LinAlgError:
        scale = max(np.trace(herm).real, 1.0)
        a = np.linalg.cholesky(herm + jitter * scale * np.eye(dim))
    # numpy returns a real positive diagonal already
    rows, cols = _tril_indices(dim)
    off = a[rows, cols]
    return np.concatenate([np.diag(a).real, off.real, off.imag])


@lru_cache(maxsize=None)
def _pauli_labels(dim: int) -> tuple:
    n = n_qubits_of(dim)
    labels = ["".join(p) for p in itertools.product("IXYZ", repeat=n)]
    return tuple(labels[1:])


def hermitian_basis_labels(dim: int) -> tuple:
    """Pauli-string labels of :func:`hermitian_basis`, e.g. ``("IX", ...)``."""
    return _pauli_labels(dim)


@lru_cache(maxsize=None)
def _hermitian_basis(dim: int) -> np.ndarray:
    return np.array([tensor(*(PAULIS[c] for c in label)) for label in _pauli_labels(dim)])


def hermitian_basis(dim: int) -> np.ndarray:
    """Traceless Pauli tensor products with Tr[s_i s_j] = dim * delta_ij.

    Ordered lexicographically over ``IXYZ`` strings with the all-identity
    string removed.  Returns a read-only array of shape (dim^2 - 1, dim, dim).
    """
    if dim not in (2, 4, 8, 16):
        raise DimensionError(f"unsupported dimension {dim}")
    basis = _hermitian_basis(dim)
    basis.setflags(write=False)
    return basis


def partial_trace(rho: np.ndarray, keep: int) -> np.ndarray:
    """Reduce a two-qubit operator to qubit ``keep`` (0 = A, 1 = B)."""
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise DimensionError("partial_trace supports two-qubit (4x4) operators only")
    r = rho.reshape(2, 2, 2, 2)
    if keep == 0:
        return np.einsum("ajbj->ab", r)
    if keep == 1:
        return np.einsum("iaib->ab", r)
    raise ValueError("keep must be 0 or 1")


def purity(rho: np.ndarray) -> float:
    return float(np.einsum("ij,ji->", rho, rho).real)


def ket(bits: str) -> np.ndarray:
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1
    return v


def projector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def thermal_state(a: float) -> np.ndarray:
    return np.diag([a, 1 - a]).astype(complex)


def maximally_mixed(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex) / dim


def projective_povm(dim: int) -> np.ndarray:
    return np.array([projector(np.eye(dim)[k]) for k in range(dim)])


def bitstrings(n_qubits: int) -> list[str]:
    return ["".join(b) for b in itertools.product("01", repeat=n_qubits)]


def prep_unitary(symbols) -> np.ndarray:
    """Product of per-qubit preparation rotations for a tuple of symbols."""
    return tensor(*(PREP_ROTATIONS[s] for s in symbols))


def basis_unitary(symbols) -> np.ndarray:
    return tensor(*(BASIS_ROTATIONS[s] for s in symbols))


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ dagger(g)
    return rho / np.trace(rho).real
