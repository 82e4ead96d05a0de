"""Rounded estimates from a two-transmon idling-channel characterization.

These are two-decimal published numbers, kept as regression fixtures and as
inputs for the ``analyze`` command.  Matrices are in the ``kron(A, B)``
ordering; Hamiltonians in rad/us; rates in MHz with jumps normalised to
Tr[L L^dag] = 1.  Rounding leaves them slightly unphysical, so the helpers
below renormalise before use.
"""
from __future__ import annotations

import numpy as np

from .dynamics import LindbladModel
from .quantum import dagger

# single-qubit SPAM
POVM0_A = np.array([[1.00, -0.01 + 0.01j], [-0.01 - 0.01j, 0.04]])
POVM0_B = np.array([[1.00, 0.00], [0.00, 0.04]])
RHO0_A = np.array([[0.86, 0.01 + 0.01j], [0.01 - 0.01j, 0.14]])
RHO0_B = np.array([[0.88, 0.01 - 0.02j], [0.01 + 0.02j, 0.12]])

# two-qubit SPAM
POVM_AB = np.array([
    [[1.00, 0, 0, 0],
     [0, 0.04, 0.02 - 0.03j, 0],
     [0, 0.02 + 0.03j, 0.04, 0],
     [0, 0, 0, 0]],
    [[0, 0, 0, 0],
     [0, 0.95, 0, 0.01 + 0.02j],
     [0, 0, 0, 0],
     [0, 0.01 - 0.02j, 0, 0.04]],
    [[0, 0, 0, 0],
     [0, 0.01, -0.02 + 0.02j, 0],
     [0, -0.02 - 0.02j, 0.96, 0.01],
     [0, 0.01, 0.01, 0.02]],
    [[0, 0, 0, 0],
     [0, 0.01, 0.01j, -0.02j],
     [0, -0.01j, 0.01, -0.01],
     [0, 0.02j, -0.01, 0.94]],
], dtype=complex)
RHO0_AB = np.array([
    [0.76, 0.01 - 0.01j, 0.01 + 0.01j, 0],
    [0.01 + 0.01j, 0.11, 0, 0],
    [0.01 - 0.01j, 0, 0.12, 0],
    [0, 0, 0, 0.02],
], dtype=complex)

# free two-qubit fit
FREE_HAMILTONIAN = np.array([
    [0.00, 0.01j, 0.00, 0.00],
    [-0.01j, -1.03, 0.02j, -0.04 - 0.02j],
    [0.00, -0.02j, -0.25, 0.00],
    [0.00, -0.04 + 0.02j, 0.00, 1.33],
], dtype=complex)
FREE_RATES = np.array([0.10, 0.05, 0.07, 0.06])
FREE_JUMPS = np.array([
    [[0.48, -0.12 + 0.11j, 0, 0],
     [-0.08 - 0.05j, -0.48, 0, 0],
     [0, 0, 0.48, -0.12 + 0.11j],
     [0, 0, -0.08 - 0.05j, -0.48]],
    [[0.10 + 0.05j, 0.63 + 0.02j, -0.01, 0],
     [0.28 - 0.02j, -0.10 - 0.06j, 0, -0.01],
     [0, 0, 0.10 + 0.06j, 0.63 + 0.02j],
     [0, 0, 0.28 - 0.02j, -0.10 - 0.06j]],
    [[0.50, 0, -0.02j, 0],
     [0, 0.50, 0, -0.02j],
     [0, 0, -0.50, 0],
     [0, 0, 0, -0.50]],
    [[-0.01, -0.01j, -0.66j, 0],
     [0, -0.01, 0, -0.66j],
     [0.26j, 0, 0.01, -0.01j],
     [0, -0.01 + 0.26j, 0, 0.01]],
], dtype=complex)

# restricted two-qubit fit; jumps are fixed dephasing and damping shapes
RESTRICTED_HAMILTONIAN = np.array([
    [0.02, -0.01 + 0.01j, 0.01j, 0.02 - 0.10j],
    [-0.01 - 0.01j, -1.00, -0.01 + 0.09j, -0.01 - 0.10j],
    [-0.01j, -0.01 - 0.09j, -0.24, 0.02 + 0.07j],
    [0.02 + 0.10j, -0.01 + 0.10j, 0.02 - 0.07j, 1.33],
], dtype=complex)
# order: damping on B, damping on A, dephasing on B, dephasing on A
RESTRICTED_RATES = np.array([0.03, 0.04, 0.16, 0.11])

# device parameters, MHz
DEVICE = {
    "g_mhz": 12.0,
    "eta_a_mhz": -175.0,
    "eta_b_mhz": -190.0,
    "freq_a_mhz": 4744.0,
    "freq_b_mhz": 4222.0,
}

# single-qubit jumps for qubit A and their rates
SINGLE_QUBIT_JUMPS = np.array([
    [[0.70 + 0.05j, 0.01 - 0.14j], [0.01 + 0.07j, -0.70 - 0.05j]],
    [[-0.11 - 0.01j, 0.22 - 0.89j], [0.22 + 0.30j, 0.11 + 0.01j]],
])
SINGLE_QUBIT_RATES = np.array([0.09, 0.06])


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + dagger(a))


def unit_trace_state(rho: np.ndarray) -> np.ndarray:
    """Hermitian part, PSD-clipped and renormalised."""
    w, v = np.linalg.eigh(hermitize(np.asarray(rho, dtype=complex)))
    w = np.clip(w, 0, None)
    out = (v * w) @ dagger(v)
    return out / np.trace(out).real


def normalized_jumps(jumps) -> np.ndarray:
    jumps = np.asarray(jumps, dtype=complex)
    norms = np.sqrt(np.einsum("kij,kij->k", jumps, jumps.conj()).real)
    return jumps / norms[:, None, None]


def free_model() -> LindbladModel:
    return LindbladModel.from_jumps(hermitize(FREE_HAMILTONIAN), FREE_RATES, normalized_jumps(FREE_JUMPS))


def restricted_model() -> LindbladModel:
    from .lindblad import restricted_jumps

    return LindbladModel.from_jumps(hermitize(RESTRICTED_HAMILTONIAN), RESTRICTED_RATES, restricted_jumps(2))


def rho0_ab() -> np.ndarray:
    return unit_trace_state(RHO0_AB)


def povm_ab() -> np.ndarray:
    """Joint POVM with each element Hermitised; completeness is as printed."""
    return np.array([hermitize(m) for m in POVM_AB])


def povm_a() -> np.ndarray:
    m0 = hermitize(POVM0_A.astype(complex))
    return np.array([m0, np.eye(2) - m0])


def povm_b() -> np.ndarray:
    m0 = hermitize(POVM0_B.astype(complex))
    return np.array([m0, np.eye(2) - m0])
