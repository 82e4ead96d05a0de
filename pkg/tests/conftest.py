import numpy as np
import pytest

from lindtomo import dynamics as dy
from lindtomo import quantum as q
from lindtomo import synthdata as sd
from lindtomo.spam import SpamEstimate

QUBIT_H = 0.125 * q.SZ
QUBIT_RATES = [0.09, 0.06]
QUBIT_JUMPS = [q.SZ / np.sqrt(2), q.SIGMA_MINUS]
READOUT_M0 = np.diag([1.0, 0.04]).astype(complex)


def qubit_truth() -> dy.LindbladModel:
    """Dephasing at 0.09 MHz plus damping at 0.06 MHz with a small detuning."""
    return dy.LindbladModel.from_jumps(QUBIT_H, QUBIT_RATES, QUBIT_JUMPS)


def noisy_spam(a: float = 0.88) -> sd.SpamTruth:
    """Thermal preparation and a 4% 1 -> 0 readout error."""
    return sd.SpamTruth(q.thermal_state(a), np.array([READOUT_M0, np.eye(2) - READOUT_M0]))


def known_spam(truth: sd.SpamTruth) -> SpamEstimate:
    return SpamEstimate(truth.rho0, truth.povm, 0.0)


def random_lindblad(dim: int, rng: np.random.Generator, max_rate: float = 1.0) -> dy.LindbladModel:
    n = dim * dim - 1
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    lm = a @ a.conj().T
    lm *= max_rate / (dim * np.linalg.eigvalsh(lm).max())
    h = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return dy.LindbladModel(0.5 * (h + h.conj().T), lm)


def random_channel(dim: int, rng: np.random.Generator, rank: int | None = None) -> dy.KrausSet:
    rank = rank or dim * dim
    a = rng.normal(size=(rank * dim, dim)) + 1j * rng.normal(size=(rank * dim, dim))
    qmat, _ = np.linalg.qr(a)
    return dy.KrausSet(qmat.reshape(rank, dim, dim))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def qubit_data():
    """Single-qubit dataset: noisy SPAM, 1000 shots, 11 times over [0, 40] us."""
    return sd.generate(qubit_truth(), noisy_spam(), sd.time_grid("lin:0:40:11"), 1000, 7)


def physical_qubit_povm(m0: np.ndarray) -> np.ndarray:
    """Two-outcome POVM from a rounded M_0: clip its spectrum into [0, 1]."""
    m0 = 0.5 * (m0 + m0.conj().T)
    w, v = np.linalg.eigh(m0)
    m0 = (v * np.clip(w, 0, 1)) @ v.conj().T
    return np.array([m0, np.eye(2) - m0])


def swap_qubits(data: sd.Dataset) -> sd.Dataset:
    """Relabel A <-> B in every prep, basis and outcome bitstring."""
    recs = [sd.SequenceRecord(r.prep[::-1], r.basis[::-1], r.time_us, {k[::-1]: v for k, v in r.counts.items()})
            for r in data.records]
    return sd.Dataset(2, recs, data.shots_nominal)


def t0_probabilities(rho0: np.ndarray, povm: np.ndarray, n_qubits: int) -> np.ndarray:
    """p[s, b, o] for every prep and basis at zero duration."""
    states = sd.prep_states(rho0, n_qubits)
    eff = sd.effective_povms(povm, n_qubits)
    return np.einsum("sij,boji->sbo", states, eff).real
