"""Coarse exponential fits used to seed the likelihood maximisations.

Mirrors the usual T1 / Ramsey analysis: population contrast between the
|0> and |1> preparations decays at gamma_1; the transverse contrast between
|+> and |-> decays at gamma_2 and rotates at the detuning.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import LindbladModel
from .quantum import I2, SIGMA_MINUS, SZ, tensor
from .synthdata import Dataset, marginal

DEFAULT_RATE = 0.01  # MHz, used when a decay cannot be resolved
MIN_RATE = 1e-4


@dataclass(frozen=True)
class QubitPrefit:
    gamma1: float
    gamma2: float
    detuning: float  # rad/us; H = (detuning / 2) sigma_z

    @property
    def gamma_phi(self) -> float:
        """Pure-dephasing rate gamma_2 - gamma_1 / 2, clipped at MIN_RATE."""
        return max(self.gamma2 - 0.5 * self.gamma1, MIN_RATE)


def _p0(data: Dataset, prep: str, basis: str):
    times, out = [], []
    for t in data.times_us:
        recs = [r for r in data.records if r.time_us == t and r.prep == (prep,) and r.basis == (basis,)]
        if not recs:
            continue
        n0 = sum(r.counts["0"] for r in recs)
        n = sum(r.shots for r in recs)
        times.append(t)
        out.append(n0 / n)
    return np.array(times), np.array(out)


def _paired(data, prep_a, prep_b, basis):
    ta, pa = _p0(data, prep_a, basis)
    tb, pb = _p0(data, prep_b, basis)
    common = np.intersect1d(ta, tb)
    ia = np.searchsorted(ta, common)
    ib = np.searchsorted(tb, common)
    return common, pa[ia] - pb[ib]


def _decay_rate(t: np.ndarray, amp: np.ndarray, noise: float = 0.0) -> float:
    """Log-linear fit over the leading run of points clearly above noise."""
    if len(t) < 2 or amp[0] <= 0:
        return DEFAULT_RATE
    above = amp > max(0.1 * amp[0], 3 * noise)
    n = len(above) if above.all() else int(np.argmin(above))
    if n < 2 or t[n - 1] <= t[0]:
        return DEFAULT_RATE
    slope = np.polyfit(t[:n], np.log(amp[:n]), 1)[0]
    return float(max(-slope, MIN_RATE))


def _noise(data: Dataset) -> float:
    """Standard deviation of a difference of two shot-noise frequencies."""
    shots = min(r.shots for r in data.records)
    return float(np.sqrt(0.5 / max(shots, 1)))


def qubit_prefit(data: Dataset) -> QubitPrefit:
    """T1, T2 and detuning estimates from a single-qubit dataset."""
    if data.n_qubits != 1:
        raise ValueError("qubit_prefit needs a single-qubit dataset")
    t1, c1 = _paired(data, "0", "1", "z")
    noise = _noise(data)
    gamma1 = _decay_rate(t1, np.abs(c1), noise) if len(t1) else DEFAULT_RATE
    tx, cx = _paired(data, "+", "-", "x")
    ty, cy = _paired(data, "+", "-", "y")
    common = np.intersect1d(tx, ty)
    if len(common) < 2:
        return QubitPrefit(gamma1, gamma1, 0.0)
    z = cx[np.searchsorted(tx, common)] + 1j * cy[np.searchsorted(ty, common)]
    gamma2 = _decay_rate(common, np.abs(z), noise)
    # only trust phases while the contrast is visible
    keep = np.abs(z) > max(0.1 * abs(z[0]), 3 * noise)
    keep = np.cumprod(keep).astype(bool)
    detuning = 0.0
    if keep.sum() >= 2:
        phase = np.unwrap(np.angle(z[keep]))
        detuning = float(np.polyfit(common[keep], phase, 1)[0])
    return QubitPrefit(gamma1, gamma2, detuning)


def _restricted_physical_jumps(n_qubits: int):
    """Unnormalised damping and dephasing operators in restricted-fit order."""
    if n_qubits == 1:
        return [SZ / np.sqrt(2), SIGMA_MINUS]
    return [
        tensor(I2, SIGMA_MINUS),
        tensor(SIGMA_MINUS, I2),
        tensor(I2, SZ) / np.sqrt(2),
        tensor(SZ, I2) / np.sqrt(2),
    ]


def prefit_model(data: Dataset) -> tuple[LindbladModel, np.ndarray]:
    """Damping-plus-dephasing model from coarse fits.

    Returns the model and its rates in the normalised-jump convention of the
    restricted fit (order as in ``lindblad.restricted_jumps``).
    """
    if data.n_qubits == 1:
        q = qubit_prefit(data)
        h = 0.5 * q.detuning * SZ
        phys = np.array([q.gamma_phi, q.gamma1])
    elif data.n_qubits == 2:
        fits = {}
        for keep, name in ((0, "A"), (1, "B")):
            for nb in ("0", "1"):
                try:
                    fits[name, nb] = qubit_prefit(marginal(data, keep, other_prep=nb))
                except ValueError:
                    fits[name, nb] = None
        qa, qb = fits["A", "0"], fits["B", "0"]
        if qa is None or qb is None:
            raise ValueError("dataset lacks the records needed for a prefit")
        sa0, sb0 = qa.detuning, qb.detuning
        sa1 = fits["A", "1"].detuning if fits["A", "1"] is not None else sa0
        e = np.array([0.0, -sb0, -sa0, -sb0 - sa1])
        h = np.diag(e - e.mean()).astype(complex)
        phys = np.array([qb.gamma1, qa.gamma1, qb.gamma_phi, qa.gamma_phi])
    else:
        raise ValueError("prefit supports one or two qubits")
    ops = _restricted_physical_jumps(data.n_qubits)
    model = LindbladModel.from_jumps(h, phys, ops)
    norms = np.array([np.einsum("ij,ij->", p, p.conj()).real for p in ops])
    return model, phys * norms
