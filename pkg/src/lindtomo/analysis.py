"""Physics cross-checks on fitted models: ZZ shifts and free-vs-restricted reports."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics
from .dynamics import DegenerateSteadyStateError
from .lindblad import LindbladEstimate, deviation_series
from .quantum import trace_distance
from .spam import SpamEstimate

RESONANCE_MHZ = 1e-3


@dataclass(frozen=True)
class DeviceParams:
    """Transmon pair parameters, all in MHz (anharmonicities negative)."""
    g_mhz: float
    eta_a_mhz: float
    eta_b_mhz: float
    delta_mhz: float

    def __post_init__(self):
        if not self.g_mhz >= 0:
            raise ValueError("coupling g must be non-negative")

    @classmethod
    def from_frequencies(cls, g_mhz, eta_a_mhz, eta_b_mhz, freq_a_mhz, freq_b_mhz) -> "DeviceParams":
        return cls(g_mhz, eta_a_mhz, eta_b_mhz, freq_a_mhz - freq_b_mhz)

    def swapped(self) -> "DeviceParams":
        return DeviceParams(self.g_mhz, self.eta_b_mhz, self.eta_a_mhz, -self.delta_mhz)


def zz_from_hamiltonian(h: np.ndarray) -> float:
    """omega_zz / 2 pi in MHz from a two-qubit H in rad/us.

    (H_11,11 - H_01,01 - H_10,10 + H_00,00) / 2 pi, so adding c I to H has no effect.
    """
    h = np.asarray(h)
    if h.shape != (4, 4):
        raise ValueError("zz_from_hamiltonian needs a 4x4 Hamiltonian")
    e = np.real(np.diag(h))
    return float((e[3] - e[1] - e[2] + e[0]) / (2 * np.pi))


def zz_from_device_signed(p: DeviceParams) -> float:
    """2 g^2 / (Delta - eta_B) + 2 g^2 / (-Delta - eta_A), in MHz."""
    dens = (p.delta_mhz - p.eta_b_mhz, -p.delta_mhz - p.eta_a_mhz)
    if min(abs(d) for d in dens) < RESONANCE_MHZ:
        raise ValueError("resonant denominator in the dispersive ZZ formula")
    return float(sum(2 * p.g_mhz**2 / d for d in dens))


def zz_from_device(p: DeviceParams) -> float:
    """Magnitude of the dispersive ZZ shift in MHz."""
    return abs(zz_from_device_signed(p))


def _steady_distance(model, rho0):
    try:
        return trace_distance(dynamics.steady_state(model), rho0)
    except DegenerateSteadyStateError:
        return None


def compare_report(free: LindbladEstimate, restricted: LindbladEstimate, spam: SpamEstimate, times) -> dict:
    """delta(t) table, steady-state distances, likelihoods and ZZ shifts of a free/restricted pair."""
    if free.dim != restricted.dim or free.dim != spam.dim:
        raise ValueError("estimates have different dimensions")
    times = [float(t) for t in times]
    delta = deviation_series(free.model, restricted.model, times)
    out = {
        "delta": [[t, float(d)] for t, d in zip(times, delta)],
        "delta_max": float(delta.max()) if len(delta) else 0.0,
        "loglike_free": free.loglike,
        "loglike_restricted": restricted.loglike,
        "loglike_gap": free.loglike - restricted.loglike,
        "steady_distance_free": _steady_distance(free.model, spam.rho0),
        "steady_distance_restricted": _steady_distance(restricted.model, spam.rho0),
    }
    if free.dim == 4:
        out["zz_free_mhz"] = zz_from_hamiltonian(free.model.hamiltonian)
        out["zz_restricted_mhz"] = zz_from_hamiltonian(restricted.model.hamiltonian)
    return out
