"""Maximum-likelihood estimation of a time-independent Lindbladian.

The likelihood couples every time slice through exp(L t).  Two modes:

free        traceless H plus a Cholesky-parameterised Lindblad matrix
restricted  traceless H plus non-negative rates on fixed damping and
            dephasing jumps
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from . import dynamics
from .dynamics import JumpDecomposition, LindbladModel
from .optimizer import FitConfig, FitReport, ParamSpace, cholesky_from_psd, fd_gradient, maximize, perturbed_starts
from .prefit import prefit_model
from .quantum import I2, SIGMA_MINUS, SZ, cholesky_factor, dagger, hermitian_basis, tensor
from .spam import PROB_FLOOR, SpamEstimate, clamped_loglike
from .synthdata import Dataset, effective_povms, enumerate_bases, enumerate_preps, label_str, prep_states

MODES = ("free", "restricted")
PROB_CEILING = 1 + 1e-6
# beyond this ||L||_1 t_max the propagators are rounding noise that the line search would exploit
MAX_GENERATOR_SCALE = 1e5


def restricted_jumps(n_qubits: int) -> np.ndarray:
    """Fixed jumps with Tr[L L^dag] = 1.

    One qubit: dephasing sigma_z / sqrt 2, damping sigma_-.
    Two qubits: damping on B, damping on A, dephasing on B, dephasing on A.
    """
    if n_qubits == 1:
        return np.array([SZ / np.sqrt(2), SIGMA_MINUS])
    if n_qubits == 2:
        return np.array([
            tensor(I2, SIGMA_MINUS) / np.sqrt(2),
            tensor(SIGMA_MINUS, I2) / np.sqrt(2),
            tensor(I2, SZ) / 2,
            tensor(SZ, I2) / 2,
        ])
    raise ValueError("restricted mode supports one or two qubits")


def restricted_labels(n_qubits: int) -> list[str]:
    if n_qubits == 1:
        return ["dephasing", "damping"]
    return ["damping_B", "damping_A", "dephasing_B", "dephasing_A"]


@lru_cache(maxsize=None)
def _generator_basis(dim: int):
    """Superoperator building blocks: H coordinates and Lindblad-matrix entries."""
    basis = hermitian_basis(dim)
    m = len(basis)
    h_ops = np.array([dynamics.hamiltonian_superop(s) for s in basis])
    units = np.eye(m * m, dtype=complex).reshape(m, m, m, m)
    # dissipator_superop is linear in the Lindblad matrix
    d_ops = np.array([[dynamics.dissipator_superop(units[i, j], dim) for j in range(m)] for i in range(m)])
    return h_ops, d_ops


@dataclass
class LindbladEstimate:
    model: LindbladModel
    jumps: JumpDecomposition
    loglike: float
    mode: str
    report: FitReport | None = None
    rates: np.ndarray | None = None  # restricted-mode rates in fixed-jump order

    @property
    def dim(self) -> int:
        return self.model.dim


class _LTObjective:
    """ln L_LT(x) with an exact gradient through the matrix exponential."""

    def __init__(self, data: Dataset, spam: SpamEstimate, mode: str):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.mode = mode
        self.n = data.n_qubits
        self.d = data.dim
        self.m = self.d**2 - 1
        self.times, _, _, self.counts = data.tensor()
        self.t = np.array(self.times)
        self.vstates = dynamics.vec(prep_states(spam.rho0, self.n)).T  # (d^2, S)
        eff = effective_povms(spam.povm, self.n)
        # p = vec(E^T) . vec(rho) under column stacking
        self.erows = dynamics.vec(np.swapaxes(eff, -1, -2))  # (B, O, d^2)
        self.h_ops, self.d_ops = _generator_basis(self.d)
        if mode == "free":
            blocks = [("h", "traceless-hermitian", self.d), ("lmat", "psd-cholesky", self.m)]
        else:
            self.jumps = restricted_jumps(self.n)
            self.j_ops = np.array([dynamics.liouvillian_from_jumps(np.zeros((self.d, self.d)), [1.0], [j])
                                   for j in self.jumps])
            blocks = [("h", "traceless-hermitian", self.d), ("sqrt_rates", "unconstrained-real", len(self.jumps))]
        self.space = ParamSpace(blocks)

    # -- parameters -> model
    def model(self, x) -> LindbladModel:
        parts = self.space.unpack(x)
        h = parts["h"]
        if self.mode == "free":
            lmat = parts["lmat"]
        else:
            rates = parts["sqrt_rates"] ** 2
            lmat = LindbladModel.from_jumps(np.zeros((self.d, self.d)), rates, self.jumps).lindblad_matrix
        return LindbladModel(0.5 * (h + dagger(h)), 0.5 * (lmat + dagger(lmat)))

    def generator(self, x):
        hc = self.space.slice(x, "h")
        gen = np.einsum("k,kab->ab", hc, self.h_ops)
        if self.mode == "free":
            c = cholesky_factor(self.space.slice(x, "lmat"), self.m)
            lmat = c @ dagger(c)
            gen = gen + np.einsum("ij,ijab->ab", lmat, self.d_ops)
            return gen, c, lmat
        r = self.space.slice(x, "sqrt_rates")
        gen = gen + np.einsum("k,kab->ab", r**2, self.j_ops)
        return gen, None, None

    def probs(self, gen):
        props = expm(self.t[:, None, None] * gen[None])
        q = props @ self.vstates  # (T, d^2, S)
        return np.einsum("bok,tks->tsbo", self.erows, q).real, props

    def __call__(self, x) -> float:
        gen, _, _ = self.generator(x)
        if np.abs(gen).sum(axis=0).max() * self.t.max(initial=0.0) > MAX_GENERATOR_SCALE:
            return float("-inf")
        p, _ = self.probs(gen)
        # overflowing propagators at extreme rates; the line search must reject them
        if not np.all(np.isfinite(p)) or np.max(p) > PROB_CEILING:
            return float("-inf")
        return clamped_loglike(p, self.counts)

    def gradient(self, x) -> np.ndarray:
        gen, c, _ = self.generator(x)
        p, _ = self.probs(gen)
        w = np.where(p > PROB_FLOOR, self.counts / np.maximum(p, PROB_FLOOR), 0.0)
        # df = Re sum_t Tr[W_t^T dP_t]
        wt = np.einsum("tsbo,bok,ls->tkl", w, self.erows, self.vstates)
        n2 = gen.shape[0]
        block = np.zeros((len(self.t), 2 * n2, 2 * n2), dtype=complex)
        block[:, :n2, :n2] = self.t[:, None, None] * gen.T[None]
        block[:, n2:, n2:] = block[:, :n2, :n2]
        block[:, :n2, n2:] = wt
        frechet = expm(block)[:, :n2, n2:]
        gbar = np.einsum("t,tab->ab", self.t, frechet)  # df = Re sum gbar * dL
        grad_h = np.einsum("ab,kab->k", gbar, self.h_ops).real
        if self.mode == "free":
            gamma = np.einsum("ab,ijab->ij", gbar, self.d_ops)
            g_l = gamma.conj()  # df = Re Tr[g_l^dag dLmat]
            g_c = (g_l + dagger(g_l)) @ c
            rows, cols = np.tril_indices(self.m, -1)
            grad_l = np.concatenate([np.diag(g_c).real, g_c[rows, cols].real, g_c[rows, cols].imag])
            return np.concatenate([grad_h, grad_l])
        r = self.space.slice(x, "sqrt_rates")
        grad_r = 2 * r * np.einsum("ab,kab->k", gbar, self.j_ops).real
        return np.concatenate([grad_h, grad_r])

    def fd_gradient(self, x) -> np.ndarray:
        return fd_gradient(self, np.asarray(x, dtype=float))

    # -- model -> parameters
    def encode(self, model: LindbladModel, rates=None) -> np.ndarray:
        hc = np.einsum("kij,ji->k", hermitian_basis(self.d), model.hamiltonian).real / self.d
        if self.mode == "free":
            return np.concatenate([hc, cholesky_from_psd(model.lindblad_matrix, 1e-6)])
        if rates is None:
            rates = restricted_rates_of(model, self.n)
        return np.concatenate([hc, np.sqrt(np.clip(rates, 0, None))])


def restricted_rates_of(model: LindbladModel, n_qubits: int) -> np.ndarray:
    """Least-squares rates of the fixed jumps that best match a Lindblad matrix."""
    jumps = restricted_jumps(n_qubits)
    d = model.dim
    cols = [LindbladModel.from_jumps(np.zeros((d, d)), [1.0], [j]).lindblad_matrix.ravel() for j in jumps]
    a = np.array(cols).T
    rates, *_ = np.linalg.lstsq(np.concatenate([a.real, a.imag]),
                                np.concatenate([model.lindblad_matrix.ravel().real, model.lindblad_matrix.ravel().imag]),
                                rcond=None)
    return np.clip(rates, 0, None)


def loglike_lt(model: LindbladModel, spam: SpamEstimate, data: Dataset) -> float:
    """Sum over all times of the Kraus-form likelihood with rho_s(t) = exp(L t) rho_s."""
    if not data.records:
        raise ValueError("empty dataset")
    if model.dim != data.dim or spam.dim != data.dim:
        raise ValueError("dimension mismatch between model, SPAM and data")
    _, p, counts = predicted_probabilities(model, spam, data)
    return clamped_loglike(p, counts)


def predicted_probabilities(model: LindbladModel, spam: SpamEstimate, data: Dataset):
    """(times, p[t, s, b, o], counts[t, s, b, o]) over the dataset's full sequence grid."""
    obj = _LTObjective(data, spam, "free")
    p, _ = obj.probs(dynamics.liouvillian(model))
    return obj.times, p, obj.counts


def lindblad_starts(x0: np.ndarray, n: int, seed: int) -> list[np.ndarray]:
    """Start 0 is ``x0``; the rest are seeded perturbations of it."""
    return perturbed_starts(x0, n, seed, scale=0.1)


def fit_lindblad(data: Dataset, spam: SpamEstimate, mode: str = "free", config: FitConfig | None = None,
                 extra_models=(), use_gradient: bool = True) -> LindbladEstimate:
    """Fit H and the Lindblad matrix (free) or the fixed-jump rates (restricted).

    Start 0 is the damping-plus-dephasing model from coarse exponential fits;
    ``extra_models`` (for example a restricted optimum when fitting the free
    model) are appended as additional starts.
    """
    cfg = config or FitConfig(n_starts=10)
    obj = _LTObjective(data, spam, mode)
    model0, rates0 = prefit_model(data)
    x0 = obj.encode(model0, rates0 if mode == "restricted" else None)
    starts = lindblad_starts(x0, cfg.n_starts, cfg.seed)
    starts += [obj.encode(m.model if isinstance(m, LindbladEstimate) else m) for m in extra_models]
    report = maximize(obj, obj.space, starts, cfg, gradient=obj.gradient if use_gradient else None)
    model = obj.model(report.params)
    rates = obj.space.slice(report.params, "sqrt_rates") ** 2 if mode == "restricted" else None
    return LindbladEstimate(model, dynamics.jumps_from_lindblad(model), loglike_lt(model, spam, data), mode,
                            report, rates)


def deviation_delta(a: LindbladModel, b: LindbladModel, t_us: float) -> float:
    """Diamond distance between exp(L_a t) and exp(L_b t)."""
    if a.dim != b.dim:
        raise ValueError("models have different dimensions")
    return dynamics.diamond_distance(dynamics.choi_of(dynamics.liouvillian(a), t_us),
                                     dynamics.choi_of(dynamics.liouvillian(b), t_us))


def deviation_series(a: LindbladModel, b: LindbladModel, times) -> np.ndarray:
    return np.array([deviation_delta(a, b, t) for t in times])


def sequence_deviance(model: LindbladModel, spam: SpamEstimate, data: Dataset) -> dict:
    """Reduced deviance per (prep, basis) sequence across all times.

    2 sum n ln(n / (N p)) divided by the number of independent frequencies;
    values near 1 mean the model explains the sequence to shot-noise level.
    """
    obj = _LTObjective(data, spam, "free")
    p, _ = obj.probs(dynamics.liouvillian(model))
    p = np.maximum(p, PROB_FLOOR)
    n = obj.counts
    tot = n.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(n > 0, n * np.log(n / (tot * p)), 0.0)
    dev = 2 * terms.sum(axis=(0, 3))
    present = (tot[..., 0] > 0).sum(axis=0)
    dof = np.maximum(present * (n.shape[-1] - 1), 1)
    out = {}
    for si, s in enumerate(enumerate_preps(data.n_qubits)):
        for bi, b in enumerate(enumerate_bases(data.n_qubits)):
            if present[si, bi]:
                out[(label_str(s), label_str(b))] = float(dev[si, bi] / dof[si, bi])
    return out
