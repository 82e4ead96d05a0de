"""Maximum-likelihood estimation of the initial state and readout POVM.

Only the t = 0 records are used.  The preparation and basis rotations are
taken as perfect, so the likelihood depends on (rho0, POVM) alone.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .optimizer import (
    FitConfig,
    FitReport,
    ParamSpace,
    isometry_from_stack,
    isometry_pullback,
    maximize,
    perturbed_starts,
)
from .quantum import (
    basis_unitary,
    cholesky_factor,
    dagger,
    hermitian_basis,
    hermitian_basis_labels,
    is_psd,
    min_eigenvalue,
    n_qubits_of,
    prep_unitary,
    thermal_state,
    trace_distance,
)
from .synthdata import Dataset, effective_povms, enumerate_bases, enumerate_preps, prep_states

PROB_FLOOR = 1e-12


@dataclass
class SpamEstimate:
    rho0: np.ndarray
    povm: np.ndarray
    loglike: float
    report: FitReport | None = None
    gauge: dict | None = None

    @property
    def dim(self) -> int:
        return self.rho0.shape[0]

    @property
    def n_qubits(self) -> int:
        return n_qubits_of(self.dim)


def _zero_time_counts(data: Dataset):
    if not data.records:
        raise ValueError("empty dataset slice")
    if any(r.time_us != 0 for r in data.records):
        raise ValueError("SPAM likelihood needs records at t = 0 only")
    _, _, _, counts = data.tensor([0.0])
    return counts[0]


def clamped_loglike(probs: np.ndarray, counts: np.ndarray) -> float:
    return float(np.sum(counts * np.log(np.maximum(probs, PROB_FLOOR))))


def loglike_spam(rho0: np.ndarray, povm: np.ndarray, data: Dataset) -> float:
    """sum counts * ln Tr[rho_s R_b^dag M_o R_b] over the t = 0 records."""
    counts = _zero_time_counts(data)
    n = data.n_qubits
    if rho0.shape[0] != data.dim:
        raise ValueError("state dimension does not match dataset")
    probs = np.einsum("sij,boji->sbo", prep_states(rho0, n), effective_povms(povm, n)).real
    return clamped_loglike(probs, counts)


# ---------------------------------------------------------------------------
# Objective with exact gradient


class _SpamObjective:
    def __init__(self, counts: np.ndarray, n_qubits: int):
        self.n = n_qubits
        self.d = 2**n_qubits
        self.counts = counts
        self.space = ParamSpace([("rho0", "density-cholesky", self.d), ("povm", "isometry", self.d, self.d)])
        self.u_s = np.array([prep_unitary(p) for p in enumerate_preps(n_qubits)])
        self.u_b = np.array([basis_unitary(b) for b in enumerate_bases(n_qubits)])

    def _parts(self, x):
        d = self.d
        a = cholesky_factor(self.space.slice(x, "rho0"), d)
        raw = a @ dagger(a)
        tau = np.trace(raw).real
        rho = raw / tau
        p = self.space.slice(x, "povm")
        half = d * d * d
        stack = (p[:half] + 1j * p[half:]).reshape(d * d, d)
        v, cache = isometry_from_stack(stack)
        v = v.reshape(d, d, d)
        m = dagger(v) @ v
        return a, tau, rho, stack, cache, v, m

    def probs(self, rho, m):
        rs = np.einsum("sij,jk,slk->sil", self.u_s, rho, self.u_s.conj())
        # state rotated into each measurement frame
        rsb = np.einsum("bij,sjk,blk->sbil", self.u_b, rs, self.u_b.conj())
        return np.einsum("sbij,oji->sbo", rsb, m).real, rsb

    def value(self, x) -> float:
        _, _, rho, _, _, _, m = self._parts(x)
        p, _ = self.probs(rho, m)
        return clamped_loglike(p, self.counts)

    __call__ = value

    def gradient(self, x) -> np.ndarray:
        d = self.d
        a, tau, rho, stack, cache, v, m = self._parts(x)
        p, rsb = self.probs(rho, m)
        w = np.where(p > PROB_FLOOR, self.counts / np.maximum(p, PROB_FLOOR), 0.0)
        # d/d rho0: sum w R_s^dag R_b^dag M_o R_b R_s
        e = np.einsum("bji,ojk,bkl->boil", self.u_b.conj(), m, self.u_b)
        g_rho = np.einsum("sbo,sji,bojk,skl->il", w, self.u_s.conj(), e, self.u_s)
        g_rho = g_rho - np.einsum("ij,ji->", g_rho, rho).real * np.eye(d)
        g_a = g_rho @ a / tau
        rows, cols = np.tril_indices(d, -1)
        grad_r = np.concatenate([2 * np.diag(g_a).real, 2 * g_a[rows, cols].real, 2 * g_a[rows, cols].imag])
        # d/d V_o: V_o sum w rho_sb
        g_m = np.einsum("sbo,sbij->oij", w, rsb)
        g_v = (v @ g_m).reshape(d * d, d)
        g_stack = isometry_pullback(stack, g_v, cache)
        grad_p = np.concatenate([2 * g_stack.real.ravel(), 2 * g_stack.imag.ravel()])
        return np.concatenate([grad_r, grad_p])


# ---------------------------------------------------------------------------
# Gauge fixing
#
# With perfect pulses the likelihood is unchanged when a Pauli sector of rho0
# is scaled by c and the same sector of every POVM element by 1/c.  We pick
# the representative with the largest readout contrast that keeps every
# element PSD (some element becomes rank deficient).


def _sector_masks(dim: int):
    labels = hermitian_basis_labels(dim)
    if dim == 2:
        return {"A": np.ones(len(labels), bool)}
    return {
        "A": np.array([lab[1] == "I" for lab in labels]),
        "B": np.array([lab[0] == "I" for lab in labels]),
        "AB": np.array([lab[0] != "I" and lab[1] != "I" for lab in labels]),
    }


def _coords(a: np.ndarray):
    d = a.shape[-1]
    basis = hermitian_basis(d)
    c = np.einsum("kij,...ji->...k", basis, a).real / d
    c0 = np.trace(a, axis1=-2, axis2=-1).real / d
    return c0, c


def _rebuild(c0, c):
    d = int(round(np.sqrt(c.shape[-1] + 1)))
    basis = hermitian_basis(d)
    eye = np.eye(d)
    return np.einsum("...,ij->...ij", c0, eye) + np.einsum("...k,kij->...ij", c, basis)


def _apply_gauge(rho0, povm, scales: dict):
    masks = _sector_masks(rho0.shape[0])
    r0, rc = _coords(rho0)
    m0, mc = _coords(povm)
    for name, u in scales.items():
        rc = np.where(masks[name], rc / u, rc)
        mc = np.where(masks[name], mc * u, mc)
    return _rebuild(r0, rc), _rebuild(m0, mc)


def _max_contrast(m0: np.ndarray, mc: np.ndarray) -> float:
    """Largest u with c0_k >= u |c_k| for every single-qubit element."""
    norms = np.linalg.norm(mc, axis=-1)
    ok = norms > 1e-14
    if not np.any(ok):
        return 1.0
    return float(np.min(m0[ok] / norms[ok]))


def _feasible(rho0, povm, tol=1e-12) -> bool:
    return min_eigenvalue(rho0) >= -tol and all(min_eigenvalue(m) >= -tol for m in povm)


GAUGE_SLACK = 1e-10


def fix_sign(rho0: np.ndarray, povm: np.ndarray):
    """Resolve the sector sign flips that also leave the likelihood unchanged.

    Among the PSD-feasible sign patterns, keep the one whose readout assigns
    each basis state to its own label most often (largest sum_k <k|M_k|k>).
    """
    d = rho0.shape[0]
    names = ("A",) if d == 2 else ("A", "B", "AB")
    best = (-np.inf, rho0, povm, {})
    for signs in itertools.product((1.0, -1.0), repeat=len(names)):
        scales = dict(zip(names, signs))
        r, m = _apply_gauge(rho0, povm, scales)
        if not _feasible(r, m, GAUGE_SLACK):
            continue
        score = sum(m[k][k, k].real for k in range(d))
        if score > best[0] + 1e-12:
            best = (score, r, m, scales)
    return best[1], best[2], best[3]


def _gauge_eigs(rho0, povm, w):
    scales = dict(zip(("A", "B", "AB"), np.exp(w)))
    r, m = _apply_gauge(rho0, povm, scales)
    return np.concatenate([np.linalg.eigvalsh(r)] + [np.linalg.eigvalsh(e) for e in m])


def fix_gauge(rho0: np.ndarray, povm: np.ndarray):
    """Move (rho0, POVM) along the likelihood-preserving sector scalings.

    Returns ``(rho0, povm, scales)``.  The POVM sectors are stretched (and
    the matching state sectors shrunk) as far as positivity allows: one
    qubit has a closed form; two qubits maximise ``sum log u`` over the three
    sector scales subject to every element and rho0 staying PSD.  Falls back
    to the input when no improvement is feasible.
    """
    d = rho0.shape[0]
    if d == 2:
        m0, mc = _coords(povm)
        u = _max_contrast(m0, mc)
        r, m = _apply_gauge(rho0, povm, {"A": u})
        return r, m, {"A": u}
    if d != 4:
        return rho0, povm, {}
    # aim strictly inside so SLSQP's constraint violation stays within the slack
    cons = {"type": "ineq", "fun": lambda w: _gauge_eigs(rho0, povm, w) - GAUGE_SLACK}
    res = minimize(lambda w: -np.sum(w), np.zeros(3), jac=lambda w: -np.ones(3), method="SLSQP",
                   constraints=[cons], bounds=[(-3, 3)] * 3, options={"ftol": 1e-12, "maxiter": 200})

    def feasible(s):
        return _gauge_eigs(rho0, povm, s * res.x).min() >= -GAUGE_SLACK

    if not feasible(0.0):
        return rho0, povm, {}
    lo, hi = 0.0, 1.0
    if not feasible(hi):
        # largest feasible step along the ray toward the SLSQP point
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if feasible(mid) else (lo, mid)
        hi = lo
    w = hi * res.x
    scales = dict(zip(("A", "B", "AB"), (float(u) for u in np.exp(w))))
    r, m = _apply_gauge(rho0, povm, scales)
    return r, m, scales


def _clean(rho0, povm):
    """Remove round-off so the validators accept the output."""
    rho0 = 0.5 * (rho0 + dagger(rho0))
    rho0 = rho0 / np.trace(rho0).real
    povm = 0.5 * (povm + dagger(povm))
    povm[-1] = np.eye(rho0.shape[0]) - povm[:-1].sum(axis=0)
    return rho0, povm


# ---------------------------------------------------------------------------


def spam_starts(n_qubits: int, n: int, seed: int) -> list[np.ndarray]:
    """Ideal SPAM first, then seeded perturbations."""
    d = 2**n_qubits
    space = ParamSpace([("rho0", "density-cholesky", d), ("povm", "isometry", d, d)])
    ground = np.zeros((d, d), dtype=complex)
    ground[0, 0] = 1
    proj = np.array([np.diag(np.eye(d)[k]).astype(complex) for k in range(d)])
    x0 = space.pack({"rho0": 0.98 * ground + 0.02 * np.eye(d) / d, "povm": proj})
    return perturbed_starts(x0, n, seed, scale=0.2)


def fit_spam(data: Dataset, config: FitConfig | None = None, gauge: bool = True) -> SpamEstimate:
    cfg = config or FitConfig()
    zero = data.at_time(0.0)
    n_preps = len({r.prep for r in zero.records})
    if n_preps < data.dim**2:
        raise ValueError(f"SPAM fit needs at least {data.dim ** 2} distinct preparations, got {n_preps}")
    counts = _zero_time_counts(zero)
    obj = _SpamObjective(counts, data.n_qubits)
    starts = spam_starts(data.n_qubits, cfg.n_starts, cfg.seed)
    report = maximize(obj, obj.space, starts, cfg, gradient=obj.gradient)
    _, _, rho, _, _, _, m = obj._parts(report.params)
    scales = None
    if gauge:
        rho, m = _clean(rho, m)
        rho, m, _ = fix_sign(rho, m)
        rho_g, m_g, scales = fix_gauge(rho, m)
        scales = {k: float(v) for k, v in scales.items()}
        if _feasible(rho_g, m_g, GAUGE_SLACK):
            rho, m = rho_g, m_g
    rho, m = _clean(rho, m)
    return SpamEstimate(rho, m, loglike_spam(rho, m, zero), report, scales)


# ---------------------------------------------------------------------------
# Derived quantities


def measurement_channel_distance(joint: np.ndarray, product: np.ndarray) -> float:
    """max_rho D(Lambda(rho), Lambda'(rho)) for the outcome-forgetting channels.

    Both channels output diagonal states, so the distance is
    ``1/2 sum_k |Tr[rho (M_k - M'_k)]|``; maximising over rho picks the best
    sign pattern s and gives ``1/2 lambda_max(sum_k s_k (M_k - M'_k))``.
    """
    joint = np.asarray(joint)
    product = np.asarray(product)
    if joint.shape != product.shape:
        raise ValueError("POVM shapes differ")
    diff = joint - product
    best = 0.0
    for signs in itertools.product((1, -1), repeat=len(diff) - 1):
        s = np.array((1,) + signs)
        op = np.einsum("k,kij->ij", s, diff)
        op = 0.5 * (op + dagger(op))
        w = np.linalg.eigvalsh(op)
        best = max(best, w[-1], -w[0])
    return 0.5 * float(best)


def product_povm(povm_a: np.ndarray, povm_b: np.ndarray) -> np.ndarray:
    """M'_xy = M_x (x) M_y in bitstring order."""
    return np.array([np.kron(ma, mb) for ma in povm_a for mb in povm_b])


def thermal_fit(rho0: np.ndarray, xtol: float = 1e-4) -> tuple[float, float]:
    """Population a of the closest diagonal thermal state and its distance."""
    rho0 = np.asarray(rho0)
    if rho0.shape != (2, 2):
        raise ValueError("thermal_fit needs a single-qubit state")

    def dist(a):
        return trace_distance(thermal_state(a), rho0)

    res = minimize_scalar(dist, bounds=(0.0, 1.0), method="bounded", options={"xatol": xtol})
    cands = [(dist(a), a) for a in (res.x, 0.0, 1.0)]
    d, a = min(cands)
    return float(a), float(d)


def is_physical(est: SpamEstimate, tol: float = 1e-9) -> bool:
    return is_psd(est.rho0, tol) and all(is_psd(m, tol) for m in est.povm)
