"""Lindblad propagation, channel representations and the diamond distance.

Conventions
-----------
* Vectorisation is column stacking: ``vec(rho)[i + j*d] = rho[i, j]`` so that
  ``vec(A X B) = (B^T kron A) vec(X)``.
* The Lindblad matrix is expressed in :func:`lindtomo.quantum.hermitian_basis`
  (Pauli strings with ``Tr[s_i s_j] = d delta_ij``).  Serialised Lindblad
  matrices always use this normalisation.
* Choi matrices are ``J = sum_ij E_ij kron Phi(E_ij)`` (input factor first),
  so a trace-preserving map has ``Tr J = d`` and ``Tr_out J = I``.
* Times are in microseconds, rates in 1/us (MHz), Hamiltonians in rad/us.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .quantum import (
    DimensionError,
    dagger,
    hermitian_basis,
    is_hermitian,
    min_eigenvalue,
    psd_sqrt,
)

log = logging.getLogger(__name__)


class InvalidModelError(ValueError):
    """Lindblad model violates Hermiticity or positivity."""


class DegenerateSteadyStateError(ValueError):
    def __init__(self, null_dim: int):
        super().__init__(f"steady state is not unique: null space dimension {null_dim}")
        self.null_dim = null_dim


class DiamondNormError(RuntimeError):
    def __init__(self, lower: float, upper: float):
        super().__init__(
            f"diamond norm did not converge: bracket [{lower:.6g}, {upper:.6g}], gap {upper - lower:.3g}"
        )
        self.lower = lower
        self.upper = upper


@dataclass(frozen=True)
class LindbladModel:
    hamiltonian: np.ndarray
    lindblad_matrix: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        lm = np.asarray(self.lindblad_matrix, dtype=complex)
        d = h.shape[0]
        if h.shape != (d, d) or lm.shape != (d * d - 1, d * d - 1):
            raise DimensionError(f"inconsistent shapes H{h.shape} L{lm.shape}")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "lindblad_matrix", lm)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def validate(self, tol: float = 1e-9) -> "LindbladModel":
        if not is_hermitian(self.hamiltonian, 1e-10):
            raise InvalidModelError("Hamiltonian is not Hermitian")
        if not is_hermitian(self.lindblad_matrix, 1e-10):
            raise InvalidModelError("Lindblad matrix is not Hermitian")
        lam = min_eigenvalue(self.lindblad_matrix)
        if lam < -tol:
            raise InvalidModelError(f"Lindblad matrix has negative eigenvalue {lam:.3g}")
        return self

    @classmethod
    def zero(cls, dim: int) -> "LindbladModel":
        return cls(np.zeros((dim, dim)), np.zeros((dim * dim - 1, dim * dim - 1)))

    @classmethod
    def from_jumps(cls, hamiltonian, rates, jump_ops) -> "LindbladModel":
        """Build from rates and jump operators.

        Identity components of the jump operators are dropped; for traceless
        operators the construction is exact.
        """
        h = np.asarray(hamiltonian, dtype=complex)
        d = h.shape[0]
        basis = hermitian_basis(d)
        lm = np.zeros((d * d - 1, d * d - 1), dtype=complex)
        for rate, op in zip(rates, jump_ops):
            c = np.einsum("kij,ji->k", basis, np.asarray(op, dtype=complex)) / d
            lm += rate * np.outer(c, c.conj())
        return cls(h, lm)


@dataclass(frozen=True)
class JumpDecomposition:
    rates: np.ndarray
    jump_ops: np.ndarray

    def __len__(self):
        return len(self.rates)


@dataclass(frozen=True)
class KrausSet:
    operators: np.ndarray
    time_us: float = 0.0

    def __post_init__(self):
        ops = np.asarray(self.operators, dtype=complex)
        if ops.ndim == 2:
            ops = ops[None]
        object.__setattr__(self, "operators", ops)

    @property
    def dim(self) -> int:
        return self.operators.shape[-1]

    def completeness_error(self) -> float:
        total = np.einsum("kji,kjl->il", self.operators.conj(), self.operators)
        return float(np.max(np.abs(total - np.eye(self.dim))))


# ---------------------------------------------------------------------------
# Superoperators


def spre(a):
    return np.kron(np.eye(a.shape[0]), a)


def spost(a):
    return np.kron(a.T, np.eye(a.shape[0]))


def vec(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    return np.swapaxes(rho, -1, -2).reshape(rho.shape[:-2] + (-1,))


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.shape[-1])))
    return np.swapaxes(v.reshape(v.shape[:-1] + (d, d)), -1, -2)


def hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    return -1j * (spre(h) - spost(h))


def dissipator_superop(lindblad_matrix: np.ndarray, dim: int) -> np.ndarray:
    basis = hermitian_basis(dim)
    eye = np.eye(dim)
    # sum_ij L_ij [ s_i rho s_j^dag - 1/2 {s_j^dag s_i, rho} ]
    jump = np.einsum("ij,jab,icd->acbd", lindblad_matrix, basis.conj(), basis).reshape(dim * dim, dim * dim)
    anti = np.einsum("ij,jab,ibc->ac", lindblad_matrix, basis.conj().transpose(0, 2, 1), basis)
    return jump - 0.5 * (np.kron(eye, anti) + np.kron(anti.T, eye))


def liouvillian(model: LindbladModel, validate: bool = True) -> np.ndarray:
    """Generator L with d vec(rho)/dt = L vec(rho)."""
    if validate:
        model.validate()
    return hamiltonian_superop(model.hamiltonian) + dissipator_superop(model.lindblad_matrix, model.dim)


def liouvillian_from_jumps(h: np.ndarray, rates, jump_ops) -> np.ndarray:
    eye = np.eye(h.shape[0])
    out = hamiltonian_superop(h)
    for g, op in zip(rates, jump_ops):
        op = np.asarray(op, dtype=complex)
        ld = dagger(op) @ op
        out = out + g * (np.kron(op.conj(), op) - 0.5 * (np.kron(eye, ld) + np.kron(ld.T, eye)))
    return out


def propagators(generator: np.ndarray, times) -> np.ndarray:
    """Stack of exp(L t) for each t (scaling-and-squaring Pade)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("propagation times must be non-negative")
    return expm(times[:, None, None] * generator[None])


def evolve(model: LindbladModel, rho0: np.ndarray, t_us: float) -> np.ndarray:
    if t_us < 0:
        raise ValueError("t must be non-negative")
    if t_us == 0:
        return np.array(rho0, dtype=complex)
    prop = expm(liouvillian(model) * t_us)
    return unvec(prop @ vec(np.asarray(rho0, dtype=complex)))


def jumps_from_lindblad(model: LindbladModel) -> JumpDecomposition:
    """Diagonalise the Lindblad matrix into normalised jump operators.

    Each returned operator satisfies Tr[L L^dagger] = 1; rates are sorted in
    decreasing order and negative round-off eigenvalues are clipped to zero.
    """
    d = model.dim
    lm = 0.5 * (model.lindblad_matrix + dagger(model.lindblad_matrix))
    w, u = np.linalg.eigh(lm)
    order = np.argsort(w)[::-1]
    w, u = np.clip(w[order], 0, None), u[:, order]
    basis = hermitian_basis(d)
    ops = np.einsum("ik,iab->kab", u, basis) / np.sqrt(d)
    # fix the arbitrary eigenvector phase: largest-magnitude entry real positive
    for k in range(len(ops)):
        flat = ops[k].ravel()
        j = np.argmax(np.abs(flat))
        if abs(flat[j]) > 0:
            ops[k] *= abs(flat[j]) / flat[j]
    return JumpDecomposition(rates=w * d, jump_ops=ops)


def kraus_apply(k: KrausSet, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.shape[-1] != k.dim:
        raise DimensionError(f"state dim {rho.shape[-1]} vs channel dim {k.dim}")
    ops = k.operators
    return np.einsum("kab,...bc,kdc->...ad", ops, rho, ops.conj())


def superop_from_kraus(k: KrausSet) -> np.ndarray:
    return sum(np.kron(op.conj(), op) for op in k.operators)


def choi_from_superop(s: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(s.shape[0])))
    # s[a + b d, i + j d] = Phi(E_ij)[a, b]
    s4 = s.reshape(d, d, d, d)  # [b, a, j, i]
    return s4.transpose(3, 1, 2, 0).reshape(d * d, d * d)


def superop_from_choi(j: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(j.shape[0])))
    j4 = j.reshape(d, d, d, d)  # [i, a, j, b]
    return j4.transpose(3, 1, 2, 0).reshape(d * d, d * d)


def choi_from_kraus(k: KrausSet) -> np.ndarray:
    d = k.dim
    v = np.swapaxes(k.operators, -1, -2).reshape(len(k.operators), d * d)  # v[i*d + a] = K[a, i]
    return np.einsum("ka,kb->ab", v, v.conj())


def choi_of(channel, t_us: float | None = None) -> np.ndarray:
    """Choi matrix of a KrausSet, a LindbladModel at ``t_us`` or a generator at ``t_us``."""
    if isinstance(channel, KrausSet):
        return choi_from_kraus(channel)
    if isinstance(channel, LindbladModel):
        channel = liouvillian(channel)
    if t_us is None:
        raise ValueError("a time is required for a generator")
    return choi_from_superop(propagators(channel, [t_us])[0])


def kraus_from_choi(choi: np.ndarray, time_us: float = 0.0, cutoff: float = 1e-12) -> KrausSet:
    d = int(round(np.sqrt(choi.shape[0])))
    w, v = np.linalg.eigh(0.5 * (choi + dagger(choi)))
    keep = w > cutoff * max(1.0, w.max())
    vecs = v[:, keep] * np.sqrt(w[keep])
    ops = np.swapaxes(vecs.T.reshape(-1, d, d), -1, -2)
    if len(ops) == 0:
        ops = np.zeros((1, d, d), dtype=complex)
    return KrausSet(ops, time_us)


def channel_family(model: LindbladModel, times) -> list[KrausSet]:
    """Exact Kraus sets of exp(L t) on a time grid."""
    props = propagators(liouvillian(model), times)
    return [kraus_from_choi(choi_from_superop(p), float(t)) for p, t in zip(props, np.atleast_1d(times))]


def steady_state(model: LindbladModel, tol: float = 1e-8) -> np.ndarray:
    """Unique stationary state of the generator."""
    gen = liouvillian(model)
    d = model.dim
    _, s, vh = np.linalg.svd(gen)
    scale = max(1.0, s[0])
    null = np.sum(s <= tol * scale)
    if null != 1:
        raise DegenerateSteadyStateError(int(null))
    rho = unvec(vh[-1].conj())
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + dagger(rho))
    resid = np.linalg.norm(gen @ vec(rho))
    if resid > max(tol, 1e-8) * scale:
        raise DegenerateSteadyStateError(0)
    return rho


# ---------------------------------------------------------------------------
# Diamond distance


@dataclass
class DiamondResult:
    value: float
    lower: float
    upper: float
    iterations: int
    input_state: np.ndarray = field(repr=False)

    @property
    def gap(self) -> float:
        return self.upper - self.lower


def _ptrace_out(x: np.ndarray, d: int) -> np.ndarray:
    return np.einsum("iaja->ij", x.reshape(d, d, d, d))


def _half_diamond_bounds(rho: np.ndarray, j: np.ndarray, d: int):
    """Primal value and dual certificate for a fixed input state.

    The primal is Tr[K_+] with K = (sqrt(rho) x I) J (sqrt(rho) x I).  For
    invertible rho, Z = (rho^-1/2 x I) K_+ (rho^-1/2 x I) satisfies Z >= 0 and
    Z >= J, so ||Tr_out Z||_inf bounds the optimum from above.
    """
    s = np.kron(psd_sqrt(rho), np.eye(d))
    k = s @ j @ s
    w, v = np.linalg.eigh(0.5 * (k + dagger(k)))
    kp = (v * np.clip(w, 0, None)) @ dagger(v)
    lower = float(np.trace(kp).real)
    tr = _ptrace_out(kp, d)
    wr, vr = np.linalg.eigh(0.5 * (rho + dagger(rho)))
    upper = np.inf
    if wr.min() > 1e-9 * wr.max():
        ri = (vr / np.sqrt(wr)) @ dagger(vr)
        upper = float(np.linalg.eigvalsh(ri @ tr @ ri).max())
    return lower, upper, tr


def _dual_certificate(j: np.ndarray, d: int, rho: np.ndarray):
    """Tightened upper bound for a rank-deficient optimum.

    Any Z = J + B^dag B satisfies Z >= J, and Z + c I >= 0 with c = max(0, -lambda_min(Z)),
    so lambda_max(Tr_out Z) + d c bounds the half-diamond norm for every B.  Starting
    from the certificate of a regularised input state, B is improved by L-BFGS on
    log-sum-exp smoothings of both terms (themselves upper bounds), with shrinking width.
    """
    reg = (1 - 1e-6) * rho + 1e-6 * np.eye(d) / d
    s = np.kron(psd_sqrt(reg), np.eye(d))
    kw, kv = np.linalg.eigh(s @ j @ s)
    ri = np.kron(np.linalg.inv(psd_sqrt(reg)), np.eye(d))
    zm = ri @ ((kv * np.clip(-kw, 0, None)) @ dagger(kv)) @ ri
    n = d * d

    def unpack(x):
        return (x[: n * n] + 1j * x[n * n:]).reshape(n, n)

    def exact(b):
        z = j + dagger(b) @ b
        pen = max(0.0, -float(np.linalg.eigvalsh(z).min()))
        return float(np.linalg.eigvalsh(_ptrace_out(z, d)).max()) + d * pen

    def smooth(x, tau):
        b = unpack(x)
        z = j + dagger(b) @ b
        tw, tv = np.linalg.eigh(_ptrace_out(z, d))
        zw, zv = np.linalg.eigh(z)
        neg = np.concatenate([[0.0], -zw / tau])
        f = tau * logsumexp(tw / tau) + d * tau * logsumexp(neg)
        gz = np.kron((tv * softmax(tw / tau)) @ dagger(tv), np.eye(d)) - d * (zv * softmax(neg)[1:]) @ dagger(zv)
        gb = 2 * b @ gz
        return f, np.concatenate([gb.real.ravel(), gb.imag.ravel()])

    b = psd_sqrt(0.5 * (zm + dagger(zm)))
    best = exact(b)
    x = np.concatenate([b.real.ravel(), b.imag.ravel()])
    scale = max(1.0, best)
    for tau in (1e-3, 1e-4, 1e-5, 1e-6):
        x = minimize(smooth, x, args=(tau * scale,), jac=True, method="L-BFGS-B",
                     options={"maxiter": 2000}).x
        best = min(best, exact(unpack(x)))
    return best


def diamond_distance(a: np.ndarray, b: np.ndarray, tol: float = 1e-5, max_gap: float = 1e-3,
                     max_iter: int = 20000) -> float:
    """Diamond norm of the difference of two trace-preserving channels given as Choi matrices."""
    return diamond_distance_report(a, b, tol=tol, max_gap=max_gap, max_iter=max_iter).value


def diamond_distance_report(a: np.ndarray, b: np.ndarray, tol: float = 1e-5, max_gap: float = 1e-3,
                            max_iter: int = 20000) -> DiamondResult:
    """Certified diamond distance between two Choi matrices.

    Runs the fixed-point iteration rho <- Tr_out[K_+(rho)] / Tr[K_+(rho)] on the
    input state, tracking the best primal (lower) and dual (upper) bounds.  The
    returned value is the bracket midpoint; :class:`DiamondNormError` is raised
    when the gap is still above ``max_gap`` after ``max_iter`` iterations.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimensionError(f"Choi shapes differ: {a.shape} vs {b.shape}")
    d = int(round(np.sqrt(a.shape[0])))
    j = a - b
    j = 0.5 * (j + dagger(j))
    rho = np.eye(d, dtype=complex) / d
    if np.max(np.abs(j)) < 1e-15:
        return DiamondResult(0.0, 0.0, 0.0, 0, rho)
    best_lo, best_hi, best_rho = 0.0, np.inf, rho
    it = 0
    stalled = 0
    for it in range(1, max_iter + 1):
        lo, hi, tr = _half_diamond_bounds(rho, j, d)
        # primal stagnation means the dual is stuck at a rank-deficient optimum
        stalled = stalled + 1 if lo - best_lo <= 1e-3 * tol else 0
        if lo > best_lo:
            best_lo, best_rho = lo, rho
        if hi >= best_lo - 1e-12:  # discard certificates spoilt by round-off
            best_hi = min(best_hi, hi)
        if 2 * (best_hi - best_lo) <= tol or stalled >= 50:
            break
        norm = np.trace(tr).real
        if norm <= 1e-300:
            break
        rho = tr / norm
    if 2 * (best_hi - best_lo) > tol:
        # rank-deficient optimum: dual certificates from regularised inputs
        for eps in (1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
            reg = (1 - eps) * best_rho + eps * np.eye(d) / d
            lo, hi, _ = _half_diamond_bounds(reg, j, d)
            best_lo = max(best_lo, lo)
            if hi >= best_lo - 1e-12:
                best_hi = min(best_hi, hi)
    if 2 * (best_hi - best_lo) > tol:
        best_hi = min(best_hi, _dual_certificate(j, d, best_rho))
    lower, upper = 2 * best_lo, 2 * best_hi
    if not upper - lower <= max_gap:
        raise DiamondNormError(lower, upper)
    return DiamondResult(0.5 * (lower + upper), lower, upper, it, best_rho)
