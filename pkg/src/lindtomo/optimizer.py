"""Multi-start quasi-Newton maximisation over constraint-free parameterisations."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .quantum import cholesky_decode, cholesky_encode, cholesky_factor, dagger, hermitian_basis

log = logging.getLogger(__name__)

KINDS = ("psd-cholesky", "density-cholesky", "hermitian", "traceless-hermitian", "isometry",
         "unconstrained-real")


class OptimizationError(RuntimeError):
    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params


@dataclass
class FitConfig:
    gtol: float = 1e-6
    ftol: float = 1e-10
    max_iters: int = 500
    n_starts: int = 5
    seed: int = 0
    # accepted for config-file compatibility; constraints are built into the
    # parameterisations so no barrier is applied
    barrier_init: float = 1.0
    barrier_growth: float = 10.0
    workers: int = 1
    require_convergence: bool = False

    @classmethod
    def from_dict(cls, d: dict | None, **overrides) -> "FitConfig":
        d = dict(d or {})
        d.update({k: v for k, v in overrides.items() if v is not None})
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class FitReport:
    best_loglike: float
    params: np.ndarray
    starts_tried: int
    converged: bool
    iterations: int
    wall_time_s: float
    start_loglikes: list = field(default_factory=list)
    final_loglikes: list = field(default_factory=list)
    best_start: int = 0

    def to_dict(self) -> dict:
        return {
            "best_loglike": float(self.best_loglike),
            "starts_tried": self.starts_tried,
            "converged": bool(self.converged),
            "iterations": self.iterations,
            "wall_time_s": self.wall_time_s,
            "best_start": self.best_start,
            "start_loglikes": [float(v) for v in self.start_loglikes],
            "final_loglikes": [float(v) for v in self.final_loglikes],
            "params": [float(v) for v in np.asarray(self.params).ravel()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        return cls(d["best_loglike"], np.array(d.get("params", []), dtype=float), d["starts_tried"],
                   d["converged"], d["iterations"], d["wall_time_s"], list(d.get("start_loglikes", [])),
                   list(d.get("final_loglikes", [])), d.get("best_start", 0))


# ---------------------------------------------------------------------------
# Parameter spaces


@dataclass(frozen=True)
class Block:
    name: str
    kind: str
    dim: int
    count: int = 1  # number of operators, for isometry blocks

    @property
    def size(self) -> int:
        if self.kind in ("psd-cholesky", "density-cholesky", "hermitian"):
            return self.dim * self.dim
        if self.kind == "traceless-hermitian":
            return self.dim * self.dim - 1
        if self.kind == "isometry":
            return 2 * self.count * self.dim * self.dim
        if self.kind == "unconstrained-real":
            return self.dim
        raise ValueError(f"unknown block kind {self.kind!r}")


def isometry_from_stack(a: np.ndarray):
    """V = A (A^dag A)^(-1/2) with the eigendata needed for gradients."""
    s = dagger(a) @ a
    w, q = np.linalg.eigh(s)
    w = np.clip(w, 1e-300, None)
    s_isqrt = (q / np.sqrt(w)) @ dagger(q)
    return a @ s_isqrt, (w, q, s_isqrt)


def isometry_pullback(a: np.ndarray, g: np.ndarray, cache) -> np.ndarray:
    """Gradient through V = A S^(-1/2).

    With df = 2 Re Tr[G^dag dV] returns G_A such that df = 2 Re Tr[G_A^dag dA].
    """
    w, q, s_isqrt = cache
    r = 1 / np.sqrt(w)
    num = r[:, None] - r[None, :]
    den = w[:, None] - w[None, :]
    same = np.abs(den) < 1e-14 * max(1.0, w.max())
    gamma = np.where(same, -0.5 * (r[:, None] ** 3 + r[None, :] ** 3) / 2, num / np.where(same, 1.0, den))
    b = dagger(q) @ dagger(g) @ a @ q
    n = q @ (b * gamma) @ dagger(q)
    return g @ s_isqrt + a @ (n + dagger(n))


class ParamSpace:
    """Packs named matrix blocks into a flat real vector and back.

    Kinds
    -----
    psd-cholesky         A A^dag from a lower-triangular A (dim^2 reals)
    density-cholesky     as above, divided by the trace
    hermitian            full Hermitian matrix (dim^2 reals)
    traceless-hermitian  coordinates in the Pauli basis (dim^2 - 1 reals)
    isometry             ``count`` dim x dim matrices V_k with sum V_k^dag V_k = I
    unconstrained-real   a plain real vector of length dim
    """

    def __init__(self, blocks):
        self.blocks = [b if isinstance(b, Block) else Block(*b) for b in blocks]
        self.offsets = {}
        off = 0
        for b in self.blocks:
            if b.kind not in KINDS:
                raise ValueError(f"unknown block kind {b.kind!r}")
            self.offsets[b.name] = (off, off + b.size)
            off += b.size
        self.size = off

    def __repr__(self):
        return f"ParamSpace({[(b.name, b.kind, b.dim) for b in self.blocks]}, size={self.size})"

    def block(self, name) -> Block:
        return next(b for b in self.blocks if b.name == name)

    def slice(self, x, name):
        lo, hi = self.offsets[name]
        return x[lo:hi]

    def unpack(self, x: np.ndarray) -> dict:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {x.shape}")
        out = {}
        for b in self.blocks:
            out[b.name] = _decode(b, self.slice(x, b.name))
        return out

    def pack(self, values: dict) -> np.ndarray:
        x = np.zeros(self.size)
        for b in self.blocks:
            lo, hi = self.offsets[b.name]
            x[lo:hi] = _encode(b, values[b.name])
        return x


def _decode(b: Block, r: np.ndarray):
    d = b.dim
    if b.kind == "psd-cholesky":
        return cholesky_decode(r, d, normalize=False)
    if b.kind == "density-cholesky":
        return cholesky_decode(r, d, normalize=True)
    if b.kind == "hermitian":
        h = np.zeros((d, d), dtype=complex)
        h[np.diag_indices(d)] = r[:d]
        rows, cols = np.tril_indices(d, -1)
        m = len(rows)
        h[rows, cols] = r[d : d + m] + 1j * r[d + m :]
        h[cols, rows] = r[d : d + m] - 1j * r[d + m :]
        return h
    if b.kind == "traceless-hermitian":
        return np.einsum("k,kij->ij", r, hermitian_basis(d))
    if b.kind == "isometry":
        half = b.count * d * d
        a = (r[:half] + 1j * r[half:]).reshape(b.count * d, d)
        v, _ = isometry_from_stack(a)
        return v.reshape(b.count, d, d)
    return np.array(r, dtype=float)


def _encode(b: Block, value) -> np.ndarray:
    d = b.dim
    value = np.asarray(value)
    if b.kind in ("psd-cholesky", "density-cholesky"):
        return cholesky_encode(value)
    if b.kind == "hermitian":
        rows, cols = np.tril_indices(d, -1)
        return np.concatenate([np.diag(value).real, value[rows, cols].real, value[rows, cols].imag])
    if b.kind == "traceless-hermitian":
        return np.einsum("kij,ji->k", hermitian_basis(d), value).real / d
    if b.kind == "isometry":
        a = value.reshape(b.count * d, d)
        return np.concatenate([a.real.ravel(), a.imag.ravel()])
    return np.asarray(value, dtype=float).ravel()


# ---------------------------------------------------------------------------
# Local ascent


def fd_gradient(f, x: np.ndarray, f0: float | None = None) -> np.ndarray:
    """Central differences with h = 1e-6 (1 + |x_i|)."""
    g = np.empty_like(x)
    xp = x.copy()
    for i in range(len(x)):
        h = 1e-6 * (1 + abs(x[i]))
        xp[i] = x[i] + h
        fp = f(xp)
        xp[i] = x[i] - h
        fm = f(xp)
        xp[i] = x[i]
        g[i] = (fp - fm) / (2 * h)
    return g


def _finite(v, x):
    if not np.isfinite(v):
        raise OptimizationError(f"objective returned {v} at parameters {np.array2string(x, precision=4)}", x)
    return v


@dataclass
class _LocalResult:
    x: np.ndarray
    f: float
    f_start: float
    iterations: int
    converged: bool


def _ascend(objective, x0, cfg: FitConfig, gradient=None) -> _LocalResult:
    """BFGS ascent with Armijo backtracking."""
    x = np.array(x0, dtype=float)
    f = _finite(objective(x), x)
    f_start = f
    grad = gradient if gradient is not None else (lambda z: fd_gradient(objective, z))
    g = grad(x)
    n = len(x)
    hinv = np.eye(n)
    scaled = False
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if np.max(np.abs(g), initial=0.0) <= cfg.gtol:
            converged = True
            break
        p = hinv @ g
        slope = g @ p
        if slope <= 0:
            hinv = np.eye(n)
            p = g.copy()
            slope = g @ g
        step = 1.0
        accepted = False
        while step > 1e-14:
            xn = x + step * p
            fn = objective(xn)
            if np.isfinite(fn) and fn >= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if not np.allclose(hinv, np.eye(n)):
                hinv = np.eye(n)
                continue
            # no ascent possible at working precision: stationary point
            converged = True
            break
        gn = grad(xn)
        s = xn - x
        y = g - gn  # gradient of the minimised function -f
        sy = s @ y
        rel = abs(fn - f) / max(1.0, abs(f))
        x, f, g = xn, fn, gn
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                hinv = np.eye(n) * (sy / (y @ y))
                scaled = True
            rho = 1.0 / sy
            hy = hinv @ y
            hinv = hinv + (rho * rho * (y @ hy) + rho) * np.outer(s, s) - rho * (np.outer(hy, s) + np.outer(s, hy))
        if rel <= cfg.ftol:
            converged = True
            break
    return _LocalResult(x, float(f), float(f_start), it, converged)


def maximize(objective, space: ParamSpace | None, starts, config: FitConfig | None = None,
             gradient=None) -> FitReport:
    """Run a local ascent from every start and keep the best.

    ``objective`` maps a real vector to a real log-likelihood; ``gradient``
    optionally returns its exact gradient, otherwise central differences are
    used.  Ties are broken by the lowest start index.
    """
    cfg = config or FitConfig()
    starts = [np.asarray(s, dtype=float) for s in starts]
    if not starts:
        raise ValueError("at least one start is required")
    if space is not None:
        for s in starts:
            if s.shape != (space.size,):
                raise ValueError(f"start has {s.shape} parameters, space needs {space.size}")
    t0 = time.perf_counter()
    for s in starts:
        _finite(objective(s), s)

    def run(s):
        return _ascend(objective, s, cfg, gradient)

    if cfg.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]
    best = max(range(len(results)), key=lambda i: (results[i].f, -i))
    r = results[best]
    converged_any = any(res.converged for res in results)
    if cfg.require_convergence and not converged_any:
        raise OptimizationError("no start converged", r.x)
    return FitReport(
        best_loglike=r.f,
        params=r.x,
        starts_tried=len(starts),
        converged=r.converged,
        iterations=sum(res.iterations for res in results),
        wall_time_s=time.perf_counter() - t0,
        start_loglikes=[res.f_start for res in results],
        final_loglikes=[res.f for res in results],
        best_start=best,
    )


def perturbed_starts(x0: np.ndarray, n: int, seed: int, scale: float = 0.1) -> list[np.ndarray]:
    """``x0`` followed by ``n - 1`` Gaussian perturbations of it."""
    rng = np.random.default_rng(seed)
    x0 = np.asarray(x0, dtype=float)
    out = [x0]
    for _ in range(n - 1):
        out.append(x0 + scale * (1 + np.abs(x0)) * rng.normal(size=x0.shape))
    return out


def cholesky_from_psd(mat: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Cholesky reals of a PSD matrix, lifting zero eigenvalues to ``floor``."""
    mat = 0.5 * (mat + dagger(mat))
    w, v = np.linalg.eigh(mat)
    w = np.clip(w, floor * max(1e-300, abs(w).max(initial=0) or 1.0), None)
    return cholesky_encode((v * w) @ dagger(v))


__all__ = [
    "Block",
    "FitConfig",
    "FitReport",
    "OptimizationError",
    "ParamSpace",
    "cholesky_factor",
    "cholesky_from_psd",
    "fd_gradient",
    "isometry_from_stack",
    "isometry_pullback",
    "maximize",
    "perturbed_starts",
]
