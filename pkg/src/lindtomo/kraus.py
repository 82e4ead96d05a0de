"""Per-time maximum-likelihood estimation of trace-preserving Kraus sets."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .dynamics import KrausSet
from .optimizer import (
    FitConfig,
    FitReport,
    OptimizationError,
    ParamSpace,
    isometry_from_stack,
    isometry_pullback,
    maximize,
    perturbed_starts,
)
from .prefit import prefit_model
from .spam import PROB_FLOOR, SpamEstimate, clamped_loglike
from .synthdata import Dataset, effective_povms, prep_states

PAD_SCALE = 1e-4

log = logging.getLogger(__name__)


@dataclass
class KrausFit:
    time_us: float
    kraus: KrausSet
    loglike: float
    report: FitReport | None = None
    start_loglike: float | None = None

    @property
    def choi(self) -> np.ndarray:
        return dynamics.choi_from_kraus(self.kraus)


@dataclass
class KrausEstimate:
    fits: list = field(default_factory=list)
    failed: list = field(default_factory=list)

    def __post_init__(self):
        times = [f.time_us for f in self.fits]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("Kraus fits must have strictly increasing times")

    @property
    def times_us(self) -> list[float]:
        return [f.time_us for f in self.fits]

    @property
    def channels(self) -> list[KrausSet]:
        return [f.kraus for f in self.fits]

    @property
    def ok(self) -> bool:
        return not self.failed

    @classmethod
    def from_channels(cls, channels) -> "KrausEstimate":
        return cls([KrausFit(k.time_us, k, float("nan")) for k in sorted(channels, key=lambda k: k.time_us)])


def _slice_counts(data: Dataset, t: float):
    sl = data.at_time(t)
    if not sl.records:
        raise ValueError(f"no records at t = {t}")
    _, _, _, counts = sl.tensor([t])
    return counts[0]


def loglike_kraus(k: KrausSet, spam: SpamEstimate, data: Dataset, t: float | None = None) -> float:
    """Log-likelihood of the records at time ``t`` (default ``k.time_us``)."""
    t = k.time_us if t is None else t
    if k.dim != spam.dim or spam.dim != data.dim:
        raise ValueError("dimension mismatch between channel, SPAM and data")
    counts = _slice_counts(data, t)
    states = dynamics.kraus_apply(k, prep_states(spam.rho0, data.n_qubits))
    probs = np.einsum("sij,boji->sbo", states, effective_povms(spam.povm, data.n_qubits)).real
    return clamped_loglike(probs, counts)


class _KrausObjective:
    def __init__(self, counts, spam: SpamEstimate, n_qubits: int):
        self.d = spam.dim
        self.r = self.d**2
        self.counts = counts
        self.states = prep_states(spam.rho0, n_qubits)
        self.eff = effective_povms(spam.povm, n_qubits)
        self.space = ParamSpace([("kraus", "isometry", self.d, self.r)])

    def _ops(self, x):
        half = self.r * self.d * self.d
        stack = (x[:half] + 1j * x[half:]).reshape(self.r * self.d, self.d)
        v, cache = isometry_from_stack(stack)
        return stack, cache, v.reshape(self.r, self.d, self.d)

    def _probs(self, ops):
        out = np.einsum("kij,sjl,kml->sim", ops, self.states, ops.conj())
        return np.einsum("sij,boji->sbo", out, self.eff).real

    def __call__(self, x) -> float:
        _, _, ops = self._ops(x)
        return clamped_loglike(self._probs(ops), self.counts)

    def gradient(self, x) -> np.ndarray:
        stack, cache, ops = self._ops(x)
        p = self._probs(ops)
        w = np.where(p > PROB_FLOOR, self.counts / np.maximum(p, PROB_FLOOR), 0.0)
        m_eff = np.einsum("sbo,boij->sij", w, self.eff)
        g = np.einsum("sij,kjl,slm->kim", m_eff, ops, self.states).reshape(self.r * self.d, self.d)
        g_stack = isometry_pullback(stack, g, cache)
        return np.concatenate([2 * g_stack.real.ravel(), 2 * g_stack.imag.ravel()])

    def pack(self, ops: np.ndarray) -> np.ndarray:
        ops = np.asarray(ops, dtype=complex)
        if len(ops) < self.r:
            # exact zeros sit at a stationary point of the isometry map; pad with a tiny fixed pattern
            rng = np.random.default_rng(0)
            shape = (self.r - len(ops), self.d, self.d)
            pad = PAD_SCALE * (rng.normal(size=shape) + 1j * rng.normal(size=shape))
            ops = np.concatenate([ops, pad])
        return self.space.pack({"kraus": ops[: self.r]})


def physics_start(model: dynamics.LindbladModel, t: float) -> np.ndarray:
    """Kraus operators of the model's channel at time t."""
    choi = dynamics.choi_of(dynamics.liouvillian(model), t)
    return np.asarray(dynamics.kraus_from_choi(choi, t).operators)


def kraus_starts(x0: np.ndarray, n: int, seed: int) -> list[np.ndarray]:
    """Start 0 is ``x0``; the rest are seeded perturbations of it."""
    return perturbed_starts(x0, n, seed, scale=0.05)


def fit_kraus_at(data: Dataset, spam: SpamEstimate, t: float, config: FitConfig | None = None,
                 start_ops=None, extra_starts=()) -> KrausFit:
    cfg = config or FitConfig()
    counts = _slice_counts(data, t)
    obj = _KrausObjective(counts, spam, data.n_qubits)
    if start_ops is None:
        start_ops = np.eye(spam.dim, dtype=complex)[None]
    x0 = obj.pack(start_ops)
    starts = kraus_starts(x0, cfg.n_starts, cfg.seed)
    starts += [obj.pack(s) for s in extra_starts]
    report = maximize(obj, obj.space, starts, cfg, gradient=obj.gradient)
    _, _, ops = obj._ops(report.params)
    k = KrausSet(ops, t)
    return KrausFit(t, k, loglike_kraus(k, spam, data, t), report, obj(x0))


def fit_kraus(data: Dataset, spam: SpamEstimate, config: FitConfig | None = None,
              warm_start: bool = False, prefit=None) -> KrausEstimate:
    """Independent fit at every time in the dataset.

    Start 0 at each time is the channel of a coarse damping-plus-dephasing
    model (``prefit``, by default from :func:`prefit.prefit_model`).  With
    ``warm_start`` the previous time's estimate is offered as an extra start.
    Failures at individual times are collected in ``failed``.
    """
    cfg = config or FitConfig()
    if spam.dim != data.dim:
        raise ValueError("SPAM estimate and dataset dimensions differ")
    model = prefit if prefit is not None else prefit_model(data)[0]
    times = data.times_us
    # times run in parallel; starts within a time then run serially
    n_workers = cfg.workers
    if n_workers > 1 and not warm_start:
        cfg = FitConfig(**{**cfg.__dict__, "workers": 1})

    def one(t, extra=()):
        return fit_kraus_at(data, spam, t, cfg, physics_start(model, t), extra)

    fits, failed = [], []
    if warm_start:
        prev = None
        for t in times:
            try:
                f = one(t, [] if prev is None else [prev.kraus.operators])
                fits.append(f)
                prev = f
            except OptimizationError as exc:
                failed.append((t, str(exc)))
    else:
        def safe(t):
            try:
                return one(t)
            except OptimizationError as exc:
                return (t, str(exc))

        if n_workers > 1:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                results = list(pool.map(safe, times))
        else:
            results = [safe(t) for t in times]
        for r in results:
            (failed if isinstance(r, tuple) else fits).append(r)
    return KrausEstimate(fits, failed)


def choi_rank(k: KrausSet, cutoff: float = 1e-8) -> int:
    """Number of Choi eigenvalues above ``cutoff`` times the trace (reporting only)."""
    w = np.linalg.eigvalsh(dynamics.choi_from_kraus(k))
    return int(np.sum(w > cutoff * w.sum()))
