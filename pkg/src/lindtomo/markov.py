"""Discrete-time trace-distance (BLP) non-Markovianity of a channel family.

A Markovian family can only contract the trace distance between two evolving
states.  N_markov sums the increases of D(K(t) rho_1, K(t) rho_2) between
consecutive times, maximised over pairs of preparations.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .dynamics import KrausSet
from .kraus import KrausEstimate, fit_kraus
from .optimizer import FitConfig
from .quantum import check_density_matrix, ket, projector, tensor, trace_distance
from .spam import SpamEstimate
from .synthdata import (
    Dataset,
    SpamTruth,
    enumerate_preps,
    generate_from_channels,
    ideal_prep_state,
    label_str,
    parse_label,
)


@dataclass
class MarkovReport:
    n_markov: float
    best_pair: tuple
    distance_series: list = field(default_factory=list)  # (time_us, D)
    increments: list = field(default_factory=list)  # ((t_i, t_i+1), max(0, dD))
    noise_floor: float | None = None

    def to_dict(self) -> dict:
        return {
            "n_markov": self.n_markov,
            "best_pair": list(self.best_pair),
            "distance_series": [[t, d] for t, d in self.distance_series],
            "increments": [[a, b, v] for (a, b), v in self.increments],
            "noise_floor": self.noise_floor,
        }


def _channels(k) -> list[KrausSet]:
    return k.channels if isinstance(k, KrausEstimate) else list(k)


def distance_series(k, rho1: np.ndarray, rho2: np.ndarray) -> list[tuple[float, float]]:
    """D(K(t) rho1, K(t) rho2) at every time of the family."""
    chans = _channels(k)
    if chans and (rho1.shape != rho2.shape or rho1.shape[0] != chans[0].dim):
        raise ValueError("state and channel dimensions differ")
    out = []
    for ch in chans:
        a, b = dynamics.kraus_apply(ch, np.array([rho1, rho2]))
        out.append((ch.time_us, trace_distance(a, b)))
    return out


def positive_increments(series) -> list:
    """((t_i, t_i+1), max(0, D_i+1 - D_i)) for consecutive points."""
    return [((t0, t1), max(0.0, d1 - d0)) for (t0, d0), (t1, d1) in zip(series, series[1:])]


def candidate_states(labels, n_qubits: int, spam: SpamEstimate | None = None) -> dict:
    """Initial states for each prep label: ideal pure states, or R_s rho0 R_s^dag with ``spam``."""
    rho0 = projector(ket("0" * n_qubits)) if spam is None else spam.rho0
    out = {}
    for lab in labels:
        prep = parse_label(lab) if isinstance(lab, str) else tuple(lab)
        if len(prep) != n_qubits:
            raise ValueError(f"prep {lab!r} does not match {n_qubits} qubits")
        out[label_str(prep)] = ideal_prep_state(prep, rho0)
    return out


def n_markov(k, candidate_preps=None, spam: SpamEstimate | None = None, workers: int = 1) -> MarkovReport:
    """Exhaustive search over unordered pairs of candidate preparations.

    :param k: a :class:`KrausEstimate` or a time-ordered list of Kraus sets
    :param candidate_preps: prep labels; all single-qubit-product preps by default
    :param spam: when given, use the SPAM-corrected mixed preparations
    :param workers: threads for the pair evaluations
    """
    chans = _channels(k)
    if len(chans) < 2:
        raise ValueError("need at least two times")
    dim = chans[0].dim
    n = int(round(np.log2(dim)))
    if candidate_preps is None:
        candidate_preps = [label_str(p) for p in enumerate_preps(n)]
    states = candidate_states(candidate_preps, n, spam)
    if len(states) < 2:
        raise ValueError("need at least two candidate preparations")
    labels = list(states)
    # propagate every state once; pairs then only need trace distances
    evolved = np.array([dynamics.kraus_apply(ch, np.array([states[s] for s in labels])) for ch in chans])
    times = [ch.time_us for ch in chans]

    def score(pair):
        i, j = pair
        series = [(t, trace_distance(evolved[ti, i], evolved[ti, j])) for ti, t in enumerate(times)]
        incs = positive_increments(series)
        return float(sum(v for _, v in incs)), series, incs

    pairs = list(itertools.combinations(range(len(labels)), 2))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(score, pairs))
    else:
        scores = [score(p) for p in pairs]
    # first pair wins ties, so results do not depend on scheduling
    best = max(range(len(pairs)), key=lambda i: (scores[i][0], -i))
    value, series, incs = scores[best]
    i, j = pairs[best]
    return MarkovReport(value, (labels[i], labels[j]), series, incs)


def marginal_channel(k: KrausSet, env_state: np.ndarray, keep: int = 0) -> KrausSet:
    """Reduced single-qubit channel rho -> Tr_env[K(rho x env)] of a two-qubit channel.

    :param keep: 0 keeps qubit A (the first tensor factor), 1 keeps qubit B
    """
    if k.dim != 4:
        raise ValueError("marginal_channel needs a two-qubit channel")
    check_density_matrix(env_state)
    w, v = np.linalg.eigh(env_state)
    basis = np.eye(2)
    ops = []
    for op in k.operators:
        for lam, vec in zip(w, v.T):
            if lam <= 1e-15:
                continue
            for j in range(2):
                if keep == 0:
                    left = tensor(np.eye(2), basis[j][None, :])
                    right = tensor(np.eye(2), vec[:, None])
                else:
                    left = tensor(basis[j][None, :], np.eye(2))
                    right = tensor(vec[:, None], np.eye(2))
                ops.append(np.sqrt(lam) * left @ op @ right)
    return KrausSet(np.array(ops), k.time_us)


def marginal_family(k, env_state: np.ndarray, keep: int = 0) -> KrausEstimate:
    return KrausEstimate.from_channels([marginal_channel(ch, env_state, keep) for ch in _channels(k)])


def zz_family(omega_zz: float, times) -> KrausEstimate:
    """Unitary channels of H = (omega_zz / 4) sigma_z x sigma_z (rad/us)."""
    diag = 0.25 * omega_zz * np.array([1.0, -1.0, -1.0, 1.0])
    return KrausEstimate.from_channels(
        [KrausSet(np.diag(np.exp(-1j * diag * t))[None], float(t)) for t in times])


def noise_floor(k, spam: SpamEstimate, shots: int = 1000, n_resamples: int = 100, percentile: float = 95.0,
                seed: int = 0, config: FitConfig | None = None, candidate_preps=None) -> float:
    """Percentile of N_markov over Kraus re-fits of datasets resampled from ``k``.

    Each resample draws fresh multinomial counts from the channel family and
    the SPAM estimate, re-fits the per-time Kraus sets and evaluates N_markov.
    """
    chans = _channels(k)
    cfg = config or FitConfig(n_starts=1)
    values = []
    for r in range(n_resamples):
        data = generate_from_channels(chans, SpamTruth(spam.rho0, spam.povm), shots=shots, seed=seed + r)
        est = fit_kraus(data, spam, cfg)
        values.append(n_markov(est, candidate_preps).n_markov)
    return float(np.percentile(values, percentile))


def markov_from_data(data: Dataset, spam: SpamEstimate, config: FitConfig | None = None,
                     use_spam_preps: bool = False, n_resamples: int = 0, seed: int = 0):
    """Kraus fits at every time followed by N_markov (and optionally its noise floor)."""
    est = fit_kraus(data, spam, config)
    report = n_markov(est, spam=spam if use_spam_preps else None)
    if n_resamples:
        shots = min(r.shots for r in data.records)
        report.noise_floor = noise_floor(est, spam, shots, n_resamples, seed=seed, config=config)
    return est, report
