"""Prepare-evolve-measure datasets: enumeration, simulation and filtering.

Pulse labels are tuples of per-qubit symbols.  Their string form joins the
symbols with ``_`` (``"+_-i"`` is qubit A in |+>, qubit B in |-i>); outcome
bitstrings put qubit A first.
"""
from __future__ import annotations

import fnmatch
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .dynamics import InvalidModelError, KrausSet, LindbladModel
from .quantum import (
    BASIS_SYMBOLS,
    PREP_SYMBOLS,
    basis_unitary,
    bitstrings,
    check_density_matrix,
    check_povm,
    dagger,
    n_qubits_of,
    prep_unitary,
)

DEFAULT_SHOTS = 1000
LABEL_SEP = "_"


def label_str(symbols) -> str:
    return LABEL_SEP.join(symbols)


def parse_label(text: str) -> tuple:
    symbols = tuple(text.split(LABEL_SEP))
    return symbols


@dataclass(frozen=True)
class SpamTruth:
    rho0: np.ndarray
    povm: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rho0", check_density_matrix(self.rho0))
        object.__setattr__(self, "povm", check_povm(self.povm))
        if self.rho0.shape != self.povm.shape[1:]:
            raise ValueError("state and POVM dimensions differ")

    @property
    def dim(self):
        return self.rho0.shape[0]

    @classmethod
    def ideal(cls, n_qubits: int) -> "SpamTruth":
        d = 2**n_qubits
        rho = np.zeros((d, d), dtype=complex)
        rho[0, 0] = 1
        return cls(rho, np.array([np.diag(np.eye(d)[k]).astype(complex) for k in range(d)]))


@dataclass(frozen=True)
class SequenceRecord:
    prep: tuple
    basis: tuple
    time_us: float
    counts: dict

    @property
    def shots(self) -> int:
        return int(sum(self.counts.values()))


@dataclass
class Dataset:
    n_qubits: int
    records: list
    shots_nominal: int | None = None
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = set(bitstrings(self.n_qubits))
        for r in self.records:
            if set(r.counts) != labels:
                raise ValueError(f"record outcomes {sorted(r.counts)} differ from {sorted(labels)}")
            if len(r.prep) != self.n_qubits or len(r.basis) != self.n_qubits:
                raise ValueError("label length does not match qubit count")
            if any(v < 0 for v in r.counts.values()):
                raise ValueError("negative count")
            if r.time_us < 0:
                raise ValueError("negative time")

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def times_us(self) -> list[float]:
        return sorted({r.time_us for r in self.records})

    @property
    def total_shots(self) -> int:
        return sum(r.shots for r in self.records)

    def at_time(self, t: float, atol: float = 1e-12) -> "Dataset":
        recs = [r for r in self.records if abs(r.time_us - t) <= atol]
        return Dataset(self.n_qubits, recs, self.shots_nominal)

    def sequences_at(self, t: float) -> int:
        return len(self.at_time(t).records)

    def tensor(self, times=None):
        """Dense count array ``counts[t, prep, basis, outcome]``.

        Missing (excluded) sequences are zero, which leaves every likelihood
        unchanged.  Returns ``(times, preps, bases, counts)``.
        """
        times = self.times_us if times is None else list(times)
        preps = enumerate_preps(self.n_qubits)
        bases = enumerate_bases(self.n_qubits)
        p_idx = {p: i for i, p in enumerate(preps)}
        b_idx = {b: i for i, b in enumerate(bases)}
        t_idx = {t: i for i, t in enumerate(times)}
        outcomes = bitstrings(self.n_qubits)
        counts = np.zeros((len(times), len(preps), len(bases), len(outcomes)))
        for r in self.records:
            ti = t_idx.get(r.time_us)
            if ti is None:
                continue
            counts[ti, p_idx[r.prep], b_idx[r.basis]] += [r.counts[o] for o in outcomes]
        return times, preps, bases, counts


def enumerate_preps(n_qubits: int) -> list[tuple]:
    return list(itertools.product(PREP_SYMBOLS, repeat=n_qubits))


def enumerate_bases(n_qubits: int) -> list[tuple]:
    return list(itertools.product(BASIS_SYMBOLS, repeat=n_qubits))


def enumerate_sequences(n_qubits: int) -> list[tuple]:
    """All (prep, basis) label pairs, preparation outer and basis inner."""
    if n_qubits not in (1, 2):
        raise ValueError(f"unsupported qubit count {n_qubits}")
    return [(p, b) for p in enumerate_preps(n_qubits) for b in enumerate_bases(n_qubits)]


def ideal_prep_state(prep, rho0: np.ndarray) -> np.ndarray:
    """R_s rho0 R_s^dagger with perfect rotation pulses."""
    if isinstance(prep, str):
        prep = parse_label(prep)
    u = prep_unitary(prep)
    if u.shape != rho0.shape:
        raise ValueError("label length does not match state dimension")
    return u @ rho0 @ dagger(u)


def prep_states(rho0: np.ndarray, n_qubits: int) -> np.ndarray:
    return np.array([ideal_prep_state(p, rho0) for p in enumerate_preps(n_qubits)])


def effective_povms(povm: np.ndarray, n_qubits: int) -> np.ndarray:
    """R_b^dagger M_o R_b for every basis, shape (n_bases, n_outcomes, d, d)."""
    out = []
    for b in enumerate_bases(n_qubits):
        u = basis_unitary(b)
        out.append(np.einsum("ji,ojk,kl->oil", u.conj(), povm, u))
    return np.array(out)


def _check_probs(p: np.ndarray) -> np.ndarray:
    if np.any(p < -1e-9) or np.any(p > 1 + 1e-9) or np.any(~np.isfinite(p)):
        raise InvalidModelError(
            f"outcome probabilities outside [0, 1]: min {np.nanmin(p):.3g}, max {np.nanmax(p):.3g}"
        )
    p = np.clip(p, 0, None)
    return p / p.sum(axis=-1, keepdims=True)


def _draw(probs, times, n_qubits, shots, seed) -> Dataset:
    """probs[t, prep, basis, outcome] -> multinomial records."""
    preps = enumerate_preps(n_qubits)
    bases = enumerate_bases(n_qubits)
    outcomes = bitstrings(n_qubits)
    records = []
    k = 0
    for ti, t in enumerate(times):
        for si, s in enumerate(preps):
            for bi, b in enumerate(bases):
                # independent stream per sequence index; order-independent
                rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
                draw = rng.multinomial(shots, probs[ti, si, bi])
                records.append(SequenceRecord(s, b, float(t), {o: int(c) for o, c in zip(outcomes, draw)}))
                k += 1
    return Dataset(n_qubits, records, shots)


def _check_times(times_us) -> list[float]:
    times = sorted(float(t) for t in times_us)
    if not times or times[0] != 0.0:
        raise ValueError("time grid must include t = 0")
    if len(set(times)) != len(times):
        raise ValueError("duplicate times")
    return times


def model_probabilities(truth: LindbladModel, spam: SpamTruth, times_us) -> np.ndarray:
    n = n_qubits_of(spam.dim)
    props = dynamics.propagators(dynamics.liouvillian(truth), times_us)
    states = dynamics.vec(prep_states(spam.rho0, n))
    final = dynamics.unvec(np.einsum("tij,sj->tsi", props, states))
    eff = effective_povms(spam.povm, n)
    return np.einsum("tsij,boji->tsbo", final, eff).real


def channel_probabilities(channels, spam: SpamTruth) -> np.ndarray:
    n = n_qubits_of(spam.dim)
    states = prep_states(spam.rho0, n)
    eff = effective_povms(spam.povm, n)
    final = np.array([dynamics.kraus_apply(k, states) for k in channels])
    return np.einsum("tsij,boji->tsbo", final, eff).real


def generate(truth: LindbladModel, spam: SpamTruth, times_us, shots: int = DEFAULT_SHOTS,
             seed: int = 0) -> Dataset:
    """Simulate the full protocol under a Lindblad model."""
    if shots < 1:
        raise ValueError("shots must be positive")
    if truth.dim != spam.dim:
        raise ValueError("model and SPAM dimensions differ")
    times = _check_times(times_us)
    probs = _check_probs(model_probabilities(truth, spam, times))
    return _draw(probs, times, n_qubits_of(spam.dim), shots, seed)


def generate_from_channels(channels: list[KrausSet], spam: SpamTruth, shots: int = DEFAULT_SHOTS,
                           seed: int = 0) -> Dataset:
    """Simulate the protocol with an arbitrary channel per delay time."""
    times = _check_times([k.time_us for k in channels])
    channels = sorted(channels, key=lambda k: k.time_us)
    probs = _check_probs(channel_probabilities(channels, spam))
    return _draw(probs, times, n_qubits_of(spam.dim), shots, seed)


# ---------------------------------------------------------------------------
# Filtering


@dataclass(frozen=True)
class RecordFilter:
    """Matches records whose labels fit the glob patterns and time.

    ``None`` fields match anything; a record is excluded when every given
    field matches.
    """

    prep: str | None = None
    basis: str | None = None
    time_us: float | None = None

    def matches(self, r: SequenceRecord) -> bool:
        if self.prep is not None and not fnmatch.fnmatchcase(label_str(r.prep), self.prep):
            return False
        if self.basis is not None and not fnmatch.fnmatchcase(label_str(r.basis), self.basis):
            return False
        if self.time_us is not None and not math.isclose(r.time_us, self.time_us, rel_tol=1e-9, abs_tol=1e-12):
            return False
        return True


def parse_filter(text: str) -> RecordFilter:
    """Parse ``"prep=-i,basis=y"`` style filter strings."""
    fields = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"malformed filter term {part!r}")
        key = key.strip()
        if key == "prep":
            fields["prep"] = value.strip()
        elif key == "basis":
            fields["basis"] = value.strip()
        elif key in ("time", "time_us", "t"):
            fields["time_us"] = float(value)
        else:
            raise ValueError(f"unknown filter key {key!r}")
    if not fields:
        raise ValueError(f"empty filter {text!r}")
    return RecordFilter(**fields)


def exclude(data: Dataset, filters) -> Dataset:
    filters = [parse_filter(f) if isinstance(f, str) else f for f in filters]
    if not filters:
        return data
    kept = [r for r in data.records if not any(f.matches(r) for f in filters)]
    if not kept:
        raise ValueError("filters removed every record")
    return Dataset(data.n_qubits, kept, data.shots_nominal)


def marginal(data: Dataset, keep: int, other_prep: str = "0", other_basis: str = "z") -> Dataset:
    """Single-qubit dataset for qubit ``keep`` of a two-qubit dataset.

    Only records with the other qubit prepared in ``other_prep`` and measured
    in ``other_basis`` are used; counts are summed over its outcomes.
    """
    if data.n_qubits != 2:
        raise ValueError("marginal needs a two-qubit dataset")
    other = 1 - keep
    recs = []
    for r in data.records:
        if r.prep[other] != other_prep or r.basis[other] != other_basis:
            continue
        counts = {"0": 0, "1": 0}
        for bits, c in r.counts.items():
            counts[bits[keep]] += c
        recs.append(SequenceRecord((r.prep[keep],), (r.basis[keep],), r.time_us, counts))
    if not recs:
        raise ValueError("no records match the requested neighbour labels")
    return Dataset(1, recs, data.shots_nominal)


def time_grid(spec: str) -> list[float]:
    """Parse ``lin:start:stop:n``, ``log:tmin:tmax:n`` or a comma list (all in us).

    The logarithmic preset prepends t = 0 to ``n - 1`` log-spaced points.
    """
    spec = spec.strip()
    if spec.startswith("lin:"):
        start, stop, n = spec[4:].split(":")
        return [float(t) for t in np.linspace(float(start), float(stop), int(n))]
    if spec.startswith("log:"):
        tmin, tmax, n = spec[4:].split(":")
        return [0.0] + [float(t) for t in np.geomspace(float(tmin), float(tmax), int(n) - 1)]
    return [float(t) for t in spec.split(",") if t.strip()]
