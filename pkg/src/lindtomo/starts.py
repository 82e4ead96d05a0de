"""Physics-informed starting points for every estimator, in one place."""
from __future__ import annotations

import numpy as np

from .kraus import _KrausObjective, _slice_counts, kraus_starts, physics_start
from .lindblad import _LTObjective, lindblad_starts
from .prefit import prefit_model
from .spam import SpamEstimate, spam_starts
from .synthdata import Dataset

KINDS = ("spam", "kraus", "lindblad")


def default_starts(kind: str, n: int, seed: int, data: Dataset, spam: SpamEstimate | None = None,
                   t: float | None = None, mode: str = "free") -> list[np.ndarray]:
    """Packed starting points: start 0 is the physics guess, the rest perturb it.

    :param kind: "spam", "kraus" or "lindblad"
    :param data: dataset the estimator will be fitted to (supplies the coarse pre-fit)
    :param spam: SPAM estimate, needed for "kraus" and "lindblad"
    :param t: fit time for "kraus"
    :param mode: "free" or "restricted" for "lindblad"
    """
    if n < 1:
        raise ValueError("need at least one start")
    if kind == "spam":
        return spam_starts(data.n_qubits, n, seed)
    if kind not in KINDS:
        raise ValueError(f"unknown estimator kind {kind!r}")
    if spam is None:
        raise ValueError(f"{kind} starts need a SPAM estimate")
    model, rates = prefit_model(data)
    if kind == "kraus":
        if t is None:
            raise ValueError("kraus starts need a time")
        obj = _KrausObjective(_slice_counts(data, t), spam, data.n_qubits)
        return kraus_starts(obj.pack(physics_start(model, t)), n, seed)
    obj = _LTObjective(data, spam, mode)
    return lindblad_starts(obj.encode(model, rates if mode == "restricted" else None), n, seed)
