"""Versioned JSON documents and CSV tables.

Every document carries ``version``, ``kind`` and a ``manifest``.  Complex
matrices are nested lists whose leaves are ``[re, im]`` pairs; non-finite
likelihoods are written as the strings "nan", "inf" and "-inf".
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import JumpDecomposition, KrausSet, LindbladModel, choi_from_kraus
from .kraus import KrausEstimate, KrausFit
from .lindblad import LindbladEstimate
from .markov import MarkovReport
from .optimizer import FitConfig, FitReport
from .spam import SpamEstimate
from .synthdata import Dataset, SequenceRecord, SpamTruth, label_str, parse_label

SCHEMA_VERSION = 1
KINDS = ("dataset", "spam", "model", "lindblad", "kraus", "markov", "report")


class SchemaError(ValueError):
    """Malformed or unsupported document."""


# ---------------------------------------------------------------------------
# primitives


def encode_matrix(a) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_matrix(x) -> np.ndarray:
    try:
        arr = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad complex array: {exc}") from None
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise SchemaError("complex arrays need [re, im] leaves")
    out = np.empty(arr.shape[:-1], dtype=complex)
    out.real, out.imag = arr[..., 0], arr[..., 1]  # keeps signed zeros
    return out


def _num(x):
    """JSON-safe float: non-finite values become the strings "nan", "inf", "-inf"."""
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _float(x):
    return float("nan") if x is None else float(x)


def _json_safe(x):
    """Recursively replace non-finite floats in plain containers."""
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return _num(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _report_out(r: FitReport | None):
    if r is None:
        return None
    d = r.to_dict()
    for key in ("best_loglike", "wall_time_s"):
        d[key] = _num(d[key])
    for key in ("start_loglikes", "final_loglikes", "params"):
        d[key] = [_num(v) for v in d[key]]
    return d


def _report_in(d) -> FitReport | None:
    if d is None:
        return None
    d = dict(d)
    for key in ("best_loglike", "wall_time_s"):
        d[key] = _float(d[key])
    for key in ("start_loglikes", "final_loglikes", "params"):
        d[key] = [_float(v) for v in d.get(key, [])]
    return FitReport.from_dict(d)


def config_hash(config) -> str:
    d = config.__dict__ if isinstance(config, FitConfig) else (config or {})
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]


def manifest(command: str, inputs=(), config=None, seed=None, wall_time_s: float | None = None) -> dict:
    """Provenance block embedded in every output file.  ``created`` is the only clock field."""
    return {
        "command": command,
        "inputs": [str(p) for p in inputs],
        "config_hash": config_hash(config),
        "seed": seed,
        "toolkit_version": __version__,
        "wall_time_s": wall_time_s,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }


# ---------------------------------------------------------------------------
# per-kind payloads


def dataset_to_dict(data: Dataset) -> dict:
    return {
        "n_qubits": data.n_qubits,
        "times_us": [float(t) for t in data.times_us],
        "shots_nominal": data.shots_nominal,
        "records": [
            {"prep": label_str(r.prep), "basis": label_str(r.basis), "time_us": float(r.time_us),
             "shots": int(r.shots), "counts": {k: int(v) for k, v in r.counts.items()}}
            for r in data.records
        ],
    }


def dataset_from_dict(d: dict) -> Dataset:
    records = [SequenceRecord(parse_label(r["prep"]), parse_label(r["basis"]), float(r["time_us"]),
                              {str(k): int(v) for k, v in r["counts"].items()}) for r in d["records"]]
    for raw, rec in zip(d["records"], records):
        if "shots" in raw and int(raw["shots"]) != rec.shots:
            raise SchemaError(f"record shots {raw['shots']} differ from its count total {rec.shots}")
    data = Dataset(int(d["n_qubits"]), records, d.get("shots_nominal"))
    if "times_us" in d and [float(t) for t in d["times_us"]] != data.times_us:
        raise SchemaError("times_us does not match the record times")
    return data


def spam_to_dict(s) -> dict:
    out = {"rho0": encode_matrix(s.rho0), "povm": encode_matrix(s.povm)}
    if isinstance(s, SpamEstimate):
        out.update(loglike=_num(s.loglike), report=_report_out(s.report), gauge=s.gauge)
    return out


def spam_from_dict(d: dict) -> SpamEstimate:
    return SpamEstimate(decode_matrix(d["rho0"]), decode_matrix(d["povm"]), _float(d.get("loglike")),
                        _report_in(d.get("report")), d.get("gauge"))


def spam_truth_from_dict(d: dict) -> SpamTruth:
    return SpamTruth(decode_matrix(d["rho0"]), decode_matrix(d["povm"]))


BASIS_NAME = "pauli-tensor"


def model_to_dict(m: LindbladModel) -> dict:
    return {"dim": m.dim, "hamiltonian": encode_matrix(m.hamiltonian),
            "lindblad_matrix": encode_matrix(m.lindblad_matrix), "basis": BASIS_NAME}


def _check_model_fields(d: dict, dim: int):
    if d.get("basis", BASIS_NAME) != BASIS_NAME:
        raise SchemaError(f"unsupported operator basis {d['basis']!r}")
    if "dim" in d and int(d["dim"]) != dim:
        raise SchemaError(f"dim {d['dim']} does not match the {dim}x{dim} matrices")


def model_from_dict(d: dict) -> LindbladModel:
    """Either a Lindblad matrix or ``rates`` with ``jumps`` alongside the Hamiltonian."""
    h = decode_matrix(d["hamiltonian"])
    _check_model_fields(d, h.shape[0])
    if "lindblad_matrix" in d:
        return LindbladModel(h, decode_matrix(d["lindblad_matrix"]))
    if "jumps" in d and "rates" in d:
        return LindbladModel.from_jumps(h, [float(r) for r in d["rates"]], decode_matrix(d["jumps"]))
    raise SchemaError("model needs lindblad_matrix or rates + jumps")


def lindblad_to_dict(e: LindbladEstimate) -> dict:
    return {
        **model_to_dict(e.model),
        "mode": e.mode,
        "loglike": _num(e.loglike),
        "jump_rates": [float(r) for r in e.jumps.rates],
        "jump_ops": encode_matrix(e.jumps.jump_ops),
        "rates": None if e.rates is None else [float(r) for r in e.rates],
        "report": _report_out(e.report),
    }


def lindblad_from_dict(d: dict) -> LindbladEstimate:
    model = LindbladModel(decode_matrix(d["hamiltonian"]), decode_matrix(d["lindblad_matrix"]))
    _check_model_fields(d, model.dim)
    ops = decode_matrix(d["jump_ops"]) if d["jump_ops"] else np.zeros((0, model.dim, model.dim), dtype=complex)
    jumps = JumpDecomposition(np.array(d["jump_rates"], dtype=float), ops)
    rates = None if d.get("rates") is None else np.array(d["rates"], dtype=float)
    return LindbladEstimate(model, jumps, _float(d.get("loglike")), d["mode"], _report_in(d.get("report")), rates)


def kraus_to_dict(k: KrausEstimate) -> dict:
    return {
        "fits": [{"time_us": f.time_us, "operators": encode_matrix(f.kraus.operators),
                  "choi": encode_matrix(choi_from_kraus(f.kraus)), "loglike": _num(f.loglike),
                  "start_loglike": None if f.start_loglike is None else _num(f.start_loglike),
                  "report": _report_out(f.report)} for f in k.fits],
        "failed": [[float(t), str(msg)] for t, msg in k.failed],
    }


def kraus_from_dict(d: dict) -> KrausEstimate:
    fits = []
    for f in d["fits"]:
        t = float(f["time_us"])
        start = f.get("start_loglike")
        k = KrausSet(decode_matrix(f["operators"]), t)
        if "choi" in f and np.max(np.abs(decode_matrix(f["choi"]) - choi_from_kraus(k))) > 1e-8:
            raise SchemaError(f"stored Choi matrix at t = {t} does not match the Kraus operators")
        fits.append(KrausFit(t, k, _float(f.get("loglike")),
                             _report_in(f.get("report")), None if start is None else _float(start)))
    return KrausEstimate(fits, [(float(t), msg) for t, msg in d.get("failed", [])])


def markov_to_dict(r: MarkovReport) -> dict:
    return r.to_dict()


def markov_from_dict(d: dict) -> MarkovReport:
    return MarkovReport(
        float(d["n_markov"]), tuple(d["best_pair"]),
        [(float(t), float(v)) for t, v in d["distance_series"]],
        [((float(a), float(b)), float(v)) for a, b, v in d["increments"]],
        d.get("noise_floor"),
    )


_ENCODERS = {
    Dataset: ("dataset", dataset_to_dict),
    SpamEstimate: ("spam", spam_to_dict),
    SpamTruth: ("spam", spam_to_dict),
    LindbladModel: ("model", model_to_dict),
    LindbladEstimate: ("lindblad", lindblad_to_dict),
    KrausEstimate: ("kraus", kraus_to_dict),
    MarkovReport: ("markov", markov_to_dict),
}

_DECODERS = {
    "dataset": dataset_from_dict,
    "spam": spam_from_dict,
    "model": model_from_dict,
    "lindblad": lindblad_from_dict,
    "kraus": kraus_from_dict,
    "markov": markov_from_dict,
    "report": lambda d: d,
}


# ---------------------------------------------------------------------------
# documents


def to_document(obj, manifest_block: dict | None = None) -> dict:
    """Wrap an object (or a plain report dict) as a versioned document."""
    if isinstance(obj, dict):
        kind, payload = "report", _json_safe(obj)
    else:
        try:
            kind, enc = _ENCODERS[type(obj)]
        except KeyError:
            raise TypeError(f"no document schema for {type(obj).__name__}") from None
        payload = enc(obj)
    return {"version": SCHEMA_VERSION, "kind": kind, "manifest": manifest_block or manifest("library"),
            "data": payload}


def from_document(doc: dict, expect: str | None = None):
    if not isinstance(doc, dict):
        raise SchemaError("document must be a JSON object")
    if doc.get("version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported document version {doc.get('version')!r}")
    kind = doc.get("kind")
    if kind not in _DECODERS:
        raise SchemaError(f"unknown document kind {kind!r}")
    if expect is not None and kind != expect:
        raise SchemaError(f"expected a {expect} document, got {kind}")
    try:
        return _DECODERS[kind](doc["data"])
    except SchemaError:
        raise
    except (KeyError, TypeError, IndexError) as exc:
        raise SchemaError(f"malformed {kind} document: {exc!r}") from None


def dumps(obj, manifest_block: dict | None = None) -> str:
    return json.dumps(to_document(obj, manifest_block), indent=1, sort_keys=True, allow_nan=False) + "\n"


def write(path, obj, manifest_block: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj, manifest_block), encoding="utf-8")
    return path


def read_document(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None


def read(path, expect: str | None = None):
    return from_document(read_document(path), expect)


def read_spam_truth(path) -> SpamTruth:
    doc = read_document(path)
    if doc.get("kind") != "spam" or doc.get("version") != SCHEMA_VERSION:
        raise SchemaError("expected a spam document")
    try:
        return spam_truth_from_dict(doc["data"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed spam document: {exc!r}") from None


def read_config(path) -> FitConfig:
    """Optimizer settings as a flat JSON object; an optional ``version`` key is ignored."""
    doc = read_document(path)
    if not isinstance(doc, dict):
        raise SchemaError("config must be a JSON object")
    doc = {k: v for k, v in doc.items() if k != "version"}
    try:
        return FitConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad config: {exc}") from None


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, header, rows, manifest_block: dict | None = None) -> Path:
    """Comma-separated table; the manifest goes on a leading ``#`` comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        if manifest_block is not None:
            fh.write("# " + json.dumps(manifest_block, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path) -> tuple[list, list]:
    """Header and rows; numeric cells are converted to float."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = []
    for row in reader:
        out = []
        for v in row:
            try:
                out.append(float(v))
            except ValueError:
                out.append(v)
        rows.append(out)
    return header, rows
