"""``lindtomo`` command line: simulate datasets, fit estimates, analyze them.

Every command writes a JSON document (with an embedded run manifest), CSV
tables next to it and, unless ``--no-plots`` is given, PNG figures.

Exit codes: 0 ok, 2 schema or usage error, 3 invalid model, 4 missing
dependency or input, 5 optimizer or solver failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, dynamics, fileio, kraus, lindblad, markov, reference, spam, synthdata
from .dynamics import DegenerateSteadyStateError, DiamondNormError, InvalidModelError, LindbladModel
from .fileio import SchemaError
from .optimizer import FitConfig, OptimizationError
from .quantum import DimensionError, n_qubits_of, trace_distance

EXIT_OK, EXIT_SCHEMA, EXIT_MODEL, EXIT_DEPENDENCY, EXIT_OPTIMIZER = 0, 2, 3, 4, 5
THREADS_ENV = "LINDTOMO_THREADS"

log = logging.getLogger("lindtomo")


class MissingDependency(Exception):
    """A required input file or flag is absent."""


# ---------------------------------------------------------------------------
# helpers


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SchemaError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _need(path, flag: str) -> Path:
    if path is None:
        raise MissingDependency(f"{flag} is required")
    path = Path(path)
    if not path.exists():
        raise MissingDependency(f"{flag}: {path} does not exist")
    return path


def _read(path, flag: str, expect: str | None = None):
    return fileio.read(_need(path, flag), expect)


def _read_model(path, flag: str) -> LindbladModel:
    doc = fileio.read_document(_need(path, flag))
    obj = fileio.from_document(doc)
    if isinstance(obj, lindblad.LindbladEstimate):
        return obj.model
    if isinstance(obj, LindbladModel):
        return obj
    raise SchemaError(f"{flag}: expected a model or lindblad document, got {doc.get('kind')}")


def _config(args) -> FitConfig:
    cfg = fileio.read_config(_need(args.config, "--config")) if args.config else FitConfig()
    overrides = {"workers": _threads(args)}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return FitConfig(**{**cfg.__dict__, **overrides})


def _side(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def _manifest(command, inputs, config=None, seed=None, start=None):
    wall = None if start is None else round(time.perf_counter() - start, 3)
    return fileio.manifest(command, [p for p in inputs if p is not None], config, seed, wall)


# ---------------------------------------------------------------------------
# simulate


def _read_truth(path):
    try:
        return fileio.read_spam_truth(_need(path, "--spam"))
    except SchemaError:
        raise
    except ValueError as exc:  # parsed, but not a state and POVM
        raise InvalidModelError(f"--spam: {exc}") from None


def cmd_simulate(args) -> int:
    start = time.perf_counter()
    model = _read_model(args.model, "--model")
    model.validate()
    n = n_qubits_of(model.dim)
    if args.qubits is not None and args.qubits != n:
        raise InvalidModelError(f"model acts on {n} qubit(s), --qubits says {args.qubits}")
    truth = _read_truth(args.spam) if args.spam else synthdata.SpamTruth.ideal(n)
    if truth.dim != model.dim:
        raise InvalidModelError("SPAM and model dimensions differ")
    times = synthdata.time_grid(args.times)
    data = synthdata.generate(model, truth, times, shots=args.shots, seed=args.seed)
    out = Path(args.out)
    man = _manifest("simulate", [args.model, args.spam], {"times": args.times, "shots": args.shots},
                    args.seed, start)
    fileio.write(out, data, man)
    outcomes = synthdata.bitstrings(n)
    rows = [[r.time_us, synthdata.label_str(r.prep), synthdata.label_str(r.basis)] + [r.counts[o] for o in outcomes]
            for r in data.records]
    fileio.write_csv(_side(out, ".csv"), ["time_us", "prep", "basis"] + outcomes, rows, man)
    if not args.no_plots:
        from . import plotting

        t, preps, bases, counts = data.tensor()
        freq = counts[..., 0] / np.maximum(counts.sum(-1), 1)
        probs = synthdata.model_probabilities(model, truth, t)[..., 0]
        sel = [(i, 0) for i in range(len(preps))]
        labels = [f"{synthdata.label_str(preps[i])}/{synthdata.label_str(bases[j])}" for i, j in sel]
        plotting.plot_populations(t, np.array([freq[:, i, j] for i, j in sel]).T,
                                  np.array([probs[:, i, j] for i, j in sel]).T, labels,
                                  _side(out, ".png"), "simulated, z basis")
    print(f"simulate: {len(data.records)} records, {len(times)} times -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def _load_data(args):
    data = _read(args.data, "--data", "dataset")
    if args.exclude:
        before = len(data.records)
        data = synthdata.exclude(data, [synthdata.parse_filter(f) for f in args.exclude])
        log.info("excluded %d of %d records", before - len(data.records), before)
    return data


def cmd_fit(args) -> int:
    start = time.perf_counter()
    data = _load_data(args)
    cfg = _config(args)
    out = Path(args.out)
    inputs = [args.data, args.spam, args.config]
    if args.stage == "spam":
        est = spam.fit_spam(data, cfg)
        man = _manifest("fit spam", inputs, cfg, cfg.seed, start)
        fileio.write(out, est, man)
        rows = [["rho0", i, j, v.real, v.imag] for (i, j), v in np.ndenumerate(est.rho0)]
        rows += [[f"M{k}", i, j, v.real, v.imag] for k, m in enumerate(est.povm) for (i, j), v in np.ndenumerate(m)]
        fileio.write_csv(_side(out, ".csv"), ["matrix", "row", "col", "re", "im"], rows, man)
        if not args.no_plots:
            from . import plotting

            plotting.plot_matrix(est.rho0, _side(out, "_rho0.png"), "rho0")
        print(f"fit spam: loglike {est.loglike:.4f} -> {out}")
        return EXIT_OK

    sp = _read(args.spam, "--spam", "spam")
    if sp.dim != data.dim:
        raise InvalidModelError("SPAM estimate and dataset dimensions differ")
    if args.stage == "kraus":
        est = kraus.fit_kraus(data, sp, cfg, warm_start=args.warm_start)
        man = _manifest("fit kraus", inputs, cfg, cfg.seed, start)
        fileio.write(out, est, man)
        rows = [[f.time_us, f.loglike, f.start_loglike, f.kraus.completeness_error(), kraus.choi_rank(f.kraus)]
                for f in est.fits]
        fileio.write_csv(_side(out, ".csv"), ["time_us", "loglike", "start_loglike", "completeness_error",
                                              "choi_rank"], rows, man)
        if not args.no_plots and len(est.fits) >= 2:
            from . import plotting

            report = markov.n_markov(est)
            plotting.plot_markov(report, _side(out, "_markov.png"))
        for t, msg in est.failed:
            print(f"fit kraus: t = {t} failed: {msg}", file=sys.stderr)
        print(f"fit kraus: {len(est.fits)} times -> {out}")
        return EXIT_OK if est.ok else EXIT_OPTIMIZER

    est = lindblad.fit_lindblad(data, sp, args.mode, cfg)
    man = _manifest(f"fit lindblad {args.mode}", inputs, cfg, cfg.seed, start)
    fileio.write(out, est, man)
    rows = [[k, r] for k, r in enumerate(est.jumps.rates)]
    fileio.write_csv(_side(out, "_rates.csv"), ["jump", "rate_mhz"], rows, man)
    dev = lindblad.sequence_deviance(est.model, sp, data)
    fileio.write_csv(_side(out, "_deviance.csv"), ["prep", "basis", "reduced_deviance"],
                     [[p, b, v] for (p, b), v in dev.items()], man)
    if not args.no_plots:
        from . import plotting

        t, p, counts = lindblad.predicted_probabilities(est.model, sp, data)
        freq = counts[..., 0] / np.maximum(counts.sum(-1), 1)
        preps = synthdata.enumerate_preps(data.n_qubits)
        bases = synthdata.enumerate_bases(data.n_qubits)
        sel = [(i, j) for i in range(len(preps)) for j in range(len(bases))
               if counts[:, i, j].sum() > 0][:18]
        labels = [f"{synthdata.label_str(preps[i])}/{synthdata.label_str(bases[j])}" for i, j in sel]
        plotting.plot_populations(t, np.array([freq[:, i, j] for i, j in sel]).T,
                                  np.array([p[:, i, j, 0] for i, j in sel]).T, labels,
                                  _side(out, ".png"), f"{args.mode} fit")
    print(f"fit lindblad ({args.mode}): loglike {est.loglike:.4f}, rates "
          + ", ".join(f"{r:.4f}" for r in est.jumps.rates) + f" -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze


def _published_spam():
    return spam.SpamEstimate(reference.rho0_ab(), reference.povm_ab(), float("nan"))


def _as_estimate(model, mode):
    return lindblad.LindbladEstimate(model, dynamics.jumps_from_lindblad(model), float("nan"), mode)


def _analyze_markov(args, out, start):
    if args.kraus:
        est = _read(args.kraus, "--kraus", "kraus")
        sp = _read(args.spam, "--spam", "spam") if args.spam else None
    else:
        data = _read(args.data, "--data (or --kraus)", "dataset")
        sp = _read(args.spam, "--spam", "spam")
        est = kraus.fit_kraus(data, sp, _config(args))
    if (args.use_spam_preps or args.resamples) and sp is None:
        raise MissingDependency("--spam is required for --use-spam-preps and --resamples")
    report = markov.n_markov(est, spam=sp if args.use_spam_preps else None, workers=_threads(args))
    if args.resamples:
        report.noise_floor = markov.noise_floor(est, sp, args.shots, args.resamples, seed=args.seed or 0,
                                                config=_config(args))
    man = _manifest("analyze markov", [args.kraus, args.data, args.spam], None, args.seed, start)
    fileio.write(out, report, man)
    inc = [0.0] + [v for _, v in report.increments]
    fileio.write_csv(_side(out, ".csv"), ["time_us", "trace_distance", "increment"],
                     [[t, d, i] for (t, d), i in zip(report.distance_series, inc)], man)
    if not args.no_plots:
        from . import plotting

        plotting.plot_markov(report, _side(out, ".png"))
    floor = "" if report.noise_floor is None else f", noise floor {report.noise_floor:.4f}"
    print(f"analyze markov: N = {report.n_markov:.6f} for {report.best_pair}{floor} -> {out}")


def _device(args):
    vals = (args.g, args.eta_a, args.eta_b, args.delta)
    if all(v is None for v in vals):
        return None
    if any(v is None for v in vals):
        raise MissingDependency("--g, --eta-a, --eta-b and --delta are required together")
    return analysis.DeviceParams(*vals)


def _analyze_zz(args, out, start):
    rows = []
    models = []
    if args.published:
        models.append(("published_free", reference.free_model().hamiltonian))
        d = reference.DEVICE
        dev = analysis.DeviceParams.from_frequencies(d["g_mhz"], d["eta_a_mhz"], d["eta_b_mhz"],
                                                     d["freq_a_mhz"], d["freq_b_mhz"])
    else:
        dev = None
    if args.model:
        models.append(("model", _read_model(args.model, "--model").hamiltonian))
    dev = _device(args) or dev
    if not models and dev is None:
        raise MissingDependency("zz needs --model, device parameters or --published")
    for name, h in models:
        z = analysis.zz_from_hamiltonian(h)
        rows.append([name, abs(z), z])
    if dev is not None:
        rows.append(["device", analysis.zz_from_device(dev), analysis.zz_from_device_signed(dev)])
    man = _manifest("analyze zz", [args.model], None, None, start)
    fileio.write(out, {"zz": [{"source": s, "zz_mhz": a, "signed_mhz": b} for s, a, b in rows]}, man)
    fileio.write_csv(_side(out, ".csv"), ["source", "zz_mhz", "signed_mhz"], rows, man)
    for s, a, b in rows:
        print(f"analyze zz: {s}: {a * 1e3:.1f} kHz (signed {b * 1e3:.1f})")


def _analyze_compare(args, out, start):
    if args.published:
        free = _as_estimate(reference.free_model(), "free")
        restricted = _as_estimate(reference.restricted_model(), "restricted")
        sp = _published_spam()
    else:
        free = _read(args.free, "--free", "lindblad")
        restricted = _read(args.restricted, "--restricted", "lindblad")
        sp = _read(args.spam, "--spam", "spam")
    times = synthdata.time_grid(args.times)
    report = analysis.compare_report(free, restricted, sp, times)
    man = _manifest("analyze compare", [args.free, args.restricted, args.spam], {"times": args.times}, None, start)
    fileio.write(out, report, man)
    fileio.write_csv(_side(out, ".csv"), ["time_us", "delta"], report["delta"], man)
    if not args.no_plots:
        from . import plotting

        d = np.array(report["delta"])
        plotting.plot_delta(d[:, 0], d[:, 1], _side(out, ".png"))
    print(f"analyze compare: max delta {report['delta_max']:.4f} over {len(times)} times -> {out}")


def _analyze_steady(args, out, start):
    if args.published:
        model, rho0 = reference.free_model(), reference.rho0_ab()
    else:
        model = _read_model(args.model, "--model")
        rho0 = _read(args.spam, "--spam", "spam").rho0 if args.spam else None
    rho_ss = dynamics.steady_state(model)
    dist = None if rho0 is None else trace_distance(rho_ss, rho0)
    man = _manifest("analyze steady", [args.model, args.spam], None, None, start)
    fileio.write(out, {"rho_ss": fileio.encode_matrix(rho_ss), "distance_to_rho0": dist}, man)
    fileio.write_csv(_side(out, ".csv"), ["level", "population"],
                     [[synthdata.bitstrings(n_qubits_of(model.dim))[k], float(rho_ss[k, k].real)]
                      for k in range(model.dim)], man)
    if not args.no_plots:
        from . import plotting

        plotting.plot_matrix(rho_ss, _side(out, ".png"), "rho_ss")
    msg = "" if dist is None else f", D(rho_ss, rho0) = {dist:.4f}"
    print(f"analyze steady: purity {float(np.trace(rho_ss @ rho_ss).real):.4f}{msg} -> {out}")


def cmd_analyze(args) -> int:
    start = time.perf_counter()
    out = Path(args.out)
    {"markov": _analyze_markov, "zz": _analyze_zz, "compare": _analyze_compare,
     "steady": _analyze_steady}[args.kind](args, out, start)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lindtomo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"lindtomo {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", required=True, help="output JSON document; tables and figures go alongside")
        sp.add_argument("--threads", type=int, default=None, help=f"worker cap (fallback ${THREADS_ENV})")
        sp.add_argument("--no-plots", action="store_true")

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--model", required=True, help="model or lindblad document")
    s.add_argument("--spam", help="spam document (default: ideal preparation and readout)")
    s.add_argument("--qubits", type=int, choices=(1, 2))
    s.add_argument("--times", default="lin:0:80:20", help="lin:a:b:n, log:tmin:tmax:n or a comma list (us)")
    s.add_argument("--shots", type=int, default=synthdata.DEFAULT_SHOTS)
    s.add_argument("--seed", type=int, default=0)
    common(s)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit SPAM, per-time Kraus sets or a Lindbladian")
    f.add_argument("--data", required=True)
    f.add_argument("--stage", choices=("spam", "kraus", "lindblad"), required=True)
    f.add_argument("--mode", choices=lindblad.MODES, default="free")
    f.add_argument("--spam", help="spam estimate (kraus and lindblad stages)")
    f.add_argument("--exclude", action="append", default=[], metavar="FILTER",
                   help="drop records, e.g. prep=-i or prep=-i,basis=y (repeatable)")
    f.add_argument("--config", help="JSON optimizer settings")
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--warm-start", action="store_true", help="kraus: offer the previous time's fit as a start")
    common(f)
    f.set_defaults(func=cmd_fit)

    a = sub.add_parser("analyze", help="markovianity, ZZ shift, model comparison, steady state")
    a.add_argument("--kind", choices=("markov", "zz", "compare", "steady"), required=True)
    a.add_argument("--kraus", help="kraus estimate (markov)")
    a.add_argument("--data", help="dataset to fit Kraus sets from (markov)")
    a.add_argument("--spam", help="spam estimate")
    a.add_argument("--model", help="model or lindblad document (zz, steady)")
    a.add_argument("--free", help="free lindblad estimate (compare)")
    a.add_argument("--restricted", help="restricted lindblad estimate (compare)")
    a.add_argument("--times", default="lin:0:80:20")
    a.add_argument("--published", action="store_true", help="use the bundled reference estimates")
    a.add_argument("--use-spam-preps", action="store_true", help="markov: SPAM-corrected initial states")
    a.add_argument("--resamples", type=int, default=0, help="markov: noise-floor resamples")
    a.add_argument("--shots", type=int, default=synthdata.DEFAULT_SHOTS, help="markov: shots per resample")
    a.add_argument("--config", help="JSON optimizer settings")
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--g", type=float, help="coupling g/2pi (MHz)")
    a.add_argument("--eta-a", type=float, help="anharmonicity of A (MHz)")
    a.add_argument("--eta-b", type=float, help="anharmonicity of B (MHz)")
    a.add_argument("--delta", type=float, help="detuning (omega_A - omega_B)/2pi (MHz)")
    common(a)
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except MissingDependency as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (InvalidModelError, DimensionError, DegenerateSteadyStateError) as exc:
        print(f"error: invalid model: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (OptimizationError, DiamondNormError) as exc:
        print(f"error: optimization failed: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZER
    except (SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
