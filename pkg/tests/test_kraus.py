import numpy as np
import pytest

from lindtomo import dynamics as dy
from lindtomo import quantum as q
from lindtomo import synthdata as sd
from lindtomo.kraus import (
    KrausEstimate,
    KrausFit,
    choi_rank,
    fit_kraus,
    fit_kraus_at,
    loglike_kraus,
    physics_start,
)
from lindtomo.optimizer import FitConfig
from lindtomo.prefit import prefit_model
from lindtomo.spam import loglike_spam

import oracles
from conftest import known_spam, noisy_spam, qubit_truth

OMEGA_ZZ = 2 * np.pi * 0.416


def _identity(dim, t=0.0):
    return dy.KrausSet(np.eye(dim, dtype=complex)[None], t)


def test_identity_at_zero_matches_spam_loglike(qubit_data):
    spam = known_spam(noisy_spam())
    assert loglike_kraus(_identity(2), spam, qubit_data, 0.0) == pytest.approx(
        loglike_spam(spam.rho0, spam.povm, qubit_data.at_time(0.0)), rel=1e-12)


def test_truth_channel_beats_identity(qubit_data):
    spam = known_spam(noisy_spam())
    for t in qubit_data.times_us[1:]:
        truth = dy.kraus_from_choi(dy.choi_of(qubit_truth(), t), t)
        assert loglike_kraus(truth, spam, qubit_data) > loglike_kraus(_identity(2, t), spam, qubit_data)


def test_loglike_dimension_mismatch(qubit_data):
    with pytest.raises(ValueError):
        loglike_kraus(_identity(4), known_spam(noisy_spam()), qubit_data, 0.0)


def test_zero_duration_fit_is_identity():
    spam_t = sd.SpamTruth.ideal(1)
    # near-noiseless counts stand in for ideal data
    data = sd.generate(qubit_truth(), spam_t, [0.0], 10**5, 2)
    fit = fit_kraus_at(data, known_spam(spam_t), 0.0)
    assert dy.diamond_distance(fit.choi, dy.choi_from_kraus(_identity(2))) <= 0.02


def test_recovery_at_ten_us():
    spam_t = noisy_spam()
    spam = known_spam(spam_t)
    t = 10.0
    truth = dy.choi_of(qubit_truth(), t)
    dists = []
    for seed in range(3):
        data = sd.generate(qubit_truth(), spam_t, [0.0, t], 1000, seed)
        fit = fit_kraus(data, spam).fits[-1]
        dists.append(dy.diamond_distance(fit.choi, truth))
    # shot noise at 1000 shots occasionally pushes one seed over; the typical fit must not
    assert np.median(dists) <= 0.1, dists


def test_fit_properties(qubit_data):
    spam = known_spam(noisy_spam())
    est = fit_kraus(qubit_data, spam, FitConfig(n_starts=2))
    assert est.ok and est.times_us == qubit_data.times_us
    model = prefit_model(qubit_data)[0]
    for f in est.fits:
        assert len(f.kraus.operators) == 4
        comp = np.einsum("kji,kjl->il", f.kraus.operators.conj(), f.kraus.operators)
        assert np.allclose(comp, np.eye(2), atol=1e-6)
        assert np.linalg.eigvalsh(f.choi).min() >= -1e-6
        assert f.loglike >= f.start_loglike - 1e-9
        # start 0 is the prefit channel
        start = dy.KrausSet(physics_start(model, f.time_us), f.time_us)
        assert f.start_loglike == pytest.approx(loglike_kraus(start, spam, qubit_data), rel=1e-6)
        assert 1 <= choi_rank(f.kraus) <= 4


def test_warm_start_never_worse(qubit_data):
    spam = known_spam(noisy_spam())
    cold = fit_kraus(qubit_data, spam, FitConfig(n_starts=1))
    warm = fit_kraus(qubit_data, spam, FitConfig(n_starts=1), warm_start=True)
    for a, b in zip(cold.fits, warm.fits):
        assert b.loglike >= a.loglike - 1e-3


def test_parallel_times_match_serial(qubit_data):
    spam = known_spam(noisy_spam())
    serial = fit_kraus(qubit_data, spam, FitConfig(n_starts=2))
    parallel = fit_kraus(qubit_data, spam, FitConfig(n_starts=2, workers=3))
    for a, b in zip(serial.fits, parallel.fits):
        # compare channels, never raw Kraus operators
        assert np.max(np.abs(a.choi - b.choi)) < 1e-6


def test_two_qubit_zz_entangling_detected():
    t = np.pi / OMEGA_ZZ
    h = OMEGA_ZZ / 4 * q.tensor(q.SZ, q.SZ)
    truth = dy.LindbladModel(h, np.zeros((15, 15)))
    spam_t = sd.SpamTruth.ideal(2)
    data = sd.generate(truth, spam_t, [0.0, t], 2000, 3)
    est = fit_kraus(data, known_spam(spam_t), FitConfig(n_starts=2))
    fit = est.fits[-1]
    assert len(fit.kraus.operators) == 16
    exact = oracles.choi_negativity(dy.choi_of(truth, t))
    assert exact == pytest.approx(2.0, abs=1e-9)
    assert oracles.choi_negativity(fit.choi) > 0.5
    assert oracles.choi_negativity(est.fits[0].choi) < oracles.choi_negativity(fit.choi)


def test_estimate_time_order():
    k = _identity(2)
    with pytest.raises(ValueError):
        KrausEstimate([KrausFit(2.0, k, 0.0), KrausFit(1.0, k, 0.0)])
    est = KrausEstimate.from_channels([_identity(2, 3.0), _identity(2, 1.0)])
    assert est.times_us == [1.0, 3.0]
