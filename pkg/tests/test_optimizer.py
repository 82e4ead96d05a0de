import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindtomo import dynamics as dy
from lindtomo import quantum as q
from lindtomo import synthdata as sd
from lindtomo.kraus import _KrausObjective, _slice_counts
from lindtomo.optimizer import (
    FitConfig,
    OptimizationError,
    ParamSpace,
    fd_gradient,
    maximize,
    perturbed_starts,
)
from lindtomo.prefit import prefit_model, qubit_prefit
from lindtomo.starts import default_starts

import oracles
from conftest import known_spam, noisy_spam, qubit_truth


def test_quadratic_bowl():
    target = np.array([0.3, -1.2, 2.0])
    rep = maximize(lambda x: -np.sum((x - target) ** 2), None, [np.zeros(3)])
    assert np.max(np.abs(rep.params - target)) < 1e-6
    assert rep.converged


def test_concave_function_from_random_starts(rng):
    a = rng.normal(size=(4, 4))
    hess = a @ a.T + np.eye(4)
    b = rng.normal(size=4)

    def f(x):
        return -0.5 * x @ hess @ x + b @ x

    starts = [rng.normal(size=4) * 3 for _ in range(5)]
    rep = maximize(f, None, starts, FitConfig(gtol=1e-9))
    assert np.allclose(rep.final_loglikes, rep.best_loglike, atol=1e-6)
    assert np.max(np.abs(rep.params - np.linalg.solve(hess, b))) < 1e-6


def _two_basins(x):
    # global maximum near (2, 0), a lower local one near (-2, 0)
    return (np.exp(-((x[0] - 2) ** 2 + x[1] ** 2)) + 0.6 * np.exp(-((x[0] + 2) ** 2 + x[1] ** 2))
            - 0.01 * (x[0] ** 2 + x[1] ** 2))


def test_two_basins_against_grid_oracle():
    g = np.linspace(-4, 4, 801)
    xx, yy = np.meshgrid(g, g)
    vals = _two_basins(np.array([xx, yy]))
    left, right = vals[:, g < 0].max(), vals[:, g > 0].max()
    rep = maximize(_two_basins, None, [np.array([-2.5, 0.3]), np.array([1.5, -0.4])])
    assert max(rep.final_loglikes) == pytest.approx(right, abs=1e-5)
    assert min(rep.final_loglikes) == pytest.approx(left, abs=1e-5)
    assert rep.best_start == 1
    assert rep.best_loglike - min(rep.final_loglikes) == pytest.approx(right - left, abs=1e-5)


def test_deterministic_reports():
    starts = [np.array([-2.5, 0.3]), np.array([1.5, -0.4]), np.array([0.1, 0.1])]
    a = maximize(_two_basins, None, starts)
    b = maximize(_two_basins, None, starts)
    assert a.best_loglike == b.best_loglike
    assert np.array_equal(a.params, b.params)
    assert a.final_loglikes == b.final_loglikes


def test_parallel_starts_match_serial():
    starts = perturbed_starts(np.array([1.0, 0.5]), 6, seed=3, scale=1.0)
    a = maximize(_two_basins, None, starts, FitConfig(workers=1))
    b = maximize(_two_basins, None, starts, FitConfig(workers=3))
    assert a.best_start == b.best_start
    assert np.array_equal(a.params, b.params)


def test_tie_break_prefers_first_start():
    rep = maximize(lambda x: -np.sum(x**2), None, [np.ones(2), -np.ones(2)])
    assert rep.final_loglikes[0] == rep.final_loglikes[1]
    assert rep.best_start == 0


def test_result_never_below_any_start(rng):
    starts = [rng.normal(size=2) * 3 for _ in range(4)]
    rep = maximize(_two_basins, None, starts)
    assert all(rep.best_loglike >= _two_basins(s) for s in starts)
    assert rep.start_loglikes == pytest.approx([_two_basins(s) for s in starts])


def test_non_finite_objective_reported():
    with pytest.raises(OptimizationError) as exc:
        maximize(lambda x: np.nan, None, [np.zeros(2)])
    assert exc.value.params is not None
    with pytest.raises(OptimizationError):
        maximize(lambda x: -np.sum(x**2), None, [np.zeros(2)], FitConfig(max_iters=0, require_convergence=True,
                                                                          gtol=-1.0))


def test_fit_config_keys():
    cfg = FitConfig.from_dict({"gtol": 1e-7, "n_starts": 3, "barrier_init": 2.0}, seed=9)
    assert (cfg.gtol, cfg.n_starts, cfg.seed) == (1e-7, 3, 9)
    with pytest.raises(ValueError):
        FitConfig.from_dict({"learning_rate": 0.1})


def test_fd_gradient_matches_analytic():
    def f(x):
        return np.sin(x[0]) * x[1] ** 2 + np.exp(0.3 * x[2])

    x = np.array([0.4, -1.3, 0.7])
    exact = np.array([np.cos(x[0]) * x[1] ** 2, 2 * np.sin(x[0]) * x[1], 0.3 * np.exp(0.3 * x[2])])
    assert np.allclose(fd_gradient(f, x), exact, atol=1e-7)


def _space():
    return ParamSpace([
        ("rho", "density-cholesky", 2),
        ("povm", "isometry", 2, 2),
        ("h", "traceless-hermitian", 4),
        ("l", "psd-cholesky", 3),
        ("r", "unconstrained-real", 2),
    ])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_param_space_blocks_stay_physical(seed):
    rng = np.random.default_rng(seed)
    space = _space()
    parts = space.unpack(rng.normal(size=space.size) * 2)
    assert q.is_density_matrix(parts["rho"])
    v = parts["povm"]
    assert np.allclose(np.einsum("kji,kjl->il", v.conj(), v), np.eye(2), atol=1e-10)
    assert q.is_hermitian(parts["h"]) and abs(np.trace(parts["h"])) < 1e-12
    assert q.min_eigenvalue(parts["l"]) >= -1e-12


def test_param_space_round_trip(rng):
    space = _space()
    x = rng.normal(size=space.size)
    parts = space.unpack(x)
    again = space.unpack(space.pack(parts))
    for k in ("rho", "h", "l", "r"):
        assert np.allclose(again[k], parts[k], atol=1e-8), k
    ops = again["povm"]
    assert np.allclose(np.einsum("kji,kjl->il", ops.conj(), ops), np.eye(2), atol=1e-10)
    with pytest.raises(ValueError):
        space.unpack(np.zeros(space.size + 1))


# -- default starts

def test_default_spam_start_is_ideal_spam():
    data = sd.generate(qubit_truth(), noisy_spam(), [0.0], 100, 0)
    x0 = default_starts("spam", 1, 0, data)[0]
    space = ParamSpace([("rho0", "density-cholesky", 2), ("povm", "isometry", 2, 2)])
    parts = space.unpack(x0)
    assert np.real(parts["rho0"][0, 0]) >= 0.98
    m = np.einsum("kji,kjl->kil", parts["povm"].conj(), parts["povm"])
    assert np.allclose(m, q.projective_povm(2), atol=1e-10)


def test_default_starts_count_and_first():
    data = sd.generate(qubit_truth(), noisy_spam(), [0.0, 5.0, 10.0], 1000, 0)
    spam = known_spam(noisy_spam())
    one = default_starts("lindblad", 1, 0, data, spam, mode="restricted")
    five = default_starts("lindblad", 5, 0, data, spam, mode="restricted")
    assert len(one) == 1 and len(five) == 5
    assert np.array_equal(one[0], five[0])
    assert not np.array_equal(five[0], five[1])
    with pytest.raises(ValueError):
        default_starts("kraus", 0, 0, data, spam, t=5.0)
    with pytest.raises(ValueError):
        default_starts("gst", 1, 0, data, spam)


def test_default_kraus_start_is_t1_t2_channel():
    times = sd.time_grid("lin:0:16:9")
    data = sd.generate(qubit_truth(), sd.SpamTruth.ideal(1), times, 10**5, 4)
    spam = known_spam(sd.SpamTruth.ideal(1))
    # closed-form exponential fit on the prep 0 / prep 1 population contrast
    t, c = [], []
    for tt in times:
        p = {r.prep[0]: r.counts["0"] / r.shots for r in data.at_time(tt).records if r.basis == ("z",)}
        t.append(tt)
        c.append(p["0"] - p["1"])
    gamma1 = oracles.exp_decay_rate(t, c)
    assert qubit_prefit(data).gamma1 == pytest.approx(gamma1, rel=1e-9)
    assert gamma1 == pytest.approx(0.06, rel=0.1)
    t_fit = 8.0
    x0 = default_starts("kraus", 1, 0, data, spam, t=t_fit)[0]
    obj = _KrausObjective(_slice_counts(data, t_fit), spam, 1)
    ops = obj._ops(x0)[2]
    expected = dy.choi_of(prefit_model(data)[0], t_fit)
    assert np.max(np.abs(dy.choi_of(dy.KrausSet(ops)) - expected)) < 1e-6
