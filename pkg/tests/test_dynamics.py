import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindtomo import dynamics as dy
from lindtomo import quantum as q
from lindtomo import reference as ref

import oracles
from conftest import QUBIT_H, QUBIT_JUMPS, QUBIT_RATES, qubit_truth, random_channel, random_lindblad

seeds = st.integers(0, 2**32 - 1)


def test_zero_model_gives_zero_generator():
    assert np.allclose(dy.liouvillian(dy.LindbladModel.zero(2)), 0)


def test_amplitude_damping_population():
    g = 0.3
    m = dy.LindbladModel.from_jumps(np.zeros((2, 2)), [g], [q.SIGMA_MINUS])
    rho = q.projector(q.ket("1"))
    for t in (0.5, 2.0, 7.0):
        assert dy.evolve(m, rho, t)[1, 1].real == pytest.approx(np.exp(-g * t), abs=1e-12)


def test_detuning_rotates_coherence():
    # rho_01 picks up exp(-i dw t) under H = dw/2 sigma_z
    dw = 0.7
    m = dy.LindbladModel(0.5 * dw * q.SZ, np.zeros((3, 3)))
    plus = q.projector(np.array([1, 1]) / np.sqrt(2))
    for t in (0.3, 1.0, 4.0):
        out = dy.evolve(m, plus, t)
        assert out[0, 1] == pytest.approx(0.5 * np.exp(-1j * dw * t), abs=1e-12)
        assert abs(out[0, 1]) == pytest.approx(0.5)


def test_evolve_at_zero_is_exact(rng):
    rho = q.random_density_matrix(4, rng)
    assert np.array_equal(dy.evolve(random_lindblad(4, rng), rho, 0.0), rho)
    with pytest.raises(ValueError):
        dy.evolve(dy.LindbladModel.zero(2), q.maximally_mixed(2), -1.0)


def test_zz_evolution_entangles():
    w = 2 * np.pi * 0.416
    m = dy.LindbladModel(0.25 * w * q.tensor(q.SZ, q.SZ), np.zeros((15, 15)))
    plus = np.array([1, 1]) / np.sqrt(2)
    rho = q.projector(np.kron(plus, plus))
    t = 1 / (2 * 0.416)
    out = dy.evolve(m, rho, t)
    u = np.diag(np.exp(-1j * 0.25 * w * t * np.array([1, -1, -1, 1])))  # exact oracle
    assert np.allclose(out, u @ rho @ u.conj().T, atol=1e-12)
    assert q.purity(q.partial_trace(out, 0)) < 1 - 1e-3


def test_restricted_published_model_preserves_trace():
    m = ref.restricted_model()
    out = dy.evolve(m, ref.rho0_ab(), 80.0)
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-9)
    assert q.is_density_matrix(out, 1e-8)


def test_invalid_model_rejected():
    bad = dy.LindbladModel(np.zeros((2, 2)), -np.eye(3))
    with pytest.raises(dy.InvalidModelError):
        dy.liouvillian(bad)


def test_jump_extraction_single_slot():
    lm = np.zeros((3, 3), dtype=complex)
    lm[2, 2] = 0.2
    jd = dy.jumps_from_lindblad(dy.LindbladModel(np.zeros((2, 2)), lm))
    k = int(np.argmax(jd.rates))
    assert np.allclose(jd.jump_ops[k], q.SZ / np.sqrt(2))
    assert jd.rates[k] == pytest.approx(0.4)
    assert np.allclose(np.delete(jd.rates, k), 0)


@pytest.mark.parametrize("dim", [2, 4])
def test_jump_decomposition_rebuilds_generator(rng, dim):
    m = random_lindblad(dim, rng)
    jd = dy.jumps_from_lindblad(m)
    assert np.allclose(np.einsum("kab,kab->k", jd.jump_ops, jd.jump_ops.conj()), 1)
    rebuilt = dy.liouvillian_from_jumps(m.hamiltonian, jd.rates, jd.jump_ops)
    assert np.max(np.abs(rebuilt - dy.liouvillian(m))) < 1e-8


def test_published_free_rates_reextracted():
    jd = dy.jumps_from_lindblad(ref.free_model())
    assert np.allclose(jd.rates[:4], [0.10, 0.07, 0.06, 0.05], atol=0.02)
    assert np.allclose(sorted(jd.rates[:4], reverse=True), sorted(ref.FREE_RATES, reverse=True), atol=0.02)


def test_kraus_apply_examples():
    rho = q.projector(q.ket("1"))
    assert np.allclose(dy.kraus_apply(dy.KrausSet(np.eye(2)), rho), rho)
    p = 0.3
    ad = dy.KrausSet(np.array([np.diag([1, np.sqrt(1 - p)]), np.sqrt(p) * q.SIGMA_MINUS]))
    assert np.allclose(dy.kraus_apply(ad, rho), np.diag([p, 1 - p]))
    with pytest.raises(q.DimensionError):
        dy.kraus_apply(ad, np.eye(4) / 4)


def test_choi_of_identity():
    omega = np.zeros(4)
    omega[[0, 3]] = 1
    j = dy.choi_of(dy.KrausSet(np.eye(2)))
    assert np.allclose(j, np.outer(omega, omega))
    assert np.trace(j).real == pytest.approx(2.0)
    gen0 = dy.liouvillian(dy.LindbladModel.zero(2))
    assert np.allclose(dy.choi_of(gen0, 3.0), j)


def test_kraus_round_trip_acts_identically(rng):
    for dim in (2, 4):
        k = random_channel(dim, rng, rank=3)
        back = dy.kraus_from_choi(dy.choi_of(k))
        for a in range(dim):
            for b in range(dim):
                e = np.zeros((dim, dim))
                e[a, b] = 1
                assert np.max(np.abs(dy.kraus_apply(k, e) - dy.kraus_apply(back, e))) < 1e-8


def test_superop_choi_conversions_agree(rng):
    k = random_channel(2, rng)
    s = dy.superop_from_kraus(k)
    assert np.allclose(dy.choi_from_superop(s), dy.choi_from_kraus(k))
    assert np.allclose(dy.superop_from_choi(dy.choi_from_superop(s)), s)
    rho = q.random_density_matrix(2, rng)
    assert np.allclose(dy.unvec(s @ dy.vec(rho)), dy.kraus_apply(k, rho))


def test_choi_invariants_for_cptp(rng):
    m = random_lindblad(2, rng)
    j = dy.choi_of(m, 2.0)
    assert q.is_hermitian(j, 1e-9)
    assert q.min_eigenvalue(j) >= -1e-8
    tr_out = j.reshape(2, 2, 2, 2).trace(axis1=1, axis2=3)
    assert np.allclose(tr_out, np.eye(2), atol=1e-8)


def test_channel_family_is_complete(rng):
    for k in dy.channel_family(random_lindblad(4, rng), [0.0, 1.0, 5.0]):
        assert k.completeness_error() <= 1e-10


# -- diamond distance

def test_diamond_trivial_cases():
    ident = dy.choi_of(dy.KrausSet(np.eye(2)))
    flip = dy.choi_of(dy.KrausSet(q.SX))
    assert dy.diamond_distance(ident, ident) == 0.0
    assert dy.diamond_distance(ident, flip) == pytest.approx(2.0, abs=1e-3)


def test_diamond_depolarizing_vs_sdp():
    ident = dy.choi_of(dy.KrausSet(np.eye(2)))
    depol = dy.choi_of(dy.KrausSet(np.array([np.eye(2), q.SX, q.SY, q.SZ]) / 2))
    assert dy.diamond_distance(ident, depol) == pytest.approx(oracles.diamond_sdp(ident, depol), abs=1e-3)
    assert dy.diamond_distance(ident, depol) == pytest.approx(1.5, abs=1e-3)


@pytest.mark.parametrize("seed", range(6))
def test_diamond_random_qubit_channels_vs_sdp(seed):
    rng = np.random.default_rng(seed)
    a = dy.choi_of(random_channel(2, rng, rank=int(rng.integers(1, 5))))
    b = dy.choi_of(random_channel(2, rng, rank=int(rng.integers(1, 5))))
    rep = dy.diamond_distance_report(a, b)
    assert rep.gap <= 1e-3
    assert rep.value == pytest.approx(oracles.diamond_sdp(a, b), abs=1e-3)


def test_diamond_rank_deficient_two_qubit_optimum():
    # distance near 2 with an optimal input of reduced rank
    u = np.diag(np.exp(-1j * np.pi / 4 * np.array([1, -1, -1, 1])))
    a = dy.choi_of(dy.KrausSet(u))
    rng = np.random.default_rng(5)
    b = dy.choi_of(random_channel(4, rng, rank=2))
    rep = dy.diamond_distance_report(a, b)
    assert rep.gap <= 1e-3
    assert rep.value == pytest.approx(oracles.diamond_sdp(a, b), abs=1e-3)


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_diamond_bounds_any_ancilla_input(seed):
    rng = np.random.default_rng(seed)
    ka, kb = random_channel(2, rng), random_channel(2, rng)
    value = dy.diamond_distance(dy.choi_of(ka), dy.choi_of(kb))
    # random ancilla-assisted input states
    for _ in range(5):
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        rho = q.projector(psi / np.linalg.norm(psi))
        outs = []
        for k in (ka, kb):
            ext = dy.KrausSet(np.array([np.kron(op, np.eye(2)) for op in k.operators]))
            outs.append(dy.kraus_apply(ext, rho))
        assert 2 * q.trace_distance(*outs) <= value + 1e-6


def test_diamond_shape_mismatch():
    with pytest.raises(q.DimensionError):
        dy.diamond_distance(np.eye(4), np.eye(16))


# -- steady state

def test_steady_state_examples():
    damp = dy.LindbladModel.from_jumps(np.zeros((2, 2)), [0.2], [q.SIGMA_MINUS])
    assert np.allclose(dy.steady_state(damp), q.projector(q.ket("0")), atol=1e-10)
    with pytest.raises(dy.DegenerateSteadyStateError):
        dy.steady_state(dy.LindbladModel.zero(2))


def test_published_free_steady_state_distance():
    d = q.trace_distance(dy.steady_state(ref.free_model()), ref.rho0_ab())
    assert d == pytest.approx(0.06, abs=0.04)


# -- oracle invariants

@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("dim", [2, 4])
def test_expm_matches_runge_kutta(seed, dim):
    rng = np.random.default_rng(seed)
    m = random_lindblad(dim, rng, max_rate=1.0)
    m = dy.LindbladModel(m.hamiltonian / np.abs(np.linalg.eigvalsh(m.hamiltonian)).max(), m.lindblad_matrix)
    rho = q.random_density_matrix(dim, rng)
    for t in (1.0, 20.0, 100.0):
        assert np.max(np.abs(dy.evolve(m, rho, t) - oracles.rk_evolve_matrix(m.hamiltonian, m.lindblad_matrix,
                                                                              rho, t))) < 1e-6


def test_expm_matches_runge_kutta_from_jumps():
    m = qubit_truth()
    rho = q.projector(np.array([1, 1j]) / np.sqrt(2))
    for t in (5.0, 40.0, 100.0):
        ref_state = oracles.rk_evolve(QUBIT_H, QUBIT_RATES, QUBIT_JUMPS, rho, t)
        assert np.max(np.abs(dy.evolve(m, rho, t) - ref_state)) < 1e-6


@settings(max_examples=25, deadline=None)
@given(seeds, st.sampled_from([2, 4]), st.floats(0, 50), st.floats(0, 50))
def test_semigroup_property(seed, dim, t1, t2):
    rng = np.random.default_rng(seed)
    m = random_lindblad(dim, rng)
    rho = q.random_density_matrix(dim, rng)
    two_step = dy.evolve(m, dy.evolve(m, rho, t1), t2)
    assert np.max(np.abs(two_step - dy.evolve(m, rho, t1 + t2))) < 1e-8


@settings(max_examples=25, deadline=None)
@given(seeds, st.sampled_from([2, 4]), st.floats(0, 100))
def test_evolution_stays_physical(seed, dim, t):
    rng = np.random.default_rng(seed)
    out = dy.evolve(random_lindblad(dim, rng), q.random_density_matrix(dim, rng), t)
    assert q.is_hermitian(out, 1e-9)
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-9)
    assert q.min_eigenvalue(out) >= -1e-8


@settings(max_examples=25, deadline=None)
@given(seeds, st.sampled_from([2, 4]))
def test_kraus_sets_preserve_trace(seed, dim):
    rng = np.random.default_rng(seed)
    k = random_channel(dim, rng, rank=int(rng.integers(1, dim * dim + 1)))
    assert k.completeness_error() <= 1e-10
    rho = q.random_density_matrix(dim, rng)
    assert np.trace(dy.kraus_apply(k, rho)).real == pytest.approx(1.0, abs=1e-9)
