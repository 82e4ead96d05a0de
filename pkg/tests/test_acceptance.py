"""Acceptance suite: one test and one PASS/FAIL line per criterion."""
import time

import numpy as np
import pytest

from lindtomo import dynamics as dy
from lindtomo import quantum as q
from lindtomo import reference as ref
from lindtomo import synthdata as sd
from lindtomo.analysis import DeviceParams, zz_from_device, zz_from_hamiltonian
from lindtomo.kraus import KrausEstimate
from lindtomo.lindblad import deviation_delta, deviation_series, fit_lindblad
from lindtomo.markov import marginal_family, n_markov, zz_family
from lindtomo.spam import fit_spam, thermal_fit

import oracles
from conftest import READOUT_M0, physical_qubit_povm, random_channel, random_lindblad

OMEGA_ZZ = 2 * np.pi * 0.416


def _family(model, times):
    return KrausEstimate.from_channels(dy.channel_family(model, times))


@pytest.fixture
def verdict(capsys):
    """Print one line per criterion straight to the terminal."""
    def report(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\nCRITERION {n:2d} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return report


def test_criterion_01_zz_from_device(verdict):
    value = zz_from_device(DeviceParams.from_frequencies(**ref.DEVICE))
    ok = abs(value - 0.4255) < 1e-4 and abs(value * 1e3 - 425) <= 1
    assert verdict(1, ok, f"zz_from_device = {value * 1e3:.2f} kHz (target 425 kHz, tol 1 kHz)")


def test_criterion_02_zz_from_hamiltonian(verdict):
    value = zz_from_hamiltonian(ref.FREE_HAMILTONIAN)
    ok = abs(value * 1e3 - 415.4) < 0.1 and abs(value * 1e3 - 416) <= 1
    assert verdict(2, ok, f"zz_from_hamiltonian = {value * 1e3:.2f} kHz (target 416 kHz, tol 1 kHz)")


def test_criterion_03_thermal_fit(verdict):
    a_a, d_a = thermal_fit(ref.RHO0_A)
    a_b, d_b = thermal_fit(ref.RHO0_B)
    ok = (abs(a_a - 0.86) <= 0.01 and abs(a_b - 0.88) <= 0.01
          and abs(d_a - 0.01) <= 0.01 and abs(d_b - 0.02) <= 0.01)
    assert verdict(3, ok, f"a = {a_a:.4f}/{a_b:.4f} (0.86/0.88 +- 0.01), "
                          f"D = {d_a:.4f}/{d_b:.4f} (0.01/0.02 +- 0.01)")


def test_criterion_04_published_delta(verdict):
    start = time.perf_counter()
    free, restricted = ref.free_model(), ref.restricted_model()
    short = sd.time_grid("lin:0:80:19")
    deltas = deviation_series(free, restricted, short)
    long = deviation_delta(free, restricted, 1000.0)
    wall = time.perf_counter() - start
    worst = int(np.argmax(deltas))
    ok_short = deltas.max() <= 0.30
    ok_long = 0.34 <= long <= 0.54
    ok = ok_short and ok_long and wall < 60
    assert verdict(4, ok, f"max delta(t <= 80 us) = {deltas.max():.4f} at t = {short[worst]:.1f} us (need <= 0.30), "
                          f"delta(1000 us) = {long:.4f} (need [0.34, 0.54]), {len(short) + 1} solves in {wall:.1f} s")


def test_criterion_05_published_steady_state(verdict):
    d = q.trace_distance(dy.steady_state(ref.free_model()), ref.rho0_ab())
    assert verdict(5, abs(d - 0.06) <= 0.04, f"D(rho_ss, rho0_AB) = {d:.4f} (0.06 +- 0.04)")


def test_criterion_06_spam_recovery(verdict):
    start = time.perf_counter()
    truth = sd.SpamTruth(q.thermal_state(0.88), np.array([READOUT_M0, np.eye(2) - READOUT_M0]))
    passes, worst_m, worst_a = 0, 0.0, 0.0
    for seed in range(20):
        est = fit_spam(sd.generate(dy.LindbladModel.zero(2), truth, [0.0], 10**4, seed))
        m_err = np.max(np.abs(np.diag(est.povm[0]).real - np.diag(READOUT_M0).real))
        a_err = abs(thermal_fit(est.rho0)[0] - 0.88)
        worst_m, worst_a = max(worst_m, m_err), max(worst_a, a_err)
        passes += m_err <= 0.02 and a_err <= 0.02
    wall = time.perf_counter() - start
    ok = passes >= 18 and wall < 60
    assert verdict(6, ok, f"{passes}/20 seeds within +-0.02 (need >= 18); worst POVM diag error {worst_m:.4f}, "
                          f"worst a error {worst_a:.4f}; {wall:.1f} s")


@pytest.fixture(scope="module")
def lindblad_round_trip():
    """Single-qubit round trip: published qubit-A jump shapes and SPAM, rates 0.09/0.06 MHz."""
    jumps = ref.normalized_jumps(ref.SINGLE_QUBIT_JUMPS)
    truth = dy.LindbladModel.from_jumps(np.zeros((2, 2)), ref.SINGLE_QUBIT_RATES, jumps)
    spam_truth = sd.SpamTruth(ref.unit_trace_state(ref.RHO0_A), physical_qubit_povm(ref.POVM0_A))
    times = sd.time_grid("lin:0:80:20")
    start = time.perf_counter()
    rows = []
    for seed in range(10):
        data = sd.generate(truth, spam_truth, times, 1000, seed)
        spam = fit_spam(data)
        restricted = fit_lindblad(data, spam, "restricted")
        free = fit_lindblad(data, spam, "free", extra_models=[restricted])
        rates = np.sort(free.jumps.rates)[::-1][:2]
        delta = deviation_series(free.model, truth, times).max()
        rows.append({"rates": rates, "delta": delta, "free": free.loglike, "restricted": restricted.loglike})
    return rows, time.perf_counter() - start


def test_criterion_07_lindblad_recovery(verdict, lindblad_round_trip):
    rows, wall = lindblad_round_trip
    target = np.array([0.09, 0.06])
    rate_ok = [bool(np.all(np.abs(r["rates"] / target - 1) <= 0.2)) for r in rows]
    delta_ok = [r["delta"] <= 0.05 for r in rows]
    passes = sum(a and b for a, b in zip(rate_ok, delta_ok))
    ok = passes >= 8 and wall < 300
    deltas = ", ".join(f"{r['delta']:.3f}" for r in rows)
    assert verdict(7, ok, f"{passes}/10 seeds pass (need >= 8); rates ok {sum(rate_ok)}/10, "
                          f"delta <= 0.05 {sum(delta_ok)}/10 [max delta per seed: {deltas}]; {wall:.0f} s")


def test_criterion_08_markovianity(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    lind = max(n_markov(_family(random_lindblad(d, rng, 0.5), np.linspace(0, 10, 20))).n_markov
               for d in (2, 2, 4))
    plus = q.projector((q.ket("0") + q.ket("1")) / np.sqrt(2))
    times = np.linspace(0, 10, 20)
    zz = zz_family(OMEGA_ZZ, times)
    marg = n_markov(marginal_family(zz, plus)).n_markov
    joint = n_markov(zz).n_markov
    wall = time.perf_counter() - start
    ok = lind <= 1e-9 and marg > 0.1 and joint <= 1e-9 and wall < 60
    assert verdict(8, ok, f"Lindblad families N = {lind:.2e} (<= 1e-9), ZZ marginal N = {marg:.4f} (> 0.1), "
                          f"two-qubit ZZ N = {joint:.2e} (<= 1e-9)")


def test_criterion_09_dynamics_invariants(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(9)
    rk_err = semi_err = cptp_err = comp_err = dn_err = 0.0
    for dim in (2, 4):
        for _ in range(3):
            model = random_lindblad(dim, rng, 0.5)
            rho = q.random_density_matrix(dim, rng)
            t1, t2 = rng.uniform(0.1, 3.0, size=2)
            rk = oracles.rk_evolve_matrix(model.hamiltonian, model.lindblad_matrix, rho, t1)
            rk_err = max(rk_err, np.max(np.abs(dy.evolve(model, rho, t1) - rk)))
            gen = dy.liouvillian(model)
            p1, p2, p12 = dy.propagators(gen, [t1, t2, t1 + t2])
            semi_err = max(semi_err, np.max(np.abs(p1 @ p2 - p12)))
            choi = dy.choi_of(gen, t1)
            k = dy.kraus_from_choi(choi, t1)
            cptp_err = max(cptp_err, -np.linalg.eigvalsh(choi).min(),
                           np.max(np.abs(np.trace(choi.reshape(dim, dim, dim, dim), axis1=1, axis2=3)
                                         - np.eye(dim))))
            comp_err = max(comp_err, np.max(np.abs(np.einsum("kji,kjl->il", k.operators.conj(), k.operators)
                                                   - np.eye(dim))))
    for _ in range(5):
        a = dy.choi_from_kraus(random_channel(2, rng, rank=int(rng.integers(1, 5))))
        b = dy.choi_from_kraus(random_channel(2, rng, rank=int(rng.integers(1, 5))))
        dn_err = max(dn_err, abs(dy.diamond_distance(a, b) - oracles.diamond_sdp(a, b)))
    wall = time.perf_counter() - start
    ok = rk_err <= 1e-6 and semi_err <= 1e-8 and cptp_err <= 1e-9 and comp_err <= 1e-9 and dn_err <= 1e-3 \
        and wall < 60
    assert verdict(9, ok, f"expm vs RK {rk_err:.1e} (1e-6), semigroup {semi_err:.1e} (1e-8), "
                          f"CPTP {cptp_err:.1e}, completeness {comp_err:.1e}, diamond vs SDP {dn_err:.1e} (1e-3)")


def test_criterion_10_nested_likelihood(verdict, lindblad_round_trip):
    rows, _ = lindblad_round_trip
    gaps = [r["free"] - r["restricted"] for r in rows]
    ok = min(gaps) >= -1e-6
    assert verdict(10, ok, f"free - restricted loglike over {len(gaps)} datasets: min {min(gaps):.4f}, "
                           f"max {max(gaps):.1f} (need all >= -1e-6)")
