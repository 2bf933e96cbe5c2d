import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsd1d import spectrum as sp
from qsd1d.boundary import check_hypothesis_h
from qsd1d.drift import DriftSpec, build_coefficients, parse_drift

LAMBDA1_CUBIC = 0.967741088  # FD (Richardson) and shooting agree to 1e-10
DELTA_ORACLE = {  # scipy QUADPACK + bounded scalar maximisation
    "x^3": 0.5920558345097198,
    "x^5": 0.6224789511723805,
    "2*x^3+x": 0.2604539528221799,
    "exp(x)-1": 0.32425561311314155,
}


@pytest.fixture(scope="module")
def cubic():
    t = build_coefficients(parse_drift("x^3"), 16.0, 1024)
    R = sp.choose_R(t)
    gen = sp.build_generator(t, R, 800)
    return t, R, gen, sp.ground_state_fd(gen)


def test_validation_mode_dirichlet_box():
    t = build_coefficients(DriftSpec("constant", {"c": 0.0}), 1.0, 64)
    extrap, coarse, fine = sp.richardson_lambda1(t, 1.0, 2000, right_bc="dirichlet")
    assert extrap == pytest.approx(math.pi ** 2 / 2, rel=1e-10)
    assert fine.lambda2 == pytest.approx(2 * math.pi ** 2, rel=1e-5)
    shoot = sp.ground_state_shooting(t, 1.0, (4.0, 6.0), right_bc="dirichlet")
    assert shoot.lambda1 == pytest.approx(math.pi ** 2 / 2, rel=1e-9)
    np.testing.assert_allclose(fine.eta1 / fine.eta1.max(), np.sin(math.pi * fine.x), atol=1e-6)


def test_killed_ornstein_uhlenbeck():
    t = build_coefficients(DriftSpec("linear", {"a": 1.0}), 8.0, 64)
    extrap, _, fine = sp.richardson_lambda1(t, 8.0, 2000)
    assert extrap == pytest.approx(1.0, rel=1e-9)
    assert fine.lambda2 == pytest.approx(3.0, rel=1e-4)
    # eta1 is proportional to x
    inner = fine.x < 4
    ratio = fine.eta1[inner][1:] / fine.x[inner][1:]
    assert np.ptp(ratio) / ratio.mean() < 1e-5


def test_sturm_count_and_bisection_against_lapack():
    rng = np.random.default_rng(7)
    d = rng.uniform(1, 5, 60)
    e = rng.uniform(-1, 1, 59)
    exact = np.linalg.eigvalsh(np.diag(d) + np.diag(e, 1) + np.diag(e, -1))
    for s in (0.0, 2.0, 3.5, 10.0):
        assert sp.sturm_count(d, e, s) == int(np.sum(exact < s))
    np.testing.assert_allclose(sp.tridiag_eigenvalues(d, e, 3), exact[:3], rtol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2 ** 32 - 1))
def test_bisection_property(n, seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=n)
    e = rng.normal(size=n - 1)
    exact = np.linalg.eigvalsh(np.diag(d) + np.diag(e, 1) + np.diag(e, -1))
    got = sp.tridiag_eigenvalues(d, e, min(2, n))
    np.testing.assert_allclose(got, exact[:got.size], rtol=1e-12, atol=1e-12)


def test_generator_annihilates_constants_away_from_origin(cubic):
    _, _, gen, _ = cubic
    Lf = gen.apply(np.ones(gen.size))
    assert Lf[0] < 0          # couples to the killed node
    assert np.max(np.abs(Lf[1:])) < 1e-12 * np.max(np.abs(gen.diag))


def test_generator_is_mu_symmetric(cubic):
    _, _, gen, _ = cubic
    w = gen.w
    left = w[:-1] * gen.upper[:-1]
    right = w[1:] * gen.lower[1:]
    np.testing.assert_allclose(left, right, rtol=1e-12)
    A = gen.dense()
    S = np.diag(gen.sym_diag) + np.diag(gen.sym_off, 1) + np.diag(gen.sym_off, -1)
    sw = np.sqrt(w)
    np.testing.assert_allclose(-(sw[:, None] * A / sw[None, :]), S, rtol=1e-10, atol=1e-8)


def test_cubic_ground_state(cubic):
    t, R, gen, g = cubic
    assert g.lambda1 == pytest.approx(LAMBDA1_CUBIC, rel=5e-6)
    assert g.lambda1 == pytest.approx(g.lambda1_bisection, rel=1e-9)
    assert g.residual < 1e-8
    assert g.eta1[0] == 0.0 and np.all(g.interior > 0)
    assert np.sum(g.weights * g.eta1 ** 2) == pytest.approx(1.0, rel=1e-12)


def test_cubic_fd_and_shooting_agree():
    t = build_coefficients(parse_drift("x^3"), 16.0, 1024)
    res = sp.solve_spectrum(t, check_hypothesis_h(t))
    sh = sp.ground_state_shooting(t, res.R, (0.99 * res.lambda1_lo, 1.01 * res.lambda1_hi))
    assert abs(res.lambda1_extrapolated - sh.lambda1) / sh.lambda1 < 1e-8
    assert sh.residual < 1e-4
    assert res.lambda1_extrapolated == pytest.approx(LAMBDA1_CUBIC, rel=1e-8)


@pytest.mark.parametrize("text", sorted(DELTA_ORACLE))
def test_delta_matches_independent_quadrature(text):
    t = build_coefficients(parse_drift(text), 16.0, 1024)
    db = sp.compute_delta(t)
    assert db.delta == pytest.approx(DELTA_ORACLE[text], rel=1e-9)
    assert db.lambda1_lo == 1 / (4 * db.delta) and db.lambda1_hi == 1 / db.delta


def test_truncation_stability(cubic):
    t, R, _, g = cubic
    g2 = sp.ground_state_fd(sp.build_generator(t, 2 * R, 1600))
    assert abs(g2.lambda1 - g.lambda1) / g.lambda1 < 1e-6


def test_choose_R_mass_criterion():
    t = build_coefficients(parse_drift("x^3"), 16.0, 1024)
    R = sp.choose_R(t, 1e-8)
    # mu[R, inf) = eps * mu(0, inf) with the closed-form Q = y^4/2
    from scipy.integrate import quad
    tail = quad(lambda y: math.exp(-y ** 4 / 2), R, np.inf, epsabs=0, epsrel=1e-12)[0]
    assert tail / (2 ** 0.25 * math.gamma(1.25)) == pytest.approx(1e-8, rel=1e-6)


def test_precondition_gate():
    t = build_coefficients(DriftSpec("constant", {"c": 1.0}), 16.0, 256)
    h = check_hypothesis_h(t)
    for call in (lambda: sp.compute_delta(t, h), lambda: sp.essential_spectrum_test(t, [1, 2], h),
                 lambda: sp.solve_spectrum(t, h)):
        with pytest.raises(sp.PreconditionError):
            call()


def test_shooting_bracket_without_sign_change():
    t = build_coefficients(DriftSpec("constant", {"c": 0.0}), 1.0, 64)
    with pytest.raises(sp.NoSignChange):
        sp.ground_state_shooting(t, 1.0, (5.0, 6.0), right_bc="dirichlet")


# -- the quasi-stationary distribution ------------------------------------


def test_qsd_density(cubic):
    _, _, gen, g = cubic
    q = sp.build_qsd(g)
    assert q.density[0] == 0.0
    assert q.cdf[-1] == pytest.approx(1.0, abs=1e-8)
    assert np.all(np.diff(q.cdf) >= 0)
    u = np.array([0.1, 0.5, 0.9])
    np.testing.assert_allclose(q.cdf_at(q.quantile(u)), u, atol=1e-12)
    assert q.norm_const == pytest.approx(0.9146069, rel=1e-5)


def test_qsd_rejects_sign_error(cubic):
    _, _, _, g = cubic
    bad = sp.SpectralResult(**{**g.__dict__, "eta1": -g.eta1})
    with pytest.raises(sp.SpectrumError):
        sp.build_qsd(bad)


def test_stationarity(cubic):
    _, _, gen, g = cubic
    q = sp.build_qsd(g)
    rep = sp.stationarity_check(q, gen, [0.0, 0.5, 1.0, 2.0])
    assert rep["l1"][0] < 1e-14
    assert rep["max_l1"] < 1e-6


def test_perturbed_law_contracts(cubic):
    _, _, gen, g = cubic
    q = sp.build_qsd(g)
    eta = g.eta1[1:1 + gen.size]
    bump = np.exp(-((gen.nodes - 1.5) ** 2) / 0.02)
    init = gen.w * eta / np.sum(gen.w * eta) + gen.w * bump / np.sum(gen.w * bump)
    rep = sp.stationarity_check(q, gen, [0.5, 2.0], initial=init / init.sum())
    assert rep["l1"][1] < rep["l1"][0]


def test_product_limit(cubic):
    _, _, gen, g = cubic
    eta = g.eta1
    times = [0.0, 0.5, 1.0, 3.0]
    rep = sp.semigroup_product_limit(gen, g, eta, eta, times)
    np.testing.assert_allclose(rep["values"], 1.0, rtol=1e-9)
    one = np.ones(gen.size)
    gap = g.lambda2 - g.lambda1
    times = list(np.linspace(0, 10 / gap, 11))
    rep = sp.semigroup_product_limit(gen, g, one, one, times)
    assert rep["relative_error"][-1] < 1e-4
    assert abs(rep["observed_rate"] - gap) < 0.1 * gap


def test_product_limit_orthogonal_input(cubic):
    _, _, gen, g = cubic
    eta = g.eta1[1:1 + gen.size]
    f = np.ones(gen.size)
    f -= gen.inner(f, eta) * eta
    rep = sp.semigroup_product_limit(gen, g, f, eta, [0.0, 1.0, 2.0])
    np.testing.assert_allclose(rep["values"], 0.0, atol=1e-9)


def test_symmetry_identity(cubic):
    _, _, gen, g = cubic
    ind = ((gen.nodes >= 0.5) & (gen.nodes <= 1.2)).astype(float)
    rep = sp.symmetry_identity_check(gen, g, ind, 1.0)
    assert rep["rel_diff_lhs_middle"] < 1e-10 and rep["rel_diff_middle_rhs"] < 1e-10
    rep = sp.symmetry_identity_check(gen, g, g.eta1, 0.7)
    assert rep["rhs"] == pytest.approx(math.exp(-0.7 * g.lambda1), rel=1e-10)
    rep = sp.symmetry_identity_check(gen, g, ind, 0.0)
    assert rep["lhs"] == rep["middle"] == pytest.approx(rep["rhs"], rel=1e-15)


def test_kernel_domination(cubic):
    _, _, gen, g = cubic
    rep = sp.kernel_domination_check(gen, g, [0.25, 1.0, 2.0], [1.0, 2.0, 4.0, 16.0])
    assert rep["all_nonincreasing"]
    for p in rep["points"]:
        assert math.isfinite(p["theta"])
        assert p["sup_ratio"][-1] == pytest.approx(p["eta1_x"], rel=1e-6)
    with pytest.raises(sp.PreconditionError):
        sp.kernel_domination_check(gen, g, [1.0], [0.5])


def test_essential_spectrum(cubic):
    t = cubic[0]
    rep = sp.essential_spectrum_test(t, [1, 2, 4, 8])
    assert rep["strictly_decreasing"]
    assert rep["bounded_by_h_tail"]
    assert rep["s"][-1] < 1e-5


def test_boundedness(cubic):
    rep = sp.boundedness_check(cubic[0])
    assert rep["passed"]
    assert rep["relative_change"][-1] < 0.02
    assert rep["contracting"]


@pytest.mark.parametrize("t", [1e-3, 0.05, 2.0])
def test_large_semigroup_matches_full_spectral_sum(cubic, t):
    tab, R = cubic[0], cubic[1]
    gen = sp.build_generator(tab, R, 2500)
    assert gen.size > sp.DENSE_EXPM_MAX
    import scipy.linalg
    vals, vecs = scipy.linalg.eigh_tridiagonal(gen.sym_diag, gen.sym_off)
    sw = np.exp(0.5 * gen.logw)
    f = np.exp(-gen.nodes)
    exact = vecs @ (np.exp(-t * vals) * (vecs.T @ (sw * f))) / sw
    got = gen.apply_semigroup(f, t)
    assert np.max(np.abs(got - exact)) < 1e-9 * np.max(np.abs(exact))
