import json
import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyritz import _numeric as nm
from polyritz.errors import ConditioningError, ParameterError, PreconditionError
from polyritz.manifolds import flat_torus
from polyritz.pointsets import generate
from polyritz.splines import (SpectralVector, Spline, build_space, check_order, choose_cutoff,
                              green_kernel, interpolate, interpolate_function, nodal_values,
                              order_schedule, spline_from_json, spline_to_json,
                              spline_to_spectral, variational_residual)

RHO16 = 2 * math.pi / 16 * 4 / 3 * 0.999


def bernoulli_kernel(k, t):
    """Circle kernel via sum_{m != 0} e^{imt} / m^{2n} with 2n = 4k."""
    n = 2 * k
    x = (t % (2 * math.pi)) / (2 * math.pi)
    with mpmath.workdps(40):
        return float((-1) ** (n - 1) * (2 * mpmath.pi) ** (2 * n) * mpmath.bernpoly(2 * n, x)
                     / mpmath.factorial(2 * n) / (2 * mpmath.pi))


def direct_kernel(k, t):
    with mpmath.workdps(30):
        return float(mpmath.nsum(lambda m: mpmath.cos(m * t) / m ** (4 * k), [1, mpmath.inf]) / mpmath.pi)


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("t", [0.0, 0.3, 1.7, math.pi, 5.0])
def test_bernoulli_oracle_matches_direct_sum(k, t):
    assert bernoulli_kernel(k, t) == pytest.approx(direct_kernel(k, t), rel=1e-14, abs=1e-15)


def test_kernel_diagonal_closed_form(S1):
    assert bernoulli_kernel(1, 0.0) == pytest.approx(math.pi ** 3 / 90, rel=1e-14)
    cut = choose_cutoff(S1, 1, 1e-12)
    kv = green_kernel(S1, 1, 0.0, 0.0, cut)
    assert kv.value == pytest.approx(math.pi ** 3 / 90, abs=1e-10)
    assert kv.tail_bound <= 1e-12


@pytest.mark.parametrize("k", [1, 2])
def test_kernel_matches_bernoulli(S1, k):
    cut = choose_cutoff(S1, k, 1e-12)
    rng = np.random.default_rng(k)
    for x, y in rng.random((10, 2)) * 2 * math.pi:
        kv = green_kernel(S1, k, x, y, cut)
        assert abs(kv.value - bernoulli_kernel(k, x - y)) <= 1e-10
        assert abs(kv.value - bernoulli_kernel(k, x - y)) <= kv.tail_bound + 1e-13


def test_kernel_symmetry(S2, T2):
    rng = np.random.default_rng(0)
    for m in (S2, T2):
        x, y = m.random_points(2, rng)
        assert green_kernel(m, 2, x, y, 30).value == green_kernel(m, 2, y, x, 30).value


def test_order_checks():
    with pytest.raises(ParameterError):
        check_order(1, 2)
    with pytest.raises(ParameterError):
        check_order(1.5, 1)
    with pytest.warns(UserWarning):
        check_order(2, 3)
    assert list(order_schedule(2, 3)) == [4, 6, 10]
    assert list(order_schedule(1, 4)) == [2, 3, 5, 9]


def test_k_equal_half_dimension_rejected(T2):
    aset = generate(T2, 0.5)
    with pytest.raises(ParameterError):
        build_space(aset, 1)


@pytest.fixture(scope="module")
def circle16():
    from polyritz.manifolds import circle
    return generate(circle(), RHO16)


@pytest.fixture(scope="module")
def spaces():
    from polyritz.manifolds import circle, flat_torus, sphere2
    out = {}
    out["circle"] = build_space(generate(circle(), 0.4), 2)
    out["torus"] = build_space(generate(flat_torus(2), 0.5), 2)
    out["sphere"] = build_space(generate(sphere2(), 0.5), 2)
    return out


def test_lagrange_deltas_k1(circle16):
    space = build_space(circle16, 1)
    assert space.size == 16
    assert space.interpolation_residual <= 1e-10
    vals = space.phi.T @ space.lagrange_spectral
    assert np.abs(vals - np.eye(16)).max() <= 1e-10


def test_k6_fails_loudly_or_succeeds(circle16):
    try:
        space = build_space(circle16, 6)
    except ConditioningError as exc:
        assert exc.condition_estimate is not None and exc.condition_estimate > 1
    else:
        assert space.interpolation_residual <= 1e-8


def test_high_order_raises_in_float(S1):
    with pytest.raises(ConditioningError):
        build_space(generate(S1, 0.2), 6)


@pytest.mark.parametrize("name", ["circle", "torus", "sphere"])
def test_constants_reproduced(spaces, name):
    space = spaces[name]
    sp = interpolate(space, np.ones(space.size))
    assert np.abs(sp.alpha).max() <= 1e-12
    assert sp.constant == pytest.approx(1.0, abs=1e-12)
    spec = spline_to_spectral(space, sp)
    assert np.abs(spec.coeffs[1:]).max() <= 1e-12
    assert spec.constant_coefficient == pytest.approx(math.sqrt(space.manifold.volume))


@pytest.mark.parametrize("name", ["circle", "torus", "sphere"])
def test_lagrangian_is_interpolant_of_delta(spaces, name):
    space = spaces[name]
    for nu in (0, space.size // 2):
        e = np.zeros(space.size)
        e[nu] = 1.0
        sp = interpolate(space, e)
        assert np.allclose(sp.alpha, space.lagrange_alpha[:, nu], atol=1e-10 * np.abs(sp.alpha).max())
        spec = spline_to_spectral(space, sp)
        assert np.abs(spec.evaluate(space.nodes) - e).max() <= 1e-8


@pytest.mark.parametrize("name", ["circle", "torus", "sphere"])
def test_kernel_form_reproduces_data(spaces, name):
    # In float the kernel form sum alpha G cancels heavily, so only the nodal
    # values are checked; exact agreement of the two forms is checked in mpfr.
    space = spaces[name]
    v = np.random.default_rng(4).standard_normal(space.size)
    sp = interpolate(space, v)
    rebuilt = spline_to_spectral(space, Spline(sp.alpha, sp.constant))
    assert np.abs(rebuilt.evaluate(space.nodes) - v).max() <= 1e-6


def test_kernel_and_spectral_forms_agree_mp(circle16):
    space = build_space(circle16, 3, dps=40)
    v = np.random.default_rng(4).standard_normal(space.size)
    sp = interpolate(space, v)
    cached = spline_to_spectral(space, sp).coeffs
    rebuilt = spline_to_spectral(space, Spline(sp.alpha, sp.constant)).coeffs
    with nm.working_precision(40):
        assert nm.abs_max(cached - rebuilt) <= 1e-25


@pytest.mark.parametrize("name", ["circle", "torus", "sphere"])
def test_idempotence(spaces, name):
    space = spaces[name]
    rng = np.random.default_rng(1)
    g = SpectralVector.random(space.basis, 20, rng)
    s1 = interpolate_function(space, g)
    s2 = interpolate_function(space, s1.spectral)
    assert np.abs(s1.spline.alpha - s2.spline.alpha).max() <= 1e-8 * np.abs(s1.spline.alpha).max()
    assert s1.spline.constant == pytest.approx(s2.spline.constant, abs=1e-8)


def test_zero_data_gives_zero_spline(spaces):
    space = spaces["circle"]
    sp = interpolate(space, np.zeros(space.size))
    assert np.all(sp.alpha == 0) and sp.constant == 0


def test_length_mismatch(spaces):
    with pytest.raises(ParameterError):
        interpolate(spaces["circle"], np.ones(3))


@pytest.mark.parametrize("name", ["circle", "torus", "sphere"])
def test_variational_orthogonality(spaces, name):
    space = spaces[name]
    rng = np.random.default_rng(2)
    for _ in range(20):
        u = interpolate_function(space, SpectralVector.random(space.basis, 30, rng)).spectral
        g = SpectralVector.random(space.basis, 30, rng)
        h = g - interpolate_function(space, g).spectral
        r = variational_residual(space, u, h)
        assert abs(r) <= 1e-6 * u.norm(space.k) * h.norm(space.k)


def test_variational_trivial_cases(spaces):
    space = spaces["torus"]
    h0 = SpectralVector.zeros(space.basis)
    u = SpectralVector.constant(space.basis, 2.0)
    assert variational_residual(space, u, h0) == 0
    g = SpectralVector.random(space.basis, 10, np.random.default_rng(0))
    h = g - interpolate_function(space, g).spectral
    assert variational_residual(space, u, h) == 0
    with pytest.raises(PreconditionError):
        variational_residual(space, u, g)


@pytest.mark.parametrize("name", ["circle", "sphere"])
def test_minimiser_optimality(spaces, name):
    space = spaces[name]
    rng = np.random.default_rng(8)
    s = interpolate_function(space, SpectralVector.random(space.basis, 25, rng)).spectral
    base = s.norm(space.k)
    for _ in range(5):
        g = SpectralVector.random(space.basis, 40, rng)
        h = g - interpolate_function(space, g).spectral
        for eps in (0.1, -0.1, 0.01, -0.01):
            assert (s + h * eps).norm(space.k) >= base - 1e-8


def test_kernel_psd_on_constraint(spaces):
    for space in spaces.values():
        z = space.null_basis
        w = np.linalg.eigvalsh(z.T @ space.kernel @ z)
        assert w.min() >= -1e-10 * np.abs(space.kernel).max() * space.size


def test_lagrangians_independent(spaces):
    space = spaces["sphere"]
    vals = space.phi.T @ space.lagrange_spectral
    assert abs(np.linalg.det(vals)) > 0.5


def test_phi1_interpolation_16_nodes(circle16):
    space = build_space(circle16, 2)
    f = SpectralVector.eigenfunction(space.basis, ("cos", 1))
    err = (interpolate_function(space, f).spectral - f).norm()
    assert err <= 0.01 * f.norm()


def test_interpolate_constant_function(spaces):
    space = spaces["sphere"]
    f = SpectralVector.constant(space.basis, 3.0)
    s = interpolate_function(space, f).spectral
    assert (s - f).norm() <= 1e-12 * f.norm()


def test_parseval_by_quadrature(spaces):
    space = spaces["circle"]
    sp = interpolate(space, np.random.default_rng(5).standard_normal(space.size))
    spec = spline_to_spectral(space, sp)
    n = 4 * len(space.basis)
    grid = (np.arange(n) * 2 * math.pi / n)[:, None]
    quad = math.sqrt(np.sum(spec.evaluate(grid) ** 2) * 2 * math.pi / n)
    assert quad == pytest.approx(spec.norm(), rel=1e-6)


def test_parseval_torus(spaces):
    space = spaces["torus"]
    sp = interpolate(space, np.random.default_rng(6).standard_normal(space.size))
    spec = spline_to_spectral(space, sp)
    r = int(math.isqrt(int(space.cutoff))) + 1
    n = 2 * r + 2
    axis = np.arange(n) * 2 * math.pi / n
    mesh = np.meshgrid(axis, axis, indexing="ij")
    grid = np.stack([g.ravel() for g in mesh], axis=1)
    quad = math.sqrt(np.sum(spec.evaluate(grid) ** 2) * (2 * math.pi / n) ** 2)
    assert quad == pytest.approx(spec.norm(), rel=1e-6)


def test_spectral_nodal_agreement(spaces):
    for space in spaces.values():
        rng = np.random.default_rng(9)
        v = rng.standard_normal(space.size)
        spec = spline_to_spectral(space, interpolate(space, v))
        assert np.abs(spec.evaluate(space.nodes) - v).max() <= 1e-8


def test_json_round_trip(spaces):
    space = spaces["circle"]
    sp = interpolate(space, np.arange(space.size, dtype=float))
    data = json.loads(spline_to_json(space, sp))
    assert {"nodes", "k", "alpha", "constant", "cutoff", "tail_bound"} <= set(data)
    space2, sp2 = spline_from_json(spline_to_json(space, sp))
    assert space2.cutoff == space.cutoff
    assert np.array_equal(sp2.alpha, sp.alpha) and sp2.constant == sp.constant


def test_json_round_trip_mp(circle16):
    space = build_space(circle16, 2, dps=30)
    sp = interpolate(space, np.arange(16, dtype=float))
    space2, sp2 = spline_from_json(spline_to_json(space, sp))
    assert space2.dps == 30
    with nm.working_precision(30):
        assert nm.abs_max(sp2.alpha - sp.alpha) == 0


def test_mp_build_matches_float(circle16):
    f = build_space(circle16, 2)
    m = build_space(circle16, 2, dps=40)
    assert m.interpolation_residual < 1e-30
    assert np.allclose(nm.to_float(m.lagrange_spectral), f.lagrange_spectral, atol=1e-10)


def test_spectral_vector_algebra(spaces):
    space = spaces["torus"]
    rng = np.random.default_rng(0)
    a = SpectralVector.random(space.basis, 10, rng)
    b = SpectralVector.random(space.basis, 10, rng)
    assert (a + b - b).norm() == pytest.approx(a.norm())
    assert (-a).norm() == a.norm()
    assert a.inner(a) == pytest.approx(a.norm() ** 2)
    assert a.norm(0.5) ** 2 == pytest.approx(np.sum(space.basis.eigenvalues * a.coeffs ** 2))
    assert a.norm(1) ** 2 == pytest.approx(np.sum(space.basis.eigenvalues ** 2 * a.coeffs ** 2))
    small = flat_torus(2).basis(5)
    c = SpectralVector.eigenfunction(small, ("cos", (1, 0)))
    assert (c + a).norm() ** 2 == pytest.approx(a.norm() ** 2 + 2 * a.inner(c) + 1)
    with pytest.raises(PreconditionError):
        a.to_basis(small)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=2))
def test_affine_combination_of_data(coef):
    from polyritz.manifolds import circle
    space = _cached_space()
    rng = np.random.default_rng(0)
    v = rng.standard_normal(space.size)
    a, b = coef
    s1 = interpolate(space, a * v + b)
    s0 = interpolate(space, v)
    assert np.allclose(s1.alpha, a * s0.alpha, atol=1e-9 * (1 + abs(a)) * np.abs(s0.alpha).max())
    assert s1.constant == pytest.approx(a * s0.constant + b, abs=1e-9 * (1 + abs(a) + abs(b)))


_SPACE = []


def _cached_space():
    if not _SPACE:
        from polyritz.manifolds import circle
        _SPACE.append(build_space(generate(circle(), 0.4), 2))
    return _SPACE[0]


def test_nodal_values_of_eigenfunction(spaces):
    space = spaces["sphere"]
    f = SpectralVector.eigenfunction(space.basis, (2, 1))
    vals = nodal_values(space, f)
    assert np.allclose(vals, space.manifold.basis_values([(2, 1)], space.nodes)[0])
