"""Pointwise conic tensors: assembly oracles, adaptation, inversion.

Finite-difference oracles use centered Wirtinger stencils with steps
scaled to the evaluation point, so the derivative chain g -> d1 -> d2 is
checked against an independent discretization.  Inverse-expansion
remainders are measured against arbitrary-precision direct inversion
because the singular diagonal exceeds double-precision conditioning at
the smallest radii.
"""

import itertools

import numpy as np
import pytest

from conelab.cxpoly import CxPoly, PolyJet
from conelab import conic_tensors as ct


def real_poly(n, rng, amp=0.08, min_deg=1, max_deg=2, cap=6):
    """Random real polynomial with terms in the given degree band."""
    terms = {}
    for exps in itertools.product(range(max_deg + 1), repeat=2 * n):
        a, b = tuple(exps[:n]), tuple(exps[n:])
        tot = sum(a) + sum(b)
        if not min_deg <= tot <= max_deg:
            continue
        c = amp * (rng.standard_normal() + 1j * rng.standard_normal()) / (1 + tot)
        terms[(a, b)] = terms.get((a, b), 0.0) + 0.5 * c
        terms[(b, a)] = terms.get((b, a), 0.0) + 0.5 * np.conj(c)
    return CxPoly(n, terms, cap)


def hermitian_quadratic(n, g0, cap=6):
    """The potential sum g0_{ij} z_i conj(z_j) for a Hermitian matrix."""
    pot = CxPoly.const(n, 0.0, cap)
    for i in range(n):
        for j in range(n):
            if g0[i, j] != 0:
                pot = pot + (CxPoly.var(n, i, cap)
                             * CxPoly.varbar(n, j, cap)) * g0[i, j]
    return pot


def sample_model(n, m, rng, betas=None, amp=0.06, offdiag=0.0, cap=6):
    """Unadapted random LocalModel with positive factors near the region."""
    if betas is None:
        betas = tuple(rng.uniform(0.35, 0.85, size=m))
    g0 = np.eye(n, dtype=complex)
    if offdiag and n > 1:
        g0[0, 1] = offdiag
        g0[1, 0] = offdiag
    pot = hermitian_quadratic(n, g0, cap) + real_poly(
        n, rng, amp=amp, min_deg=3, max_deg=4, cap=cap)
    a_polys = [CxPoly.const(n, 1.0, cap)
               + real_poly(n, rng, amp=amp, min_deg=1, max_deg=3, cap=cap)
               for _ in range(m)]
    return ct.LocalModel(n, m, betas, a_polys, pot, zp=None)


def sample_raw(n, m, rng, betas=None, amp=0.06, offdiag=0.0, cap=6):
    if betas is None:
        betas = tuple(rng.uniform(0.35, 0.85, size=m))
    g0 = np.eye(n, dtype=complex)
    if offdiag and n > 1:
        g0[0, 1] = offdiag
        g0[1, 0] = offdiag
    pot = hermitian_quadratic(n, g0, cap) + real_poly(
        n, rng, amp=amp, min_deg=3, max_deg=4, cap=cap)
    c_polys = [CxPoly.const(n, 1.0, cap)
               + real_poly(n, rng, amp=amp, min_deg=1, max_deg=2, cap=cap)
               for _ in range(m)]
    f_polys = []
    for r in range(m):
        f = CxPoly.var(n, r, cap)
        for i in range(n):
            for k in range(i, n):
                coef = amp * (rng.standard_normal()
                              + 1j * rng.standard_normal())
                f = f + (CxPoly.var(n, i, cap) * CxPoly.var(n, k, cap)) * coef
        f_polys.append(f)
    p = (rng.uniform(0.2, 0.32, size=n)
         * np.exp(2j * np.pi * rng.uniform(size=n)))
    return ct.RawLocalData(n, m, tuple(betas), f_polys, c_polys, pot, p)


def wirt_fd(fun, z, k, bar=False, h=1e-5):
    """Centered Wirtinger finite difference of an array-valued field."""
    ex = np.zeros_like(z)
    ex[k] = h
    ey = np.zeros_like(z)
    ey[k] = 1j * h
    dx = (fun(z + ex) - fun(z - ex)) / (2 * h)
    dy = (fun(z + ey) - fun(z - ey)) / (2 * h)
    return 0.5 * (dx + 1j * dy) if bar else 0.5 * (dx - 1j * dy)


# ---------------------------------------------------------------------------
# assembly


def test_scalar_cone_value():
    # n = m = 1, flat background, a = 1, beta = 1/2 at |z| = 0.01:
    # g = 1 + beta^2 |z|^{2 beta - 2} = 1 + 0.25 / 0.01 = 26
    pot = hermitian_quadratic(1, np.eye(1, dtype=complex))
    model = ct.LocalModel(1, 1, (0.5,), [CxPoly.const(1, 1.0)], pot)
    jet = ct.metric_jet(model, np.array([0.01 + 0j]))
    assert abs(jet.g[0, 0] - 26.0) < 1e-12 * 26.0


def test_background_only_when_no_components():
    rng = np.random.default_rng(7)
    model = sample_model(2, 0, rng)
    z = np.array([0.21 + 0.1j, -0.15 + 0.22j])
    jet = ct.metric_jet(model, z)
    pj = PolyJet(model.pot_poly)
    for i in range(2):
        for j in range(2):
            assert abs(jet.g[i, j] - pj.eval_d(z, (i,), (j,))) < 1e-13
            for k in range(2):
                assert abs(jet.d1[i, j, k]
                           - pj.eval_d(z, (i, k), (j,))) < 1e-13
                for l in range(2):
                    assert abs(jet.d2[i, j, k, l]
                               - pj.eval_d(z, (i, k), (j, l))) < 1e-13


def test_on_locus_rejected():
    pot = hermitian_quadratic(1, np.eye(1, dtype=complex))
    model = ct.LocalModel(1, 1, (0.5,), [CxPoly.const(1, 1.0)], pot)
    with pytest.raises(ValueError, match="on-locus"):
        ct.metric_jet(model, np.array([0.0 + 0j]))


def test_model_validation():
    pot = hermitian_quadratic(1, np.eye(1, dtype=complex))
    with pytest.raises(ValueError, match="angles"):
        ct.LocalModel(1, 1, (1.2,), [CxPoly.const(1, 1.0)], pot)
    imag = CxPoly(1, {((1,), (0,)): 1.0})
    with pytest.raises(ValueError, match="real"):
        ct.LocalModel(1, 1, (0.5,), [imag], pot)


def test_hermitian_and_kahler_symmetry():
    rng = np.random.default_rng(11)
    model = sample_model(2, 2, rng, betas=(0.5, 0.7))
    pts = (rng.uniform(0.1, 0.4, size=(6, 2))
           * np.exp(2j * np.pi * rng.uniform(size=(6, 2))))
    jet = ct.metric_jet(model, pts)
    scale = np.max(np.abs(jet.d2))
    assert np.max(np.abs(np.conj(jet.g) - jet.g.transpose(0, 2, 1))) < 1e-12 * scale
    # g_{i jbar, k} symmetric under i <-> k
    assert np.max(np.abs(jet.d1 - jet.d1.transpose(0, 3, 2, 1))) < 1e-12 * scale
    # g_{i jbar, k lbar}: i <-> k, j <-> l, and Hermitian pairing
    assert np.max(np.abs(jet.d2 - jet.d2.transpose(0, 3, 2, 1, 4))) < 1e-12 * scale
    assert np.max(np.abs(jet.d2 - jet.d2.transpose(0, 1, 4, 3, 2))) < 1e-12 * scale
    herm = np.conj(jet.d2).transpose(0, 2, 1, 4, 3)
    assert np.max(np.abs(jet.d2 - herm)) < 1e-12 * scale


@pytest.mark.parametrize("mcount", [1, 2])
def test_first_derivative_matches_fd(mcount):
    rng = np.random.default_rng(23 + mcount)
    model = sample_model(2, mcount, rng, betas=(0.5, 0.7)[:mcount])
    for radius in (0.3, 1e-2):
        z = np.array([radius * np.exp(0.4j), 0.25 * np.exp(-1.1j)])
        jet = ct.metric_jet(model, z)
        for k in range(2):
            h = 1e-4 * abs(z[k])
            fd = wirt_fd(lambda w: ct.metric_jet(model, w).g, z, k, h=h)
            err = np.max(np.abs(jet.d1[:, :, k] - fd))
            assert err < 1e-6 * max(np.max(np.abs(fd)), 1.0)


@pytest.mark.parametrize("mcount", [1, 2])
def test_second_derivative_matches_fd(mcount):
    rng = np.random.default_rng(41 + mcount)
    model = sample_model(2, mcount, rng, betas=(0.6, 0.45)[:mcount])
    for radius in (0.3, 1e-2):
        z = np.array([radius * np.exp(-0.7j), 0.3 * np.exp(2.2j)])
        jet = ct.metric_jet(model, z)
        for l in range(2):
            h = 1e-4 * abs(z[l])
            fd = wirt_fd(lambda w: ct.metric_jet(model, w).d1, z, l,
                         bar=True, h=h)
            err = np.max(np.abs(jet.d2[:, :, :, l] - fd))
            assert err < 1e-6 * max(np.max(np.abs(fd)), 1.0)


def test_positive_definite_at_moderate_radius():
    rng = np.random.default_rng(3)
    model = sample_model(3, 2, rng, betas=(0.5, 0.8), amp=0.04)
    pts = (rng.uniform(0.05, 0.3, size=(5, 3))
           * np.exp(2j * np.pi * rng.uniform(size=(5, 3))))
    jet = ct.metric_jet(model, pts)
    assert jet.positive()


# ---------------------------------------------------------------------------
# frame adaptation


def test_raw_data_validation():
    cap = 6
    pot = hermitian_quadratic(2, np.eye(2, dtype=complex), cap)
    ok_f = CxPoly.var(2, 0, cap)
    ok_c = CxPoly.const(2, 1.0, cap)
    with pytest.raises(ValueError, match="holomorphic"):
        ct.RawLocalData(2, 1, (0.5,), [CxPoly.varbar(2, 0, cap)], [ok_c], pot)
    with pytest.raises(ValueError, match="vanish"):
        ct.RawLocalData(2, 1, (0.5,), [ok_f + 1.0], [ok_c], pot)
    with pytest.raises(ValueError, match="real"):
        bad_c = CxPoly(2, {((1, 0), (0, 0)): 1.0}, cap)
        ct.RawLocalData(2, 1, (0.5,), [ok_f], [bad_c], pot)


def test_degenerate_transversality():
    cap = 6
    pot = hermitian_quadratic(2, np.eye(2, dtype=complex), cap)
    f1 = CxPoly.var(2, 0, cap)
    f2 = CxPoly.var(2, 0, cap) + CxPoly.var(2, 1, cap) * 1e-13
    raw = ct.RawLocalData(2, 2, (0.5, 0.5), [f1, f2],
                          [CxPoly.const(2, 1.0, cap)] * 2, pot,
                          np.array([0.2, 0.2 + 0.1j]))
    with pytest.raises(ValueError, match="degenerate transversality"):
        ct.adapt_frame(raw)


def test_identity_adaptation():
    # a_r already 1 and flat background: adaptation changes nothing
    cap = 6
    pot = hermitian_quadratic(2, np.eye(2, dtype=complex), cap)
    raw = ct.RawLocalData(2, 1, (0.6,), [CxPoly.var(2, 0, cap)],
                          [CxPoly.const(2, 1.0, cap)], pot,
                          np.array([0.25 + 0.1j, -0.2 + 0.05j]))
    model = ct.adapt_frame(raw)
    assert model.adapted
    assert np.allclose(model.zp, raw.p)
    assert model.a_polys[0].terms == {((0, 0), (0, 0)): 1.0 + 0j}
    diff = model.pot_poly - pot
    assert diff.max_abs_coeff() < 1e-14


def test_frame_factor_prescribed_jets():
    # exponential-type factor: F has value c^{-1/2} and the stated first
    # and second holomorphic derivatives; |F|^2 c then satisfies the
    # normalization conditions at p
    rng = np.random.default_rng(5)
    n = 2
    c = ct.exp_jet(real_poly(n, rng, amp=0.2, min_deg=1, max_deg=2, cap=6))
    p = np.array([0.2 + 0.15j, -0.1 + 0.25j])
    F = ct.frame_factor(c, p)
    cj = PolyJet(c)
    Fj = PolyJet(F)
    cval = complex(cj.eval_d(p)).real
    assert abs(complex(Fj.eval_d(p)) - cval ** -0.5) < 1e-12
    for i in range(n):
        want = -cval ** -1.5 * complex(cj.eval_d(p, (i,), ()))
        assert abs(complex(Fj.eval_d(p, (i,), ())) - want) < 1e-12
        for j in range(n):
            want = (-cval ** -1.5 * complex(cj.eval_d(p, (i, j), ()))
                    + 2.0 * cval ** -2.5
                    * complex(cj.eval_d(p, (i,), ()))
                    * complex(cj.eval_d(p, (j,), ())))
            assert abs(complex(Fj.eval_d(p, (i, j), ())) - want) < 1e-12
    # exact product (cap headroom so no term is truncated away)
    a = c.with_cap(12) * F.with_cap(12) * F.conj().with_cap(12)
    aj = PolyJet(a)
    assert abs(complex(aj.eval_d(p)) - 1.0) < 1e-12
    for i in range(n):
        assert abs(complex(aj.eval_d(p, (i,), ()))) < 1e-12
        for j in range(n):
            assert abs(complex(aj.eval_d(p, (i, j), ()))) < 1e-12


@pytest.mark.parametrize("nm", [(2, 1), (3, 2)])
def test_adapted_conditions(nm):
    n, m = nm
    rng = np.random.default_rng(10 * n + m)
    raw = sample_raw(n, m, rng, amp=0.05, offdiag=0.2 if n > 1 else 0.0)
    model = ct.adapt_frame(raw)
    report = model.condition_report()
    assert report["ok"]
    assert report["a_value"] < 1e-10
    assert report["a_d1"] < 1e-10
    assert report["a_hh"] < 1e-10
    assert report["g_mixed_value"] < 1e-10
    assert report["g_mixed_d1"] < 1e-10


def test_background_orthogonalization_fd():
    # off-diagonal background with m = 1 < n = 2: after adaptation the
    # mixed value and the full mixed third jet vanish at the base point;
    # the third jet is cross-checked by finite differences
    rng = np.random.default_rng(77)
    raw = sample_raw(2, 1, rng, betas=(0.5,), amp=0.05, offdiag=0.35)
    model = ct.adapt_frame(raw)
    zp = model.zp
    pj = PolyJet(model.pot_poly)

    def ghat_field(w):
        return np.array([[pj.eval_d(w, (i,), (j,)) for j in range(2)]
                         for i in range(2)])

    assert abs(ghat_field(zp)[0, 1]) < 1e-10
    for i in range(2):
        for k in range(2):
            fd = wirt_fd(ghat_field, zp, k, h=2e-5)
            assert abs(fd[i, 1]) < 1e-7


def test_displayed_terms_sum_matches_assembly():
    rng = np.random.default_rng(13)
    raw = sample_raw(2, 1, rng, betas=(0.55,), amp=0.05, offdiag=0.25)
    model = ct.adapt_frame(raw)
    jet = ct.metric_jet(model, model.zp)
    terms = ct.displayed_terms(model, model.zp)
    for name in ("background", "singular_diagonal", "factor_mixed"):
        assert name in terms["g"]
    for name in ("singular_diagonal", "mixed_pair", "third_jet"):
        assert name in terms["d1"]
    for name in ("singular_diagonal", "hessian_quadruple", "third_jet",
                 "factor_quadratic", "weight_curvature_jet"):
        assert name in terms["d2"]
    g_sum = sum(terms["g"].values())
    d1_sum = sum(terms["d1"].values())
    d2_sum = sum(terms["d2"].values())
    assert np.max(np.abs(g_sum - jet.g)) < 1e-9 * np.max(np.abs(jet.g))
    assert np.max(np.abs(d1_sum - jet.d1)) < 1e-9 * np.max(np.abs(jet.d1))
    assert np.max(np.abs(d2_sum - jet.d2)) < 1e-9 * np.max(np.abs(jet.d2))


def test_displayed_terms_two_components():
    rng = np.random.default_rng(29)
    raw = sample_raw(2, 2, rng, betas=(0.5, 0.7), amp=0.04)
    model = ct.adapt_frame(raw)
    jet = ct.metric_jet(model, model.zp)
    terms = ct.displayed_terms(model, model.zp)
    d2_sum = sum(terms["d2"].values())
    assert np.max(np.abs(d2_sum - jet.d2)) < 1e-9 * np.max(np.abs(jet.d2))


# ---------------------------------------------------------------------------
# inverse expansion


def flat_cone_model(betas, g0=None):
    m = len(betas)
    n = g0.shape[0] if g0 is not None else m
    if g0 is None:
        g0 = np.eye(n, dtype=complex)
    pot = hermitian_quadratic(n, g0)
    a_polys = [CxPoly.const(n, 1.0) for _ in range(m)]
    return ct.LocalModel(n, m, betas, a_polys, pot)


def test_inverse_expansion_scalar_exact():
    model = flat_cone_model((0.5,))
    for rho in (1e-1, 1e-3, 1e-5):
        z = np.array([rho + 0j])
        exp = ct.inverse_expansion(model, z)
        direct = 1.0 / (1.0 + 0.25 * rho ** -1.0)
        assert abs(exp.approx[0, 0] - direct) < 1e-14 * direct
        assert abs(exp.c[0] - 4.0) < 1e-12


def test_inverse_expansion_flat_identity():
    model = flat_cone_model((0.5, 0.7))
    z = np.array([1e-2 + 0j, 1e-2 * np.exp(0.3j)])
    exp = ct.inverse_expansion(model, z)
    assert abs(exp.c[0] - 0.5 ** -2) < 1e-12
    assert abs(exp.c[1] - 0.7 ** -2) < 1e-12
    assert exp.c_bounds[0] > 0
    assert abs(exp.approx[0, 1]) == 0.0
    G = ct.metric_jet(model, z).g
    direct = np.conj(np.linalg.inv(G))
    assert abs(direct[0, 1]) < 1e-12
    # diagonal leading form times g_{rr} tends to one
    assert abs(exp.approx[0, 0] * G[0, 0] - 1.0) < 1e-12


def test_inverse_offdiagonal_slope_and_remainders():
    # constant off-diagonal background: fitted decay of the direct
    # off-diagonal entry and of the diagonal remainders must reach the
    # predicted exponents within 0.1
    g0 = np.array([[1.0, 0.3], [0.3, 1.0]], dtype=complex)
    betas = (0.5, 0.7)
    model = flat_cone_model(betas, g0)
    direction = np.exp(np.array([0.2j, -0.9j]))

    # entry decay over the wide decade window
    radii = np.logspace(-1, -5, 5)
    offdiag = np.empty(5)
    for i, rho in enumerate(radii):
        z = rho * direction
        exp = ct.inverse_expansion(model, z)
        direct = ct.direct_inverse_mp(model, z, dps=50)
        offdiag[i] = abs(direct[0, 1])
        # product form agrees at leading order once the singular weights
        # dominate the background
        if rho <= 1e-2:
            assert (abs(exp.approx[0, 1] - direct[0, 1])
                    <= 0.2 * offdiag[i] + 1e-30)
    lead = 2.0 * (1.0 - betas[0]) + 2.0 * (1.0 - betas[1])
    slope = np.polyfit(np.log(radii), np.log(offdiag), 1)[0]
    assert slope >= lead - 0.1

    # remainder decay on five dyadic radii inside the asymptotic regime
    dyadic = 1e-2 * 0.5 ** np.arange(5)
    errs = np.empty((5, 2))
    for i, rho in enumerate(dyadic):
        z = rho * direction
        exp = ct.inverse_expansion(model, z)
        direct = ct.direct_inverse_mp(model, z, dps=50)
        for r in range(2):
            errs[i, r] = abs(direct[r, r] - exp.approx[r, r])
    for r in range(2):
        slope = np.polyfit(np.log(dyadic), np.log(errs[:, r]), 1)[0]
        assert slope >= exp.remainder_exponents[r] - 0.1


def test_c_r_determinant_ratio_matches_fit():
    # c_r from background minors against c_r fitted from the direct
    # inverse at |z_r| = 1e-4: three significant digits
    g0 = np.array([[1.0, 0.3], [0.3, 1.0]], dtype=complex)
    betas = (0.5, 0.7)
    model = flat_cone_model(betas, g0)
    z = 1e-4 * np.exp(np.array([0.15j, 1.4j]))
    exp = ct.inverse_expansion(model, z)
    direct = ct.direct_inverse_mp(model, z, dps=60)
    for r in range(2):
        rho = abs(z[r])
        x = rho ** (2.0 * (1.0 - betas[r]))
        b_inv = x / betas[r] ** 2
        c_fit = (b_inv / direct[r, r].real - 1.0) / x
        assert abs(c_fit - exp.c[r]) <= 5e-3 * abs(exp.c[r])


def test_transverse_block_leading_value():
    # mixed divisor/transverse model: the transverse block of the inverse
    # approaches the inverse of the transverse background block
    rng = np.random.default_rng(19)
    model = sample_model(2, 1, rng, betas=(0.5,), amp=0.04)
    z = np.array([1e-4 * np.exp(0.7j), 0.2 * np.exp(-0.4j)])
    exp = ct.inverse_expansion(model, z)
    direct = ct.direct_inverse_mp(model, z, dps=50)
    assert abs(direct[1, 1] - exp.approx[1, 1]) < 5e-3 * abs(exp.approx[1, 1])
    # mixed entry scale: |g^{rt}| = O(b_r^{-1})
    assert abs(direct[0, 1]) < 10.0 * exp.transverse_scale[0]


def test_mp_metric_matches_double():
    rng = np.random.default_rng(31)
    model = sample_model(2, 2, rng, betas=(0.5, 0.7), amp=0.05)
    z = np.array([0.2 * np.exp(0.5j), 0.15 * np.exp(-1.2j)])
    G = ct.metric_value_mp(model, z, dps=40)
    jet = ct.metric_jet(model, z)
    for i in range(2):
        for j in range(2):
            assert abs(complex(G[i, j]) - jet.g[i, j]) < 1e-12


# ---------------------------------------------------------------------------
# minor expansion


def test_minor_expansion_no_b_is_det():
    rng = np.random.default_rng(2)
    B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    a = B @ B.conj().T + 0.5 * np.eye(3)
    assert ct.minor_expansion_check(a, []) == 0.0


def test_minor_expansion_identity_case():
    # a = I_2, b = (3, 5): both routes give (1+3)(1+5) = 24
    a = np.eye(2, dtype=complex)
    res = ct.minor_expansion_check(a, [3.0, 5.0])
    assert res < 1e-15
    full = a + np.diag([3.0, 5.0])
    assert abs(np.linalg.det(full).real - 24.0) < 1e-12


def test_minor_expansion_extreme_scales():
    rng = np.random.default_rng(17)
    B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    a = B @ B.conj().T + np.eye(3)
    res = ct.minor_expansion_check(a, [1e3, 1e6, 1e9])
    assert res < 1e-12


def test_minor_expansion_random_batch():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(0, n + 1))
        B = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        a = B @ B.conj().T + 0.3 * np.eye(n)
        b = 10.0 ** rng.uniform(-2, 8, size=m)
        assert ct.minor_expansion_check(a, list(b)) < 1e-12


# ---------------------------------------------------------------------------
# scan export


def test_expansion_scan_csv(tmp_path):
    model = flat_cone_model((0.5, 0.7),
                            np.array([[1.0, 0.3], [0.3, 1.0]], dtype=complex))
    out = tmp_path / "scan.csv"
    rows = ct.expansion_scan_csv(model, out, radii=np.logspace(-1, -3, 3))
    text = out.read_text().splitlines()
    assert text[0].split(",") == [
        "radius", "entry", "formula_value_re", "formula_value_im",
        "direct_value_re", "direct_value_im", "abs_error", "fitted_slope"]
    assert len(text) == 1 + 3 * 4
    assert rows == 3 * 4
