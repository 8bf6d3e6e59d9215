"""Pointwise conic metric tensors from local polynomial data.

A LocalModel carries, near one crossing point of m divisor components
inside C^n, the polynomial jets of the background Kahler potential and of
the Hermitian weight factors a_r.  The model metric is

    g = ddbar( pot + sum_r beta_r^{-1}... )            (schematically)
    g_{ij}  = ghat_{ij} + sum_r d_i dbar_j (u_r^{beta_r}),   u_r = a_r |z_r|^2,

and this module evaluates g together with its first and second
derivatives at any off-locus point by exact product-rule assembly of the
u_r-jets (single source of truth, valid without any adaptation).

For a point where the frame-normalization conditions hold (a_r = 1,
da_r = 0, holomorphic Hessian of a_r = 0, plus the background
orthogonality conditions), `displayed_terms` re-derives the same tensors
as a sum of individually named structural terms (singular diagonal,
Hessian quadruple, third-jet family, factor quadratic, weight-curvature
jet), so a mismatch localizes to one term.

`adapt_frame` produces such a point from raw defining data: a frame
factor F_r computed from the log-jets of the raw Hermitian factor, the
divisor coordinate change z_r = f_r / F_r, an origin-centered quadratic
change removing the mixed background third jets, and a final linear
change orthogonalizing divisor and transverse directions.

`inverse_expansion` evaluates the closed-form leading terms of the
inverse metric (diagonal resolvent form with the determinant-ratio
coefficient c_r, signed-minor off-diagonal form, order predictions for
the mixed and transverse blocks) and `minor_expansion_check` verifies
the determinant decomposition det(a + diag(b)) = sum over subsets of
b-products times complementary minors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cxpoly import CxPoly, PolyJet, eval_many, invert_holo_map

_COND_TOL = 1e-10


def _is_real_poly(poly, tol=1e-12):
    diff = poly - poly.conj()
    return diff.max_abs_coeff() <= tol


def _is_holomorphic(poly):
    return all(not any(a) for (_, a) in poly.terms)


def exp_jet(poly, cap=None):
    """Series exponential of a polynomial, truncated at the cap."""
    cap = poly.cap if cap is None else cap
    c0 = poly.terms.get(((0,) * poly.n, (0,) * poly.n), 0.0)
    nil = poly - c0
    out = CxPoly.const(poly.n, 1.0, cap)
    term = CxPoly.const(poly.n, 1.0, cap)
    for k in range(1, cap + 1):
        term = (term * nil) * (1.0 / k)
        if not term.terms:
            break
        out = out + term
    return out * complex(np.exp(c0))


# ---------------------------------------------------------------------------
# local model


class LocalModel:
    """Local conic-metric data: background potential and factor polys.

    Parameters
    ----------
    n, m : int
        Ambient dimension and number of divisor components (m <= n);
        component r lives on {z_r = 0}.
    betas : sequence of float
        Cone angles in (0, 1).
    a_polys : list of CxPoly
        Real polynomials, a_r > 0 near the base point.
    pot_poly : CxPoly
        Real background potential; ghat = complex Hessian of it.
    zp : array or None
        Base point (the adaptation point when ``adapted``).
    """

    def __init__(self, n, m, betas, a_polys, pot_poly, zp=None, adapted=False):
        if not 0 <= m <= n:
            raise ValueError("need 0 <= m <= n")
        if len(betas) != m or len(a_polys) != m:
            raise ValueError("one beta and one factor poly per component")
        for b in betas:
            if not 0.0 < b < 1.0:
                raise ValueError(f"angles must lie in (0, 1), got {b}")
        for a in a_polys:
            if not _is_real_poly(a):
                raise ValueError("factor polynomials must be real")
        if not _is_real_poly(pot_poly):
            raise ValueError("background potential must be real")
        self.n = n
        self.m = m
        self.betas = tuple(float(b) for b in betas)
        self.a_polys = list(a_polys)
        self.pot_poly = pot_poly
        self.zp = None if zp is None else np.asarray(zp, dtype=complex)
        self.adapted = bool(adapted)
        self._a_jets = [PolyJet(a) for a in a_polys]
        self._pot_jet = PolyJet(pot_poly)

    # -- jet evaluation ----------------------------------------------

    def _eval_block(self, jet, specs, pts):
        polys = [jet.d(hol, anti) for hol, anti in specs]
        return np.stack(eval_many(polys, pts))

    def factor_jets(self, r, pts):
        """All a_r derivative arrays needed by the assembly at pts (P,n)."""
        n = self.n
        jet = self._a_jets[r]
        idx = range(n)
        specs = [((), ())]
        specs += [((i,), ()) for i in idx]
        specs += [((i, k), ()) for i in idx for k in idx]
        specs += [((i,), (j,)) for i in idx for j in idx]
        specs += [((i, k), (l,)) for i in idx for k in idx for l in idx]
        specs += [((i, k), (j, l)) for i in idx for j in idx
                  for k in idx for l in idx]
        flat = self._eval_block(jet, specs, pts)
        P = pts.shape[0]
        pos = 0
        val = flat[pos]; pos += 1
        d1 = flat[pos:pos + n].transpose(1, 0); pos += n
        hh = flat[pos:pos + n * n].reshape(n, n, P).transpose(2, 0, 1); pos += n * n
        mix = flat[pos:pos + n * n].reshape(n, n, P).transpose(2, 0, 1); pos += n * n
        d21 = flat[pos:pos + n ** 3].reshape(n, n, n, P).transpose(3, 0, 1, 2)
        pos += n ** 3
        d22 = flat[pos:pos + n ** 4].reshape(n, n, n, n, P).transpose(4, 0, 1, 2, 3)
        return {"val": np.real(val), "d1": d1, "hh": hh, "mix": mix,
                "d21": d21, "d22": d22}

    def background_jets(self, pts):
        """ghat, ghat_{ij,k}, ghat_{ij,kl} arrays at pts."""
        n = self.n
        jet = self._pot_jet
        idx = range(n)
        specs = [((i,), (j,)) for i in idx for j in idx]
        specs += [((i, k), (j,)) for i in idx for j in idx for k in idx]
        specs += [((i, k), (j, l)) for i in idx for j in idx
                  for k in idx for l in idx]
        flat = self._eval_block(jet, specs, pts)
        P = pts.shape[0]
        g = flat[:n * n].reshape(n, n, P).transpose(2, 0, 1)
        d1 = flat[n * n:n * n + n ** 3].reshape(n, n, n, P).transpose(3, 0, 1, 2)
        d2 = flat[n * n + n ** 3:].reshape(n, n, n, n, P).transpose(4, 0, 1, 2, 3)
        return g, d1, d2

    def base_jets(self):
        """Named jets at the base point (the fields of the local data)."""
        if self.zp is None:
            raise ValueError("model has no base point")
        pts = self.zp[None, :]
        g, gd1, _ = self.background_jets(pts)
        out = {"ghat": g[0], "ghat_d1": gd1[0], "a": [], "a_d1": [],
               "a_mix": [], "a_mix_d1": []}
        for r in range(self.m):
            fj = self.factor_jets(r, pts)
            out["a"].append(fj["val"][0])
            out["a_d1"].append(fj["d1"][0])
            out["a_mix"].append(fj["mix"][0])
            # a_{ijbar k} = d21[i, k, j] reordered to (i, j, k)
            out["a_mix_d1"].append(fj["d21"][0].transpose(0, 2, 1))
        return out

    def condition_report(self, tol=_COND_TOL):
        """Max violation of the frame and background conditions at zp."""
        if self.zp is None:
            raise ValueError("model has no base point")
        pts = self.zp[None, :]
        worst = {"a_value": 0.0, "a_d1": 0.0, "a_hh": 0.0,
                 "g_mixed_value": 0.0, "g_mixed_d1": 0.0}
        for r in range(self.m):
            fj = self.factor_jets(r, pts)
            worst["a_value"] = max(worst["a_value"], abs(fj["val"][0] - 1.0))
            worst["a_d1"] = max(worst["a_d1"], float(np.max(np.abs(fj["d1"][0]))))
            worst["a_hh"] = max(worst["a_hh"], float(np.max(np.abs(fj["hh"][0]))))
        g, gd1, _ = self.background_jets(pts)
        m, n = self.m, self.n
        if m < n:
            block = g[0][:m, m:]
            worst["g_mixed_value"] = float(np.max(np.abs(block))) if block.size else 0.0
            slab = gd1[0][:, m:, :]
            worst["g_mixed_d1"] = float(np.max(np.abs(slab))) if slab.size else 0.0
        worst["ok"] = all(v <= tol for k, v in worst.items() if k != "ok")
        return worst


@dataclass
class HermitianJet:
    """Metric tensor with first and second derivatives at given points.

    Index layout (batched over leading axis): g[p, i, j] = g_{i jbar},
    d1[p, i, j, k] = g_{i jbar, k}, d2[p, i, j, k, l] = g_{i jbar, k lbar}.
    """

    p: np.ndarray
    g: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    def positive(self):
        eig = np.linalg.eigvalsh(self.g)
        return bool(np.all(eig[..., 0] > 0))


def _ujets(model, r, pts, fj):
    """u = a |z_r|^2 jets; clean index-explicit einsum construction."""
    n = model.n
    zr = pts[:, r]
    zc = np.conj(zr)
    rho2 = np.real(zr * zc)
    er = np.zeros(n)
    er[r] = 1.0

    a = fj["val"]
    a1 = fj["d1"]
    a1c = np.conj(a1)
    ahh = fj["hh"]
    am = fj["mix"]
    a21 = fj["d21"]           # [i, k, l] : hol i, hol k, anti l
    a22 = fj["d22"]           # [i, j, k, l] : hol i,k anti j,l
    a12 = np.conj(a21).transpose(0, 3, 1, 2)   # [i, j, l] : hol i, anti j,l

    u = a * rho2
    u1 = rho2[:, None] * a1 + (a * zc)[:, None] * er

    uhh = (rho2[:, None, None] * ahh
           + zc[:, None, None] * (np.einsum("pi,k->pik", a1, er)
                                  + np.einsum("i,pk->pik", er, a1)))

    um = (rho2[:, None, None] * am
          + zr[:, None, None] * np.einsum("pi,j->pij", a1, er)
          + zc[:, None, None] * np.einsum("i,pj->pij", er, a1c)
          + a[:, None, None] * np.einsum("i,j->ij", er, er))

    u21 = (rho2[:, None, None, None] * a21
           + zr[:, None, None, None] * np.einsum("pik,l->pikl", ahh, er)
           + zc[:, None, None, None] * np.einsum("pil,k->pikl", am, er)
           + np.einsum("pi,k,l->pikl", a1, er, er)
           + zc[:, None, None, None] * np.einsum("pkl,i->pikl", am, er)
           + np.einsum("pk,i,l->pikl", a1, er, er))

    u12 = np.conj(u21).transpose(0, 3, 1, 2)

    u22 = (rho2[:, None, None, None, None] * a22
           + zr[:, None, None, None, None]
           * np.einsum("pikj,l->pijkl", a21, er)
           + zc[:, None, None, None, None]
           * np.einsum("pijl,k->pijkl", a12, er)
           + np.einsum("pij,k,l->pijkl", am, er, er)
           + zr[:, None, None, None, None]
           * np.einsum("pikl,j->pijkl", a21, er)
           + np.einsum("pil,j,k->pijkl", am, er, er)
           + zc[:, None, None, None, None]
           * np.einsum("pkjl,i->pijkl", a12, er)
           + np.einsum("pkj,i,l->pijkl", am, er, er)
           + np.einsum("pkl,i,j->pijkl", am, er, er))

    return u, u1, uhh, um, u21, u12, u22


def _component_tensors(beta, u, u1, uhh, um, u21, u12, u22):
    """f = u^beta mixed jets via the exact product-rule expansion."""
    b = beta
    ub1 = u ** (b - 1.0)
    ub2 = ub1 / u
    ub3 = ub2 / u
    ub4 = ub3 / u
    c1 = b * (b - 1.0)
    c2 = c1 * (b - 2.0)
    c3 = c2 * (b - 3.0)
    u1c = np.conj(u1)

    f_m = (c1 * ub2[:, None, None] * np.einsum("pi,pj->pij", u1, u1c)
           + b * ub1[:, None, None] * um)

    # f3[i,j,k] = g_{i jbar, k} contribution
    f3 = (c2 * ub3[:, None, None, None]
          * np.einsum("pi,pj,pk->pijk", u1, u1c, u1)
          + c1 * ub2[:, None, None, None]
          * (np.einsum("pik,pj->pijk", uhh, u1c)
             + np.einsum("pi,pkj->pijk", u1, um)
             + np.einsum("pij,pk->pijk", um, u1))
          + b * ub1[:, None, None, None] * u21.transpose(0, 1, 3, 2))

    uhhc = np.conj(uhh)
    # T1
    f4 = (c3 * ub4[:, None, None, None, None]
          * np.einsum("pi,pj,pk,pl->pijkl", u1, u1c, u1, u1c)
          + c2 * ub3[:, None, None, None, None]
          * (np.einsum("pkl,pi,pj->pijkl", um, u1, u1c)
             + np.einsum("pk,pil,pj->pijkl", u1, um, u1c)
             + np.einsum("pk,pi,pjl->pijkl", u1, u1, uhhc)))
    # T2
    f4 = f4 + (c2 * ub3[:, None, None, None, None]
               * (np.einsum("pl,pik,pj->pijkl", u1c, uhh, u1c)
                  + np.einsum("pl,pi,pkj->pijkl", u1c, u1, um))
               + c1 * ub2[:, None, None, None, None]
               * (np.einsum("pikl,pj->pijkl", u21, u1c)
                  + np.einsum("pik,pjl->pijkl", uhh, uhhc)
                  + np.einsum("pil,pkj->pijkl", um, um)
                  + np.einsum("pi,pkjl->pijkl", u1, u12)))
    # T3
    f4 = f4 + (c2 * ub3[:, None, None, None, None]
               * np.einsum("pl,pk,pij->pijkl", u1c, u1, um)
               + c1 * ub2[:, None, None, None, None]
               * (np.einsum("pkl,pij->pijkl", um, um)
                  + np.einsum("pk,pijl->pijkl", u1, u12)))
    # T4
    f4 = f4 + (c1 * ub2[:, None, None, None, None]
               * np.einsum("pl,pikj->pijkl", u1c, u21)
               + b * ub1[:, None, None, None, None] * u22)
    return f_m, f3, f4


def metric_jet(model, p):
    """HermitianJet of the model metric at off-locus point(s) p."""
    pts = np.asarray(p, dtype=complex)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.shape[-1] != model.n:
        raise ValueError("point dimension mismatch")
    for r in range(model.m):
        if np.any(np.abs(pts[:, r]) == 0.0):
            raise ValueError("on-locus evaluation rejected")
    g, d1, d2 = model.background_jets(pts)
    g = np.array(g)
    d1 = np.array(d1)
    d2 = np.array(d2)
    for r in range(model.m):
        fj = model.factor_jets(r, pts)
        ujets = _ujets(model, r, pts, fj)
        f_m, f3, f4 = _component_tensors(model.betas[r], *ujets)
        g += f_m
        d1 += f3
        d2 += f4
    if single:
        return HermitianJet(pts[0], g[0], d1[0], d2[0])
    return HermitianJet(pts, g, d1, d2)


# ---------------------------------------------------------------------------
# displayed structural terms at an adapted point


def displayed_terms(model, p):
    """Metric jets as named structural terms, valid where the adapted
    frame conditions hold (normally the model's base point).

    Returns {"g": {...}, "d1": {...}, "d2": {...}} mapping term names to
    arrays; the values of each group sum to the corresponding tensor.
    """
    pts = np.asarray(p, dtype=complex)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    for r in range(model.m):
        if np.any(np.abs(pts[:, r]) == 0.0):
            raise ValueError("on-locus evaluation rejected")
    P = pts.shape[0]
    n = model.n
    bg_g, bg_d1, bg_d2 = model.background_jets(pts)
    zero_g = np.zeros((P, n, n), dtype=complex)
    zero_d1 = np.zeros((P, n, n, n), dtype=complex)
    zero_d2 = np.zeros((P, n, n, n, n), dtype=complex)
    out = {
        "g": {"background": bg_g, "singular_diagonal": np.array(zero_g),
              "factor_mixed": np.array(zero_g)},
        "d1": {"background": bg_d1, "singular_diagonal": np.array(zero_d1),
               "mixed_pair": np.array(zero_d1),
               "third_jet": np.array(zero_d1)},
        "d2": {"background": bg_d2, "singular_diagonal": np.array(zero_d2),
               "hessian_quadruple": np.array(zero_d2),
               "third_jet": np.array(zero_d2),
               "factor_quadratic": np.array(zero_d2),
               "weight_curvature_jet": np.array(zero_d2)},
    }
    for r in range(model.m):
        b = model.betas[r]
        fj = model.factor_jets(r, pts)
        zr = pts[:, r]
        zc = np.conj(zr)
        rho2 = np.real(zr * zc)
        er = np.zeros(n)
        er[r] = 1.0
        am = fj["mix"]
        a21 = fj["d21"]
        a12 = np.conj(a21).transpose(0, 3, 1, 2)
        a22 = fj["d22"]
        pb = rho2 ** (b - 1.0)          # |z|^{2(beta-1)}
        pb0 = rho2 ** b                  # |z|^{2 beta}
        pbm2 = rho2 ** (b - 2.0)

        dd = np.einsum("i,j->ij", er, er)
        out["g"]["singular_diagonal"] += (b * b * pb)[:, None, None] * dd
        out["g"]["factor_mixed"] += b * pb0[:, None, None] * am

        out["d1"]["singular_diagonal"] += (
            (b * b * (b - 1.0) * pbm2 * zc)[:, None, None, None]
            * np.einsum("i,j,k->ijk", er, er, er))
        out["d1"]["mixed_pair"] += (b * b * zc * pb)[:, None, None, None] * (
            np.einsum("pij,k->pijk", am, er) + np.einsum("pkj,i->pijk", am, er))
        out["d1"]["third_jet"] += (b * pb0)[:, None, None, None] * (
            a21.transpose(0, 1, 3, 2))

        out["d2"]["singular_diagonal"] += (
            (b * b * (b - 1.0) ** 2 * pbm2)[:, None, None, None, None]
            * np.einsum("i,j,k,l->ijkl", er, er, er, er))
        out["d2"]["hessian_quadruple"] += (b ** 3 * pb)[:, None, None, None, None] * (
            np.einsum("pij,k,l->pijkl", am, er, er)
            + np.einsum("pil,k,j->pijkl", am, er, er)
            + np.einsum("pkj,i,l->pijkl", am, er, er)
            + np.einsum("pkl,i,j->pijkl", am, er, er))
        out["d2"]["third_jet"] += (b * b * pb)[:, None, None, None, None] * (
            zr[:, None, None, None, None]
            * (np.einsum("pikl,j->pijkl", a21, er)
               + np.einsum("pikj,l->pijkl", a21, er))
            + zc[:, None, None, None, None]
            * (np.einsum("pijl,k->pijkl", a12, er)
               + np.einsum("pkjl,i->pijkl", a12, er)))
        out["d2"]["factor_quadratic"] += (b * b * pb0)[:, None, None, None, None] * (
            np.einsum("pij,pkl->pijkl", am, am)
            + np.einsum("pil,pkj->pijkl", am, am))
        # Theta_{ijbar,klbar} = -a22 + a_{ij} a_{kl} + a_{il} a_{kj} here
        theta4 = (-a22 + np.einsum("pij,pkl->pijkl", am, am)
                  + np.einsum("pil,pkj->pijkl", am, am))
        out["d2"]["weight_curvature_jet"] += (
            -(b * pb0)[:, None, None, None, None] * theta4)
    if single:
        for group in out.values():
            for key in group:
                group[key] = group[key][0]
    return out


# ---------------------------------------------------------------------------
# frame adaptation


@dataclass
class RawLocalData:
    """Unadapted inputs: defining functions, Hermitian factors, potential.

    f_polys are holomorphic with f_r(0) = 0 (components pass through the
    coordinate origin); the base point may sit on or off the components.
    """

    n: int
    m: int
    betas: tuple
    f_polys: list
    c_polys: list
    pot_poly: CxPoly
    p: np.ndarray = field(default_factory=lambda: None)

    def __post_init__(self):
        if len(self.f_polys) != self.m or len(self.c_polys) != self.m:
            raise ValueError("one defining function and factor per component")
        for f in self.f_polys:
            if not _is_holomorphic(f):
                raise ValueError("defining functions must be holomorphic")
            if abs(f(np.zeros(self.n, dtype=complex))) > 1e-14:
                raise ValueError("defining functions must vanish at origin")
        for c in self.c_polys:
            if not _is_real_poly(c):
                raise ValueError("Hermitian factors must be real")
        self.p = (np.zeros(self.n, dtype=complex) if self.p is None
                  else np.asarray(self.p, dtype=complex))


def _quadratic_jet_poly(n, const, lin, quad, center, cap):
    """const + lin.(z-c) + (1/2) (z-c).quad.(z-c) as a CxPoly."""
    shifted = [CxPoly.var(n, i, cap) - center[i] for i in range(n)]
    out = CxPoly.const(n, const, cap)
    for i in range(n):
        if lin[i] != 0:
            out = out + shifted[i] * lin[i]
    for i in range(n):
        for j in range(n):
            if quad[i, j] != 0:
                out = out + shifted[i] * shifted[j] * (0.5 * quad[i, j])
    return out


def _reciprocal(poly, cap=None):
    """Series 1/poly up to the cap; constant term must not vanish."""
    cap = poly.cap if cap is None else cap
    zero = (0,) * poly.n
    c0 = poly.terms.get((zero, zero), 0.0)
    if abs(c0) < 1e-10:
        raise ValueError("reciprocal needs nonvanishing constant term")
    nil = (poly - c0) * (1.0 / c0)
    out = CxPoly.const(poly.n, 1.0, cap)
    term = CxPoly.const(poly.n, 1.0, cap)
    for _ in range(cap):
        term = (term * nil) * (-1.0)
        if not term.terms:
            break
        out = out + term
    return out * (1.0 / c0)


def frame_factor(c_poly, p, cap=None):
    """Holomorphic quadratic frame factor with prescribed jets at p.

    Returns the degree-two holomorphic polynomial F whose 2-jet at p is
    F = c^{-1/2}, dF = -c^{-3/2} dc, d^2F = -c^{-3/2} d^2c
    + 2 c^{-5/2} dc dc (holomorphic derivatives of the factor c at p).
    With this jet the product |F|^2 c has value one, vanishing first
    derivatives and vanishing holomorphic Hessian at p; only the 2-jet
    of F enters those conditions, so a quadratic representative is exact.
    """
    n = c_poly.n
    cap = c_poly.cap if cap is None else cap
    jet = PolyJet(c_poly)
    cval = complex(jet.eval_d(p, (), ())).real
    if cval <= 0:
        raise ValueError("Hermitian factor must be positive at base point")
    c1 = np.array([complex(jet.eval_d(p, (i,), ())) for i in range(n)])
    c2 = np.array([[complex(jet.eval_d(p, (i, j), ())) for j in range(n)]
                   for i in range(n)])
    val = cval ** -0.5
    dF = -cval ** -1.5 * c1
    d2F = -cval ** -1.5 * c2 + 2.0 * cval ** -2.5 * np.outer(c1, c1)
    return _quadratic_jet_poly(n, val, dF, d2F, p, cap)


def _compose_state(a_polys, pot, zp, maps, cap):
    inv = invert_holo_map(maps, cap)
    a_new = [a.compose_holo(inv).prune(1e-16) for a in a_polys]
    pot_new = pot.compose_holo(inv).prune(1e-16)
    zp_new = np.array([s(zp) for s in maps])
    return a_new, pot_new, zp_new


def _quadratic_stage(model, max_inner=8):
    """Kill the mixed background third jets ghat_{i jbar, k}(zp), j > m.

    The origin-centered quadratic change feeds back into the lower jets
    at the base point, so the coefficient solve is iterated.
    """
    n, m = model.n, model.m
    cap = model.pot_poly.cap
    a_polys, pot, zp = model.a_polys, model.pot_poly, model.zp
    for _ in range(max_inner):
        mdl = LocalModel(n, m, model.betas, a_polys, pot, zp=zp)
        gq, gd1, _ = mdl.background_jets(zp[None, :])
        slab = gd1[0][:, m:, :]
        if np.max(np.abs(slab)) < 1e-13:
            break
        tblock = gq[0][m:, m:]
        bcoef = np.zeros((n - m, n, n), dtype=complex)
        for i in range(n):
            for k in range(n):
                # solve sum_t ghat_{t jbar} b^t_{ik} = ghat_{i jbar, k}
                bcoef[:, i, k] = np.linalg.solve(tblock.T, gd1[0][i, m:, k])
        maps = [CxPoly.var(n, r, cap) for r in range(m)]
        for t in range(m, n):
            q = CxPoly.var(n, t, cap)
            for i in range(n):
                for k in range(n):
                    coef = 0.5 * bcoef[t - m, i, k]
                    if coef != 0:
                        q = q + (CxPoly.var(n, i, cap)
                                 * CxPoly.var(n, k, cap)) * coef
            maps.append(q)
        a_polys, pot, zp = _compose_state(a_polys, pot, zp, maps, cap)
    return a_polys, pot, zp


def _linear_stage(model):
    """Kill the mixed background values ghat_{r tbar}(zp)."""
    n, m = model.n, model.m
    cap = model.pot_poly.cap
    zp = model.zp
    gq, _, _ = model.background_jets(zp[None, :])
    g0 = gq[0]
    tblock = g0[m:, m:]
    gamma = np.zeros((n - m, m), dtype=complex)
    for r in range(m):
        # solve sum_s gamma_{sr} ghat_{s tbar} = ghat_{r tbar}
        gamma[:, r] = np.linalg.solve(tblock.T, g0[r, m:])
    maps = [CxPoly.var(n, r, cap) for r in range(m)]
    for t in range(m, n):
        q = CxPoly.var(n, t, cap)
        for r in range(m):
            if gamma[t - m, r] != 0:
                q = q + CxPoly.var(n, r, cap) * gamma[t - m, r]
        maps.append(q)
    return _compose_state(model.a_polys, model.pot_poly, zp, maps, cap)


def adapt_frame(raw, max_sweeps=12):
    """Adapted LocalModel from raw defining data.

    The divisor coordinate change z_r = f_r comes first.  Each following
    sweep then applies a paired frame normalization per component (the
    factor is multiplied by |F_r|^2 while the coordinate z_r absorbs
    1/F_r, leaving the metric unchanged), the iterated quadratic change
    removing the mixed background third jets, and the linear change
    orthogonalizing divisor against transverse directions.  Truncation
    feedback of each sweep is proportional to the current violation, so
    the loop contracts geometrically; it stops once every condition sits
    below 5e-13.  Raises on degenerate transversality.
    """
    n, m = raw.n, raw.m
    cap = raw.pot_poly.cap
    p = np.array(raw.p, dtype=complex)

    # transversality: rows df_r(p) together with transverse unit rows
    J = np.zeros((n, n), dtype=complex)
    for r in range(m):
        for j in range(n):
            J[r, j] = raw.f_polys[r].dz(j)(p)
    for t in range(m, n):
        J[t, t] = 1.0
    if abs(np.linalg.det(J)) < 1e-10:
        raise ValueError("degenerate transversality of defining functions")

    for r in range(m):
        cval = complex(raw.c_polys[r](p)).real
        if cval <= 0:
            raise ValueError("Hermitian factor must be positive at base point")

    maps = [raw.f_polys[r] for r in range(m)]
    maps += [CxPoly.var(n, t, cap) for t in range(m, n)]
    a_polys, pot, zp = _compose_state(list(raw.c_polys), raw.pot_poly,
                                      p, maps, cap)

    model = LocalModel(n, m, raw.betas, a_polys, pot, zp=zp)
    for _ in range(max_sweeps):
        report = model.condition_report(tol=5e-13)
        if report["ok"]:
            break
        # paired frame normalization in the current coordinates
        a_polys, pot, zp = model.a_polys, model.pot_poly, model.zp
        for r in range(m):
            F = frame_factor(a_polys[r], zp, cap)
            a_polys = list(a_polys)
            a_polys[r] = (a_polys[r] * F * F.conj()).prune(1e-16)
            rec = _reciprocal(F, cap)
            maps = [CxPoly.var(n, s, cap) for s in range(n)]
            maps[r] = (maps[r] * rec).prune(1e-16)
            a_polys, pot, zp = _compose_state(a_polys, pot, zp, maps, cap)
        model = LocalModel(n, m, raw.betas, a_polys, pot, zp=zp)
        if m < n:
            a_polys, pot, zp = _quadratic_stage(model)
            model = LocalModel(n, m, raw.betas, a_polys, pot, zp=zp)
            a_polys, pot, zp = _linear_stage(model)
            model = LocalModel(n, m, raw.betas, a_polys, pot, zp=zp)

    model = LocalModel(n, m, model.betas, model.a_polys, model.pot_poly,
                       zp=model.zp, adapted=True)
    report = model.condition_report()
    if not report["ok"]:
        raise ValueError(f"adaptation failed to reach tolerance: {report}")
    return model


# ---------------------------------------------------------------------------
# inverse expansion


@dataclass
class InverseExpansion:
    """Closed-form leading inverse-metric data at a point.

    ``approx`` approximates conj(inv(G)) entrywise, i.e. the raised-index
    tensor with first index holomorphic.  Remainder exponents predict the
    absolute-error decay of the diagonal entries along rays where all
    |z_r| shrink proportionally.
    """

    b: np.ndarray
    c: np.ndarray
    c_bounds: tuple
    approx: np.ndarray
    remainder_exponents: np.ndarray
    minors: dict
    transverse_scale: np.ndarray


def _minor_det(mat, idx):
    idx = list(idx)
    if not idx:
        return 1.0 + 0.0j
    sub = mat[np.ix_(idx, idx)]
    return complex(np.linalg.det(sub))


def inverse_expansion(model, p):
    """Leading closed-form inverse entries and remainder predictions."""
    pts = np.asarray(p, dtype=complex)
    if pts.ndim != 1:
        raise ValueError("inverse_expansion expects a single point")
    n, m = model.n, model.m
    for r in range(m):
        if abs(pts[r]) == 0.0:
            raise ValueError("on-locus evaluation rejected")
    gq, _, _ = model.background_jets(pts[None, :])
    ghat = gq[0]
    R = list(range(m, n))
    A_R = _minor_det(ghat, R)
    minors = {tuple(R): A_R}
    b = np.empty(m)
    c = np.empty(m)
    for r in range(m):
        beta = model.betas[r]
        rho = abs(pts[r])
        b[r] = beta ** 2 * rho ** (2.0 * (beta - 1.0))
        num = _minor_det(ghat, [r] + R)
        minors[tuple([r] + R)] = num
        c[r] = (num / A_R).real / beta ** 2
    # record the double minors as well (used by the decomposition checks)
    for r in range(m):
        for s in range(r + 1, m):
            minors[tuple([r, s] + R)] = _minor_det(ghat, [r, s] + R)

    approx = np.zeros((n, n), dtype=complex)
    for r in range(m):
        beta = model.betas[r]
        rho = abs(pts[r])
        x = rho ** (2.0 * (1.0 - beta))
        approx[r, r] = (x / beta ** 2) / (1.0 + c[r] * x)
    for r in range(m):
        for s in range(m):
            if r == s:
                continue
            rows = [s] + R
            cols = [r] + R
            sub = ghat[np.ix_(rows, cols)]
            sign = (-1.0) ** (r + s)
            approx[r, s] = sign * complex(np.linalg.det(sub)) / (
                b[r] * b[s] * A_R)
    if R:
        tinv = np.linalg.inv(ghat[np.ix_(R, R)])
        for ti, t in enumerate(R):
            for tj, t2 in enumerate(R):
                # conj-inverse convention: entry [t, t2] = conj(inv)[t, t2]
                approx[t, t2] = np.conj(tinv[ti, tj])

    mins = np.array([min(2.0 * (1.0 - model.betas[s]), 2.0 * model.betas[s])
                     for s in range(m)])
    common = float(np.min(mins)) if m else 0.0
    rex = np.array([4.0 * (1.0 - model.betas[r]) + common for r in range(m)])
    tscale = np.array([1.0 / b[r] for r in range(m)])
    return InverseExpansion(
        b=b, c=c, c_bounds=(float(np.min(c)) if m else 0.0,
                            float(np.max(c)) if m else 0.0),
        approx=approx, remainder_exponents=rex, minors=minors,
        transverse_scale=tscale)


def minor_expansion_check(a, bvals):
    """Relative deviation of the subset-minor expansion of det(a+diag(b)).

    The decomposition sums, over subsets S of the divisor indices, the
    product of b_r for r in S times the complementary principal minor of
    a.  All terms are positive for positive definite a, so the identity
    is numerically exact.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    bvals = list(bvals)
    m = len(bvals)
    if m > n:
        raise ValueError("more b entries than matrix size")
    full = np.array(a)
    for r in range(m):
        full[r, r] += bvals[r]
    direct = np.linalg.det(full).real
    total = 0.0
    for mask in range(1 << m):
        prod = 1.0
        keep = []
        for r in range(m):
            if mask & (1 << r):
                prod *= bvals[r]
            else:
                keep.append(r)
        idx = keep + list(range(m, n))
        total += prod * _minor_det(a, idx).real
    return abs(total - direct) / max(abs(direct), 1e-300)


# ---------------------------------------------------------------------------
# high-precision direct evaluation (small batches)


def metric_value_mp(model, z, dps=40):
    """Metric matrix at one point in arbitrary precision (mpmath).

    Only the value (no derivatives); used as the direct-inversion oracle
    where the conditioning of the singular diagonal exceeds double
    precision.
    """
    import mpmath as mp

    with mp.workdps(dps):
        n = model.n
        zs = [mp.mpc(complex(v)) for v in z]

        def poly_eval(poly, hol=(), anti=()):
            jet = PolyJet(poly)
            q = jet.d(tuple(hol), tuple(anti))
            acc = mp.mpc(0)
            for (he, ae), coeff in q.terms.items():
                term = mp.mpc(complex(coeff))
                for i, e in enumerate(he):
                    for _ in range(e):
                        term *= zs[i]
                for i, e in enumerate(ae):
                    for _ in range(e):
                        term *= mp.conj(zs[i])
                acc += term
            return acc

        G = mp.zeros(n, n)
        for i in range(n):
            for j in range(n):
                G[i, j] = poly_eval(model.pot_poly, (i,), (j,))
        for r in range(model.m):
            beta = mp.mpf(model.betas[r])
            a = poly_eval(model.a_polys[r])
            zr = zs[r]
            rho2 = (zr * mp.conj(zr)).real
            u = (a * rho2).real
            u1 = []
            for i in range(n):
                v = poly_eval(model.a_polys[r], (i,)) * rho2
                if i == r:
                    v += a * mp.conj(zr)
                u1.append(v)
            for i in range(n):
                for j in range(n):
                    um = poly_eval(model.a_polys[r], (i,), (j,)) * rho2
                    if j == r:
                        um += poly_eval(model.a_polys[r], (i,)) * zr
                    if i == r:
                        um += mp.conj(poly_eval(model.a_polys[r], (j,))) \
                            * mp.conj(zr)
                    if i == r and j == r:
                        um += a
                    fij = (beta * (beta - 1) * u ** (beta - 2)
                           * u1[i] * mp.conj(u1[j])
                           + beta * u ** (beta - 1) * um)
                    G[i, j] += fij
        return G


def direct_inverse_mp(model, z, dps=40):
    """conj(G^{-1}) at one point via arbitrary-precision inversion."""
    import mpmath as mp

    with mp.workdps(dps):
        G = metric_value_mp(model, z, dps=dps)
        Ginv = G ** -1
        n = model.n
        out = np.zeros((n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                out[i, j] = complex(mp.conj(Ginv[i, j]))
        return out


def expansion_scan_csv(model, path, radii, direction=None, dps=50):
    """Write a radius scan of formula-vs-direct inverse entries as CSV.

    Points follow z = radius * direction; every inverse entry becomes one
    row per radius with the closed-form value, the arbitrary-precision
    direct value, their absolute difference, and (repeated per entry) the
    log-log slope fitted over the whole radius list.  Returns the number
    of data rows written.
    """
    import csv

    radii = np.asarray(radii, dtype=float)
    n = model.n
    if direction is None:
        direction = np.ones(n, dtype=complex)
    direction = np.asarray(direction, dtype=complex)
    if np.any(np.abs(direction[:model.m]) == 0.0):
        raise ValueError("scan direction must stay off every component")
    formula = np.empty((radii.size, n, n), dtype=complex)
    direct = np.empty((radii.size, n, n), dtype=complex)
    for i, rho in enumerate(radii):
        z = rho * direction
        formula[i] = inverse_expansion(model, z).approx
        direct[i] = direct_inverse_mp(model, z, dps=dps)
    err = np.abs(formula - direct)
    slopes = np.full((n, n), np.nan)
    logr = np.log(radii)
    for i in range(n):
        for j in range(n):
            col = err[:, i, j]
            if np.all(col > 0):
                slopes[i, j] = np.polyfit(logr, np.log(col), 1)[0]
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["radius", "entry", "formula_value_re",
                         "formula_value_im", "direct_value_re",
                         "direct_value_im", "abs_error", "fitted_slope"])
        for k, rho in enumerate(radii):
            for i in range(n):
                for j in range(n):
                    writer.writerow([
                        f"{rho:.10e}", f"{i}{j}",
                        f"{formula[k, i, j].real:.16e}",
                        f"{formula[k, i, j].imag:.16e}",
                        f"{direct[k, i, j].real:.16e}",
                        f"{direct[k, i, j].imag:.16e}",
                        f"{err[k, i, j]:.6e}",
                        f"{slopes[i, j]:.4f}"])
                    rows += 1
    return rows
