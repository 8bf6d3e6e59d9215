"""Bisectional curvature of local conic models and its upper-bound toolkit.

For a conic model metric the curvature in a pair of unit directions
splits as Bisec(eta, nu) = sum Lambda + sum Pi, where Lambda contracts
the pure second mixed jet, Lambda_{i jbar k lbar} = -g_{i jbar, k lbar}
eta^i conj(eta^j) nu^k conj(nu^l), and Pi is the squared norm of the
contracted first jet V_q = sum_{i,k} eta^i g_{i qbar, k} nu^k in the
inverse-metric pairing.  Near a cone locus both pieces blow up like
|z_r|^{-2(2-beta_r)} while their sum stays bounded above; the routines
here expose that cancellation numerically.

The first-jet tensor splits into four structural groups (background,
third jet of the divisor factor, mixed pairs, singular diagonal); the
singular-diagonal group E carries the whole blow-up, and its norm is
controlled by a measured off-diagonal constant c0 together with a
diagonal-dominance matrix inequality.  When three or more components
meet at angles above one half, diagonal dominance can fail for the raw
background; a cutoff modification of the background potential restores
it inside a tube around the locus.

Contents
--------
TangentPair / unit_pair      metric-normalized direction pairs
CurvatureBreakdown           Lambda/Pi split plus contracted groups
bisectional, fd_bisectional  analytic evaluation and a value-only
                             finite-difference oracle
lambda_terms                 bounded vs singular split of sum Lambda
e_norm_control               singular-group norm bound with delta margin
matrix_inequality_check      alternating-sign off-diagonal dominance
ModificationSpec, build_phi0 quintic-cutoff background modification
modified_model               exact modified model in the linear region
upper_bound_scan             randomized boundedness scan, CSV/JSON out
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .conic_tensors import (
    LocalModel,
    inverse_expansion,
    metric_jet,
    displayed_terms,
    _ujets,
)
from .cxpoly import CxPoly

_UNIT_TOL = 1e-12


def _quad_form(gmat, v, w):
    """sum_{i,j} g_{i jbar} v^i conj(w^j)."""
    return complex(np.einsum("i,ij,j->", v, gmat, np.conj(w)))


def g_norm_sq(gmat, v):
    """Squared length of a (1,0) vector in the metric gmat."""
    return float(np.real(_quad_form(gmat, v, v)))


@dataclass
class TangentPair:
    """Two unit (1,0) tangent vectors at a fixed base point.

    Normalization is with respect to the conic model metric, so the
    components along the singular coordinates shrink like
    |z_r|^{1-beta_r}; ``scale_constant`` records the tightest K with
    |eta^r|, |nu^r| <= K |z_r|^{1-beta_r}.
    """

    eta: np.ndarray
    nu: np.ndarray
    scale_constant: float = 0.0

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=complex)
        self.nu = np.asarray(self.nu, dtype=complex)
        if self.eta.ndim != 1 or self.eta.shape != self.nu.shape:
            raise ValueError("pair vectors must be 1-d and of equal length")
        if not (np.all(np.isfinite(self.eta)) and np.all(np.isfinite(self.nu))):
            raise ValueError("pair vectors must be finite")


def unit_pair(model, p, eta=None, nu=None, rng=None):
    """Metric-normalized tangent pair at an off-locus point.

    Missing directions are drawn from ``rng`` as standard complex
    Gaussians before normalization.  Returns a TangentPair whose
    scale_constant is the measured component-scale ratio.
    """
    p = np.asarray(p, dtype=complex)
    gmat = metric_jet(model, p).g
    if eta is None or nu is None:
        gen = rng if isinstance(rng, np.random.Generator) \
            else np.random.default_rng(rng)
        if eta is None:
            eta = gen.standard_normal(model.n) + 1j * gen.standard_normal(model.n)
        if nu is None:
            nu = gen.standard_normal(model.n) + 1j * gen.standard_normal(model.n)
    eta = np.asarray(eta, dtype=complex)
    nu = np.asarray(nu, dtype=complex)
    eta = eta / np.sqrt(g_norm_sq(gmat, eta))
    nu = nu / np.sqrt(g_norm_sq(gmat, nu))
    kappa = 0.0
    for r in range(model.m):
        fade = abs(p[r]) ** (1.0 - model.betas[r])
        kappa = max(kappa, abs(eta[r]) / fade, abs(nu[r]) / fade)
    return TangentPair(eta, nu, kappa)


@dataclass
class CurvatureBreakdown:
    """Bisectional curvature value with its structural decomposition.

    ``lambda_sum`` is the contracted second-jet part, ``pi_sum`` the
    squared first-jet norm, and ``total`` their sum.
    ``singular_diagonal`` is the magnitude of the blow-up term
    sum_r beta_r^2 (beta_r-1)^2 |eta^r|^2 |nu^r|^2 / |z_r|^{2(2-beta_r)};
    it enters lambda_sum with a minus sign.  The four contracted vectors
    are the structural first-jet groups; their sum reproduces the full
    contraction V_q at adapted base points.  ``e_norm_sq`` is the
    inverse-metric squared norm of the singular-diagonal group alone.
    """

    lambda_sum: float
    pi_sum: float
    singular_diagonal: float
    a_contract: np.ndarray
    b_contract: np.ndarray
    d_contract: np.ndarray
    e_contract: np.ndarray
    e_norm_sq: float
    total: float

    def __post_init__(self):
        scale = max(1.0, abs(self.lambda_sum), abs(self.pi_sum))
        if self.pi_sum < -1e-10 * scale:
            raise ValueError("pi_sum must be nonnegative")
        if abs(self.total - (self.lambda_sum + self.pi_sum)) > 1e-10 * scale:
            raise ValueError("total must equal lambda_sum + pi_sum")


def singular_diagonal_term(betas, z, eta, nu):
    """Magnitude of the singular diagonal curvature contribution.

    sum_r beta_r^2 (beta_r - 1)^2 |eta^r|^2 |nu^r|^2 |z_r|^{2(beta_r-2)},
    one term per entry of ``betas``.  Accepts the closed-interval limits
    (the coefficient vanishes at beta = 1) so it doubles as a standalone
    coefficient check.
    """
    total = 0.0
    for r, b in enumerate(betas):
        coef = b * b * (b - 1.0) ** 2
        if coef == 0.0:
            continue
        total += (coef * abs(eta[r]) ** 2 * abs(nu[r]) ** 2
                  * abs(z[r]) ** (2.0 * (b - 2.0)))
    return total


def _check_unit(gmat, pair):
    for v, name in ((pair.eta, "eta"), (pair.nu, "nu")):
        if abs(g_norm_sq(gmat, v) - 1.0) > _UNIT_TOL:
            raise ValueError(f"tangent pair is not unit: |{name}|_g != 1")


def bisectional(model, p, pair):
    """Bisectional curvature Bisec(eta, nu) with its full breakdown.

    Parameters
    ----------
    model : LocalModel
        Conic model, evaluated off the cone locus.
    p : array_like
        Base point, one complex coordinate per variable.
    pair : TangentPair
        Unit directions at p; a non-unit pair is rejected.

    Returns
    -------
    CurvatureBreakdown
    """
    p = np.asarray(p, dtype=complex)
    jet = metric_jet(model, p)
    _check_unit(jet.g, pair)
    eta, nu = pair.eta, pair.nu
    lam = -float(np.real(np.einsum(
        "ijkl,i,j,k,l->", jet.d2, eta, np.conj(eta), nu, np.conj(nu))))
    ginv = np.linalg.inv(jet.g)
    vfull = np.einsum("i,iqk,k->q", eta, jet.d1, nu)
    pi = float(np.real(np.einsum("q,qp,p->", vfull, ginv, np.conj(vfull))))
    groups = displayed_terms(model, p)["d1"]
    contract = {name: np.einsum("i,iqk,k->q", eta, tensor, nu)
                for name, tensor in groups.items()}
    e_vec = contract["singular_diagonal"]
    e_norm = float(np.real(np.einsum("q,qp,p->", e_vec, ginv, np.conj(e_vec))))
    sing = singular_diagonal_term(model.betas, p, eta, nu)
    return CurvatureBreakdown(
        lambda_sum=lam,
        pi_sum=pi,
        singular_diagonal=sing,
        a_contract=contract["background"],
        b_contract=contract["third_jet"],
        d_contract=contract["mixed_pair"],
        e_contract=e_vec,
        e_norm_sq=e_norm,
        total=lam + pi,
    )


def lambda_terms(model, p, pair):
    """Split sum Lambda into its bounded and singular-diagonal parts.

    Returns ``(bounded, singular)`` with singular <= 0 and
    bounded + singular = lambda_sum.  On a flat one-component model the
    bounded part vanishes identically; in general it stays below a
    fixed constant as p approaches the locus along rays.
    """
    p = np.asarray(p, dtype=complex)
    jet = metric_jet(model, p)
    _check_unit(jet.g, pair)
    lam = -float(np.real(np.einsum(
        "ijkl,i,j,k,l->", jet.d2, pair.eta, np.conj(pair.eta),
        pair.nu, np.conj(pair.nu))))
    singular = -singular_diagonal_term(model.betas, p, pair.eta, pair.nu)
    return lam - singular, singular


# ---------------------------------------------------------------------------
# finite-difference oracle (metric values only)


def fd_bisectional(model, p, pair, step=None):
    """Curvature oracle built from metric values alone.

    Fourth-order centered stencils differentiate the contracted metric
    along the complex line p + w nu; no analytic jets enter.  Accurate
    to about 1e-6 relative at distances >= 1e-2 from the locus (the
    stencil is ill-conditioned closer in).

    Returns a dict with keys total, lambda_sum, pi_sum.
    """
    p = np.asarray(p, dtype=complex)
    jet0 = metric_jet(model, p)
    _check_unit(jet0.g, pair)
    eta, nu = pair.eta, pair.nu
    if step is None:
        dmin = min((abs(p[r]) for r in range(model.m)), default=1.0)
        step = 0.01 * min(1.0, dmin)
    h = float(step)

    offsets = [-2.0, -1.0, 1.0, 2.0]
    reals = [metric_jet(model, p + s * h * nu).g for s in offsets]
    imags = [metric_jet(model, p + 1j * s * h * nu).g for s in offsets]

    def contract(gm):
        return complex(np.einsum("i,ij,j->", eta, gm, np.conj(eta)))

    f0 = contract(jet0.g).real
    fr = [contract(g).real for g in reals]
    fi = [contract(g).real for g in imags]
    # d2/ds2 and d2/dt2, stencil (-1, 16, -30, 16, -1)/(12 h^2)
    dss = (-fr[0] + 16.0 * fr[1] - 30.0 * f0 + 16.0 * fr[2] - fr[3]) / (12.0 * h * h)
    dtt = (-fi[0] + 16.0 * fi[1] - 30.0 * f0 + 16.0 * fi[2] - fi[3]) / (12.0 * h * h)
    lam = -0.25 * (dss + dtt)

    wr = [np.einsum("i,ij->j", eta, g) for g in reals]
    wi = [np.einsum("i,ij->j", eta, g) for g in imags]
    ds = (wr[0] - 8.0 * wr[1] + 8.0 * wr[2] - wr[3]) / (12.0 * h)
    dt = (wi[0] - 8.0 * wi[1] + 8.0 * wi[2] - wi[3]) / (12.0 * h)
    v = 0.5 * (ds - 1j * dt)
    ginv = np.linalg.inv(jet0.g)
    pi = float(np.real(np.einsum("q,qp,p->", v, ginv, np.conj(v))))
    return {"total": lam + pi, "lambda_sum": lam, "pi_sum": pi}


# ---------------------------------------------------------------------------
# singular-group norm control


def _case_one(model):
    return model.m <= 2 or all(b <= 0.5 + 1e-12 for b in model.betas)


def e_norm_control(model, p, pair, modification=None,
                   deltas=(0.01, 0.05, 0.1)):
    """Check the norm bound for the singular-diagonal first-jet group.

    Verifies numerically that

        ||E||^2 <= sum_r beta_r^{-2} |z_r|^{2(1-beta_r)}
                   (1 + (c0 + 2 delta) ghat_{r rbar} beta_r^{-2}
                        |z_r|^{2(1-beta_r)})
                   / (1 + c_r(p) |z_r|^{2(1-beta_r)}) |W_r|^2,

    where W_r is the pair-contracted E component, c0 is measured from
    the background off-diagonals, c_r comes from the inverse-metric
    expansion, and delta ranges over ``deltas`` (best margin reported).

    Applies directly when m <= 2 or all angles are at most one half;
    otherwise a ModificationSpec is required and the bound is evaluated
    for the modified background.  A case mismatch is reported in the
    returned dict, never guessed around.
    """
    p = np.asarray(p, dtype=complex)
    if modification is not None and modification.model is not model:
        raise ValueError("modification was built for a different model")
    if not _case_one(model):
        if modification is None:
            return {
                "status": "case-mismatch",
                "reason": ("three or more components with an angle above "
                           "one half need a background modification"),
                "m": model.m,
                "betas": tuple(model.betas),
            }
        work = modified_model(modification)
        case = "case-2-modified"
    else:
        work = model if modification is None else modified_model(modification)
        case = "case-1" if modification is None else "case-1-modified"

    bd = bisectional(work, p, pair)
    lhs = bd.e_norm_sq
    bg = work.background_jets(p[None, :])[0][0]
    m = work.m
    cvals = inverse_expansion(work, p).c
    c0 = 0.0
    for r in range(m):
        for s in range(r + 1, m):
            ratio = abs(bg[r, s]) / np.sqrt(bg[r, r].real * bg[s, s].real)
            c0 = max(c0, float(ratio))

    weights = np.empty(m)
    for r in range(m):
        b = work.betas[r]
        x = abs(p[r]) ** (2.0 * (1.0 - b))
        wr = pair.eta[r] * (b * b * (b - 1.0) * np.conj(p[r])
                            * abs(p[r]) ** (2.0 * (b - 2.0))) * pair.nu[r]
        weights[r] = (x / (b * b)) * abs(wr) ** 2

    best = None
    for delta in deltas:
        if c0 + 2.0 * delta >= 1.0:
            continue
        rhs = 0.0
        for r in range(m):
            b = work.betas[r]
            x = abs(p[r]) ** (2.0 * (1.0 - b))
            top = 1.0 + (c0 + 2.0 * delta) * bg[r, r].real * x / (b * b)
            bot = 1.0 + cvals[r] * x
            rhs += weights[r] * top / bot
        margin = np.inf if lhs <= 1e-300 else rhs / lhs
        if best is None or margin > best[1]:
            best = (delta, margin, rhs)
    if best is None:
        return {"status": "case-mismatch",
                "reason": "no admissible delta keeps c0 + 2 delta below 1",
                "c0": c0}
    delta, margin, rhs = best
    return {
        "status": "ok",
        "case": case,
        "c0": c0,
        "c_r": [float(c) for c in cvals],
        "delta": delta,
        "margin": float(margin),
        "lhs": float(lhs),
        "rhs": float(rhs),
        "holds": bool(lhs <= rhs * (1.0 + 1e-9)),
        "pi_excess": float(bd.pi_sum - bd.singular_diagonal),
    }


def matrix_inequality_check(gm, c0_prime):
    """Alternating-sign off-diagonal dominance of a background block.

    Tests whether the matrix M with M[r, s] = (-1)^{r+s} ghat_{r sbar}
    off the diagonal (zero on it) satisfies M < c0' diag(ghat_{r rbar})
    in the sense of Hermitian forms.

    Returns ``(holds, gap)`` where gap is the smallest eigenvalue of
    c0' diag - M; positive gap means the inequality holds.
    """
    gm = np.asarray(gm, dtype=complex)
    if gm.ndim != 2 or gm.shape[0] != gm.shape[1]:
        raise ValueError("background block must be a square matrix")
    if not 0.0 < c0_prime < 1.0:
        raise ValueError("c0_prime must lie in (0, 1)")
    scale = max(1.0, float(np.max(np.abs(gm))))
    if np.max(np.abs(gm - gm.conj().T)) > 1e-10 * scale:
        raise ValueError("background block must be Hermitian")
    diag = np.real(np.diag(gm))
    if np.any(diag <= 0.0):
        raise ValueError("background diagonal must be positive")
    m = gm.shape[0]
    signs = np.where((np.add.outer(np.arange(m), np.arange(m)) % 2) == 0,
                     1.0, -1.0)
    off = signs * gm
    np.fill_diagonal(off, 0.0)
    diff = c0_prime * np.diag(diag) - off
    gap = float(np.linalg.eigvalsh(diff)[0])
    return gap > 0.0, gap


# ---------------------------------------------------------------------------
# background modification


def _hermite_pair(s):
    """Quintic basis values (H0, H1) and derivatives at s in [0, 1].

    H0 carries (value, slope, curvature) = (1, 0, 0) at s=0 and (0,0,0)
    at s=1; H1 carries (0, 1, 0) at s=0 and (0, 0, 0) at s=1.
    """
    s2 = s * s
    s3 = s2 * s
    s4 = s3 * s
    s5 = s4 * s
    h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5
    h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5
    d0 = -30.0 * s2 + 60.0 * s3 - 30.0 * s4
    d1 = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4
    dd0 = -60.0 * s + 180.0 * s2 - 120.0 * s3
    dd1 = -36.0 * s + 96.0 * s2 - 60.0 * s3
    return h0, h1, d0, d1, dd0, dd1


@dataclass
class ModificationSpec:
    """Cutoff modification of the background potential.

    Adds sum_r phi_r(u_r) to the potential, with u_r the squared
    divisor-section weight and phi_r(t) = mod_coeff_r t for t < r0,
    identically 0 for t > r1, and a quintic Hermite blend between, so
    phi_r is C^2 everywhere.  Inside the linear region the modified
    metric equals the original plus mod_coeff_r times the flat factor
    form, which is what restores diagonal dominance near the locus.

    Diagnostics filled by build_phi0: the largest second derivative of
    any profile, the range of modified-to-original eigenvalue ratios
    over tube samples, and the calibration constant bounding the ratio
    growth per unit coefficient.
    """

    model: LocalModel
    mod_coeffs: tuple
    r0: float
    r1: float
    c0_prime: float
    max_second_derivative: float = 0.0
    eigen_ratio_range: tuple = (1.0, 1.0)
    calibration: float = 0.0

    def __post_init__(self):
        self.mod_coeffs = tuple(float(c) for c in self.mod_coeffs)
        if len(self.mod_coeffs) != self.model.m:
            raise ValueError("one modification coefficient per component")
        if any(c < 0.0 for c in self.mod_coeffs):
            raise ValueError("modification coefficients must be nonnegative")
        if not 0.0 < self.r0 < self.r1:
            raise ValueError("cutoff radii must satisfy 0 < r0 < r1")
        if not 0.0 < self.c0_prime < 1.0:
            raise ValueError("c0_prime must lie in (0, 1)")

    def _pieces(self, t):
        t = np.asarray(t, dtype=float)
        width = self.r1 - self.r0
        s = np.clip((t - self.r0) / width, 0.0, 1.0)
        inner = t < self.r0
        outer = t > self.r1
        return t, s, width, inner, outer

    def profile(self, r, t):
        """phi_r(t), vectorized over t."""
        lam = self.mod_coeffs[r]
        t, s, width, inner, outer = self._pieces(t)
        h0, h1, _, _, _, _ = _hermite_pair(s)
        val = lam * (self.r0 * h0 + width * h1)
        return np.where(inner, lam * t, np.where(outer, 0.0, val))

    def profile_d1(self, r, t):
        lam = self.mod_coeffs[r]
        t, s, width, inner, outer = self._pieces(t)
        _, _, d0, d1, _, _ = _hermite_pair(s)
        val = lam * (self.r0 * d0 + width * d1) / width
        return np.where(inner, lam, np.where(outer, 0.0, val))

    def profile_d2(self, r, t):
        lam = self.mod_coeffs[r]
        t, s, width, inner, outer = self._pieces(t)
        _, _, _, _, dd0, dd1 = _hermite_pair(s)
        val = lam * (self.r0 * dd0 + width * dd1) / (width * width)
        return np.where(inner | outer, 0.0, val)

    def phi0(self, pts):
        """sum_r phi_r(u_r) at the given points (batched or single)."""
        pts = np.asarray(pts, dtype=complex)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        out = np.zeros(pts.shape[0])
        for r in range(self.model.m):
            fj = self.model.factor_jets(r, pts)
            u = fj["val"] * np.abs(pts[:, r]) ** 2
            out += self.profile(r, u)
        return out[0] if single else out


def modified_background_values(spec, pts):
    """Value matrices of the modified background at given points.

    Uses the chain rule with the exact weight jets, so it is valid in
    all three cutoff regions (linear, blend, and unmodified exterior).
    """
    model = spec.model
    pts = np.asarray(pts, dtype=complex)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    g = np.array(model.background_jets(pts)[0])
    for r in range(model.m):
        fj = model.factor_jets(r, pts)
        u, u1, _, um, _, _, _ = _ujets(model, r, pts, fj)
        p1 = spec.profile_d1(r, u)
        p2 = spec.profile_d2(r, u)
        g += (p1[:, None, None] * um
              + p2[:, None, None] * np.einsum("pi,pj->pij", u1, np.conj(u1)))
    return g[0] if single else g


def modified_model(spec):
    """LocalModel whose potential carries the linear-region modification.

    The returned model agrees with the modified metric exactly wherever
    every u_r stays below r0 (where phi_r is exactly linear); use it for
    jets and curvature near the locus only.
    """
    model = spec.model
    cap = max([model.pot_poly.cap] + [a.cap + 2 for a in model.a_polys])
    pot = model.pot_poly.with_cap(cap)
    for r in range(model.m):
        if spec.mod_coeffs[r] == 0.0:
            continue
        zr = CxPoly.var(model.n, r, cap)
        block = model.a_polys[r].with_cap(cap) * zr * zr.conj()
        pot = pot + spec.mod_coeffs[r] * block
    return LocalModel(model.n, model.m, model.betas, model.a_polys, pot,
                      zp=model.zp)


def _mod_sample_points(model, r0, r1, rng, count):
    """Sample points whose weights sweep the three cutoff regions."""
    targets = np.concatenate([
        np.geomspace(1e-3 * r0, 0.9 * r0, count // 3),
        np.linspace(1.01 * r0, 0.99 * r1, count // 3),
        np.linspace(1.01 * r1, 1.5 * r1, count - 2 * (count // 3)),
    ])
    pts = np.empty((targets.size, model.n), dtype=complex)
    for k, t in enumerate(targets):
        z = 0.05 * (rng.standard_normal(model.n)
                    + 1j * rng.standard_normal(model.n))
        for r in range(model.m):
            z[r] = np.sqrt(t) * np.exp(2j * np.pi * rng.random())
        pts[k] = z
    return targets, pts


def build_phi0(model, coeffs, radii, c0_prime, samples=90, rng=None):
    """Construct and validate a cutoff background modification.

    Parameters
    ----------
    model : LocalModel
    coeffs : sequence of float
        One nonnegative coefficient per component.
    radii : (float, float)
        Inner radius r0 (end of the linear region, in weight units) and
        outer radius r1 (start of the unmodified region), r0 < r1.
    c0_prime : float
        Dominance constant carried along for the matrix inequality.
    samples : int
        Number of validation points across the three regions.
    rng : seed or Generator

    Raises
    ------
    ValueError
        If the modified background loses positivity at a sample; for
        large coefficients with a narrow blend the failure message
        records the cutoff second-derivative blow-up.
    """
    r0, r1 = radii
    spec = ModificationSpec(model, tuple(coeffs), float(r0), float(r1),
                            float(c0_prime))
    gen = rng if isinstance(rng, np.random.Generator) \
        else np.random.default_rng(rng)

    # C2 check of each profile: analytic second derivative against a
    # centered difference of the first derivative, across both junctions.
    width = spec.r1 - spec.r0
    grid = np.concatenate([
        np.linspace(0.5 * spec.r0, spec.r1 * 1.05, 160),
        spec.r0 + np.array([-5.0, 5.0]) * 1e-6 * width,
        spec.r1 + np.array([-5.0, 5.0]) * 1e-6 * width,
    ])
    h = 1e-6 * width
    max_dd = 0.0
    for r in range(model.m):
        if spec.mod_coeffs[r] == 0.0:
            continue
        fd = (spec.profile_d1(r, grid + h)
              - spec.profile_d1(r, grid - h)) / (2.0 * h)
        exact = spec.profile_d2(r, grid)
        scale = max(1.0, float(np.max(np.abs(exact))))
        if np.max(np.abs(fd - exact)) > 1e-4 * scale:
            raise ValueError("cutoff profile is not C2 at the junctions")
        max_dd = max(max_dd, float(np.max(np.abs(exact))))
    spec.max_second_derivative = max_dd

    targets, pts = _mod_sample_points(model, spec.r0, spec.r1, gen, samples)
    g0 = np.array(model.background_jets(pts)[0])
    g1 = modified_background_values(spec, pts)
    eigs = np.linalg.eigvalsh(g1)
    if np.any(eigs[:, 0] <= 0.0):
        bad = int(np.argmin(eigs[:, 0]))
        if spec.r0 < targets[bad] < spec.r1:
            raise ValueError(
                "modified background loses positivity in the blend: "
                "cutoff second-derivative blow-up "
                f"(max |phi''| = {max_dd:.3g})")
        raise ValueError("modified background loses positivity")

    # Equivalence ratios over the linear-region samples, where the scan
    # and the matrix inequality operate.
    ratios = []
    calib = 0.0
    chol = np.linalg.cholesky(g0)
    for k in range(pts.shape[0]):
        if targets[k] >= spec.r0:
            continue
        low = np.linalg.inv(chol[k])
        sym = low @ g1[k] @ low.conj().T
        vals = np.linalg.eigvalsh(sym)
        ratios.extend([float(vals[0]), float(vals[-1])])
        for r in range(model.m):
            fj = model.factor_jets(r, pts[k:k + 1])
            _, _, _, um, _, _, _ = _ujets(model, r, pts[k:k + 1], fj)
            rel = low @ um[0] @ low.conj().T
            calib = max(calib, float(np.linalg.eigvalsh(rel)[-1]))
    if ratios:
        spec.eigen_ratio_range = (min(ratios), max(ratios))
    spec.calibration = calib
    return spec


# ---------------------------------------------------------------------------
# boundedness scan


def _batch_pairs(jet, raw_eta, raw_nu):
    """Normalize direction batches and contract curvature for each pair."""
    g, d1, d2 = jet.g, jet.d1, jet.d2
    ginv = np.linalg.inv(g)
    nrm_e = np.sqrt(np.real(np.einsum("bi,ij,bj->b", raw_eta, g,
                                      np.conj(raw_eta))))
    nrm_n = np.sqrt(np.real(np.einsum("bi,ij,bj->b", raw_nu, g,
                                      np.conj(raw_nu))))
    etas = raw_eta / nrm_e[:, None]
    nus = raw_nu / nrm_n[:, None]
    lam = -np.real(np.einsum("ijkl,bi,bj,bk,bl->b", d2, etas, np.conj(etas),
                             nus, np.conj(nus)))
    v = np.einsum("bi,iqk,bk->bq", etas, d1, nus)
    pi = np.real(np.einsum("bq,qp,bp->b", v, ginv, np.conj(v)))
    return etas, nus, lam, pi


def _axis_pairs(n):
    """All ordered axis pairs (e_i, e_j) as raw directions."""
    eye = np.eye(n, dtype=complex)
    etas = np.repeat(eye, n, axis=0)
    nus = np.tile(eye, (n, 1))
    return etas, nus


def scan_verdict(radii, maxima):
    """Classify a per-radius sequence of curvature maxima.

    ``unbounded-suspected`` fires when the max grows by 10x or more
    across two decades of radius and ends up positive; ``bounded``
    when the max at the smallest radius stays within slack of the max
    at the largest, or stays nonpositive; ``inconclusive`` otherwise.
    Growth is a report, never a proof.
    """
    radii = [float(r) for r in radii]
    maxima = [float(v) for v in maxima]
    if len(radii) != len(maxima) or not radii:
        raise ValueError("radii and maxima must be equal-length and nonempty")
    slack = 0.1 * max(1.0, abs(maxima[0]))
    for a in range(len(radii)):
        for b in range(a + 1, len(radii)):
            if radii[b] <= radii[a] / 100.0 * (1.0 + 1e-9):
                ref = max(maxima[a], 1e-12)
                if maxima[b] >= 10.0 * ref and maxima[b] > 0.0:
                    return "unbounded-suspected"
    if maxima[-1] <= max(maxima[0] + slack, 0.0):
        return "bounded"
    return "inconclusive"


def upper_bound_scan(model, radii, pairs=64, points=6, rng=None,
                     modification=None, csv_path=None, json_path=None):
    """Scan the bisectional curvature for an upper bound near the locus.

    At each radius in ``radii`` the scan places ``points`` base points
    with all singular coordinates at that modulus (random phases,
    random small transverse coordinates), and contracts the curvature
    with all axis pairs plus ``pairs`` random metric-normalized pairs
    per point.  The per-radius maxima drive the verdict:

    * ``bounded``   the max at the smallest radius does not exceed the
      max at the largest radius plus slack;
    * ``unbounded-suspected``  the max grows by 10x or more across two
      decades of radius (a report, not a proof);
    * ``inconclusive``  neither condition fires.

    Inputs with three or more components and an angle above one half
    are scanned as given when no ModificationSpec is supplied and the
    report labels them case-2-unmodified; with a modification the scan
    runs on the exactly-modified model and every sampled point must
    stay inside the linear cutoff region.
    """
    gen = rng if isinstance(rng, np.random.Generator) \
        else np.random.default_rng(rng)
    radii = sorted((float(r) for r in radii), reverse=True)
    if _case_one(model):
        case = "case-1"
    else:
        case = "case-2-unmodified" if modification is None else "case-2-modified"
    work = model
    if modification is not None:
        if modification.model is not model:
            raise ValueError("modification was built for a different model")
        work = modified_model(modification)

    rows = []
    for radius in radii:
        best = None
        for _ in range(points):
            z = 0.25 * (gen.standard_normal(model.n)
                        + 1j * gen.standard_normal(model.n))
            for r in range(model.m):
                z[r] = radius * np.exp(2j * np.pi * gen.random())
            if modification is not None:
                for r in range(model.m):
                    fj = model.factor_jets(r, z[None, :])
                    u = float(fj["val"][0].real * abs(z[r]) ** 2)
                    if u >= modification.r0:
                        raise ValueError(
                            "scan radii leave the linear region of the "
                            "modification")
            jet = metric_jet(work, z)
            ax_e, ax_n = _axis_pairs(model.n)
            rnd_e = (gen.standard_normal((pairs, model.n))
                     + 1j * gen.standard_normal((pairs, model.n)))
            rnd_n = (gen.standard_normal((pairs, model.n))
                     + 1j * gen.standard_normal((pairs, model.n)))
            raw_e = np.vstack([ax_e, rnd_e])
            raw_n = np.vstack([ax_n, rnd_n])
            etas, nus, lam, pi = _batch_pairs(jet, raw_e, raw_n)
            tot = lam + pi
            k = int(np.argmax(tot))
            if best is None or tot[k] > best["max_bisec"]:
                best = {
                    "radius": radius,
                    "max_bisec": float(tot[k]),
                    "lambda_sum": float(lam[k]),
                    "pi_sum": float(pi[k]),
                    "argmax_point": z.copy(),
                    "argmax_eta": etas[k].copy(),
                    "argmax_nu": nus[k].copy(),
                }
        pair = TangentPair(best["argmax_eta"], best["argmax_nu"])
        for r in range(model.m):
            fade = abs(best["argmax_point"][r]) ** (1.0 - model.betas[r])
            pair.scale_constant = max(pair.scale_constant,
                                      abs(pair.eta[r]) / fade,
                                      abs(pair.nu[r]) / fade)
        control = e_norm_control(model, best["argmax_point"], pair,
                                 modification=modification)
        best["e_margin"] = (float(control["margin"])
                            if control.get("status") == "ok" else None)
        rows.append(best)

    maxima = [row["max_bisec"] for row in rows]
    verdict = scan_verdict(radii, maxima)

    report = {
        "case": case,
        "verdict": verdict,
        "radii": radii,
        "max_bisec": maxima,
        "growth_ratio": float(max(maxima) / max(abs(maxima[0]), 1e-12)),
        "points_per_radius": points,
        "random_pairs_per_point": pairs,
        "rows": [
            {
                "radius": row["radius"],
                "max_bisec": row["max_bisec"],
                "lambda_sum": row["lambda_sum"],
                "pi_sum": row["pi_sum"],
                "e_margin": row["e_margin"],
                "argmax_point": _fmt_cvec(row["argmax_point"]),
                "argmax_pair": (_fmt_cvec(row["argmax_eta"]) + "|"
                                + _fmt_cvec(row["argmax_nu"])),
            }
            for row in rows
        ],
    }
    if csv_path is not None:
        _write_scan_csv(csv_path, report)
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    return report


def _fmt_cvec(vec):
    return ";".join(f"{z.real:.12g}{z.imag:+.12g}j" for z in vec)


def _write_scan_csv(path, report):
    cols = ["radius", "max_bisec", "argmax_point", "argmax_pair",
            "lambda_sum", "pi_sum", "e_margin"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in report["rows"]:
            writer.writerow([
                row["radius"], row["max_bisec"], row["argmax_point"],
                row["argmax_pair"], row["lambda_sum"], row["pi_sum"],
                "" if row["e_margin"] is None else row["e_margin"],
            ])
