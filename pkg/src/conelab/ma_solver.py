"""Continuity-path solver for the regularized Monge-Ampere equation.

The equation on a closed background is

    det(ghat + Hess phi) / det(ghat) = exp(H - t phi),

with H assembled from the smooth twist data, the regularized divisor
weights, and a normalization constant that gives the right side unit
mass at t = 0.  Torus geometries are solved spectrally with a Newton
iteration whose linearizations are Krylov solves preconditioned by the
constant-coefficient symbol; the spindle reduces to a radial second
order ODE solved by sparse LU.  The solver always runs at epsilon > 0
on singular configurations; the epsilon -> 0 limit is only ever
reported by extrapolation, never solved directly.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csc_matrix, diags
from scipy.sparse.linalg import LinearOperator, gmres, splu
import scipy.fft as sfft

DEFAULT_TOL = 1e-10
MIN_T_STEP = 1e-4
MAX_HALVINGS = 30
MAX_NEWTON = 60


class NonconvergenceError(RuntimeError):
    """Newton failed; carries the last residual sup-norm."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = float(residual)


class PathFailureError(RuntimeError):
    """Continuity path stalled; carries the last good t and its states."""

    def __init__(self, message, last_good_t, states):
        super().__init__(message)
        self.last_good_t = last_good_t
        self.states = states


def epsilon_zero_extrapolate(value_4eps, value_eps, p):
    """Two-point Richardson limit for data with an epsilon^p error term."""
    if not p > 0:
        raise ValueError("extrapolation order p must be positive")
    theta = 4.0 ** (-p)
    return (value_eps - theta * value_4eps) / (1.0 - theta)


def richardson_epsilon_pair(geom):
    """The (4 h^2, h^2) regularization pair tied to the grid spacing."""
    h = geom.ds if geom.kind == "spindle" else geom.spacing
    return (4.0 * h * h, h * h)


# ---------------------------------------------------------------------------
# right-hand-side data


@dataclass(eq=False)
class RhsData:
    """Exponent data H = smooth - log_weight + a for one (mu, epsilon).

    ``smooth`` holds h0 - (1 - mu) h; ``log_weight`` holds
    sum_r (1 - beta_r) log(w_r + epsilon).  ``a_mu_eps`` normalizes the
    regularized exponent to unit mass and ``a_mu`` is its epsilon -> 0
    extrapolated counterpart.  Manufactured data (no components) skips
    the unit-mass invariant.
    """

    geom: object
    mu: float
    epsilon: float
    betas: tuple
    smooth: np.ndarray
    log_weight: np.ndarray
    a_mu_eps: float
    a_mu: float
    exponent: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        for b in self.betas:
            if not 0.0 < b < 1.0:
                raise ValueError(
                    "non-integrable configuration: angles must lie in (0, 1)")
        if self.normalized:
            mass = self.geom.mean0(np.exp(self.exponent)) - 1.0
            if abs(mass) > 1e-10:
                raise ValueError(
                    f"exponent mass defect {mass:.3e} exceeds 1e-10")


def _raw_exponent(geom, mu, epsilon, betas):
    smooth = np.asarray(getattr(geom, "h0_field", 0.0)) \
        - (1.0 - mu) * np.asarray(getattr(geom, "h_field", 0.0))
    if geom.kind == "spindle":
        smooth = np.zeros_like(geom.s) + smooth
    logw = np.zeros_like(smooth, dtype=float)
    for b, w in zip(betas, geom.weights):
        wf = w.field if hasattr(w, "field") else w
        logw = logw + (1.0 - b) * np.log(wf + epsilon)
    return smooth, logw


def normalization_constant(geom, mu, epsilon, betas):
    """a = -log of the mean of exp(H') against the background volume.

    epsilon = 0 is evaluated by Richardson extrapolation over the grid
    pair (4 h^2, h^2) with order p = min beta_r, never by summing the
    singular integrand on the grid.
    """
    betas = tuple(float(b) for b in betas)
    if len(betas) != len(geom.weights):
        raise ValueError("one angle per divisor component required")
    for b in betas:
        if b <= 0.0:
            raise ValueError(
                "non-integrable configuration: angles must be positive")
    if epsilon == 0.0 and betas:
        e4, e1 = richardson_epsilon_pair(geom)
        means = []
        for eps in (e4, e1):
            smooth, logw = _raw_exponent(geom, mu, eps, betas)
            means.append(geom.mean0(np.exp(smooth - logw)))
        limit = epsilon_zero_extrapolate(means[0], means[1], min(betas))
        return -math.log(limit)
    smooth, logw = _raw_exponent(geom, mu, epsilon, betas)
    return -math.log(geom.mean0(np.exp(smooth - logw)))


def make_rhs(geom, mu, epsilon, betas):
    """Assemble normalized RhsData for one point of the epsilon family."""
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    betas = tuple(float(b) for b in betas)
    if betas and epsilon <= 0.0:
        raise ValueError("singular configurations require epsilon > 0")
    smooth, logw = _raw_exponent(geom, mu, epsilon, betas)
    a_eps = -math.log(geom.mean0(np.exp(smooth - logw)))
    a_mu = normalization_constant(geom, mu, 0.0, betas) if betas else a_eps
    return RhsData(geom, float(mu), float(epsilon), betas, smooth, logw,
                   a_eps, a_mu, smooth - logw + a_eps)


def make_manufactured_rhs(geom, phi_star, t):
    """Rhs whose exact solution at parameter t is the given potential."""
    ratio = ma_operator(geom, phi_star)
    exponent = np.log(ratio) + t * phi_star
    zero = np.zeros_like(exponent)
    return RhsData(geom, float(t) if 0 < t < 1 else 0.5, 0.0, (),
                   exponent, zero, 0.0, 0.0, exponent, normalized=False)


# ---------------------------------------------------------------------------
# the Monge-Ampere operator and metric helpers


def _min_eig_field(geom, g):
    if geom.n == 1:
        return np.real(g[0, 0])
    tr = np.real(g[0, 0] + g[1, 1])
    det = np.real(g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0])
    disc = np.sqrt(np.maximum(tr * tr / 4.0 - det, 0.0))
    return tr / 2.0 - disc


def ma_operator(geom, phi):
    """det(ghat + Hess phi)/det ghat on the grid; spindle: 1 + phi''/m."""
    phi = np.asarray(phi, dtype=float)
    if geom.kind == "spindle":
        ratio = geom.metric_density_ratio(phi)
        if np.min(ratio) <= 0.0:
            k = int(np.argmin(ratio))
            raise ValueError(
                f"metric not positive: density ratio {ratio[k]:.3e} "
                f"at grid index {k}")
        return ratio
    hess = geom.hessian(phi)
    g = geom.ghat + hess
    mineig = _min_eig_field(geom, g)
    worst = np.unravel_index(np.argmin(mineig), geom.shape)
    if mineig[worst] <= 0.0:
        raise ValueError(
            f"metric not positive: min eigenvalue {mineig[worst]:.3e} "
            f"at grid index {tuple(int(v) for v in worst)}")
    return geom._det(g) / geom.det_ghat


# ---------------------------------------------------------------------------
# path states


@dataclass(eq=False)
class PathState:
    """One accepted solution on the continuity path.

    The residual is the sup-norm of log det(ghat + Hess phi)
    - log det ghat - (H - t phi) on torus geometries; on the spindle it
    is the mass-form residual phi'' - m (e^{G - t phi} - 1) on interior
    nodes together with the tail rows phi'' -+ 2 beta phi', which is the
    same equation weighted by the radial density so that the poles,
    where the density degenerates, do not amplify roundoff.  Both
    normalization gauges are recorded: the mean of phi and its sup/inf.
    """

    epsilon: float
    t: float
    phi: np.ndarray
    phi_mean: float
    residual: float
    newton_iters: int
    positivity_margin: float
    gauge: str
    tolerance: float = DEFAULT_TOL
    residual_history: tuple = ()
    ding_diag: float = None

    def __post_init__(self):
        if self.residual > self.tolerance:
            raise ValueError(
                f"state residual {self.residual:.3e} exceeds tolerance "
                f"{self.tolerance:.1e}")
        if not self.positivity_margin > 0.0:
            raise ValueError(
                f"state metric not positive (margin "
                f"{self.positivity_margin:.3e})")

    @property
    def sup_phi(self):
        return float(np.max(self.phi))

    @property
    def inf_phi(self):
        return float(np.min(self.phi))


# ---------------------------------------------------------------------------
# torus Newton solve


def _apply_lap(geom, ginv, v):
    hess = geom.hessian(v)
    out = np.zeros(geom.shape)
    for i in range(geom.n):
        for j in range(geom.n):
            out += np.real(ginv[i, j] * hess[j, i])
    return out


def _dead_mask(geom):
    """Frequency mask of the exact kernel of the discrete Hessian.

    Modes all of whose first-order multipliers are zeroed (every axis
    frequency is 0 or the silenced Nyquist line) produce an identically
    zero Hessian; the constant mode is excluded because it is handled
    by the gauge terms.
    """
    cached = getattr(geom, "_dead_mask_cache", None)
    if cached is None:
        cached = sum(np.abs(geom.mz[i]) ** 2 + np.abs(geom.mzb[i]) ** 2
                     for i in range(geom.n)) == 0.0
        cached.flat[0] = False
        geom._dead_mask_cache = cached
    return cached


def _live_part(geom, field):
    """Remove the Hessian-kernel (Nyquist) modes from a grid field."""
    sp = sfft.fftn(field.astype(complex))
    sp[_dead_mask(geom)] = 0.0
    return np.real(sfft.ifftn(sp))


def _linear_solve_torus(geom, ginv, t, rhs_field, det_phi):
    """Solve (Lap_{g_phi} + t) delta = rhs by preconditioned GMRES.

    At t = 0 the system is singular along constants; the right side is
    projected to zero mean against the current volume form and the
    solution is returned mean-free, with a rank-one mean term keeping
    the operator invertible.  Modes whose spectral multipliers are all
    zeroed (Nyquist combinations) sit in the exact kernel of the
    discrete Hessian, so the solve is confined to their complement at
    every t: reinstating them would only reproduce the silenced data
    spikes divided by t, not any represented geometry.
    """
    shape = geom.shape
    size = int(np.prod(shape))
    # Variable-coefficient preconditioner: in dimension 1 the Laplacian
    # is exactly c(x) dd-bar with c = g^{1 1bar}, so dividing by c ahead
    # of the flat inverse symbol inverts it exactly whatever the conic
    # density contrast; in dimension 2 the trace mean of g^{i jbar}
    # reduces the contrast to the pointwise anisotropy ratio.
    if geom.n == 1:
        coeff = np.real(ginv[0, 0])
    else:
        coeff = 0.5 * np.real(ginv[0, 0] + ginv[1, 1])
    sym_unit = sum(np.real(geom.mz[i] * geom.mzb[i]) for i in range(geom.n))
    # The t shift is anchored to the fixed background level t*scale, so
    # the symbol's distance to the frequency lattice never depends on
    # the Newton iterate; admissible configurations keep it bounded
    # away from zero.
    sym = sym_unit + t * geom.scale
    sym = np.where(np.abs(sym) < 1e-12, 1.0, sym)
    dead = _dead_mask(geom)

    rhs = _live_part(geom, np.asarray(rhs_field, dtype=float))
    cy = t == 0.0
    if cy:
        wsum = float(np.sum(det_phi))
        rhs = rhs - float(np.sum(rhs * det_phi)) / wsum

    def matvec(v):
        f = v.reshape(shape)
        out = _live_part(geom, _apply_lap(geom, ginv, f) + t * f)
        if cy:
            out = out + np.mean(f)
        return out.ravel()

    def precond(v):
        sp = sfft.fftn((v.reshape(shape) / coeff).astype(complex))
        sp[dead] = 0.0
        return np.real(sfft.ifftn(sp / sym)).ravel()

    A = LinearOperator((size, size), matvec=matvec, dtype=float)
    M = LinearOperator((size, size), matvec=precond, dtype=float)
    # restart * maxiter caps the matvec budget; healthy solves use well
    # under one restart cycle, so a cap this size only trims hopeless
    # near-resonant solves and lets t-bisection take over quickly.
    sol, info = gmres(A, rhs.ravel(), rtol=1e-10, atol=1e-14, M=M,
                      restart=60, maxiter=100)
    if info != 0:
        raise NonconvergenceError(
            f"inner linear solve stalled (gmres info {info})",
            float(np.max(np.abs(rhs))))
    delta = sol.reshape(shape)
    if cy:
        delta = delta - geom.mean0(delta)
    return delta


def _newton_torus(geom, rhs, t, phi_init, tol):
    phi = np.zeros(geom.shape) if phi_init is None else _live_part(
        geom, np.array(phi_init, dtype=float))
    H = rhs.exponent
    cy = t == 0.0

    def measure(resid_field, det_phi):
        # The solves live on the complement of the Hessian-kernel
        # (Nyquist) modes, so convergence is judged there; at t = 0 the
        # volume-weighted mean is quotiented too, being fixed by the
        # mass normalization rather than by any potential.
        live = _live_part(geom, resid_field)
        if cy:
            live = live - float(np.sum(live * det_phi)) \
                / float(np.sum(det_phi))
        return float(np.max(np.abs(live)))

    history = []
    for it in range(MAX_NEWTON):
        hess = geom.hessian(phi)
        g = geom.ghat + hess
        mineig = _min_eig_field(geom, g)
        margin = float(np.min(mineig))
        if margin <= 0.0:
            raise NonconvergenceError(
                f"initial potential not admissible: positivity margin "
                f"{margin:.3e}", math.inf)
        det_phi = geom._det(g)
        resid_field = np.log(det_phi / geom.det_ghat) - (H - t * phi)
        res = measure(resid_field, det_phi)
        history.append(res)
        if res <= tol:
            return phi, res, it, margin, tuple(history)
        ginv = geom._inv(g, det_phi)
        delta = _linear_solve_torus(geom, ginv, t, -resid_field, det_phi)
        step = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            trial = phi + step * delta
            tr_hess = geom.hessian(trial)
            tr_margin = float(np.min(_min_eig_field(geom,
                                                    geom.ghat + tr_hess)))
            if tr_margin > 0.0:
                tr_det = geom._det(geom.ghat + tr_hess)
                tr_res = measure(
                    np.log(tr_det / geom.det_ghat) - (H - t * trial), tr_det)
                if tr_res < res:
                    phi = trial
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            raise NonconvergenceError(
                f"Newton line search failed after {MAX_HALVINGS} halvings "
                f"(residual {res:.3e})", res)
    raise NonconvergenceError(
        f"Newton did not converge in {MAX_NEWTON} iterations "
        f"(residual {history[-1]:.3e})", history[-1])


# ---------------------------------------------------------------------------
# spindle Newton solve


def _tail_closed_d2(geom):
    """Second-derivative matrix with tail-annihilating end rows.

    A potential regular at the poles approaches its end plateaus like
    e^{-2 beta |s|}, so the end rows impose phi'' -+ 2 beta phi' = 0,
    which kills that mode exactly and leaves only O(e^{-2L}) closure
    error.  The plain closure rows would keep an affine near-null
    space that makes every linearized solve numerically singular, and
    hard Neumann rows would inject the full tail slope as an O(e^{-L})
    plateau offset.
    """
    cached = getattr(geom, "_tail_rows_cache", None)
    if cached is None:
        A = geom.D2.tolil(copy=True)
        D1 = geom.D1.tocsr()
        b2 = 2.0 * geom.beta
        A[0, :] = (geom.D2.tocsr()[0, :] - b2 * D1[0, :])
        A[-1, :] = (geom.D2.tocsr()[-1, :] + b2 * D1[-1, :])
        cached = A.tocsr()
        geom._tail_rows_cache = cached
    return cached


def _spindle_residual(geom, rhs, t, phi):
    out = _tail_closed_d2(geom) @ phi
    mass = geom.m * (np.exp(rhs.exponent - t * phi) - 1.0)
    out[1:-1] -= mass[1:-1]
    return out


def _spindle_t0(geom, rhs):
    """The t = 0 radial equation is linear: phi'' = m (e^G - 1).

    The tail-closed system is still rank-deficient along constants, so
    a mean row fixes the gauge and the stacked system is solved by
    least squares; solvability needs the unit-mass normalization of
    e^G.
    """
    A = _tail_closed_d2(geom).toarray()
    f = geom.m * (np.exp(rhs.exponent) - 1.0)
    b = f.copy()
    b[0] = 0.0
    b[-1] = 0.0
    rows = np.vstack([A, (geom.m * geom.quad_w)[None, :] / geom.V])
    rhs_vec = np.concatenate([b, [0.0]])
    phi, *_ = np.linalg.lstsq(rows, rhs_vec, rcond=None)
    phi = phi - geom.mean0(phi)
    resid = _spindle_residual(geom, rhs, 0.0, phi)
    return phi, float(np.max(np.abs(resid)))


def _newton_spindle(geom, rhs, t, phi_init, tol):
    if t == 0.0:
        phi, res = _spindle_t0(geom, rhs)
        if res > tol:
            raise NonconvergenceError(
                f"radial t = 0 solve residual {res:.3e}", res)
        ratio = geom.metric_density_ratio(phi)
        return phi, res, 1, float(np.min(ratio)), (res,)
    phi = np.zeros(geom.res) if phi_init is None else np.array(
        phi_init, dtype=float)
    # Reflection-symmetric data has an even solution, while the axial
    # translation mode (odd, tanh-shaped) becomes an exact kernel of
    # the linearization as t -> mu = beta; projecting updates onto
    # even functions stops roundoff from drifting along that family.
    even = bool(rhs.betas) and len(set(rhs.betas)) == 1 \
        and bool(np.all(rhs.smooth == rhs.smooth[::-1]))
    if even:
        phi = 0.5 * (phi + phi[::-1])
    history = []
    for it in range(MAX_NEWTON):
        ratio = geom.metric_density_ratio(phi)
        margin = float(np.min(ratio))
        if margin <= 0.0:
            raise NonconvergenceError(
                f"initial potential not admissible: density ratio "
                f"{margin:.3e}", math.inf)
        resid = _spindle_residual(geom, rhs, t, phi)
        res = float(np.max(np.abs(resid)))
        history.append(res)
        if res <= tol:
            return phi, res, it, margin, tuple(history)
        weight = t * geom.m * np.exp(rhs.exponent - t * phi)
        weight[0] = 0.0
        weight[-1] = 0.0
        J = csc_matrix(_tail_closed_d2(geom) + diags(weight))
        delta = splu(J).solve(-resid)
        if even:
            delta = 0.5 * (delta + delta[::-1])
        step = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            trial = phi + step * delta
            if np.min(geom.metric_density_ratio(trial)) > 0.0:
                tr_res = float(np.max(np.abs(
                    _spindle_residual(geom, rhs, t, trial))))
                if tr_res < res:
                    phi = trial
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            raise NonconvergenceError(
                f"Newton line search failed after {MAX_HALVINGS} halvings "
                f"(residual {res:.3e})", res)
    raise NonconvergenceError(
        f"Newton did not converge in {MAX_NEWTON} iterations "
        f"(residual {history[-1]:.3e})", history[-1])


def newton_solve(geom, rhs, t, phi_init=None, tolerance=DEFAULT_TOL):
    """Solve the continuity equation at one t; returns a PathState.

    For t > 0 the potential is pinned by the -t phi term; at t = 0 the
    mean of phi is fixed to zero and solvability comes from the unit
    mass of the normalized right side.  On tori the solve is posed on
    the complement of the Hessian-kernel (Nyquist) modes, and the
    residual is measured there; at t = 0 the volume-weighted mean is
    quotiented as well.  The quotiented components reflect the
    discretized data, not the solve, and shrink under refinement.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if rhs.betas and rhs.epsilon <= 0.0:
        raise ValueError(
            "solver requires epsilon > 0 on singular configurations; "
            "the zero limit is reported, not solved")
    if geom.kind == "spindle":
        phi, res, iters, margin, history = _newton_spindle(
            geom, rhs, t, phi_init, tolerance)
    else:
        phi, res, iters, margin, history = _newton_torus(
            geom, rhs, t, phi_init, tolerance)
        if t == 0.0:
            phi = phi - geom.mean0(phi)
    gauge = "mean-zero" if t == 0.0 else "free"
    return PathState(float(rhs.epsilon), float(t), phi,
                     float(geom.mean0(phi)), res, iters, margin, gauge,
                     tolerance=tolerance, residual_history=history)


# ---------------------------------------------------------------------------
# energy diagnostic (inline twin of functionals.j_energy, kept local to
# avoid an import cycle; the functionals module cross-checks it)


def _wedge_density(A, B):
    return 4.0 * np.real(A[0, 0] * B[1, 1] + A[1, 1] * B[0, 0]
                         - A[0, 1] * B[1, 0] - A[1, 0] * B[0, 1])


def _j_diag(geom, phi):
    if geom.kind == "spindle":
        dphi = geom.D1 @ phi
        return (math.pi / 2.0) * float(
            np.sum(dphi * dphi * geom.quad_w)) / geom.V
    if geom.n == 1:
        gz = geom.wirt(phi, 0)
        return geom.integral_dxdy(np.abs(gz) ** 2) / geom.V
    grads = [geom.wirt(phi, i) for i in range(2)]
    A = np.empty((2, 2) + geom.shape, dtype=complex)
    for i in range(2):
        for j in range(2):
            A[i, j] = grads[i] * np.conj(grads[j])
    gphi = geom.ghat + geom.hessian(phi)
    term0 = geom.integral_dxdy(_wedge_density(A, gphi)) / 3.0
    term1 = 2.0 * geom.integral_dxdy(_wedge_density(A, geom.ghat)) / 3.0
    return (term0 + term1) / geom.V


# ---------------------------------------------------------------------------
# the continuity path


def default_schedule(mu, kind="torus"):
    """One Calabi-Yau step then 16 geometric steps mu/100 -> mu.

    The spindle schedule starts at mu/100: its t = 0 system is
    gauge-degenerate on the radial grid and adds nothing, since the
    first positive step converges from a cold start.
    """
    ts = list(np.geomspace(mu / 100.0, mu, 16))
    ts[-1] = mu
    if kind == "spindle":
        return ts
    return [0.0] + ts


def continuity_path(geom, rhs, schedule=None, tolerance=DEFAULT_TOL):
    """March t along the schedule with warm starts and step bisection.

    Each accepted state carries the monotonicity diagnostic
    t (J(phi) - mean phi); nonconvergence bisects the t step down to a
    minimum of 1e-4 before the path is declared failed.
    """
    if schedule is None:
        schedule = default_schedule(rhs.mu, geom.kind)
    schedule = [float(t) for t in schedule]
    if sorted(schedule) != schedule or len(set(schedule)) != len(schedule):
        raise ValueError("t schedule must be increasing")
    if abs(schedule[-1] - rhs.mu) > 1e-12:
        raise ValueError("t schedule must end at mu")

    states = []
    phi = None
    last_good = None
    pending = list(schedule)
    while pending:
        t = pending[0]
        try:
            st = newton_solve(geom, rhs, t, phi_init=phi,
                              tolerance=tolerance)
        except NonconvergenceError as exc:
            base = last_good if last_good is not None else 0.0
            mid = 0.5 * (base + t)
            if last_good is None or mid - base < MIN_T_STEP:
                raise PathFailureError(
                    f"continuity path stalled before t = {t:.6g}: {exc}",
                    last_good, states) from exc
            pending.insert(0, mid)
            continue
        st.ding_diag = t * (_j_diag(geom, st.phi) - st.phi_mean)
        states.append(st)
        phi = st.phi
        last_good = t
        if pending and abs(pending[0] - t) < 1e-15:
            pending.pop(0)
    return states


def epsilon_sweep(geom, mu, betas, epsilons, schedule=None,
                  tolerance=DEFAULT_TOL):
    """Full continuity path per epsilon; decreasing epsilon list.

    Records the final potential, its sup-norm, consecutive sup
    differences, and the Ricci margin per epsilon; path failures are
    recorded, not raised.
    """
    epsilons = [float(e) for e in epsilons]
    if any(e <= 0 for e in epsilons):
        raise ValueError("epsilon values must be positive")
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ValueError("epsilon list must be strictly decreasing")
    result = {
        "epsilons": epsilons,
        "mu": float(mu),
        "final_phi": [],
        "sup_phi": [],
        "pair_sup_diff": [],
        "ricci_margin": [],
        "states": [],
        "failures": {},
    }
    prev_phi = None
    for eps in epsilons:
        rhs = make_rhs(geom, mu, eps, betas)
        try:
            states = continuity_path(geom, rhs, schedule=schedule,
                                     tolerance=tolerance)
        except PathFailureError as exc:
            result["failures"][eps] = str(exc)
            result["final_phi"].append(None)
            result["sup_phi"].append(None)
            result["ricci_margin"].append(None)
            result["states"].append(None)
            prev_phi = None
            continue
        last = states[-1]
        result["states"].append(last)
        result["final_phi"].append(last.phi)
        result["sup_phi"].append(float(np.max(np.abs(last.phi))))
        result["ricci_margin"].append(
            float(np.min(ricci_check(geom, last))))
        if prev_phi is not None:
            result["pair_sup_diff"].append(
                float(np.max(np.abs(last.phi - prev_phi))))
        prev_phi = last.phi
    return result


# ---------------------------------------------------------------------------
# Ricci verification


def ricci_check(geom, state):
    """Pointwise smallest eigenvalue of Ric(omega_t) - t omega_t.

    On a torus the Ricci tensor is the spectral -ddbar of
    log det(ghat + Hess phi); the spindle version evaluates
    (K - t) times the conformal density on the off-pole window, with K
    the Gauss curvature of the solved metric.
    """
    t = state.t
    if geom.kind == "spindle":
        K, mask = geom.gauss_curvature(state.phi)
        lam = 0.5 * geom.m * geom.metric_density_ratio(state.phi)
        return ((K - t) * lam)[mask]
    hess = geom.hessian(state.phi)
    g = geom.ghat + hess
    det = geom._det(g)
    ric = -geom.hessian(np.log(det))
    form = ric - t * g
    return _min_eig_field(geom, form)


# ---------------------------------------------------------------------------
# state export


def dump_state(geom, state, rhs, csv_path, json_path):
    """Binary-free CSV of the potential plus a JSON sidecar."""
    grid = np.atleast_2d(np.asarray(state.phi, dtype=float))
    if grid.ndim > 2:
        grid = grid.reshape(-1, grid.shape[-1])
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in grid:
            writer.writerow([f"{v:.17g}" for v in row])
    sidecar = {
        "epsilon": state.epsilon,
        "t": state.t,
        "residual": state.residual,
        "positivity_margin": state.positivity_margin,
        "a_mu_eps": rhs.a_mu_eps,
        "newton_iters": state.newton_iters,
    }
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
