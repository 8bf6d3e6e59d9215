"""Energy functionals of the regularized continuity family.

I and J are the Aubin-type energies assembled from spectral wedge
data; the twisted Ding and Mabuchi functionals add the divisor
exponent and its normalization constants.  Integrals of the
zero-regularization exponent are never summed directly on the grid:
they are extrapolated over the grid-scaled epsilon pair, the same
policy the solver's normalization constant uses, so every functional
shares one quadrature convention.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .ma_solver import (
    _apply_lap,
    _j_diag,
    _raw_exponent,
    epsilon_zero_extrapolate,
    ma_operator,
    richardson_epsilon_pair,
)

IDENTITY_SLACK = 1e-9


def i_energy(geom, phi):
    """Aubin I: (1/V) integral of phi against omega0^n - omega_phi^n."""
    phi = np.asarray(phi, dtype=float)
    ratio = ma_operator(geom, phi)
    return float(geom.mean0(phi * (1.0 - ratio)))


def j_energy(geom, phi):
    """Aubin J from the gradient wedge sum; rejects inadmissible phi."""
    phi = np.asarray(phi, dtype=float)
    ma_operator(geom, phi)
    return float(_j_diag(geom, phi))


def f0_energy(geom, phi):
    """F0 = J - (1/V) integral of phi against the background volume."""
    phi = np.asarray(phi, dtype=float)
    ma_operator(geom, phi)
    return float(_j_diag(geom, phi) - geom.mean0(phi))


def _log_mass_limit(geom, rhs, phi):
    """log of the extrapolated (1/V) integral of e^(H - mu phi).

    The raw epsilon-pair masses are computed without the normalization
    constant and the constant is added back on the log scale, so a
    zero potential returns exactly 0 by construction.
    """
    mu = rhs.mu
    if not rhs.betas:
        smooth, logw = _raw_exponent(geom, mu, 0.0, rhs.betas)
        mass = geom.mean0(np.exp(smooth - logw - mu * phi))
        return rhs.a_mu + math.log(mass)
    pair = richardson_epsilon_pair(geom)
    masses = []
    for eps in pair:
        smooth, logw = _raw_exponent(geom, mu, eps, rhs.betas)
        masses.append(geom.mean0(np.exp(smooth - logw - mu * phi)))
    mass = epsilon_zero_extrapolate(masses[0], masses[1], min(rhs.betas))
    return rhs.a_mu + math.log(mass)


def ding(geom, rhs, phi):
    """Twisted Ding functional at the epsilon -> 0 exponent.

    Only the family data of rhs (mu, angles, smooth part, limit
    constant) enters; whatever epsilon the carrier was built at is
    irrelevant because the singular integral is extrapolated afresh.
    """
    phi = np.asarray(phi, dtype=float)
    ma_operator(geom, phi)
    j = _j_diag(geom, phi)
    return float(j - geom.mean0(phi) - _log_mass_limit(geom, rhs, phi) / rhs.mu)


def ding_approx(geom, rhs, phi):
    """Approximating Ding functional at the carrier's own epsilon."""
    phi = np.asarray(phi, dtype=float)
    ma_operator(geom, phi)
    j = _j_diag(geom, phi)
    smooth, logw = _raw_exponent(geom, rhs.mu, rhs.epsilon, rhs.betas)
    mass = geom.mean0(np.exp(smooth - logw - rhs.mu * phi))
    logm = rhs.a_mu_eps + math.log(mass)
    return float(j - geom.mean0(phi) - logm / rhs.mu)


def mabuchi(geom, rhs, phi):
    """Twisted Mabuchi energy by its closed-form expression.

    Entropy of the volume ratio, plus the divisor-exponent pairing
    with the volume difference, minus mu (I - J); the singular pairing
    is extrapolated over the epsilon pair.
    """
    phi = np.asarray(phi, dtype=float)
    ratio = ma_operator(geom, phi)
    ent = geom.mean0(np.log(ratio) * ratio)
    if rhs.betas:
        pair = richardson_epsilon_pair(geom)
        vals = []
        for eps in pair:
            smooth, logw = _raw_exponent(geom, rhs.mu, eps, rhs.betas)
            vals.append(geom.mean0(
                (smooth - logw + rhs.a_mu) * (1.0 - ratio)))
        pairing = epsilon_zero_extrapolate(vals[0], vals[1], min(rhs.betas))
    else:
        smooth, _ = _raw_exponent(geom, rhs.mu, 0.0, rhs.betas)
        pairing = geom.mean0((smooth + rhs.a_mu) * (1.0 - ratio))
    i_val = geom.mean0(phi * (1.0 - ratio))
    j_val = _j_diag(geom, phi)
    return float(ent + pairing - rhs.mu * (i_val - j_val))


def mabuchi_path_formula(geom, rhs, path):
    """Twisted Mabuchi energy as a line integral along a discrete path.

    The variation is (1/V) integral of Lap_phi(phi-dot) against
    (log ratio - H + mu phi) in the moving volume; putting the
    Laplacian on the smooth velocity keeps the singular exponent under
    an integral sign where the epsilon pair handles it.  The path is a
    sequence of potentials from 0 to the target; each segment is
    integrated with 64-node Gauss-Legendre quadrature in its affine
    parameter.
    """
    if geom.kind == "spindle":
        raise ValueError("path formula is assembled on torus geometries only")
    path = [np.asarray(p, dtype=float) for p in path]
    if np.max(np.abs(path[0])) != 0.0:
        raise ValueError("path must start at the zero potential")
    nodes, weights = np.polynomial.legendre.leggauss(64)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    mu = rhs.mu
    smooth, _ = _raw_exponent(geom, mu, 0.0, rhs.betas)
    logws = []
    if rhs.betas:
        for eps in richardson_epsilon_pair(geom):
            logws.append(_raw_exponent(geom, mu, eps, rhs.betas)[1])
    total = 0.0
    for a, b in zip(path, path[1:]):
        vel = b - a
        for s, w in zip(nodes, weights):
            phi_s = a + s * vel
            hess = geom.hessian(phi_s)
            g = geom.ghat + hess
            det = geom._det(g)
            ginv = geom._inv(g, det)
            ratio = det / geom.det_ghat
            lap = _apply_lap(geom, ginv, vel) * ratio
            base = geom.mean0(
                (np.log(ratio) + mu * phi_s - smooth - rhs.a_mu) * lap)
            if rhs.betas:
                l4 = geom.mean0(logws[0] * lap)
                l1 = geom.mean0(logws[1] * lap)
                base += epsilon_zero_extrapolate(l4, l1, min(rhs.betas))
            total += w * base
    return float(total)


def osc_check(geom, phis):
    """Oscillation bounds osc <= C (1 + I) over a batch of potentials.

    Returns the smallest constants covering the batch for the I- and
    J-forms of the bound, the spread of the per-sample ratios, and the
    ids whose ratio sits more than a factor 10 below the fitted
    constant (fit-stability violators).
    """
    if isinstance(phis, np.ndarray):
        phis = [phis]
    rows = []
    for k, p in enumerate(phis):
        p = np.asarray(p, dtype=float)
        osc = float(np.max(p) - np.min(p))
        rows.append({"sample_id": k, "osc": osc, "I": i_energy(geom, p),
                     "J": j_energy(geom, p)})
    n = geom.n
    ratios_i = [r["osc"] / (1.0 + r["I"]) for r in rows]
    ratios_j = [r["osc"] / ((n + 1) * (1.0 + r["J"])) for r in rows]
    c_i = max(ratios_i)
    c_j = max(ratios_j)
    live = [r for r in ratios_i if r > 0.0]
    spread = (max(live) / min(live)) if live else 1.0
    flagged = [row["sample_id"] for row, r in zip(rows, ratios_i)
               if r < c_i / 10.0]
    return {"C_I": c_i, "C_J": c_j, "spread": spread, "flagged": flagged,
            "rows": rows}


def interpolation_check(geom, rhs_factory, phi, mu0, mu1, t):
    """Concavity residual of mu F_mu in mu along the segment.

    rhs_factory(mu) must return the family carrier for that mu with
    the same divisor data; the residual
    mu F_mu - (1-t) mu0 F_mu0 - t mu1 F_mu1 at mu = (1-t) mu0 + t mu1
    is nonnegative up to quadrature slack.
    """
    if not 0.0 < mu0 < mu1 < 1.0:
        raise ValueError("need 0 < mu0 < mu1 < 1")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    mu = (1.0 - t) * mu0 + t * mu1
    mid = mu * ding(geom, rhs_factory(mu), phi)
    left = mu0 * ding(geom, rhs_factory(mu0), phi)
    right = mu1 * ding(geom, rhs_factory(mu1), phi)
    return float(mid - (1.0 - t) * left - t * right)


@dataclass
class EnergyReport:
    """One potential's energies plus the identity residuals.

    sandwich_slack is min(I - J, (n+1) J - I); construction fails if
    the basic inequalities are violated beyond quadrature slack.
    """

    I: float
    J: float
    F0: float
    ding: float
    ding_approx: float
    mabuchi: float
    osc: float
    sandwich_slack: float
    path_mabuchi_diff: float = None

    def __post_init__(self):
        if self.I < -IDENTITY_SLACK or self.J < -IDENTITY_SLACK:
            raise ValueError(
                f"energy positivity violated: I={self.I:.3e} J={self.J:.3e}")
        if self.sandwich_slack < -IDENTITY_SLACK:
            raise ValueError(
                f"sandwich inequality violated by {self.sandwich_slack:.3e}")

    def as_dict(self):
        d = {"I": self.I, "J": self.J, "F0": self.F0, "ding": self.ding,
             "ding_approx": self.ding_approx, "mabuchi": self.mabuchi,
             "osc": self.osc, "sandwich_slack": self.sandwich_slack}
        if self.path_mabuchi_diff is not None:
            d["path_mabuchi_diff"] = self.path_mabuchi_diff
        return d


def energy_report(geom, rhs, phi, path=None):
    """Assemble the full EnergyReport for one admissible potential."""
    phi = np.asarray(phi, dtype=float)
    i_val = i_energy(geom, phi)
    j_val = j_energy(geom, phi)
    n = geom.n
    diff = None
    closed = mabuchi(geom, rhs, phi)
    if path is not None:
        diff = mabuchi_path_formula(geom, rhs, path) - closed
    return EnergyReport(
        I=i_val,
        J=j_val,
        F0=float(j_val - geom.mean0(phi)),
        ding=ding(geom, rhs, phi),
        ding_approx=ding_approx(geom, rhs, phi),
        mabuchi=closed,
        osc=float(np.max(phi) - np.min(phi)),
        sandwich_slack=float(min(i_val - j_val, (n + 1) * j_val - i_val)),
        path_mabuchi_diff=diff,
    )


def write_batch_csv(path, geom, rhs, phis):
    """Batch energies to CSV with one row per sample."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "I", "J", "ding", "mabuchi", "osc",
                         "slack"])
        for k, p in enumerate(phis):
            rep = energy_report(geom, rhs, p)
            writer.writerow([k, repr(rep.I), repr(rep.J), repr(rep.ding),
                             repr(rep.mabuchi), repr(rep.osc),
                             repr(rep.sandwich_slack)])
