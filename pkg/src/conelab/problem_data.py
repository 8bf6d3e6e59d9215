"""Angle/weight parameter bundle, admissibility, and properness margins.

Angles are tied to the path parameter mu by ``1 - beta_r = (1 - mu) c_r``
per divisor component r.  At mu -> 1 every angle closes up to beta_r = 1;
decreasing mu opens the cones at speeds set by the weights c_r.

The invariant lower bound used downstream is
``alpha >= min(min_r lambda_r beta_r, alpha_ambient, alpha_restricted)``
and the properness margin is ``alpha - n/(n+1) mu``.  Per component the
margin decomposes as ``lambda_r (1 - c_r) + (lambda_r c_r - n/(n+1)) mu``,
which at c_r = 1 is exactly ``(lambda_r - n/(n+1)) mu``: positive for all
mu in (0, 1) iff lambda_r exceeds n/(n+1), and identically zero on the
boundary lambda_r = n/(n+1).  The threshold values alpha_ambient and
alpha_restricted are user inputs; computing them is out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

# comparison slack for rational data supplied as floats
RATIONAL_TOL = 1e-12

# sentinel for "no intersection stratum": large enough to never bind
ALPHA_UNRESTRICTED = 1e30


def angles_from_mu(mu, coeffs):
    """Resolve cone angles beta_r = 1 - (1 - mu) c_r.

    Parameters
    ----------
    mu : float
        Path parameter, strictly inside (0, 1).
    coeffs : sequence of float
        Weights c_r, each in (0, 1].

    Returns
    -------
    tuple of float
        Angles beta_r, each in (0, 1).
    """
    mu = float(mu)
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    coeffs = tuple(float(c) for c in coeffs)
    bad = [r for r, c in enumerate(coeffs) if not 0.0 < c <= 1.0]
    if bad:
        raise ValueError(f"coeffs must lie in (0, 1]; offending components {bad}")
    return tuple(1.0 - (1.0 - mu) * c for c in coeffs)


def mu_from_angles(angles, coeffs, tol=1e-10):
    """Recover mu from resolved angles; checks cross-component consistency."""
    angles = tuple(float(b) for b in angles)
    coeffs = tuple(float(c) for c in coeffs)
    if len(angles) != len(coeffs):
        raise ValueError("angles and coeffs must have equal length")
    if not angles:
        raise ValueError("need at least one component to recover mu")
    mus = [1.0 - (1.0 - b) / c for b, c in zip(angles, coeffs)]
    mu = mus[0]
    bad = [r for r, m in enumerate(mus) if abs(m - mu) > tol]
    if bad:
        raise ValueError(f"inconsistent angle/weight data at components {bad}: {mus}")
    return mu


@dataclass(frozen=True)
class AngleData:
    """Parameter bundle (n, mu, c_r, beta_r, lambda_r).

    Attributes
    ----------
    n : int
        Complex dimension.
    mu : float
        Path parameter in (0, 1).
    coeffs : tuple of float
        Weights c_r in (0, 1], one per divisor component.
    seshadri : tuple of float
        Positive thresholds lambda_r, one per component.
    angles : tuple of float
        Cone angles; derived from mu and coeffs when omitted.
    """

    n: int
    mu: float
    coeffs: tuple
    seshadri: tuple
    angles: tuple = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"complex dimension must be >= 1, got {self.n}")
        derived = angles_from_mu(self.mu, self.coeffs)
        if self.angles is None:
            object.__setattr__(self, "angles", derived)
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "seshadri", tuple(float(x) for x in self.seshadri))
        object.__setattr__(self, "angles", tuple(float(b) for b in self.angles))
        if len(self.seshadri) != self.m or len(self.angles) != self.m:
            raise ValueError("coeffs, angles, seshadri must have equal length")
        bad = [r for r, lam in enumerate(self.seshadri) if lam <= 0.0]
        if bad:
            raise ValueError(f"seshadri thresholds must be positive; offending {bad}")
        bad = [
            r
            for r, (b, d) in enumerate(zip(self.angles, derived))
            if abs(b - d) > RATIONAL_TOL
        ]
        if bad:
            raise ValueError(
                f"angle relation 1 - beta = (1 - mu) c violated at components {bad}"
            )

    @property
    def m(self):
        return len(self.coeffs)

    @property
    def admissible(self):
        """True iff every component has c_r < 1, or c_r = 1 with lambda_r >= n/(n+1)."""
        thresh = self.n / (self.n + 1)
        for c, lam in zip(self.coeffs, self.seshadri):
            if c < 1.0 - RATIONAL_TOL:
                continue
            if lam >= thresh - RATIONAL_TOL:
                continue
            return False
        return True


@dataclass(frozen=True)
class AlphaInputs:
    """User-supplied invariant thresholds for the ambient space and the
    intersection stratum.  Set alpha_restricted = ALPHA_UNRESTRICTED when
    the intersection is empty so the term never binds."""

    alpha_ambient: float
    alpha_restricted: float = ALPHA_UNRESTRICTED

    def __post_init__(self):
        for name in ("alpha_ambient", "alpha_restricted"):
            v = getattr(self, name)
            if not v > 0.0 or v != v or v == float("inf"):
                raise ValueError(f"{name} must be positive and finite, got {v}")


def alpha_lower_bound(data: AngleData, inputs: AlphaInputs):
    """min over {lambda_r beta_r} and the two supplied thresholds."""
    vals = [lam * b for lam, b in zip(data.seshadri, data.angles)]
    vals.append(inputs.alpha_ambient)
    vals.append(inputs.alpha_restricted)
    return min(vals)


def component_margin(lam, c_r, n, mu):
    """Per-component margin lambda (1 - c_r) + (lambda c_r - n/(n+1)) mu.

    Written so that the boundary case c_r = 1, lambda = n/(n+1) returns
    exactly 0.0 in floating point, not a rounding residue.
    """
    return lam * (1.0 - c_r) + (lam * c_r - n / (n + 1)) * mu


@dataclass(frozen=True)
class PropernessReport:
    margin: float
    per_component: tuple
    boundary: tuple  # flags: component margin is exactly on the zero boundary


def properness_margin(data: AngleData, inputs: AlphaInputs):
    """Margin alpha_lower_bound - n/(n+1) mu plus per-component values."""
    alpha = alpha_lower_bound(data, inputs)
    per = tuple(
        component_margin(lam, c, data.n, data.mu)
        for lam, c in zip(data.seshadri, data.coeffs)
    )
    return PropernessReport(
        margin=alpha - (data.n / (data.n + 1)) * data.mu,
        per_component=per,
        boundary=tuple(v == 0.0 for v in per),
    )


def admissibility_report(data: AngleData):
    """Per-component pass/fail rows plus the overall flag.

    Each row serializes with keys {component, value, pass, reason}; value
    is the per-component properness margin at the bundle's mu.
    """
    thresh = data.n / (data.n + 1)
    rows = []
    for r, (c, lam) in enumerate(zip(data.coeffs, data.seshadri)):
        value = component_margin(lam, c, data.n, data.mu)
        if c < 1.0 - RATIONAL_TOL:
            ok, reason = True, f"c_{r} < 1"
        elif lam > thresh + RATIONAL_TOL:
            ok, reason = True, f"c_{r} = 1 and lambda_{r} > n/(n+1)"
        elif lam >= thresh - RATIONAL_TOL:
            ok, reason = True, f"boundary: lambda_{r} = n/(n+1), margin exactly 0"
        else:
            ok, reason = False, f"c_{r} = 1 with lambda_{r} < n/(n+1)"
        rows.append(
            {"component": r, "value": value, "pass": ok, "reason": reason}
        )
    return {"overall": all(row["pass"] for row in rows), "components": rows}
