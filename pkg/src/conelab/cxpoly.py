"""Truncated polynomials in (z_1..z_n, conj z_1..conj z_n).

The local-model machinery needs exact jets of smooth coefficient fields
at a base point: values and mixed Wirtinger derivatives up to fourth
order, plus composition with holomorphic coordinate changes and
inversion of those changes as formal series.  Floating-point finite
differences are kept for the *oracles*; the production path works on
polynomial representatives so that frame adaptations are exact.

A term is keyed by a pair of exponent tuples ``(a, b)`` meaning
``prod z_i**a_i * prod conj(z_i)**b_i``.  Products truncate at a total
degree cap so compositions stay closed.

Exports
-------
CxPoly          the polynomial class (add/mul/conj/dz/dzbar/eval/compose)
PolyJet         lazy cache of derivative polynomials of one CxPoly
invert_holo_map series inverse of a holomorphic coordinate change
"""

from __future__ import annotations

import numpy as np

DEFAULT_CAP = 6


def _tweak(exps, i, delta):
    lst = list(exps)
    lst[i] += delta
    return tuple(lst)


class CxPoly:
    """Polynomial in z and conj(z) with complex coefficients.

    Parameters
    ----------
    n : int
        Number of complex variables.
    terms : dict, optional
        Mapping ``(hol_exponents, anti_exponents) -> coefficient``.
    cap : int, optional
        Total-degree cap enforced by products and compositions.
    """

    __slots__ = ("n", "cap", "terms")

    def __init__(self, n, terms=None, cap=DEFAULT_CAP):
        self.n = int(n)
        self.cap = int(cap)
        self.terms = {}
        if terms:
            for key, c in terms.items():
                if c != 0:
                    self.terms[key] = complex(c)

    # -- constructors -------------------------------------------------

    @classmethod
    def const(cls, n, value, cap=DEFAULT_CAP):
        zero = (0,) * n
        return cls(n, {(zero, zero): value}, cap)

    @classmethod
    def var(cls, n, i, cap=DEFAULT_CAP):
        """The coordinate z_i."""
        zero = (0,) * n
        return cls(n, {(_tweak(zero, i, 1), zero): 1.0}, cap)

    @classmethod
    def varbar(cls, n, i, cap=DEFAULT_CAP):
        """The conjugate coordinate conj(z_i)."""
        zero = (0,) * n
        return cls(n, {(zero, _tweak(zero, i, 1)): 1.0}, cap)

    # -- ring operations ----------------------------------------------

    def _like(self, terms):
        return CxPoly(self.n, terms, self.cap)

    def __add__(self, other):
        if not isinstance(other, CxPoly):
            other = CxPoly.const(self.n, other, self.cap)
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out.get(key, 0.0) + c
        return CxPoly(self.n, out, min(self.cap, other.cap))

    __radd__ = __add__

    def __neg__(self):
        return self._like({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, CxPoly) else -complex(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, CxPoly):
            return self._like({k: c * other for k, c in self.terms.items()})
        cap = min(self.cap, other.cap)
        out = {}
        for (a1, b1), c1 in self.terms.items():
            for (a2, b2), c2 in other.terms.items():
                a = tuple(x + y for x, y in zip(a1, a2))
                b = tuple(x + y for x, y in zip(b1, b2))
                if sum(a) + sum(b) > cap:
                    continue
                key = (a, b)
                out[key] = out.get(key, 0.0) + c1 * c2
        return CxPoly(self.n, out, cap)

    __rmul__ = __mul__

    def pow_int(self, k):
        out = CxPoly.const(self.n, 1.0, self.cap)
        base = self
        k = int(k)
        while k > 0:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def conj(self):
        return self._like({(b, a): c.conjugate() for (a, b), c in self.terms.items()})

    # -- calculus -----------------------------------------------------

    def dz(self, i):
        """Wirtinger derivative with respect to z_i."""
        out = {}
        for (a, b), c in self.terms.items():
            if a[i] == 0:
                continue
            key = (_tweak(a, i, -1), b)
            out[key] = out.get(key, 0.0) + c * a[i]
        return self._like(out)

    def dzbar(self, i):
        """Wirtinger derivative with respect to conj(z_i)."""
        out = {}
        for (a, b), c in self.terms.items():
            if b[i] == 0:
                continue
            key = (a, _tweak(b, i, -1))
            out[key] = out.get(key, 0.0) + c * b[i]
        return self._like(out)

    # -- evaluation ---------------------------------------------------

    def __call__(self, z):
        """Evaluate at one point or a batch.

        Parameters
        ----------
        z : array_like, shape (..., n), complex

        Returns
        -------
        complex or ndarray of shape (...)
        """
        z = np.asarray(z, dtype=complex)
        scalar = z.ndim == 1
        pts = z[None, :] if scalar else z
        zb = np.conj(pts)
        acc = np.zeros(pts.shape[:-1], dtype=complex)
        for (a, b), c in self.terms.items():
            mono = np.full(pts.shape[:-1], c, dtype=complex)
            for i, e in enumerate(a):
                if e:
                    mono = mono * pts[..., i] ** e
            for i, e in enumerate(b):
                if e:
                    mono = mono * zb[..., i] ** e
            acc += mono
        return acc[0] if scalar else acc

    # -- substitution -------------------------------------------------

    def compose_holo(self, maps):
        """Substitute z_i -> maps[i] for holomorphic maps.

        Conjugate variables are replaced by the conjugate polynomials,
        which is the correct pullback under a holomorphic change of
        coordinates.  Each element of ``maps`` must be a CxPoly without
        antiholomorphic terms.
        """
        if len(maps) != self.n:
            raise ValueError("need one substitution per variable")
        for s in maps:
            if any(sum(b) for (_, b) in s.terms):
                raise ValueError("substitution maps must be holomorphic")
        cap = min([self.cap] + [s.cap for s in maps])
        conj_maps = [s.conj() for s in maps]
        pow_cache = {}

        def powered(which, i, e):
            key = (which, i, e)
            if key not in pow_cache:
                base = maps[i] if which == 0 else conj_maps[i]
                pow_cache[key] = base.pow_int(e)
            return pow_cache[key]

        acc = CxPoly(self.n, {}, cap)
        for (a, b), c in self.terms.items():
            mono = CxPoly.const(self.n, c, cap)
            for i, e in enumerate(a):
                if e:
                    mono = mono * powered(0, i, e)
            for i, e in enumerate(b):
                if e:
                    mono = mono * powered(1, i, e)
            acc = acc + mono
        return acc

    # -- misc ---------------------------------------------------------

    def truncate(self, cap):
        out = {k: c for k, c in self.terms.items() if sum(k[0]) + sum(k[1]) <= cap}
        return CxPoly(self.n, out, cap)

    def with_cap(self, cap):
        """Same terms under a different cap (raising never drops terms)."""
        if cap < self.cap:
            return self.truncate(cap)
        return CxPoly(self.n, self.terms, cap)

    def prune(self, tol=0.0):
        """Drop coefficients with magnitude <= tol (exact zeros by default)."""
        return self._like({k: c for k, c in self.terms.items() if abs(c) > tol})

    def max_abs_coeff(self):
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def __repr__(self):
        return f"CxPoly(n={self.n}, terms={len(self.terms)}, cap={self.cap})"


def invert_holo_map(maps, cap=DEFAULT_CAP):
    """Series inverse of a holomorphic map fixing the origin.

    Given w_i = S_i(z) with S_i(0) = 0 and invertible linear part L,
    returns T with S(T(w)) = w up to total degree ``cap``.  Standard
    degree-by-degree fixed point: T = L^{-1}(w - N(T)) where N = S - L.
    """
    n = len(maps)
    L = np.zeros((n, n), dtype=complex)
    for i, s in enumerate(maps):
        for (a, b), c in s.terms.items():
            if sum(b):
                raise ValueError("map must be holomorphic")
            tot = sum(a)
            if tot == 0 and c != 0:
                raise ValueError("map must fix the origin")
            if tot == 1:
                L[i, a.index(1)] = c
    Linv = np.linalg.inv(L)

    ident = [CxPoly.var(n, i, cap) for i in range(n)]
    nonlin = []
    for i, s in enumerate(maps):
        lin = sum((L[i, j] * ident[j] for j in range(n)), CxPoly(n, {}, cap))
        nonlin.append((s.truncate(cap) - lin).prune())

    T = [sum((Linv[i, j] * ident[j] for j in range(n)), CxPoly(n, {}, cap))
         for i in range(n)]
    # each sweep fixes one more degree; cap sweeps are always enough
    for _ in range(cap):
        NT = [p.compose_holo(T) for p in nonlin]
        T = [sum((Linv[i, j] * (ident[j] - NT[j]) for j in range(n)),
                 CxPoly(n, {}, cap)).prune(1e-15)
             for i in range(n)]
    return T


def eval_many(polys, z):
    """Evaluate several polynomials on a shared batch of points.

    Monomial values are cached across the whole list, which matters when
    a few hundred derivative polynomials are evaluated on the same
    10^4-point sample batch.

    Parameters
    ----------
    polys : sequence of CxPoly
    z : ndarray, shape (P, n), complex

    Returns
    -------
    list of ndarray, each shape (P,)
    """
    z = np.asarray(z, dtype=complex)
    zb = np.conj(z)
    pow_cache = {}
    mono_cache = {}

    def powered(which, i, e):
        key = (which, i, e)
        if key not in pow_cache:
            src = z if which == 0 else zb
            pow_cache[key] = src[..., i] ** e
        return pow_cache[key]

    def monomial(key):
        if key not in mono_cache:
            a, b = key
            acc = None
            for i, e in enumerate(a):
                if e:
                    p = powered(0, i, e)
                    acc = p if acc is None else acc * p
            for i, e in enumerate(b):
                if e:
                    p = powered(1, i, e)
                    acc = p if acc is None else acc * p
            if acc is None:
                acc = np.ones(z.shape[:-1], dtype=complex)
            mono_cache[key] = acc
        return mono_cache[key]

    out = []
    for p in polys:
        acc = np.zeros(z.shape[:-1], dtype=complex)
        for key, c in p.terms.items():
            acc += c * monomial(key)
        out.append(acc)
    return out


class PolyJet:
    """Lazy store of mixed Wirtinger derivatives of one polynomial.

    Derivatives commute, so a derivative is keyed by the sorted tuple of
    holomorphic indices and the sorted tuple of antiholomorphic ones.
    """

    def __init__(self, poly):
        self.poly = poly
        self._cache = {((), ()): poly}

    def d(self, hol=(), anti=()):
        key = (tuple(sorted(hol)), tuple(sorted(anti)))
        if key not in self._cache:
            h, a = key
            if h:
                base = self.d(h[1:], a)
                self._cache[key] = base.dz(h[0])
            else:
                base = self.d((), a[1:])
                self._cache[key] = base.dzbar(a[0])
        return self._cache[key]

    def eval_d(self, z, hol=(), anti=()):
        return self.d(hol, anti)(z)
