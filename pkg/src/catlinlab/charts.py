"""Boundary normal-form charts, polydisks and the boundary pseudodistance.

At a point zeta near the boundary, a polynomial shear automorphism Phi of
C^2 normalizes the defining function to

    rho(w) = r(zeta) + Re w1 + sum_{k=2..m} P_k(w2, wbar2) + E(w),

where each P_k is real-valued, homogeneous of degree k and has no pure
terms (monomials in w2 alone or wbar2 alone), and E collects monomials that
involve w1 beyond Re w1 or have w2-degree above m.  The sup norms of the
P_k give the tangential radius tau(zeta, delta), the polydisks Q_delta, the
closed-form pseudodistance d', the global quasi-distance D and the
two-point function g.

Hermitian convention used throughout: <a, b> = sum_i a_i * conj(b_i).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from . import symbolic as sym
from .domain import (
    DomainSpec,
    DomainError,
    as_point,
    c2_to_r4,
    r_at,
    wirt_grad,
    nearest_boundary_batch,
)

__all__ = [
    "BoundaryChart",
    "ChartError",
    "NotFiniteTypeError",
    "PseudoDistValue",
    "build_chart",
    "get_chart",
    "apply_chart",
    "invert_chart",
    "poly_sup_norm",
    "tau",
    "point_type",
    "in_polydisk",
    "d_prime",
    "d_prime_bisect",
    "pseudodistance_D",
    "g_function",
]

# Sup norms below NORM_ACTIVE are treated as exactly zero in tau's minimum;
# point types use the looser TYPE_ACTIVE threshold.
NORM_ACTIVE = 1e-10
TYPE_ACTIVE = 1e-8
COEFF_BLOWUP = 1e12


class ChartError(DomainError):
    pass


class NotFiniteTypeError(ChartError):
    pass


@dataclass
class BoundaryChart:
    """Data of the normalizing shear automorphism at a collar point."""

    dom: DomainSpec
    center: np.ndarray            # zeta, complex pair (original coordinates)
    swap: bool                    # True if z1/z2 roles were exchanged
    a: np.ndarray                 # w1 linear coefficients (local coordinates)
    c: np.ndarray                 # w2 linear coefficients (local coordinates)
    lin: np.ndarray               # stacked 2x2 linear map (a over c)
    lin_inv: np.ndarray
    f_coeffs: np.ndarray          # shear polynomial, f_coeffs[k] multiplies w2^k
    rho: sym.ChartPoly            # exact expansion of r in chart coordinates
    P: dict                       # k -> PolyInW, homogeneous non-pure parts
    P_norms: dict                 # k -> sup norm on the unit circle
    r_center: float
    re_w1_coeff: float
    pure_defect: float            # largest pure-term coefficient up to degree m
    _tau_cache: dict = field(default_factory=dict, repr=False)

    @property
    def active_norms(self):
        """(l, norm) pairs that participate in tau's minimum."""
        return [(l, n) for l, n in sorted(self.P_norms.items()) if n > NORM_ACTIVE]

    def local(self, z):
        z = np.asarray(z, dtype=complex)
        return z[..., ::-1] if self.swap else z

    def apply(self, z):
        """Chart coordinates w = Phi(z); vectorized over leading axes."""
        u = self.local(z) - self.local(self.center)
        w2 = u @ self.c
        w1 = u @ self.a + _poly_eval(self.f_coeffs, w2)
        return np.stack([w1, w2], axis=-1)

    def invert(self, w):
        w = np.asarray(w, dtype=complex)
        v1 = w[..., 0] - _poly_eval(self.f_coeffs, w[..., 1])
        v = np.stack([v1, w[..., 1]], axis=-1)
        u = v @ self.lin_inv.T
        return self.local(u + self.local(self.center))

    def rho_eval(self, w):
        """Normal-form defining function in chart coordinates."""
        w = np.asarray(w, dtype=complex)
        return self.rho.eval(w[..., 0], w[..., 1]).real


def _poly_eval(coeffs, x):
    """Evaluate sum_k coeffs[k] * x^k (Horner)."""
    out = np.zeros_like(np.asarray(x, dtype=complex))
    for ck in coeffs[::-1]:
        out = out * x + ck
    return out


def build_chart(dom: DomainSpec, zeta) -> BoundaryChart:
    """Construct the normalizing chart at a collar or boundary point.

    The coordinate pair is swapped so that the larger of |dr/dz1|, |dr/dz2|
    plays the nondegenerate role; w2 is the tangential linear form built
    from L(zeta) = (-dr/dz2, dr/dz1); w1 starts from the first-order part of
    r and a holomorphic shear f of degrees 2..m cancels the pure w2^k terms
    degree by degree.
    """
    zeta = as_point(zeta)
    g = wirt_grad(dom, zeta)
    if np.linalg.norm(g) < 1e-8:
        raise ChartError(f"gradient too small at {zeta} for a chart")
    swap = bool(abs(g[0]) > abs(g[1]))
    r_local = sym.swap_vars(dom.r) if swap else dom.r
    zl = zeta[::-1] if swap else zeta
    g1 = complex(sym.wirtinger(r_local, "z1").eval(zl))
    g2 = complex(sym.wirtinger(r_local, "z2").eval(zl))
    a = np.array([2 * g1, 2 * g2])
    c = np.array([-np.conjugate(g2), np.conjugate(g1)])
    lin = np.stack([a, c])
    det = lin[0, 0] * lin[1, 1] - lin[0, 1] * lin[1, 0]
    if abs(det) < 1e-14:
        raise ChartError(f"degenerate chart linear part at {zeta}")
    lin_inv = np.array([[lin[1, 1], -lin[0, 1]], [-lin[1, 0], lin[0, 0]]]) / det

    m = dom.m
    r_deg = _total_degree(r_local)
    full_cap = r_deg * max(m, 1)
    affine = sym.taylor_in_chart(r_local, lin_inv, zl, full_cap)

    # determine the shear degree by degree on a cheap degree-m truncation
    f = np.zeros(m + 1, dtype=complex)
    low = affine.truncated(m)
    for k in range(2, m + 1):
        cur = low.shear_w1(f)
        f[k] += 2.0 * cur.coeff(0, 0, k, 0)
    rho = affine.shear_w1(f)
    if rho.max_abs_coeff() > COEFF_BLOWUP:
        raise ChartError(
            f"chart at {zeta} is ill-conditioned "
            f"(max coefficient {rho.max_abs_coeff():.3e})"
        )

    P: dict = {}
    norms: dict = {}
    pure = 0.0
    for k in range(2, m + 1):
        coef = {}
        for (i, j, p, q), v in rho.coef.items():
            if i == 0 and j == 0 and p + q == k:
                if p == 0 or q == 0:
                    pure = max(pure, abs(v))
                else:
                    coef[(p, q)] = v
        Pk = sym.PolyInW(coef)
        P[k] = Pk
        norms[k] = poly_sup_norm(Pk, k)
    pure = max(pure, abs(rho.coeff(0, 0, 1, 0)), abs(rho.coeff(0, 0, 0, 1)))
    re_w1 = (rho.coeff(1, 0, 0, 0) + rho.coeff(0, 1, 0, 0)).real

    return BoundaryChart(
        dom=dom, center=zeta, swap=swap, a=a, c=c, lin=lin, lin_inv=lin_inv,
        f_coeffs=f, rho=rho, P=P, P_norms=norms,
        r_center=float(r_at(dom, zeta)), re_w1_coeff=float(re_w1),
        pure_defect=float(pure),
    )


def _total_degree(e: sym.Expr) -> int:
    if isinstance(e, sym.Const):
        return 0
    if isinstance(e, sym.Var):
        return 1
    if isinstance(e, sym.Add):
        return max(_total_degree(t) for t in e.terms)
    if isinstance(e, sym.Mul):
        return sum(_total_degree(f) for f in e.factors)
    if isinstance(e, sym.Pow):
        return e.n * _total_degree(e.base)
    raise sym.UnsupportedInputError("degree of a non-polynomial expression")


_chart_locks: dict = {}


def get_chart(dom: DomainSpec, zeta) -> BoundaryChart:
    """Keyed chart cache: charts are immutable after construction."""
    zeta = as_point(zeta)
    key = zeta.tobytes()
    cache = dom._cache.setdefault("charts", {})
    got = cache.get(key)
    if got is None:
        lock = _chart_locks.setdefault(id(dom), threading.Lock())
        with lock:
            got = cache.get(key)
            if got is None:
                got = build_chart(dom, zeta)
                cache[key] = got
    return got


def apply_chart(chart: BoundaryChart, z):
    return chart.apply(as_point(z) if np.asarray(z).ndim == 1 else z)


def invert_chart(chart: BoundaryChart, w):
    return chart.invert(w)


def poly_sup_norm(P: sym.PolyInW, k: int) -> float:
    """max over theta of |P(e^{i theta})| for a real-valued homogeneous P.

    1024-point grid plus golden-section refinement around the best cell;
    relative error <= 1e-9.
    """
    if not P:
        return 0.0
    if not P.is_homogeneous(k):
        raise ChartError(f"polynomial is not homogeneous of degree {k}")
    n = 1024
    thetas = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    vals = np.abs(P.circle_values(thetas))
    i = int(np.argmax(vals))
    lo = thetas[i] - 2 * np.pi / n
    hi = thetas[i] + 2 * np.pi / n

    def fneg(t):
        return -abs(float(P.circle_values(np.array([t]))[0]))

    inv_phi = (math.sqrt(5) - 1) / 2
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = fneg(x1), fneg(x2)
    for _ in range(60):
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = fneg(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = fneg(x2)
    return max(vals[i], -min(f1, f2))


def tau(chart: BoundaryChart, delta: float) -> float:
    """Tangential polydisk radius: min over active l of (delta/||P_l||)^(1/l).

    Monotone increasing in delta; scales by at most c^(1/2) when delta
    scales by c > 1 and by at most c^(1/m) when 0 < c <= 1.
    """
    if delta <= 0:
        raise ChartError("tau requires delta > 0")
    got = chart._tau_cache.get(delta)
    if got is not None:
        return got
    active = chart.active_norms
    if not active:
        raise NotFiniteTypeError(
            f"no nonzero tangential norms at {chart.center} (not finite type?)"
        )
    val = min((delta / n) ** (1.0 / l) for l, n in active)
    if len(chart._tau_cache) < 4096:
        chart._tau_cache[delta] = val
    return val


def point_type(chart: BoundaryChart) -> int:
    """Smallest degree l with ||P_l|| above the type threshold."""
    for l in sorted(chart.P_norms):
        if chart.P_norms[l] > TYPE_ACTIVE:
            return l
    raise NotFiniteTypeError(
        f"type exceeds the declared bound m={chart.dom.m} at {chart.center}"
    )


def in_polydisk(chart: BoundaryChart, delta: float, y) -> bool:
    """Membership y in Q_delta(zeta): inside the chart ball of radius R and
    |w1| < delta, |w2| < tau(delta)."""
    y = as_point(y)
    if np.linalg.norm(c2_to_r4(y) - c2_to_r4(chart.center)) >= chart.dom.R:
        return False
    w = chart.apply(y)
    return bool(abs(w[0]) < delta and abs(w[1]) < tau(chart, delta))


def d_prime(chart: BoundaryChart, y) -> float:
    """Closed form of the polydisk entry scale inf{delta : y in Q_delta}.

    Equals max(|w1|, max_l ||P_l|| * |w2|^l) over active l because tau is
    strictly increasing in delta; +inf outside the chart ball.
    """
    y = as_point(y)
    if np.linalg.norm(c2_to_r4(y) - c2_to_r4(chart.center)) > chart.dom.R:
        return math.inf
    w = chart.apply(y)
    active = chart.active_norms
    if not active:
        raise NotFiniteTypeError(f"no active norms at {chart.center}")
    w2a = abs(w[1])
    return max(abs(w[0]), max(n * w2a**l for l, n in active))


def d_prime_batch(chart: BoundaryChart, Y: np.ndarray) -> np.ndarray:
    """Vectorized d_prime over rows of Y."""
    Y = np.asarray(Y, dtype=complex)
    w = chart.apply(Y)
    active = chart.active_norms
    if not active:
        raise NotFiniteTypeError(f"no active norms at {chart.center}")
    w2a = np.abs(w[..., 1])
    best = np.abs(w[..., 0])
    for l, n in active:
        best = np.maximum(best, n * w2a**l)
    far = (
        np.linalg.norm(c2_to_r4(Y) - c2_to_r4(chart.center)[None, :], axis=-1)
        > chart.dom.R
    )
    return np.where(far, np.inf, best)


def d_prime_bisect(chart: BoundaryChart, y, iters: int = 64) -> float:
    """Independent oracle: bisection on the polydisk membership predicate."""
    y = as_point(y)
    if np.linalg.norm(c2_to_r4(y) - c2_to_r4(chart.center)) > chart.dom.R:
        return math.inf
    if np.array_equal(y, chart.center):
        return 0.0
    hi = 1.0
    for _ in range(200):
        if in_polydisk(chart, hi, y):
            break
        hi *= 2.0
    else:
        return math.inf
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if in_polydisk(chart, mid, y):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class PseudoDistValue:
    """Value of the boundary quasi-distance D with branch provenance.

    branch is one of 'dprime', 'euclid' (collar pairs), 'unit', 'zero'
    (the extension cases); chart_valid records |x - y| <= R.
    """

    value: float
    branch: str
    chart_valid: bool

    def __float__(self):
        return self.value


def _in_collar(dom: DomainSpec, x, delta=None) -> bool:
    d = delta if delta is not None else float(
        nearest_boundary_batch(dom, np.asarray(x, complex)[None, :])[1][0]
    )
    return d < dom.eps0 and float(r_at(dom, x)) < 1e-12


def pseudodistance_D(dom: DomainSpec, x, y, *, dx=None, dy=None) -> PseudoDistValue:
    """Quasi-distance on the whole domain.

    Collar pairs use min(d'(x, y), |x - y|) with the chart anchored at x
    (D is asymmetric up to a constant); other pairs collapse to the 0/1
    extension.  Optional dx, dy are precomputed boundary distances.
    """
    x, y = as_point(x), as_point(y)
    if np.array_equal(x, y):
        return PseudoDistValue(0.0, "zero", True)
    eu = float(np.linalg.norm(c2_to_r4(x) - c2_to_r4(y)))
    if _in_collar(dom, x, dx) and _in_collar(dom, y, dy):
        dp = d_prime(get_chart(dom, x), y)
        if dp < eu:
            return PseudoDistValue(dp, "dprime", eu <= dom.R)
        return PseudoDistValue(eu, "euclid", eu <= dom.R)
    return PseudoDistValue(1.0, "unit", eu <= dom.R)


def g_function(dom: DomainSpec, x, y, *, dx=None, dy=None, D=None) -> float:
    """Boundary-growth two-point function

        g(x, y) = 2 log( (D(x, y) + max(delta_x, delta_y)) / sqrt(delta_x delta_y) ).

    Vanishes on the diagonal; symmetric except for the bounded asymmetry
    of D.
    """
    x, y = as_point(x), as_point(y)
    if np.array_equal(x, y):
        return 0.0
    if dx is None:
        dx = float(nearest_boundary_batch(dom, x[None, :])[1][0])
    if dy is None:
        dy = float(nearest_boundary_batch(dom, y[None, :])[1][0])
    if D is None:
        D = pseudodistance_D(dom, x, y, dx=dx, dy=dy).value
    return 2.0 * math.log((float(D) + max(dx, dy)) / math.sqrt(dx * dy))
