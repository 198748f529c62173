"""Catlin-type Finsler metric: tangential vector fields, iterated Levi-form
coefficients, the collar metric with its clamped global extension, and curve
length by adaptive Gauss-Legendre quadrature.

For the frame field L1 = d/dz1 - (dr/dz2)^{-1} (dr/dz1) d/dz2 (roles
possibly swapped) the coefficients

    Levi(j, k) = L1^{j-1} Lbar1^{k-1} ddbar r(L1, Lbar1),   j, k >= 1,

feed C_l(z) = max_{j+k=l} |Levi(j,k)(z)| and the metric

    K(z, X) = |X_N| / dhat(z) + |X_H| * sum_{l=2..m} (C_l(z) / dhat(z))^{1/l},

where X splits at the nearest boundary point and dhat = min(delta, eps0)
clamps the boundary distance so the same formula extends to the core.
A point belongs to a frame when its anchor derivative |dr/dz_i| is at least
0.1 of the full gradient; the metric takes the max over member frames and
falls back to |X| / dhat where no frame is usable (deep critical points).
"""

from __future__ import annotations

import numpy as np

from . import symbolic as sym
from .domain import (
    DomainSpec,
    DomainError,
    as_point,
    c2_to_r4,
    nearest_boundary_batch,
    normals_batch,
    r_at,
    split_batch,
    wirt_grad,
)

__all__ = [
    "FieldFrame",
    "FrameError",
    "PatchBoundaryError",
    "CurveExitsDomainError",
    "build_frame",
    "get_frames",
    "c_l",
    "catlin_metric",
    "metric_batch",
    "curve_length",
]

FRAME_MEMBER_FRACTION = 0.1
FRAME_DENOM_TOL = 1e-8


class FrameError(DomainError):
    pass


class PatchBoundaryError(FrameError):
    pass


class CurveExitsDomainError(DomainError):
    def __init__(self, segment_index: int):
        super().__init__(f"curve exits the domain on segment {segment_index}")
        self.segment_index = segment_index


class FieldFrame:
    """Tangential frame with cached iterated coefficient expressions.

    ``swap`` records which coordinate plays the nondegenerate role; all
    symbolic data lives in local (possibly swapped) coordinates and is
    evaluated at the correspondingly swapped points.

    Iterated coefficients are kept in the normalized form
    num / (r_z2^p * r_zbar2^q) with a polynomial-style numerator tree: one
    field application adds exactly 3 to p + q, so the denominator power
    budget for degrees up to m is 3(m - 2) beyond the base coefficient.
    """

    def __init__(self, dom: DomainSpec, swap: bool):
        self.dom = dom
        self.swap = bool(swap)
        r_local = sym.swap_vars(dom.r) if swap else dom.r
        self.r_local = r_local
        r1 = sym.wirtinger(r_local, "z1")
        r2 = sym.wirtinger(r_local, "z2")
        self.anchor_deriv = r2
        self._A = r2
        self._B = r2.conj()
        self._r1 = r1
        self._r1b = r1.conj()
        # L1 = d/dz1 - (r_z1 / r_z2) d/dz2, components (1, -r_z1/r_z2)
        self.L = (sym.ONE, sym.neg(sym.div(r1, r2)))
        self.Lbar = tuple(comp.conj() for comp in self.L)
        # base coefficient: ddbar r(L1, Lbar1) = num / (A * B)
        hess = {
            (i, l): sym.wirtinger(sym.wirtinger(r_local, f"z{i + 1}"),
                                  f"zbar{l + 1}")
            for i in range(2)
            for l in range(2)
        }
        comp = (self._B, sym.neg(self._r1b))   # B * Lbar components
        compb = (self._A, sym.neg(self._r1))   # A * L components
        num11 = sym.ZERO
        for i in range(2):
            for l in range(2):
                num11 = sym.add(
                    num11, sym.mul(hess[(i, l)], compb[i], comp[l])
                )
        self.levi_parts: dict = {(1, 1): (num11, 1, 1)}
        for k in range(2, dom.m):
            self.levi_parts[(1, k)] = self._apply_bar(self.levi_parts[(1, k - 1)])
        for j in range(2, dom.m):
            for k in range(1, dom.m - j + 1):
                self.levi_parts[(j, k)] = self._apply(self.levi_parts[(j - 1, k)])
        budget = 3 * max(dom.m - 2, 0)
        worst = max(p + q - 2 for (_, p, q) in self.levi_parts.values())
        if worst > budget:
            raise FrameError(
                f"iterated coefficients ill-conditioned: denominator power "
                f"{worst} exceeds 3(m-2) = {budget}"
            )
        self._num_fns = {
            jk: sym.as_numpy_fn(num)
            for jk, (num, _, _) in sorted(self.levi_parts.items())
        }
        self._anchor_fn = sym.as_numpy_fn(r2)
        self._r1_fn = sym.as_numpy_fn(r1)

    @property
    def levi(self) -> dict:
        """Coefficient expressions as plain quotient trees."""
        out = {}
        for jk, (num, p, q) in self.levi_parts.items():
            out[jk] = sym.div(num, sym.mul(sym.ipow(self._A, p),
                                           sym.ipow(self._B, q)))
        return out

    def _apply(self, part):
        """Holomorphic field on num / (A^p B^q): returns (num', p+2, q+1)."""
        num, p, q = part
        A, B, r1 = self._A, self._B, self._r1
        dA1, dA2 = A.diff("z1"), A.diff("z2")
        dB1, dB2 = B.diff("z1"), B.diff("z2")
        num2 = sym.add(
            sym.mul(num.diff("z1"), A, A, B),
            sym.neg(sym.mul(r1, num.diff("z2"), A, B)),
            sym.mul(sym.const(-p), num, dA1, A, B),
            sym.mul(sym.const(p), num, r1, dA2, B),
            sym.mul(sym.const(-q), num, dB1, A, A),
            sym.mul(sym.const(q), num, r1, dB2, A),
        )
        return (num2, p + 2, q + 1)

    def _apply_bar(self, part):
        """Conjugate field on num / (A^p B^q): returns (num', p+1, q+2)."""
        num, p, q = part
        A, B, r1b = self._A, self._B, self._r1b
        dA1, dA2 = A.diff("zbar1"), A.diff("zbar2")
        dB1, dB2 = B.diff("zbar1"), B.diff("zbar2")
        num2 = sym.add(
            sym.mul(num.diff("zbar1"), B, B, A),
            sym.neg(sym.mul(r1b, num.diff("zbar2"), B, A)),
            sym.mul(sym.const(-q), num, dB1, B, A),
            sym.mul(sym.const(q), num, r1b, dB2, A),
            sym.mul(sym.const(-p), num, dA1, B, B),
            sym.mul(sym.const(p), num, r1b, dA2, B),
        )
        return (num2, p + 1, q + 2)

    def _local(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=complex)
        return Z[..., ::-1] if self.swap else Z

    def membership(self, Z: np.ndarray):
        """(member, usable) masks: the anchor derivative carries at least
        FRAME_MEMBER_FRACTION of the gradient, and is not absolutely tiny."""
        Zl = self._local(Z)
        z1, z2 = Zl[..., 0], Zl[..., 1]
        with np.errstate(all="ignore"):
            anchor = np.abs(self._anchor_fn(z1, z2))
            other = np.abs(self._r1_fn(z1, z2))
        grad = np.hypot(anchor, other)
        member = anchor >= FRAME_MEMBER_FRACTION * grad
        usable = member & (anchor > FRAME_DENOM_TOL)
        return member, usable

    def c_values(self, Z: np.ndarray) -> np.ndarray:
        """C_l(z) for l = 2..m as an (n, m-1) array; no masking here."""
        Zl = self._local(np.atleast_2d(Z))
        z1, z2 = Zl[..., 0], Zl[..., 1]
        m = self.dom.m
        out = np.zeros(Zl.shape[:-1] + (m - 1,))
        with np.errstate(all="ignore"):
            a_abs = np.abs(self._anchor_fn(z1, z2))
            for (j, k), fn in self._num_fns.items():
                l = j + k
                _, p, q = self.levi_parts[(j, k)]
                vals = np.abs(fn(z1, z2)) / a_abs ** (p + q)
                np.maximum(out[..., l - 2], vals, out=out[..., l - 2])
        return out


def build_frame(dom: DomainSpec, swap: bool) -> FieldFrame:
    return FieldFrame(dom, swap)


def get_frames(dom: DomainSpec):
    return dom._get(
        "frames", lambda: (FieldFrame(dom, False), FieldFrame(dom, True))
    )


def c_l(frame: FieldFrame, z) -> np.ndarray:
    """Coefficients C_l(z), l = 2..m, at a single point; raises near the
    patch boundary where the frame denominator degenerates."""
    z = as_point(z)
    member, usable = frame.membership(z[None, :])
    if not usable[0]:
        raise PatchBoundaryError(
            f"frame (swap={frame.swap}) unusable at {z}; switch frames"
        )
    vals = frame.c_values(z[None, :])[0]
    if not np.all(np.isfinite(vals)):
        raise PatchBoundaryError(f"coefficients not finite at {z}")
    return vals


def metric_batch(dom: DomainSpec, Z: np.ndarray, X: np.ndarray,
                 delta=None, feet=None) -> np.ndarray:
    """Vectorized metric evaluation at points Z with vectors X.

    Optional precomputed boundary distances/feet skip the projection.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    if delta is None or feet is None:
        feet, delta, _ = nearest_boundary_batch(dom, Z)
    dhat = np.minimum(delta, dom.eps0)
    nrm = normals_batch(dom, feet)
    XN, XH = split_batch(dom, nrm, X)
    aN = np.linalg.norm(XN, axis=-1)
    aH = np.linalg.norm(XH, axis=-1)
    m = dom.m
    exps = 1.0 / np.arange(2, m + 1)
    best = np.full(len(Z), -np.inf)
    any_usable = np.zeros(len(Z), dtype=bool)
    for frame in get_frames(dom):
        member, usable = frame.membership(Z)
        if not usable.any():
            continue
        C = frame.c_values(Z)
        with np.errstate(all="ignore"):
            tang = np.sum((C / dhat[:, None]) ** exps[None, :], axis=-1)
            vals = aN / dhat + aH * tang
        ok = usable & np.isfinite(vals)
        best = np.where(ok & (vals > best), vals, best)
        any_usable |= ok
    fallback = np.linalg.norm(X, axis=-1) / dhat
    return np.where(any_usable, best, fallback)


def catlin_metric(dom: DomainSpec, z, X) -> float:
    """Metric value at one interior point; 1/length units.

    Absolutely homogeneous in X and a norm for fixed z.
    """
    z = as_point(z)
    X = as_point(X)
    if float(r_at(dom, z)) >= 0:
        raise DomainError(f"{z} is not an interior point")
    return float(metric_batch(dom, z[None, :], X[None, :])[0])


# -- curve length ----------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL_T = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS


def _presplit(dom: DomainSpec, a: np.ndarray, b: np.ndarray, max_depth=48):
    """Split [a, b] until each piece's chord is below min(endpoint delta)/4.

    Refines geometrically toward near-boundary endpoints, so the number of
    pieces grows only logarithmically in chord/delta.
    """
    A, B, _ = _presplit_multi(
        dom, a[None, :], b[None, :], np.zeros(1, dtype=int), max_depth
    )
    return list(zip(A, B))


def _gl_lengths(dom: DomainSpec, A: np.ndarray, B: np.ndarray,
                seg_of=None, check=True):
    """Gauss-Legendre length of each straight piece A[i] -> B[i]."""
    n = len(A)
    if n == 0:
        return np.zeros(0)
    V = B - A
    pts = A[:, None, :] + _GL_T[None, :, None] * V[:, None, :]
    flat = pts.reshape(-1, 2)
    if check:
        rv = r_at(dom, flat).reshape(n, -1)
        exits = rv.max(axis=1) >= -1e-12
        if exits.any():
            first = int(np.argmax(exits))
            raise CurveExitsDomainError(
                int(seg_of[first]) if seg_of is not None else first
            )
    Xs = np.repeat(V, len(_GL_T), axis=0)
    vals = metric_batch(dom, flat, Xs).reshape(n, -1)
    return vals @ _GL_W


def curve_length(dom: DomainSpec, polyline, rel_tol: float = 5e-4,
                 max_refine: int = 12) -> float:
    """Length of a polyline under the metric.

    Each polyline segment is quadratured independently (so concatenation is
    exactly additive): pieces are pre-split to resolve the 1/delta blowup,
    then bisected adaptively until the Gauss-Legendre value is stable to
    rel_tol per segment, which keeps a doubling refinement within 0.1%.
    """
    pts = np.asarray(polyline, dtype=complex)
    if pts.ndim != 2 or pts.shape[-1] != 2:
        raise DomainError("polyline must be an (n, 2) complex array")
    n_seg = len(pts) - 1
    acc = np.zeros(max(n_seg, 1))
    segsA, segsB, owner = [], [], []
    for s in range(n_seg):
        if np.array_equal(pts[s], pts[s + 1]):
            continue
        segsA.append(pts[s])
        segsB.append(pts[s + 1])
        owner.append(s)
    if not segsA:
        return 0.0
    A, B, seg = _presplit_multi(
        dom, np.array(segsA), np.array(segsB), np.array(owner, dtype=int)
    )
    vals = _gl_lengths(dom, A, B, seg)
    for _ in range(max_refine):
        M = 0.5 * (A + B)
        left = _gl_lengths(dom, A, M, seg)
        right = _gl_lengths(dom, M, B, seg)
        refined = left + right
        err = np.abs(refined - vals)
        done = err <= rel_tol * np.abs(refined) + 1e-15
        if done.any():
            acc += np.bincount(seg[done], weights=refined[done], minlength=n_seg)
        if done.all():
            vals = refined[:0]
            break
        # children of unconverged pieces carry their own half values
        bad = ~done
        A = np.concatenate([A[bad], M[bad]])
        B = np.concatenate([M[bad], B[bad]])
        seg = np.concatenate([seg[bad], seg[bad]])
        vals = np.concatenate([left[bad], right[bad]])
    if len(vals):
        acc += np.bincount(seg, weights=vals, minlength=n_seg)
    return float(np.sum(acc))


def _approx_delta(dom: DomainSpec, Z: np.ndarray) -> np.ndarray:
    """First-order boundary distance |r| / |grad r|, used only to size
    quadrature pieces (the metric itself always projects)."""
    rv = np.abs(r_at(dom, Z))
    g = 2.0 * np.linalg.norm(wirt_grad(dom, Z), axis=-1)
    return rv / np.maximum(g, 1e-9)


def _presplit_multi(dom: DomainSpec, A, B, owner, max_depth=48):
    """Vectorized chord < delta/4 splitting across many segments at once."""
    for _ in range(max_depth):
        dA = _approx_delta(dom, A)
        dB = _approx_delta(dom, B)
        chord = np.linalg.norm(c2_to_r4(A) - c2_to_r4(B), axis=1)
        need = chord > np.maximum(np.minimum(dA, dB) / 4.0, 1e-9)
        if not need.any():
            break
        M = 0.5 * (A[need] + B[need])
        A = np.concatenate([A[~need], A[need], M])
        B = np.concatenate([B[~need], M, B[need]])
        owner = np.concatenate([owner[~need], owner[need], owner[need]])
    return A, B, owner


def polyline_lengths(dom: DomainSpec, polylines, chunk: int = 200_000) -> np.ndarray:
    """One-pass Gauss-Legendre lengths of many polylines in one batch.

    Returns np.inf for a polyline that leaves the domain.  This is the fast
    path for edge weights and search loops; final certificates are
    re-measured with :func:`curve_length`.
    """
    n_poly = len(polylines)
    out = np.zeros(n_poly)
    segsA, segsB, owner = [], [], []
    for pid, pts in enumerate(polylines):
        pts = np.asarray(pts, dtype=complex)
        for s in range(len(pts) - 1):
            if np.array_equal(pts[s], pts[s + 1]):
                continue
            segsA.append(pts[s])
            segsB.append(pts[s + 1])
            owner.append(pid)
    if not segsA:
        return out
    A, B, own = _presplit_multi(
        dom, np.array(segsA), np.array(segsB), np.array(owner)
    )
    V = B - A
    nodes = (A[:, None, :] + _GL_T[None, :, None] * V[:, None, :]).reshape(-1, 2)
    Xs = np.repeat(V, len(_GL_T), axis=0)
    k = len(_GL_T)
    vals = np.empty(len(nodes))
    exits = np.zeros(len(A), dtype=bool)
    for s in range(0, len(nodes), chunk):
        sl = slice(s, min(s + chunk, len(nodes)))
        rv = r_at(dom, nodes[sl])
        bad = rv >= -1e-12
        vals[sl] = metric_batch(dom, nodes[sl], Xs[sl])
        if bad.any():
            idx = (np.arange(sl.start, sl.stop)[bad]) // k
            exits[idx] = True
    piece = vals.reshape(len(A), k) @ _GL_W
    np.add.at(out, own, piece)
    bad_poly = np.zeros(n_poly, dtype=bool)
    bad_poly[own[exits]] = True
    out[bad_poly] = np.inf
    return out


def fast_length(dom: DomainSpec, polyline) -> float:
    """Single-pass Gauss-Legendre length of one polyline (see above)."""
    v = float(polyline_lengths(dom, [polyline])[0])
    if not np.isfinite(v):
        raise CurveExitsDomainError(0)
    return v
