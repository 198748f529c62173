"""Domain model for smoothly bounded domains in C^2 with polynomial defining
functions: signed distance, boundary projection, outward normals, tangential
splitting, and seeded boundary/collar samplers.

Points live in C^2 as complex pairs; the underlying real geometry uses the
identification (Re z1, Im z1, Re z2, Im z2).  A DomainSpec is immutable after
load; derived data (compiled derivatives, boundary mesh, KD-tree) is built
lazily and cached.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import symbolic as sym

__all__ = [
    "DomainSpec",
    "DomainError",
    "ProjectionError",
    "AmbiguityError",
    "DegenerateBoundaryError",
    "ValidationError",
    "TangentSplit",
    "as_point",
    "registry_names",
    "make_domain",
    "domain_from_file",
    "signed_distance",
    "signed_distance_ex",
    "project_boundary",
    "nearest_boundary_batch",
    "outward_normal",
    "tangent_split",
    "sample_boundary",
    "sample_collar",
    "sample_collar_ex",
    "validate_domain",
]


class DomainError(Exception):
    pass


class ProjectionError(DomainError):
    pass


class AmbiguityError(ProjectionError):
    pass


class DegenerateBoundaryError(DomainError):
    pass


class ValidationError(DomainError):
    pass


def as_point(x) -> np.ndarray:
    """Coerce to a complex pair; accepts complex pairs or 4 reals."""
    a = np.asarray(x)
    if a.shape == (2,):
        return a.astype(complex)
    if a.shape == (4,):
        return np.array([a[0] + 1j * a[1], a[2] + 1j * a[3]], dtype=complex)
    raise DomainError(f"cannot interpret {x!r} as a point in C^2")


def c2_to_r4(Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=complex)
    out = np.empty(Z.shape[:-1] + (4,))
    out[..., 0] = Z[..., 0].real
    out[..., 1] = Z[..., 0].imag
    out[..., 2] = Z[..., 1].real
    out[..., 3] = Z[..., 1].imag
    return out


def r4_to_c2(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = np.empty(X.shape[:-1] + (2,), dtype=complex)
    out[..., 0] = X[..., 0] + 1j * X[..., 1]
    out[..., 1] = X[..., 2] + 1j * X[..., 3]
    return out


def hermitian(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard Hermitian product <a, b> = sum_i a_i * conj(b_i)."""
    return np.sum(np.asarray(a) * np.conjugate(b), axis=-1)


class DomainSpec:
    """A bounded domain {r < 0} in C^2 with finite type at most m.

    Fields: defining expression ``r`` (real-valued), type bound ``m >= 2``,
    chart validity radius ``R``, collar width ``eps0``, sampler bounding box
    (shape (4, 2): per real coordinate), interior anchor point, and the
    boundary-mesh size used by the deep-interior fallback.
    """

    def __init__(self, name, r, m, R=0.5, eps0=0.1, box=None, anchor=None,
                 mesh_size=10000):
        if isinstance(r, str):
            r = sym.parse_expr(r)
        self.name = str(name)
        self.r = r
        self.m = int(m)
        if self.m < 2:
            raise ValidationError("type bound m must be >= 2")
        self.R = float(R)
        self.eps0 = float(eps0)
        if box is None:
            box = np.array([[-1.2, 1.2]] * 4)
        box = np.asarray(box, dtype=float)
        if box.shape == (8,):
            box = box.reshape(4, 2)
        if box.shape != (4, 2):
            raise ValidationError("box must give 4 (min, max) real ranges")
        self.box = box
        self.anchor = as_point(anchor) if anchor is not None else None
        self.mesh_size = int(mesh_size)
        self._cache: dict = {}
        self._lock = threading.RLock()

    def __repr__(self):
        return f"DomainSpec({self.name!r}, m={self.m}, R={self.R}, eps0={self.eps0})"

    # -- lazily built derived data -------------------------------------------
    def _get(self, key, build):
        got = self._cache.get(key)
        if got is None:
            with self._lock:
                got = self._cache.get(key)
                if got is None:
                    got = build()
                    self._cache[key] = got
        return got

    @property
    def grad_exprs(self):
        return self._get(
            "grad", lambda: tuple(sym.wirtinger(self.r, v) for v in sym.VAR_NAMES)
        )

    @property
    def hess_exprs(self):
        # symmetric: build the upper triangle once and mirror
        def build():
            g = self.grad_exprs
            rows = [[None] * 4 for _ in range(4)]
            for a in range(4):
                for b in range(a, 4):
                    e = sym.wirtinger(g[a], sym.VAR_NAMES[b])
                    rows[a][b] = e
                    rows[b][a] = e
            return tuple(tuple(row) for row in rows)

        return self._get("hess", build)

    @property
    def _fns(self):
        def build():
            g = self.grad_exprs
            H = self.hess_exprs
            return {
                "r": sym.as_numpy_fn(self.r),
                "g": [sym.as_numpy_fn(e) for e in g],
                "H": [[sym.as_numpy_fn(e) for e in row] for row in H],
            }

        return self._get("fns", build)

    @property
    def interior_anchor(self) -> np.ndarray:
        def build():
            if self.anchor is not None:
                if r_at(self, self.anchor) >= 0:
                    raise ValidationError("anchor point is not interior")
                return self.anchor
            # coarse box scan for the most interior point
            n = 4096
            u = _kronecker(n, 4)
            pts = self.box[:, 0] + u * (self.box[:, 1] - self.box[:, 0])
            Z = r4_to_c2(pts)
            vals = r_at(self, Z)
            i = int(np.argmin(vals))
            if vals[i] >= 0:
                raise ValidationError("no interior point found in the box")
            return Z[i]

        return self._get("anchor", build)

    @property
    def mesh(self) -> np.ndarray:
        return self._get("mesh", lambda: _build_mesh(self, self.mesh_size))

    @property
    def mesh_tree(self) -> cKDTree:
        return self._get("tree", lambda: cKDTree(c2_to_r4(self.mesh)))


# -- basic evaluations ---------------------------------------------------------

def r_at(dom: DomainSpec, Z) -> np.ndarray:
    """Defining function values (real part; r is validated real-valued)."""
    Z = np.asarray(Z, dtype=complex)
    return dom._fns["r"](Z[..., 0], Z[..., 1]).real


def wirt_grad(dom: DomainSpec, Z) -> np.ndarray:
    """Holomorphic Wirtinger gradient (dr/dz1, dr/dz2) at points Z."""
    Z = np.asarray(Z, dtype=complex)
    g = dom._fns["g"]
    return np.stack(
        [g[0](Z[..., 0], Z[..., 1]), g[1](Z[..., 0], Z[..., 1])], axis=-1
    )


def real_grad(dom: DomainSpec, Z) -> np.ndarray:
    """Real gradient of r in (Re z1, Im z1, Re z2, Im z2) coordinates."""
    gz = wirt_grad(dom, Z)
    out = np.empty(gz.shape[:-1] + (4,))
    out[..., 0] = 2 * gz[..., 0].real
    out[..., 1] = -2 * gz[..., 0].imag
    out[..., 2] = 2 * gz[..., 1].real
    out[..., 3] = -2 * gz[..., 1].imag
    return out


# Wirtinger-to-real second derivative assembly: for a, b in the 4-var basis
# (z1, z2, zbar1, zbar2) and real operators Dx_i = d/dz_i + d/dzbar_i,
# Dy_i = i(d/dz_i - d/dzbar_i).
_REAL_OPS = (
    ((0, 1.0), (2, 1.0)),   # d/dx1
    ((0, 1j), (2, -1j)),    # d/dy1
    ((1, 1.0), (3, 1.0)),   # d/dx2
    ((1, 1j), (3, -1j)),    # d/dy2
)


def _hess_weights() -> np.ndarray:
    """(16, 16) complex map from flattened Wirtinger pairs to real pairs."""
    W = np.zeros((16, 16), dtype=complex)
    for A, opsA in enumerate(_REAL_OPS):
        for B, opsB in enumerate(_REAL_OPS):
            for ia, ca in opsA:
                for ib, cb in opsB:
                    W[4 * A + B, 4 * ia + ib] += ca * cb
    return W


_HESS_W = _hess_weights()


def real_hess(dom: DomainSpec, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=complex)
    Hf = dom._fns["H"]
    z1, z2 = Z[..., 0], Z[..., 1]
    base = np.empty(Z.shape[:-1] + (16,), dtype=complex)
    for a in range(4):
        for b in range(a, 4):
            v = Hf[a][b](z1, z2)
            base[..., 4 * a + b] = v
            if a != b:
                base[..., 4 * b + a] = v
    flat = (base @ _HESS_W.T).real
    return flat.reshape(Z.shape[:-1] + (4, 4))


# -- boundary mesh --------------------------------------------------------------

def _kronecker(n: int, d: int) -> np.ndarray:
    """Deterministic low-discrepancy points in [0,1)^d (Kronecker sequence)."""
    # generalized golden ratios
    def phi(k):
        x = 2.0
        for _ in range(40):
            x = (1 + x) ** (1.0 / (k + 1))
        return x

    g = phi(d)
    alpha = np.array([(1.0 / g) ** (k + 1) for k in range(d)])
    idx = np.arange(1, n + 1)[:, None]
    return np.mod(0.5 + idx * alpha[None, :], 1.0)


def _s3_directions(n: int) -> np.ndarray:
    """Quasi-uniform directions on the unit sphere of R^4."""
    u = _kronecker(n, 3)
    t = u[:, 0]
    th = 2 * np.pi * u[:, 1]
    ph = 2 * np.pi * u[:, 2]
    a = np.sqrt(1 - t)
    b = np.sqrt(t)
    return np.stack([a * np.cos(th), a * np.sin(th), b * np.cos(ph), b * np.sin(ph)], axis=1)


def _build_mesh(dom: DomainSpec, n: int) -> np.ndarray:
    """Boundary points by ray bisection from the interior anchor."""
    anchor = dom.interior_anchor
    a4 = c2_to_r4(anchor)
    dirs = _s3_directions(n)
    span = float(np.max(dom.box[:, 1] - dom.box[:, 0]))
    t_hi = np.full(n, 1e-3)
    # expand brackets until r >= 0
    for _ in range(64):
        pts = r4_to_c2(a4 + t_hi[:, None] * dirs)
        inside = r_at(dom, pts) < 0
        if not inside.any():
            break
        t_hi[inside] *= 1.6
        if np.all(t_hi > 4 * span):
            break
    t_lo = np.zeros(n)
    for _ in range(80):
        t_mid = 0.5 * (t_lo + t_hi)
        vals = r_at(dom, r4_to_c2(a4 + t_mid[:, None] * dirs))
        neg = vals < 0
        t_lo = np.where(neg, t_mid, t_lo)
        t_hi = np.where(neg, t_hi, t_mid)
    pts = r4_to_c2(a4 + (0.5 * (t_lo + t_hi))[:, None] * dirs)
    keep = np.abs(r_at(dom, pts)) < 1e-8
    if keep.sum() < n // 2:
        raise ValidationError(
            f"boundary mesh construction failed ({keep.sum()}/{n} rays hit)"
        )
    return pts[keep]


# -- projection -----------------------------------------------------------------

def _newton_project(dom: DomainSpec, Z: np.ndarray, max_iter=50, tol=1e-12):
    """Damped Newton on the Lagrange system for the nearest boundary point.

    Unknowns per point: p in R^4 and multiplier lam with
    p - x - lam * grad r(p) = 0 and r(p) = 0.  Seeded from the mesh KD-tree.
    Returns (P, converged) with P complex pairs.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    X = c2_to_r4(Z)
    n = len(X)
    _, idx = dom.mesh_tree.query(X)
    P = c2_to_r4(dom.mesh[idx])
    G = real_grad(dom, r4_to_c2(P))
    lam = np.sum((P - X) * G, axis=1) / np.maximum(np.sum(G * G, axis=1), 1e-30)
    active = np.ones(n, dtype=bool)

    def fval(Pr, lamr, Xr):
        Zp = r4_to_c2(Pr)
        Gr = real_grad(dom, Zp)
        rv = r_at(dom, Zp)
        F = np.concatenate([Pr - Xr - lamr[:, None] * Gr, rv[:, None]], axis=1)
        return F, Gr

    F, G = fval(P, lam, X)
    for _ in range(max_iter):
        if not active.any():
            break
        ia = np.where(active)[0]
        Zp = r4_to_c2(P[ia])
        H = real_hess(dom, Zp)
        J = np.zeros((len(ia), 5, 5))
        J[:, :4, :4] = np.eye(4)[None] - lam[ia, None, None] * H
        J[:, :4, 4] = -G[ia]
        J[:, 4, :4] = G[ia]
        try:
            step = np.linalg.solve(J, -F[ia][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack(
                [np.linalg.lstsq(Jr, -fr, rcond=None)[0] for Jr, fr in zip(J, F[ia])]
            )
        norm_old = np.linalg.norm(F[ia], axis=1)
        scale = np.ones(len(ia))
        for _damp in range(6):
            Pn = P[ia] + scale[:, None] * step[:, :4]
            lamn = lam[ia] + scale * step[:, 4]
            Fn, Gn = fval(Pn, lamn, X[ia])
            norm_new = np.linalg.norm(Fn, axis=1)
            bad = (norm_new > norm_old) & (norm_old > 1e-13)
            if not bad.any():
                break
            scale[bad] *= 0.5
        P[ia] = Pn
        lam[ia] = lamn
        F[ia] = Fn
        G[ia] = Gn
        stepnorm = np.linalg.norm(scale[:, None] * step[:, :4], axis=1)
        done = (stepnorm < tol) | (np.linalg.norm(Fn, axis=1) < 1e-13)
        active[ia[done]] = False
    Pc = r4_to_c2(P)
    resid = np.abs(r_at(dom, Pc))
    finite = np.isfinite(P).all(axis=1)
    converged = (~active) & (resid < 1e-9) & finite
    return Pc, converged


def _foot_iteration(dom: DomainSpec, X: np.ndarray, Q0: np.ndarray,
                    max_iter=40, tol=1e-12):
    """Alternating closest-point iteration: pull Q to the level set along the
    gradient, then slide away the tangential misfit against X.  Linear
    convergence at rate ~ delta * curvature; cheap per iteration."""
    Q = Q0.copy()
    n = len(Q)
    active = np.ones(n, dtype=bool)
    resid = np.full(n, np.inf)
    for _ in range(max_iter):
        if not active.any():
            break
        ia = np.where(active)[0]
        q = Q[ia]
        for _pull in range(2):
            Zq = r4_to_c2(q)
            rv = r_at(dom, Zq)
            G = real_grad(dom, Zq)
            g2 = np.maximum(np.einsum("ij,ij->i", G, G), 1e-30)
            q = q - (rv / g2)[:, None] * G
        d = X[ia] - q
        proj = np.einsum("ij,ij->i", d, G) / g2
        t = d - proj[:, None] * G
        q = q + t
        Q[ia] = q
        res = np.linalg.norm(t, axis=1) + np.abs(rv) / np.sqrt(g2)
        resid[ia] = res
        depth = np.linalg.norm(d, axis=1)
        # deep feet only steer the clamped split; loose accuracy is fine there
        thresh = (1.0 + depth) * np.where(depth > 1.5 * dom.eps0, 1e-8, tol)
        active[ia[res < thresh]] = False
    # final snap onto the level set
    for _pull in range(2):
        Zq = r4_to_c2(Q)
        rv = r_at(dom, Zq)
        G = real_grad(dom, Zq)
        g2 = np.maximum(np.einsum("ij,ij->i", G, G), 1e-30)
        Q = Q - (rv / g2)[:, None] * G
    return Q, ~active


def nearest_boundary_batch(dom: DomainSpec, Z):
    """Robust nearest boundary points: alternating iteration seeded from the
    mesh KD-tree, Lagrange-Newton for stragglers, mesh fallback last.

    Returns (P, delta, provenance) with provenance 'newton' or 'mesh' per
    point and delta = |z - P| (unsigned).
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    X = c2_to_r4(Z)
    dmesh, idx = dom.mesh_tree.query(X)
    seeds = c2_to_r4(dom.mesh[idx])
    Q, ok = _foot_iteration(dom, X, seeds)
    P = r4_to_c2(Q)
    # deep stragglers sit near the medial axis where the foot is ambiguous;
    # the mesh answer is fine there, Newton is reserved for collar points
    hard = (~ok) & (dmesh < 1.5 * dom.eps0)
    if hard.any():
        bad = np.where(hard)[0]
        Pn, okn = _newton_project(dom, Z[bad])
        P[bad] = np.where(okn[:, None], Pn, P[bad])
        ok[bad] = okn
    dn = np.linalg.norm(X - c2_to_r4(P), axis=1)
    # an iterative answer must not be farther than the mesh minimum
    ok = ok & (dn <= dmesh + 1e-9)
    P = np.where(ok[:, None], P, dom.mesh[idx])
    delta = np.where(ok, dn, dmesh)
    prov = np.where(ok, "newton", "mesh")
    return P, delta, prov


def project_boundary(dom: DomainSpec, x) -> np.ndarray:
    """Unique nearest boundary point of x; raises if Newton fails or the
    projection is ambiguous at mesh resolution."""
    x = as_point(x)
    P, ok = _newton_project(dom, x[None, :])
    if not ok[0]:
        resid = abs(float(r_at(dom, P[0])))
        raise ProjectionError(
            f"projection Newton did not converge at {x} (|r| residual {resid:.3e})"
        )
    p = P[0]
    d = float(np.linalg.norm(c2_to_r4(x) - c2_to_r4(p)))
    # ambiguity probe: a mesh point essentially as close but far from p
    dists, idxs = dom.mesh_tree.query(c2_to_r4(x), k=8)
    if d > dists[0] + 1e-9:
        raise ProjectionError(f"projection at {x} is farther than the mesh minimum")
    near = dom.mesh[idxs[np.abs(dists - dists[0]) < 1e-6]]
    seps = np.linalg.norm(c2_to_r4(near) - c2_to_r4(p)[None, :], axis=1)
    if d > 1e-12 and np.any(seps > 10 * d + 0.05):
        raise AmbiguityError(f"two distinct nearest boundary points detected at {x}")
    grad = real_grad(dom, p)
    gn = np.linalg.norm(grad)
    if gn < 1e-10:
        raise DegenerateBoundaryError(f"vanishing gradient at projection of {x}")
    if d > 1e-12:
        u = (c2_to_r4(x) - c2_to_r4(p)) / d
        align = abs(abs(float(np.dot(u, grad / gn))) - 1.0)
        if align > 1e-6:
            raise ProjectionError(
                f"projection misaligned with the normal at {x} (defect {align:.2e})"
            )
    return p


def signed_distance_ex(dom: DomainSpec, x):
    """Signed boundary distance with provenance ('newton' or 'mesh')."""
    x = as_point(x)
    P, delta, prov = nearest_boundary_batch(dom, x[None, :])
    s = -1.0 if float(r_at(dom, x)) < 0 else 1.0
    return s * float(delta[0]), str(prov[0])


def signed_distance(dom: DomainSpec, x) -> float:
    """Negative inside the domain, positive outside."""
    return signed_distance_ex(dom, x)[0]


def delta_batch(dom: DomainSpec, Z) -> np.ndarray:
    """Unsigned boundary distance for interior points, batched."""
    _, delta, _ = nearest_boundary_batch(dom, Z)
    return delta


def outward_normal(dom: DomainSpec, p) -> np.ndarray:
    """Unit outward normal at a boundary point, as a complex pair.

    Under the identification R^4 ~ C^2 the real gradient of r is
    2*conj(dr/dz), so the normal direction is conj(wirt_grad)/|.|.
    """
    p = as_point(p)
    if abs(float(r_at(dom, p))) > 1e-8:
        raise DomainError(f"{p} is not on the boundary (|r| > 1e-8)")
    g = np.conjugate(wirt_grad(dom, p))
    gn = np.linalg.norm(g)
    if gn < 1e-10:
        raise DegenerateBoundaryError(f"vanishing gradient at {p}")
    return g / gn


def normals_batch(dom: DomainSpec, P) -> np.ndarray:
    g = np.conjugate(wirt_grad(dom, P))
    gn = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / np.maximum(gn, 1e-300)


@dataclass
class TangentSplit:
    """Orthogonal splitting X = X_N + X_H at a boundary point.

    X_H lies in the complex tangent space (Hermitian-orthogonal to the
    normal line), X_N in the complex normal line.
    """

    point: np.ndarray
    normal_part: np.ndarray
    tangential_part: np.ndarray


def tangent_split(dom: DomainSpec, p, X) -> TangentSplit:
    p = as_point(p)
    X = as_point(X)
    n = outward_normal(dom, p)
    XN = hermitian(X, n) * n
    return TangentSplit(point=p, normal_part=XN, tangential_part=X - XN)


def split_batch(dom: DomainSpec, N: np.ndarray, X: np.ndarray):
    """Split vectors X against unit normals N (both (n, 2) complex)."""
    coef = np.sum(X * np.conjugate(N), axis=-1)
    XN = coef[..., None] * N
    return XN, X - XN


# -- samplers -------------------------------------------------------------------

def sample_boundary(dom: DomainSpec, n: int, seed: int) -> np.ndarray:
    """Seeded random boundary points (ray bisection from the anchor)."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n, 4))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    a4 = c2_to_r4(dom.interior_anchor)
    span = float(np.max(dom.box[:, 1] - dom.box[:, 0]))
    t_lo = np.zeros(n)
    t_hi = np.full(n, 1e-3)
    for _ in range(64):
        vals = r_at(dom, r4_to_c2(a4 + t_hi[:, None] * dirs))
        inside = vals < 0
        if not inside.any():
            break
        t_hi[inside] *= 1.6
        if np.all(t_hi > 4 * span):
            break
    for _ in range(80):
        t_mid = 0.5 * (t_lo + t_hi)
        neg = r_at(dom, r4_to_c2(a4 + t_mid[:, None] * dirs)) < 0
        t_lo = np.where(neg, t_mid, t_lo)
        t_hi = np.where(neg, t_hi, t_mid)
    return r4_to_c2(a4 + (0.5 * (t_lo + t_hi))[:, None] * dirs)


def sample_collar_ex(dom: DomainSpec, n: int, delta_range, seed: int):
    """Collar points x = p - t * n(p); returns (points, deltas, feet).

    Heights t are log-uniform in delta_range, which keeps audit samples
    spread across decades of boundary distance.
    """
    lo, hi = float(delta_range[0]), float(delta_range[1])
    if not (0 < lo <= hi <= dom.eps0):
        raise DomainError(f"delta range {delta_range} not inside (0, eps0]")
    rng = np.random.default_rng(seed)
    feet = sample_boundary(dom, n, int(rng.integers(2**32)))
    if hi == lo:
        t = np.full(n, lo)
    else:
        t = np.exp(rng.uniform(np.log(lo), np.log(hi), size=n))
    nrm = normals_batch(dom, feet)
    pts = feet - t[:, None] * nrm
    return pts, t, feet


def sample_collar(dom: DomainSpec, n: int, delta_range, seed: int) -> np.ndarray:
    return sample_collar_ex(dom, n, delta_range, seed)[0]


def sample_interior(dom: DomainSpec, n: int, seed: int) -> np.ndarray:
    """Seeded rejection sampling of interior points in the box."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        u = rng.uniform(size=(4 * n, 4))
        pts = r4_to_c2(dom.box[:, 0] + u * (dom.box[:, 1] - dom.box[:, 0]))
        good = pts[r_at(dom, pts) < -1e-9]
        out.extend(good[: n - len(out)])
    return np.array(out)


# -- registry and files ----------------------------------------------------------

_REGISTRY_DEFS = {
    "ball": dict(
        r="z1*conj(z1) + z2*conj(z2) - 1",
        m=2, R=0.5, eps0=0.15, half=1.2, anchor=(0, 0),
    ),
    "egg2": dict(
        r="z1*conj(z1) + (z2*conj(z2))^2 - 1",
        m=4, R=0.5, eps0=0.12, half=1.2, anchor=(0, 0),
    ),
    "egg3": dict(
        r="z1*conj(z1) + (z2*conj(z2))^3 - 1",
        m=6, R=0.5, eps0=0.10, half=1.2, anchor=(0, 0),
    ),
    "egg2_perturbed": dict(
        r="z1*conj(z1) + (z2*conj(z2))^2"
          " + 0.05*(z2^3*conj(z2) + z2*conj(z2)^3) - 1",
        m=4, R=0.5, eps0=0.10, half=1.2, anchor=(0, 0),
    ),
}

_domain_cache: dict = {}


def registry_names():
    return sorted(_REGISTRY_DEFS)


def make_domain(name: str) -> DomainSpec:
    """Registry domains are cached so mesh/chart caches are shared."""
    got = _domain_cache.get(name)
    if got is not None:
        return got
    if name not in _REGISTRY_DEFS:
        raise DomainError(
            f"unknown domain {name!r}; known: {', '.join(registry_names())}"
        )
    d = _REGISTRY_DEFS[name]
    h = d["half"]
    dom = DomainSpec(
        name=name, r=d["r"], m=d["m"], R=d["R"], eps0=d["eps0"],
        box=np.array([[-h, h]] * 4), anchor=d["anchor"],
    )
    _domain_cache[name] = dom
    return dom


def domain_from_file(path) -> DomainSpec:
    """Parse a key=value domain definition file.

    Keys: r (expression), m (int), R, eps0 (floats), box (8 floats),
    optional anchor (4 reals) and name.  Lines starting with '#' are comments.
    """
    fields: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            fields[key.strip()] = val.strip()
    missing = {"r", "m"} - set(fields)
    if missing:
        raise ValidationError(f"{path}: missing keys {sorted(missing)}")
    kwargs = {
        "name": fields.get("name", str(path)),
        "r": fields["r"],
        "m": int(fields["m"]),
        "R": float(fields.get("R", 0.5)),
        "eps0": float(fields.get("eps0", 0.1)),
    }
    if "box" in fields:
        vals = [float(t) for t in fields["box"].replace(",", " ").split()]
        if len(vals) != 8:
            raise ValidationError(f"{path}: box needs 8 floats")
        kwargs["box"] = np.array(vals).reshape(4, 2)
    if "anchor" in fields:
        vals = [float(t) for t in fields["anchor"].replace(",", " ").split()]
        if len(vals) != 4:
            raise ValidationError(f"{path}: anchor needs 4 reals")
        kwargs["anchor"] = np.array(vals)
    return DomainSpec(**kwargs)


def validate_domain(dom: DomainSpec, n_probe: int = 256, seed: int = 0) -> dict:
    """Load-time checks: realness of r, nonvanishing gradient on the zero
    set, fiber uniqueness across the collar.  Raises ValidationError."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=(n_probe, 4))
    pts = r4_to_c2(dom.box[:, 0] + u * (dom.box[:, 1] - dom.box[:, 0]))
    vals = dom._fns["r"](pts[:, 0], pts[:, 1])
    max_imag = float(np.max(np.abs(vals.imag)))
    if max_imag > 1e-12:
        raise ValidationError(
            f"defining function is not real-valued (max |Im r| = {max_imag:.2e})"
        )
    mesh = dom.mesh  # raises if no zero level set in the box
    gmin = float(np.min(np.linalg.norm(real_grad(dom, mesh), axis=1)))
    if gmin < 1e-6:
        raise ValidationError(f"gradient nearly vanishes on the boundary ({gmin:.2e})")
    # fiber uniqueness probe at the collar width
    k = min(128, len(mesh))
    sel = mesh[rng.choice(len(mesh), size=k, replace=False)]
    nrm = normals_batch(dom, sel)
    probe = sel - 0.95 * dom.eps0 * nrm
    P, delta, _ = nearest_boundary_batch(dom, probe)
    err = np.abs(delta - 0.95 * dom.eps0)
    worst = float(np.max(err))
    if worst > 0.05 * dom.eps0:
        raise ValidationError(
            f"collar width eps0={dom.eps0} too large: fiber distance defect {worst:.2e}"
        )
    return {"max_imag": max_imag, "grad_min": gmin, "fiber_defect": worst}
