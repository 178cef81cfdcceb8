"""Constructive operators on immersions.

Normal translates slide principal radii, the dual is the quarter-turn
translate, conformal pulls increase convexity, and the psi/phi pair moves
between twisted-product data (rotation, domain diffeomorphism) and concrete
round-type immersions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import curvature as cv
from . import immersion as im
from . import jets as jm
from . import sphere as sp
from .errors import DegeneracyError, DomainError, HemisphereError, NumericError, PoleError

RADIUS_MARGIN = 1e-4  # min circle distance from a translate step to any radius
CURVATURE_MARGIN = 1e-4  # min |kappa| for the dual to exist
MOEBIUS_GRID = tuple(np.round(np.arange(1.0, 0.199, -0.05), 10))


# ----------------------------------------------------------------------
# normal translate and dual


def flip_count(radii, r):
    """Number of principal radii in (0, pi) with sin(rho) sin(rho - r) < 0."""
    rho = np.asarray(radii)
    counts = (np.sin(rho) * np.sin(rho - r) < 0).sum(axis=-1)
    if counts.ndim and not np.all(counts == counts.flat[0]):
        raise NumericError("flip count is not constant across samples")
    return int(counts.flat[0]) if counts.ndim else int(counts)


def normal_translate(f, r, margin=RADIUS_MARGIN, batch=None):
    """Slide the immersion distance r along its unit normal field.

    Requires r mod pi to stay clear of every sampled principal radius;
    otherwise the translate is not an immersion and a degeneracy error
    names the nearest offending radius.
    """
    if f.normal_point is None:
        raise DomainError("normal_translate needs an immersion with a normal closure")
    batch = cv.shape_spectra(f) if batch is None else batch
    dist = cv.circle_distance(batch.radii, r)
    worst = np.unravel_index(np.argmin(dist), dist.shape)
    if dist[worst] <= margin:
        raise DegeneracyError(
            f"principal radius hit: r={r:.6f} is within {dist[worst]:.2e} of "
            f"radius {batch.radii[worst]:.6f} (sample {worst[0]})",
            sample=worst,
        )
    l = flip_count(batch.radii, r)
    sr, cr = np.sin(r), np.cos(r)
    sgn = (-1.0) ** l
    parent_ev, parent_nrm = f.eval_point, f.normal_point

    def ev(comps):
        p = parent_ev(comps)
        v = parent_nrm(comps)
        return [a * cr + b * sr for a, b in zip(p, v)]

    def nrm(comps):
        p = parent_ev(comps)
        v = parent_nrm(comps)
        return [(b * cr - a * sr) * sgn for a, b in zip(p, v)]

    return im.Immersion(f.atlas, "sphere", ev, nrm, f.diff_mode,
                        f"({f.provenance})_translate({r})")


def dual(f, margin=CURVATURE_MARGIN, batch=None):
    """The quarter-turn normal translate; pointwise it is the Gauss map."""
    if f.normal_point is None:
        raise DomainError("dual needs an immersion with a normal closure")
    batch = cv.shape_spectra(f) if batch is None else batch
    flat = np.abs(batch.kappas)
    worst = np.unravel_index(np.argmin(flat), flat.shape)
    if flat[worst] <= margin:
        raise DegeneracyError(
            f"flat point: |kappa|={flat[worst]:.2e} at sample {worst[0]}; "
            "the dual is not an immersion",
            sample=worst,
        )
    l = int(batch.l_count[0])
    sgn = (-1.0) ** (l + 1)
    parent_ev, parent_nrm = f.eval_point, f.normal_point
    ev = lambda comps: parent_nrm(comps)
    nrm = lambda comps: [c * sgn for c in parent_ev(comps)]
    return im.Immersion(f.atlas, "sphere", ev, nrm, f.diff_mode, f"dual({f.provenance})")


def hemisphere_locus(f, chart, coords, t):
    """The osculating-center locus cos(t) f + sin(t) dual(f) at one point."""
    params = im.Params(np.array([int(chart)]), np.atleast_2d(np.asarray(coords, dtype=float)))
    V = im.evaluate(f, params)[0]
    N = im.normal_at(f, params)[0]
    return sp.SpherePoint(np.cos(t) * V + np.sin(t) * N)


def hemisphere_locus_grid(f, ts, params=None):
    """Locus over all samples and a grid of t values, (B, T, d)."""
    params = f.atlas.samples() if params is None else params
    V = im.evaluate(f, params)
    N = im.normal_at(f, params)
    ts = np.asarray(ts, dtype=float)
    return np.cos(ts)[None, :, None] * V[:, None, :] + np.sin(ts)[None, :, None] * N[:, None, :]


# ----------------------------------------------------------------------
# minimal enclosing caps


@dataclass
class Circumcap:
    """Minimal spherical cap enclosing a point set."""

    center: np.ndarray
    radius: float


def _ball_of_support(P):
    """Smallest ball with all points of P on its boundary."""
    if len(P) == 0:
        return np.zeros(1), -1.0
    p0 = P[0]
    if len(P) == 1:
        return p0.copy(), 0.0
    A = P[1:] - p0
    rhs = 0.5 * np.einsum("ij,ij->i", A, A)
    G = A @ A.T
    try:
        lam = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        lam, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    c = p0 + A.T @ lam
    return c, float(np.linalg.norm(P[0] - c))


def minimal_enclosing_ball(points, seed=0):
    """Exact smallest enclosing euclidean ball (Welzl, move-to-front)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pts))
    pts = pts[order]
    dmax = pts.shape[1] + 1

    def mb(idx_limit, support):
        c, r = _ball_of_support(support)
        if len(support) == dmax + 1:
            return c, r
        i = 0
        while i < idx_limit:
            p = pts[i]
            if r < 0 or np.linalg.norm(p - c) > r * (1 + 1e-12) + 1e-14:
                c, r = mb(i, support + [p])
            i += 1
        return c, r

    c, r = mb(len(pts), [])
    return c, r


def circumcenter(points, seed=0):
    """Minimal enclosing spherical cap of unit vectors in an open hemisphere."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c, _ = minimal_enclosing_ball(pts, seed=seed)
    nc = np.linalg.norm(c)
    if nc < 1e-9:
        raise HemisphereError("point set is not contained in an open hemisphere")
    center = c / nc
    dots = np.clip(pts @ center, -1.0, 1.0)
    radius = float(np.arccos(dots.min()))
    if radius >= np.pi / 2 - 1e-6:
        raise HemisphereError(
            f"not hemispherical: enclosing cap radius {radius:.6f} >= pi/2 - 1e-6"
        )
    return Circumcap(center, radius)


def image_cap(f, params=None):
    """Circumcap of the immersion's sampled image."""
    return circumcenter(im.evaluate(f, params))


def gauss_cap(f, params=None):
    """Circumcap of the sampled Gauss image (the dual's image)."""
    return circumcenter(im.normal_at(f, params))


# ----------------------------------------------------------------------
# conformal (Moebius) operators


def apply_moebius(f, c, s):
    """Postcompose with the conformal pull of strength s toward c."""
    if not 0.0 < s <= 1.0:
        raise DomainError(f"moebius strength s={s} outside (0, 1]")
    c = np.asarray(c, dtype=float)
    c = c / np.linalg.norm(c)
    V = im.evaluate(f)
    if np.min(np.linalg.norm(V + c, axis=1)) < sp.POLE_TOL:
        raise PoleError("immersion passes within 1e-9 of the pole -c")
    Q = sp.rotation_to(-c).m
    parent_ev, parent_nrm = f.eval_point, f.normal_point
    ev = lambda comps: sp.moebius_core(Q, s, parent_ev(comps))
    nrm = None
    if parent_nrm is not None:
        def nrm(comps):
            p = parent_ev(comps)
            v = parent_nrm(comps)
            return jm.normalize(sp.moebius_diff_core(Q, s, p, v))
    return im.Immersion(f.atlas, "sphere", ev, nrm, f.diff_mode,
                        f"M_{s} ∘ ({f.provenance})")


@dataclass
class FlowStep:
    s: float
    mu: float
    J_mid: float
    J_width: float
    embedded: bool


@dataclass
class MoebiusFlowReport:
    center: np.ndarray
    steps: list
    strictly_increasing: bool
    growth: float

    def as_dict(self):
        return {
            "center": [float(x) for x in self.center],
            "steps": [
                {"s": st.s, "mu": st.mu, "J_mid": st.J_mid, "J_width": st.J_width,
                 "embedded": st.embedded}
                for st in self.steps
            ],
            "strictly_increasing": self.strictly_increasing,
            "growth": self.growth,
        }


def moebius_flow_monitor(f, s_grid=None, check_embedded=True):
    """Track the smallest principal curvature along the conformal pull.

    The monitor asserts nothing itself; it reports per-step minima so the
    strict-increase law can be checked by callers and test suites.
    """
    batch = cv.shape_spectra(f)
    if not np.all(batch.kappas > 0):
        raise DomainError("moebius flow monitor expects a locally convex immersion")
    cap = circumcenter(batch.points)
    grid = MOEBIUS_GRID if s_grid is None else tuple(s_grid)
    steps = []
    for s in grid:
        g = apply_moebius(f, cap.center, float(s))
        b = cv.shape_spectra(g)
        J = cv.smallest_circular_cover(b.radii.ravel())
        embedded = True
        if check_embedded:
            from .rigidity import self_intersections

            embedded = self_intersections(g).embedded
        steps.append(FlowStep(float(s), float(b.kappas.min()), J.mid, J.width, embedded))
    mus = [st.mu for st in steps]
    increasing = all(mus[i + 1] > mus[i] for i in range(len(mus) - 1))
    return MoebiusFlowReport(cap.center, steps, increasing, mus[-1] / mus[0])


# ----------------------------------------------------------------------
# twisted classes and the psi/phi pair


@dataclass
class TwistedClass:
    """A pair (rotation, domain diffeomorphism) modulo the equator stabilizer."""

    Q: np.ndarray
    g: im.DomainDiffeo
    canonical: bool = False


def psi(Q, g, r, *, n=2, resolution=im.DEFAULT_RESOLUTION, atlas=None):
    """Realize a twisted pair as a round-type immersion at latitude r."""
    Qm = Q.m if isinstance(Q, sp.Rotation) else np.asarray(Q, dtype=float)
    return im.family_round(r, Qm, g, n=n, resolution=resolution, atlas=atlas)


def psi_hemi(Q, g, *, n=2, resolution=im.DEFAULT_RESOLUTION, atlas=None):
    """Equatorial variant of :func:`psi` (latitude pi/2)."""
    return psi(Q, g, np.pi / 2, n=n, resolution=resolution, atlas=atlas)


def _frame_at_reference(map_point, atlas):
    """Orthonormal frame (value; pushed chart axes) of a domain self-map at e1."""
    d = atlas.n + 1
    e1 = np.zeros(d)
    e1[0] = 1.0
    prm = atlas.invert(e1[None, :])
    seeds = jm.Jet.seed(prm.coords, 1)
    comps = map_point(atlas.embed(int(prm.chart[0]), seeds))
    comps = jm._coerce(comps, seeds[0])
    v = np.array([c.terms[0][0] for c in comps])
    J = np.stack([c.terms[1][0] for c in comps], axis=0)  # (d, n)
    frame = [v / np.linalg.norm(v)]
    for j in range(J.shape[1]):
        w = J[:, j]
        for u in frame:
            w = w - (w @ u) * u
        frame.append(w / np.linalg.norm(w))
    F = np.stack(frame, axis=1)
    if np.linalg.det(F) < 0:
        F[:, -1] = -F[:, -1]
    return F


def canonicalize(tc, atlas=None):
    """Deterministic representative: g maps the e1 parameter to a fixed frame."""
    atlas = atlas or im.DomainAtlas("sphere-cube", n=tc.Q.shape[0] - 2, resolution=16)
    F_src = _frame_at_reference(tc.g.map_point, atlas)
    F_tgt = _frame_at_reference(im.DomainDiffeo.identity().map_point, atlas)
    P = F_tgt @ F_src.T  # SO(n+1), maps g's frame at e1 to the reference frame
    g_map = tc.g.map_point
    new_map = lambda comps: jm.mat_apply(P, g_map(comps))
    inv = None
    if tc.g.inv_point is not None:
        g_inv = tc.g.inv_point
        inv = lambda comps: g_inv(jm.mat_apply(P.T, comps))
    d = tc.Q.shape[0]
    Pb = np.eye(d)
    Pb[: d - 1, : d - 1] = P
    newQ = tc.Q @ Pb.T
    g = im.DomainDiffeo(new_map, inv, tc.g.orientation, f"canon({tc.g.provenance})")
    return TwistedClass(newQ, g, canonical=True)


def twisted_equal(t1, t2, atlas=None, tol=1e-6):
    """Are two twisted pairs the same class?  Returns (flag, max deviation).

    Valid pairs differ by a block rotation fixing the last axis; the block
    is extracted from the rotations and checked against the diffeos.
    """
    d = t1.Q.shape[0]
    atlas = atlas or im.DomainAtlas("sphere-cube", n=d - 2, resolution=16)
    M = t1.Q.T @ t2.Q
    e = np.zeros(d)
    e[-1] = 1.0
    block_err = max(np.linalg.norm(M[:, -1] - e), np.linalg.norm(M[-1, :] - e))
    P = M[: d - 1, : d - 1]
    pts = atlas.sample_points()
    comps = [pts[:, i] for i in range(d - 1)]
    g1 = np.stack(t1.g.map_point(comps), axis=-1)
    g2 = np.stack(t2.g.map_point(comps), axis=-1)
    dev = np.abs(g2 - g1 @ P).max()  # g2(p) = P^T g1(p) row-wise
    err = max(block_err, float(dev))
    return err <= tol, err


def central_project(f, Q=None):
    """Central projection of a southern-hemisphere immersion into E^(n+1)."""
    Qm = np.eye(f.atlas.n + 2) if Q is None else (Q.m if isinstance(Q, sp.Rotation) else np.asarray(Q, dtype=float))
    V = im.evaluate(f) @ Qm  # rows: (Q^T v)
    if V[:, -1].max() > -sp.POLE_TOL:
        raise DomainError("immersion is not strictly southern after rotation")
    parent_ev, parent_nrm = f.eval_point, f.normal_point
    ev = lambda comps: sp.central_core(jm.mat_apply(Qm.T, parent_ev(comps)))
    nrm = None
    if parent_nrm is not None:
        def nrm(comps):
            w = jm.mat_apply(Qm.T, parent_nrm(comps))
            return jm.normalize([c * (-1.0) for c in w[:-1]])
    return im.Immersion(f.atlas, "euclidean", ev, nrm, f.diff_mode,
                        f"central({f.provenance})")


def lift_to_sphere(phi, Q=None):
    """Inverse of :func:`central_project` on immersions."""
    d = phi.atlas.n + 2
    Qm = np.eye(d) if Q is None else (Q.m if isinstance(Q, sp.Rotation) else np.asarray(Q, dtype=float))
    parent_ev, parent_nrm = phi.eval_point, phi.normal_point
    ev = lambda comps: jm.mat_apply(Qm, sp.central_inv_core(parent_ev(comps)))

    nrm = None
    if parent_nrm is not None:
        def nrm(comps):
            x = parent_ev(comps)
            ne = parent_nrm(comps)
            raw = list(ne) + [jm.dot(ne, x)]
            return jm.mat_apply(Qm, jm.normalize([c * (-1.0) for c in raw]))
    return im.Immersion(phi.atlas, "sphere", ev, nrm, phi.diff_mode,
                        f"lift({phi.provenance})")


def gauss_graph_euclidean(phi, r):
    """The immersion p -> tan(r) * gauss(phi)(p), stationary under straightening."""
    if phi.normal_point is None:
        raise DomainError("needs a euclidean immersion with a normal closure")
    t = np.tan(r)
    parent_nrm = phi.normal_point
    ev = lambda comps: [c * t for c in parent_nrm(comps)]
    return im.Immersion(phi.atlas, "euclidean", ev, parent_nrm, phi.diff_mode,
                        f"j_{r} ∘ gauss({phi.provenance})")


def _diffeo_from_map(map_point, atlas, provenance):
    """Package a point closure as a DomainDiffeo with a sampled inverse."""
    g = im.DomainDiffeo(map_point, None, 1, provenance)
    pts = atlas.sample_points()
    prm = atlas.invert(pts)
    signs = np.empty(len(pts))
    for cid in np.unique(prm.chart):
        m = prm.chart == cid
        seeds = jm.Jet.seed(prm.coords[m], 1)
        comps = jm._coerce(map_point(atlas.embed(int(cid), seeds)), seeds[0])
        val = np.stack([c.terms[0] for c in comps], axis=-1)
        J = np.stack([c.terms[1] for c in comps], axis=1)
        M = np.concatenate([J, val[:, :, None]], axis=2)
        signs[m] = np.sign(np.linalg.det(M))
    if np.all(signs > 0):
        g.orientation = 1
    elif np.all(signs < 0):
        g.orientation = -1
    else:
        raise NumericError("sampled map is not a diffeomorphism: orientation flips")
    return g


def phi_convex(f, *, diffeo_atlas=None):
    """Twisted-pair data of a locally convex hemispherical immersion.

    The rotation aligns the image circumcenter with the south pole; the
    diffeomorphism is the euclidean Gauss map of the centrally projected
    immersion.
    """
    batch = cv.shape_spectra(f)
    if not np.all(batch.kappas > 0):
        worst = np.unravel_index(np.argmin(batch.kappas), batch.kappas.shape)
        raise DomainError(
            f"not locally convex: kappa={batch.kappas[worst]:.4f} at sample {worst[0]}"
        )
    cap = circumcenter(batch.points)
    Qm = sp.rotation_to(cap.center).m
    parent_nrm = f.normal_point
    if parent_nrm is None:
        raise DomainError("phi needs an immersion with a normal closure")

    def gmap(comps):
        w = jm.mat_apply(Qm.T, parent_nrm(comps))
        hat = w[:-1]
        n2 = jm.dot(hat, hat)
        if np.min(jm.value_of(n2)) < 1e-12:
            raise NumericError("gauss image touches the vertical axis; projection degenerates")
        return jm.normalize([c * (-1.0) for c in hat])

    atlas = diffeo_atlas or f.atlas
    g = _diffeo_from_map(gmap, atlas, f"gauss(central({f.provenance}))")
    if g.orientation != 1:
        raise NumericError("projected gauss map is orientation-reversing")
    return TwistedClass(Qm, g, canonical=False)


def phi_hemi(f, *, diffeo_atlas=None):
    """Twisted-pair data of an immersion whose Gauss image is hemispherical.

    The rotation aligns the circumcenter of the dual's image with the south
    pole; the diffeomorphism flattens the immersion onto the equator.
    """
    cap = gauss_cap(f)  # raises HemisphereError when f is not in the class
    Qm = sp.rotation_to(cap.center).m
    parent_ev = f.eval_point

    def gmap(comps):
        return sp.tau_core(jm.mat_apply(Qm.T, parent_ev(comps)))

    atlas = diffeo_atlas or f.atlas
    g = _diffeo_from_map(gmap, atlas, f"tau(({f.provenance}))")
    if g.orientation != 1:
        raise NumericError("flattened map is orientation-reversing")
    return TwistedClass(Qm, g, canonical=False)


def zeta_conjugate(f, Q, s):
    """The flattening flow stage Q ∘ zeta_s ∘ Q^{-1} ∘ f."""
    Qm = Q.m if isinstance(Q, sp.Rotation) else np.asarray(Q, dtype=float)
    parent_ev = f.eval_point
    ev = lambda comps: jm.mat_apply(Qm, sp.zeta_core(s, jm.mat_apply(Qm.T, parent_ev(comps))))
    return im.Immersion(f.atlas, "sphere", ev, None, f.diff_mode,
                        f"zeta_{s} conj ({f.provenance})")
