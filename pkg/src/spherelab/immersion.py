"""Parametric hypersurfaces of the round sphere and of euclidean space.

An :class:`Immersion` bundles a domain atlas with two jet-polymorphic
closures: ``eval_point`` maps a domain point (component list) to ambient
components, and ``normal_point`` — when a closed form exists — does the
same for the unit normal.  Derived immersions (translates, duals, conformal
images) compose these closures, so analytic derivatives of any depth come
from the jet algebra rather than from finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from . import jets as jm
from . import sphere as sp
from .errors import DegeneracyError, DomainError

RANK_TOL = 1e-7  # smallest/largest singular value ratio for full rank
DEFAULT_RESOLUTION = 64


# ----------------------------------------------------------------------
# parameter batches


@dataclass(frozen=True)
class Params:
    """A batch of chart parameters: chart ids plus in-chart coordinates."""

    chart: np.ndarray  # (B,) int
    coords: np.ndarray  # (B, n) float

    def __len__(self):
        return self.chart.shape[0]

    def take(self, idx):
        return Params(self.chart[idx], self.coords[idx])


# ----------------------------------------------------------------------
# atlases


class DomainAtlas:
    """Deterministic sample grids over S^n (cube-face atlas) or the 2-torus."""

    def __init__(self, kind, n=2, resolution=DEFAULT_RESOLUTION, seed=0):
        if kind not in ("sphere-cube", "torus-grid"):
            raise DomainError(f"unknown atlas kind {kind!r}")
        if kind == "torus-grid" and n != 2:
            raise DomainError("torus-grid atlas is only available for n = 2")
        self.kind = kind
        self.n = n
        self.resolution = int(resolution)
        self.seed = seed
        self._samples = None
        self._adjacency = None
        self._median_spacing = None
        if kind == "sphere-cube":
            self._faces = self._build_faces(n)

    # -- chart structure ------------------------------------------------
    @staticmethod
    def _build_faces(n):
        """Per-face (axis, sign, ordered transverse axes) with + orientation."""
        faces = []
        for axis in range(n + 1):
            for sign in (1.0, -1.0):
                rest = [a for a in range(n + 1) if a != axis]
                # orientation at the face center: det[sign*e_rest..., sign*e_axis]
                m = np.zeros((n + 1, n + 1))
                for j, a in enumerate(rest):
                    m[a, j] = sign
                m[axis, n] = sign
                if np.linalg.det(m) < 0:
                    rest[0], rest[1] = rest[1], rest[0]
                faces.append((axis, sign, tuple(rest)))
        return faces

    @property
    def num_charts(self):
        return len(self._faces) if self.kind == "sphere-cube" else 1

    @property
    def point_dim(self):
        return self.n + 1 if self.kind == "sphere-cube" else 2

    def embed(self, chart, coords):
        """Chart coordinates (component list) -> domain point components."""
        if self.kind == "torus-grid":
            return list(coords)
        axis, sign, rest = self._faces[chart]
        r2 = jm.dot(coords, coords)
        inv = jm.sqrt(1.0 + r2).reciprocal() * sign if isinstance(r2, jm.Jet) else sign / np.sqrt(1.0 + r2)
        out = [None] * (self.n + 1)
        out[axis] = inv
        for j, a in enumerate(rest):
            out[a] = coords[j] * inv
        return out

    def invert(self, points):
        """Domain points (B, n+1) -> Params; cube atlas only."""
        if self.kind != "sphere-cube":
            raise DomainError("invert is only defined for the cube atlas")
        P = np.asarray(points, dtype=float)
        axes = np.argmax(np.abs(P), axis=1)
        signs = np.sign(P[np.arange(len(P)), axes])
        chart = np.empty(len(P), dtype=int)
        coords = np.empty((len(P), self.n))
        for cid, (axis, sign, rest) in enumerate(self._faces):
            m = (axes == axis) & (signs == sign)
            if not np.any(m):
                continue
            chart[m] = cid
            denom = P[m, axis]
            for j, a in enumerate(rest):
                coords[m, j] = P[m, a] / denom
        return Params(chart, coords)

    # -- sampling ---------------------------------------------------------
    def samples(self):
        if self._samples is not None:
            return self._samples
        res = self.resolution
        if self.kind == "torus-grid":
            ang = 2 * np.pi * (np.arange(res) + 0.5) / res
            th, ph = np.meshgrid(ang, ang, indexing="ij")
            coords = np.stack([th.ravel(), ph.ravel()], axis=1)
            self._samples = Params(np.zeros(len(coords), dtype=int), coords)
            return self._samples
        u = -1.0 + (2 * np.arange(res) + 1.0) / res
        grids = np.meshgrid(*([u] * self.n), indexing="ij")
        block = np.stack([g.ravel() for g in grids], axis=1)
        charts, coords = [], []
        for cid in range(self.num_charts):
            charts.append(np.full(len(block), cid, dtype=int))
            coords.append(block)
        self._samples = Params(np.concatenate(charts), np.concatenate(coords))
        return self._samples

    def sample_points(self):
        """Domain points of all samples, (B, point_dim)."""
        p = self.samples()
        if self.kind == "torus-grid":
            return p.coords.copy()
        out = np.empty((len(p), self.n + 1))
        for cid in range(self.num_charts):
            m = p.chart == cid
            comps = self.embed(cid, [p.coords[m, j] for j in range(self.n)])
            out[m] = np.stack(comps, axis=-1)
        return out

    def metric_points(self):
        """Points in a euclidean space where chords track domain distances."""
        pts = self.sample_points()
        if self.kind == "sphere-cube":
            return pts
        th, ph = pts[:, 0], pts[:, 1]
        return np.stack([np.cos(th), np.sin(th), np.cos(ph), np.sin(ph)], axis=1)

    def median_spacing(self):
        """Median nearest-neighbor distance between domain samples."""
        if self._median_spacing is None:
            mp = self.metric_points()
            d, _ = cKDTree(mp).query(mp, k=2)
            self._median_spacing = float(np.median(d[:, 1]))
        return self._median_spacing

    def adjacency(self):
        """Edges of the sample proximity graph, (E, 2) int array."""
        if self._adjacency is not None:
            return self._adjacency
        if self.kind == "torus-grid":
            res = self.resolution
            idx = np.arange(res * res).reshape(res, res)
            right = np.stack([idx.ravel(), np.roll(idx, -1, axis=1).ravel()], axis=1)
            down = np.stack([idx.ravel(), np.roll(idx, -1, axis=0).ravel()], axis=1)
            self._adjacency = np.concatenate([right, down])
            return self._adjacency
        mp = self.metric_points()
        h = self.median_spacing()
        pairs = cKDTree(mp).query_pairs(2.5 * h, output_type="ndarray")
        keep = np.linalg.norm(mp[pairs[:, 0]] - mp[pairs[:, 1]], axis=1) <= 3.0 * h
        self._adjacency = pairs[keep]
        return self._adjacency

    def separation_cells(self, i_idx, j_idx):
        """Domain separation between sample pairs, in grid-cell units."""
        p = self.samples()
        if self.kind == "torus-grid":
            cell = 2 * np.pi / self.resolution
            d = np.abs(p.coords[i_idx] - p.coords[j_idx])
            d = np.minimum(d, 2 * np.pi - d)
            return d.max(axis=1) / cell
        pts = self.sample_points()
        dots = np.clip(np.sum(pts[i_idx] * pts[j_idx], axis=1), -1.0, 1.0)
        return np.arccos(dots) / self.median_spacing()


# ----------------------------------------------------------------------
# domain diffeomorphisms of S^n


@dataclass
class DomainDiffeo:
    """A diffeomorphism of the domain sphere given by point closures."""

    map_point: Callable
    inv_point: Optional[Callable]
    orientation: int
    provenance: str

    @staticmethod
    def identity():
        return DomainDiffeo(lambda c: list(c), lambda c: list(c), 1, "id")

    @staticmethod
    def from_rotation(P):
        P = np.asarray(P, dtype=float)
        if abs(np.linalg.det(P) - 1.0) > 1e-10:
            raise DomainError("domain rotation must have determinant +1")
        return DomainDiffeo(
            lambda c: jm.mat_apply(P, c),
            lambda c: jm.mat_apply(P.T, c),
            1,
            "rot",
        )

    @staticmethod
    def squeeze(lam):
        """Conformal squeeze of S^n toward its last-axis pole (lam > 0)."""
        if lam <= 0:
            raise DomainError("squeeze parameter must be positive")
        return DomainDiffeo(
            lambda c: sp.squeeze_core(lam, c),
            lambda c: sp.squeeze_core(1.0 / lam, c),
            1,
            f"squeeze({lam})",
        )

    def sampled_inverse(self, atlas):
        """Numeric inverse: nearest-sample lookup plus Newton refinement."""
        table = _DiffeoInverseTable(self, atlas)
        return table.query


class _DiffeoInverseTable:
    def __init__(self, diffeo, atlas):
        self.diffeo = diffeo
        self.atlas = atlas
        params = atlas.samples()
        self.domain_pts = atlas.sample_points()
        vals = np.empty_like(self.domain_pts)
        for cid in range(atlas.num_charts):
            m = params.chart == cid
            comps = atlas.embed(cid, [params.coords[m, j] for j in range(atlas.n)])
            vals[m] = np.stack(diffeo.map_point(comps), axis=-1)
        self.tree = cKDTree(vals)

    def query(self, targets, iters=5):
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        _, idx = self.tree.query(targets)
        guess = self.domain_pts[idx]
        atlas, g = self.atlas, self.diffeo
        out = np.empty_like(targets)
        for row, (t, p0) in enumerate(zip(targets, guess)):
            p = p0.copy()
            for _ in range(iters):
                prm = atlas.invert(p[None, :])
                seeds = jm.Jet.seed(prm.coords, 1)
                comps = g.map_point(atlas.embed(int(prm.chart[0]), seeds))
                val = jm.values(comps)[0]
                J = jm.jacobian(comps)[0]
                du, *_ = np.linalg.lstsq(J, t - val, rcond=None)
                u = prm.coords[0] + du
                emb = atlas.embed(int(prm.chart[0]), list(u))
                p = np.asarray(emb, dtype=float)
                p /= np.linalg.norm(p)
                if np.linalg.norm(val - t) < 1e-12:
                    break
            out[row] = p
        return out


# ----------------------------------------------------------------------
# immersions


@dataclass
class Immersion:
    """A parametric hypersurface with optional closed-form unit normal."""

    atlas: DomainAtlas
    ambient: str  # "sphere" | "euclidean"
    eval_point: Callable
    normal_point: Optional[Callable]
    diff_mode: str = "analytic"
    provenance: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.atlas.n

    @property
    def ambient_dim(self):
        base = self.atlas.n + 2
        return base if self.ambient == "sphere" else base - 1


def _group_apply(f, params, fn):
    """Evaluate a per-chart closure over a parameter batch, reassembling rows."""
    out = None
    for cid in np.unique(params.chart):
        m = params.chart == cid
        res = fn(int(cid), params.coords[m])
        if out is None:
            out = np.empty((len(params),) + res.shape[1:], dtype=res.dtype)
        out[m] = res
    return out


def evaluate(f, params=None):
    """Ambient positions at the given (default: all atlas) parameters."""
    params = f.atlas.samples() if params is None else params
    def chunk(cid, coords):
        comps = f.atlas.embed(cid, [coords[:, j] for j in range(f.n)])
        vals = f.eval_point(comps)
        return np.stack([np.broadcast_to(jm.value_of(v), coords.shape[:1]) for v in vals], axis=-1)
    return _group_apply(f, params, chunk)


def jets_at(f, params, order):
    """Jet components of the evaluation map, seeded on chart coordinates."""
    B = len(params)
    n, d = f.n, f.ambient_dim
    terms = [np.zeros((B,) + (n,) * k) for k in range(order + 1)]
    comp_terms = [[t.copy() for t in terms] for _ in range(d)]
    for cid in np.unique(params.chart):
        m = params.chart == cid
        seeds = jm.Jet.seed(params.coords[m], order)
        comps = f.eval_point(f.atlas.embed(int(cid), seeds))
        comps = jm._coerce(comps, seeds[0])
        for i, c in enumerate(comps):
            for k in range(order + 1):
                comp_terms[i][k][m] = c.terms[k]
    return [jm.Jet(n, t) for t in comp_terms]


def normal_jets(f, params, order=0):
    """Jet components of the unit normal.

    Uses the immersion's closed-form normal when available; otherwise
    differentiates the evaluation map once more and takes the oriented unit
    vector orthogonal to the tangent space.
    """
    if f.normal_point is not None:
        B = len(params)
        n, d = f.n, f.ambient_dim
        comp_terms = [[np.zeros((B,) + (n,) * k) for k in range(order + 1)] for _ in range(d)]
        for cid in np.unique(params.chart):
            m = params.chart == cid
            seeds = jm.Jet.seed(params.coords[m], order)
            comps = f.normal_point(f.atlas.embed(int(cid), seeds))
            comps = jm._coerce(comps, seeds[0])
            for i, c in enumerate(comps):
                for k in range(order + 1):
                    comp_terms[i][k][m] = c.terms[k]
        return [jm.Jet(f.n, t) for t in comp_terms]
    comps = jets_at(f, params, order + 1)
    cols = jm.component_partials(comps)
    vectors = [[c.truncated(order) for c in col] for col in cols]
    if f.ambient == "sphere":
        base = [c.truncated(order) for c in comps]
        cross = jm.gencross(vectors + [base])
        return jm.normalize([-c for c in cross])
    cross = jm.gencross(vectors)
    return jm.normalize(cross)


def normal_at(f, params=None):
    """Unit normals as a plain (B, d) array."""
    params = f.atlas.samples() if params is None else params
    if f.normal_point is not None:
        def chunk(cid, coords):
            comps = f.normal_point(f.atlas.embed(cid, [coords[:, j] for j in range(f.n)]))
            return np.stack(
                [np.broadcast_to(jm.value_of(v), coords.shape[:1]) for v in comps], axis=-1
            )
        return _group_apply(f, params, chunk)
    return jm.values(normal_jets(f, params, 0))


# -- derivatives --------------------------------------------------------


def jacobian(f, params, mode=None):
    """Ambient Jacobian columns, (B, d, n)."""
    mode = mode or f.diff_mode
    if mode == "analytic":
        return jm.jacobian(jets_at(f, params, 1))
    return _fd_jacobian(lambda prm: evaluate(f, prm), params, f.n)


def hessian(f, params, mode=None):
    """Second partials of the evaluation map, (B, d, n, n)."""
    mode = mode or f.diff_mode
    if mode == "analytic":
        return jm.hessian(jets_at(f, params, 2))
    return _fd_hessian(lambda prm: evaluate(f, prm), params, f.n)


def _shift(params, j, h):
    c = params.coords.copy()
    c[:, j] += h
    return Params(params.chart, c)


def _fd_jacobian(fn, params, n, h=1e-5):
    def central(h):
        cols = []
        for j in range(n):
            cols.append((fn(_shift(params, j, h)) - fn(_shift(params, j, -h))) / (2 * h))
        return np.stack(cols, axis=-1)
    d1, d2 = central(h), central(h / 2)
    return (4.0 * d2 - d1) / 3.0


def _fd_hessian(fn, params, n, h=2e-3):
    def central(h):
        base = fn(params)
        out = np.empty(base.shape + (n, n))
        for i in range(n):
            for j in range(i, n):
                if i == j:
                    val = (fn(_shift(params, i, h)) - 2 * base + fn(_shift(params, i, -h))) / h**2
                else:
                    pp = fn(_shift(_shift(params, i, h), j, h))
                    pm = fn(_shift(_shift(params, i, h), j, -h))
                    mp = fn(_shift(_shift(params, i, -h), j, h))
                    mm = fn(_shift(_shift(params, i, -h), j, -h))
                    val = (pp - pm - mp + mm) / (4 * h**2)
                out[..., i, j] = val
                out[..., j, i] = val
        return out
    d1, d2 = central(h), central(h / 2)
    return (4.0 * d2 - d1) / 3.0


def rank_margin(f, params=None):
    """Min over samples of smallest/largest singular value of the Jacobian."""
    params = f.atlas.samples() if params is None else params
    J = jacobian(f, params)
    s = np.linalg.svd(J, compute_uv=False)
    ratios = s[:, -1] / s[:, 0]
    return float(ratios.min()), int(np.argmin(ratios))


def validate(f, params=None):
    """Raise DegeneracyError unless the Jacobian has full rank everywhere."""
    margin, where = rank_margin(f, params)
    if margin < RANK_TOL:
        p = (f.atlas.samples() if params is None else params)
        raise DegeneracyError(
            f"immersion loses rank (margin {margin:.2e}) at sample {where}",
            sample=(int(p.chart[where]), p.coords[where].copy()),
        )
    return margin


# ----------------------------------------------------------------------
# built-in families


def family_round(r, Q=None, g=None, *, n=2, resolution=DEFAULT_RESOLUTION, atlas=None):
    """Round hypersphere at latitude r, rotated by Q and reparametrized by g."""
    if not 0.0 < r < np.pi:
        raise DomainError(f"latitude r={r} outside (0, pi)")
    atlas = atlas or DomainAtlas("sphere-cube", n=n, resolution=resolution)
    Qm = None if Q is None else (Q.m if isinstance(Q, sp.Rotation) else np.asarray(Q, dtype=float))
    g = g or DomainDiffeo.identity()
    sr, cr = np.sin(r), np.cos(r)

    def ev(comps):
        p = g.map_point(comps)
        out = [c * sr for c in p]
        out.append(-cr + 0.0 * p[0])
        return out if Qm is None else jm.mat_apply(Qm, out)

    def nrm(comps):
        p = g.map_point(comps)
        out = [c * (-cr * g.orientation) for c in p]
        out.append(-sr * g.orientation + 0.0 * p[0])
        return out if Qm is None else jm.mat_apply(Qm, out)

    tag = f"round(r={r})" + ("" if Qm is None else " ∘Q") + ("" if g.provenance == "id" else f" ∘{g.provenance}")
    return Immersion(atlas, "sphere", ev, nrm, "analytic", tag,
                     {"family": "round", "r": float(r)})


def family_clifford(wrap=(1, 1), *, resolution=DEFAULT_RESOLUTION, atlas=None):
    """Flat wrapped torus in S^3: (1/sqrt2)(cos aθ, sin aθ, cos bφ, sin bφ)."""
    a, b = int(wrap[0]), int(wrap[1])
    if a < 1 or b < 1:
        raise DomainError("wrap degrees must be positive integers")
    atlas = atlas or DomainAtlas("torus-grid", n=2, resolution=resolution)
    s = 1.0 / np.sqrt(2.0)

    def ev(comps):
        th, ph = comps
        return [
            jm.cos(th * a) * s,
            jm.sin(th * a) * s,
            jm.cos(ph * b) * s,
            jm.sin(ph * b) * s,
        ]

    def nrm(comps):
        th, ph = comps
        return [
            jm.cos(th * a) * (-s),
            jm.sin(th * a) * (-s),
            jm.cos(ph * b) * s,
            jm.sin(ph * b) * s,
        ]

    return Immersion(atlas, "sphere", ev, nrm, "analytic", f"clifford{(a, b)}",
                     {"family": "clifford", "wrap": (a, b)})


BUMPS = {
    "xy": (lambda p: p[0] * p[1], lambda p: [p[1], p[0]] + [0.0] * (len(p) - 2)),
    "xx-yy": (
        lambda p: p[0] * p[0] - p[1] * p[1],
        lambda p: [p[0] * 2.0, p[1] * (-2.0)] + [0.0] * (len(p) - 2),
    ),
    "xyz": (
        lambda p: p[0] * p[1] * p[2],
        lambda p: [p[1] * p[2], p[0] * p[2], p[0] * p[1]] + [0.0] * (len(p) - 3),
    ),
}


def family_radial_graph(bump="xy", eps=1e-2, r0=np.pi / 4, *, n=2,
                        resolution=DEFAULT_RESOLUTION, atlas=None):
    """Radial graph over the pole -e: latitude r0 + eps * bump(p)."""
    if bump not in BUMPS:
        raise DomainError(f"unknown bump {bump!r}; available: {sorted(BUMPS)}")
    h_fn, grad_fn = BUMPS[bump]
    atlas = atlas or DomainAtlas("sphere-cube", n=n, resolution=resolution)

    def ev(comps):
        rho = h_fn(comps) * eps + r0
        srho, crho = jm.sin(rho), jm.cos(rho)
        out = [c * srho for c in comps]
        out.append(-crho)
        return out

    def nrm(comps):
        rho = h_fn(comps) * eps + r0
        srho, crho = jm.sin(rho), jm.cos(rho)
        grad = grad_fn(comps)
        radial = jm.dot(grad, comps)
        tang = [gi - c * radial for gi, c in zip(grad, comps)]
        inv_s = 1.0 / srho
        raw = [c * crho - t * (eps * inv_s) for c, t in zip(comps, tang)]
        raw.append(srho)
        return jm.normalize([-c for c in raw])

    f = Immersion(atlas, "sphere", ev, nrm, "analytic",
                  f"radial_graph({bump}, eps={eps}, r0={r0})",
                  {"family": "radial_graph", "bump": bump, "eps": float(eps), "r0": float(r0)})
    validate(f)
    return f


# ----------------------------------------------------------------------
# composition


def precompose(f, g):
    """Reparametrize an S^n-domain immersion by a domain diffeomorphism."""
    if f.atlas.kind != "sphere-cube":
        raise DomainError("precompose expects an S^n-domain immersion")
    ev = lambda comps: f.eval_point(g.map_point(comps))
    nrm = None
    if f.normal_point is not None:
        if g.orientation == 1:
            nrm = lambda comps: f.normal_point(g.map_point(comps))
        else:
            nrm = lambda comps: [-c for c in f.normal_point(g.map_point(comps))]
    return Immersion(f.atlas, f.ambient, ev, nrm, f.diff_mode,
                     f"({f.provenance}) ∘ {g.provenance}")


def postcompose_rotation(f, Q):
    """Move an immersion by an ambient rotation."""
    Qm = Q.m if isinstance(Q, sp.Rotation) else np.asarray(Q, dtype=float)
    if abs(np.linalg.det(Qm) - 1.0) > 1e-10:
        raise DomainError("ambient motion must be a rotation")
    ev = lambda comps: jm.mat_apply(Qm, f.eval_point(comps))
    nrm = None
    if f.normal_point is not None:
        nrm = lambda comps: jm.mat_apply(Qm, f.normal_point(comps))
    return Immersion(f.atlas, f.ambient, ev, nrm, f.diff_mode, f"Q ∘ ({f.provenance})")
