"""Embedding detection, deck groups and covering-count identities.

The detector samples the immersion on its atlas grid, collects close pairs
of far-apart parameters with a KD-tree at grid-spacing scale, refines each
candidate pair by damped Gauss-Newton on the squared ambient distance, and
keeps the ones that genuinely converge below the intersection tolerance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import curvature as cv
from . import immersion as im
from .errors import DomainError, NumericError, ResolutionError

INTERSECT_EPS = 1e-3  # ambient distance identifying two sheets
SEPARATION_CELLS = 5.0  # minimal domain separation of a candidate pair


class UnionFind:
    """Union-find with path compression, used for cluster merging."""

    def __init__(self, size):
        self.parent = list(range(size))

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra

    def groups(self):
        out = {}
        for i in range(len(self.parent)):
            out.setdefault(self.find(i), []).append(i)
        return list(out.values())


# ----------------------------------------------------------------------
# sampled hypersurfaces


@dataclass
class SampledHypersurface:
    """Discretized image of an immersion with its domain proximity graph."""

    points: np.ndarray
    adjacency: np.ndarray
    source: str

    def __post_init__(self):
        uf = UnionFind(len(self.points))
        for a, b in self.adjacency:
            uf.union(int(a), int(b))
        self.connected = len(uf.groups()) == 1
        lengths = np.linalg.norm(self.points[self.adjacency[:, 0]] - self.points[self.adjacency[:, 1]], axis=1)
        self.median_edge = float(np.median(lengths))
        if lengths.max() > 3.0 * self.median_edge + 1e-12:
            raise NumericError("proximity graph has an edge above 3x the median spacing")


def sampled(f):
    return SampledHypersurface(im.evaluate(f), f.atlas.adjacency(), f.provenance)


# ----------------------------------------------------------------------
# self-intersection detection


@dataclass
class IntersectionReport:
    clusters: list  # per cluster: {"pairs": [(i, j), ...], "distance": float}
    m: int
    embedded: bool
    suspects: list = field(default_factory=list)
    eps: float = INTERSECT_EPS
    separation: float = SEPARATION_CELLS

    def as_dict(self):
        return {
            "embedded": self.embedded,
            "m": self.m,
            "cluster_count": len(self.clusters),
            "suspect_count": len(self.suspects),
            "eps": self.eps,
            "separation": self.separation,
        }


def _refine_pairs(f, params, I, J, iters=20):
    """Damped Gauss-Newton minimization of |f(x) - f(y)|^2 per candidate pair."""
    n = f.n
    px = im.Params(params.chart[I], params.coords[I].copy())
    py = im.Params(params.chart[J], params.coords[J].copy())

    def objective(px, py):
        return np.linalg.norm(im.evaluate(f, px) - im.evaluate(f, py), axis=1)

    best = objective(px, py)
    for _ in range(iters):
        rx = im.evaluate(f, px)
        ry = im.evaluate(f, py)
        res = rx - ry
        Jx = im.jacobian(f, px)
        Jy = im.jacobian(f, py)
        Jfull = np.concatenate([Jx, -Jy], axis=2)  # (P, d, 2n)
        JtJ = np.einsum("pdi,pdj->pij", Jfull, Jfull)
        JtJ += 1e-12 * np.eye(2 * n)
        rhs = -np.einsum("pdi,pd->pi", Jfull, res)
        try:
            step = np.linalg.solve(JtJ, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack(
                [np.linalg.lstsq(JtJ[k], rhs[k], rcond=None)[0] for k in range(len(rhs))]
            )
        scale = np.ones(len(best))
        for _ in range(6):
            cx = im.Params(px.chart, px.coords + scale[:, None] * step[:, :n])
            cy = im.Params(py.chart, py.coords + scale[:, None] * step[:, n:])
            val = objective(cx, cy)
            good = val <= best + 1e-15
            if good.all():
                break
            scale = np.where(good, scale, scale * 0.5)
        improved = val < best
        px.coords[improved] = cx.coords[improved]
        py.coords[improved] = cy.coords[improved]
        best = np.where(improved, val, best)
        if not improved.any():
            break
    return best, px, py


def self_intersections(f, eps=INTERSECT_EPS, separation=SEPARATION_CELLS, refine=True):
    """Detect parameter pairs mapping to the same ambient point.

    Returns an :class:`IntersectionReport`; ``m`` is the largest number of
    mutually far-apart parameter groups sharing one target point.
    """
    params = f.atlas.samples()
    V = im.evaluate(f, params)
    adj = f.atlas.adjacency()
    spacing = float(np.median(np.linalg.norm(V[adj[:, 0]] - V[adj[:, 1]], axis=1)))
    if spacing > eps:
        warnings.warn(
            f"sample spacing {spacing:.2e} exceeds eps={eps:.2e}; "
            "candidates are gathered at spacing scale and refined",
            stacklevel=2,
        )
    search = max(eps, 1.5 * spacing)
    pairs = cKDTree(V).query_pairs(search, output_type="ndarray")
    if len(pairs):
        sep = f.atlas.separation_cells(pairs[:, 0], pairs[:, 1])
        pairs = pairs[sep > separation]
    if len(pairs) == 0:
        return IntersectionReport([], 1, True, [], eps, separation)

    I, J = pairs[:, 0], pairs[:, 1]
    if refine:
        dist, px, py = _refine_pairs(f, params, I, J)
        sep_after = _param_separation(f.atlas, params, px, py)
        keepable = sep_after > 0.5 * separation
    else:
        dist = np.linalg.norm(V[I] - V[J], axis=1)
        keepable = np.ones(len(dist), dtype=bool)
    hits = (dist < eps) & keepable
    suspects = [
        {"pair": (int(a), int(b)), "distance": float(d)}
        for a, b, d in zip(I[~hits], J[~hits], dist[~hits])
        if d < 10 * eps
    ]
    if not hits.any():
        return IntersectionReport([], 1, True, suspects, eps, separation)

    I, J, dist = I[hits], J[hits], dist[hits]
    uf = UnionFind(len(V))
    for a, b in zip(I, J):
        uf.union(int(a), int(b))
    comp = {}
    for k, (a, b, d) in enumerate(zip(I, J, dist)):
        comp.setdefault(uf.find(int(a)), []).append(k)
    clusters = [
        {
            "pairs": [(int(I[k]), int(J[k])) for k in ks],
            "distance": float(np.min(dist[ks])),
        }
        for ks in comp.values()
    ]
    m = _multiplicity(f.atlas, I, J, len(V), separation)
    return IntersectionReport(clusters, m, False, suspects, eps, separation)


def _param_separation(atlas, params, px, py):
    """Domain separation (cells) between refined parameter pairs."""
    if atlas.kind == "torus-grid":
        cell = 2 * np.pi / atlas.resolution
        d = np.abs(px.coords - py.coords) % (2 * np.pi)
        d = np.minimum(d, 2 * np.pi - d)
        return d.max(axis=1) / cell
    ax = _embed_params(atlas, px)
    ay = _embed_params(atlas, py)
    dots = np.clip(np.sum(ax * ay, axis=1), -1, 1)
    return np.arccos(dots) / atlas.median_spacing()


def _embed_params(atlas, params):
    out = np.empty((len(params), atlas.n + 1))
    for cid in np.unique(params.chart):
        mask = params.chart == cid
        comps = atlas.embed(int(cid), [params.coords[mask, j] for j in range(atlas.n)])
        out[mask] = np.stack(comps, axis=-1)
    return out


def _multiplicity(atlas, I, J, size, separation):
    """1 + the largest number of far-apart partner groups of any sample."""
    partners = {}
    for a, b in zip(I, J):
        partners.setdefault(int(a), []).append(int(b))
        partners.setdefault(int(b), []).append(int(a))
    m = 1
    for _, ps in partners.items():
        ps = np.asarray(sorted(set(ps)))
        if len(ps) == 1:
            m = max(m, 2)
            continue
        uf = UnionFind(len(ps))
        ii, jj = np.triu_indices(len(ps), k=1)
        sep = atlas.separation_cells(ps[ii], ps[jj])
        for a, b, s in zip(ii, jj, sep):
            if s <= separation:
                uf.union(int(a), int(b))
        m = max(m, 1 + len(uf.groups()))
    return m


def dual_embedding_check(f, eps=INTERSECT_EPS, separation=SEPARATION_CELLS):
    """Self-intersection report of the dual immersion."""
    from .operators import dual

    return self_intersections(dual(f), eps=eps, separation=separation)


# ----------------------------------------------------------------------
# deck groups


@dataclass
class DeckGroup:
    """A finite subgroup of SO(n+2) acting freely on the sphere."""

    elements: list
    name: str = "deck"

    def __post_init__(self):
        mats = [np.asarray(m, dtype=float) for m in self.elements]
        d = mats[0].shape[0]
        if not any(np.allclose(m, np.eye(d), atol=1e-12) for m in mats):
            raise DomainError("deck group must contain the identity")
        for a in mats:
            if np.max(np.abs(a.T @ a - np.eye(d))) > 1e-10 or abs(np.linalg.det(a) - 1) > 1e-10:
                raise DomainError("deck elements must be rotations")
        for a in mats:
            for b in mats:
                prod = a @ b
                if not any(np.max(np.abs(prod - c)) < 1e-10 for c in mats):
                    raise DomainError("deck group is not closed under multiplication")
        for g in mats:
            if np.allclose(g, np.eye(d), atol=1e-12):
                continue
            eig = np.linalg.eigvals(g)
            if np.min(np.abs(eig - 1.0)) < 1e-6:
                raise DomainError(
                    "group action has fixed points: 1 is an eigenvalue of a non-identity element"
                )
        self.elements = mats
        self.order = len(mats)

    def min_displacement(self, points):
        """Smallest move of any sample under any non-identity element."""
        best = np.inf
        for g in self.elements:
            if np.allclose(g, np.eye(g.shape[0]), atol=1e-12):
                continue
            best = min(best, float(np.linalg.norm(points @ g.T - points, axis=1).min()))
        return best


def deck_antipodal(n=2):
    """The two-element group {I, -I}; needs even ambient dimension."""
    d = n + 2
    if d % 2:
        raise DomainError("antipodal deck group needs even ambient dimension")
    return DeckGroup([np.eye(d), -np.eye(d)], "antipodal")


def deck_lens(p, q, n=2):
    """Cyclic lens group of order p with rotation angles 2*pi/p and 2*pi*q/p."""
    if n != 2:
        raise DomainError("lens deck groups are built for n = 2 only")
    if p < 2:
        raise DomainError("lens order must be at least 2")

    def rot(theta):
        return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])

    gen = np.zeros((4, 4))
    gen[:2, :2] = rot(2 * np.pi / p)
    gen[2:, 2:] = rot(2 * np.pi * q / p)
    els = [np.eye(4)]
    cur = gen.copy()
    while not np.allclose(cur, np.eye(4), atol=1e-12):
        els.append(cur.copy())
        cur = cur @ gen
        if len(els) > p + 1:
            raise DomainError("lens generator does not close after p steps")
    return DeckGroup(els, f"lens({p},{q})")


# ----------------------------------------------------------------------
# covering counts


def preimage_components(f, gamma, eps_link=None, check_embedded=False):
    """Count components of the deck-orbit of an embedded image.

    Also extracts the stabilizer order of one component and checks the
    counting identity  components * stabilizer = group order.
    """
    if check_embedded and not self_intersections(f).embedded:
        raise DomainError("preimage_components expects an embedded immersion")
    surf = sampled(f)
    if not surf.connected:
        raise NumericError("sample proximity graph is disconnected; raise the resolution")
    V = surf.points
    base = eps_link if eps_link is not None else 3.0 * surf.median_edge

    def count(eps):
        cloud = np.concatenate([V @ g.T for g in gamma.elements])
        uf = UnionFind(len(cloud))
        for a, b in cKDTree(cloud).query_pairs(eps, output_type="ndarray"):
            uf.union(int(a), int(b))
        groups = uf.groups()
        root_of = {}
        for gi, members in enumerate(groups):
            for mbr in members:
                root_of[mbr] = gi
        return len(groups), root_of, cloud

    k, root_of, cloud = count(base)
    k_lo, _, _ = count(0.8 * base)
    k_hi, _, _ = count(1.2 * base)
    if k_lo != k or k_hi != k:
        raise ResolutionError(
            f"component count unstable under eps_link perturbation: {k_lo}/{k}/{k_hi}"
        )
    c0 = root_of[0]  # component containing the identity copy of sample 0
    C0 = cloud[[i for i, r in root_of.items() if r == c0]]
    tree = cKDTree(C0)
    stab = 0
    for g in gamma.elements:
        moved = C0 @ g.T
        d, _ = tree.query(moved)
        if d.max() < base:
            stab += 1
    identity_holds = k * stab == gamma.order
    return {
        "k": k,
        "stabilizer_order": stab,
        "gamma_order": gamma.order,
        "identity_holds": bool(identity_holds),
        "eps_link": float(base),
    }


def multiplicity_bound_check(f, gamma, eps=None):
    """Check the preimage-count bound for the deck-identified immersion.

    Skipped (with a report) when the radii-interval hypothesis fails: the
    interval must have width below pi/2 and avoid 0 mod pi.
    """
    rep = cv.classify(f)
    if not rep.width_below_half_pi or rep.contains_zero:
        return {
            "hypothesis_ok": False,
            "skipped": True,
            "J_width": rep.interval.width,
            "contains_zero": rep.contains_zero,
        }
    surf = sampled(f)
    V = surf.points
    eps = eps if eps is not None else INTERSECT_EPS

    # domain symmetries of the identified map: deck elements preserving the
    # image as a point set (one-sided Hausdorff at sampling scale)
    tree = cKDTree(V)
    sym = 0
    for g in gamma.elements:
        d, _ = tree.query(V @ g.T)
        if d.max() < 3.0 * surf.median_edge:
            sym += 1

    # largest number of far-apart parameter groups hitting one deck orbit
    pairs = []
    for g in gamma.elements:
        cand = tree.query_ball_point(V @ g.T, eps)
        for i, lst in enumerate(cand):
            for j in lst:
                if i < j:
                    pairs.append((i, j))
    if pairs:
        pairs = np.unique(np.asarray(pairs), axis=0)
        sep = f.atlas.separation_cells(pairs[:, 0], pairs[:, 1])
        pairs = pairs[sep > SEPARATION_CELLS]
    groups = _multiplicity(f.atlas, pairs[:, 0], pairs[:, 1], len(V), SEPARATION_CELLS) if len(pairs) else 1
    if groups % sym:
        raise NumericError(f"orbit group count {groups} not divisible by symmetry order {sym}")
    m = groups // sym
    return {
        "hypothesis_ok": True,
        "skipped": False,
        "m": int(m),
        "sym_order": int(sym),
        "gamma_order": gamma.order,
        "bound_holds": bool(m * sym <= gamma.order),
    }


# ----------------------------------------------------------------------
# irreducible factors of wrapped families


def irreducible_factor(f):
    """Symmetry order and wrap-reduced factor of a built-in family.

    Wrapped tori are tested against their lattice of angle shifts; round
    families are injective and already irreducible.
    """
    meta = getattr(f, "meta", None) or {}
    fam = meta.get("family")
    if fam == "clifford":
        a, b = meta["wrap"]
        params = f.atlas.samples()
        V = im.evaluate(f, params)
        order = 0
        for ka in range(a):
            for kb in range(b):
                shifted = im.Params(
                    params.chart,
                    params.coords + np.array([2 * np.pi * ka / a, 2 * np.pi * kb / b]),
                )
                if np.abs(im.evaluate(f, shifted) - V).max() < 1e-9:
                    order += 1
        return {"order": order, "factor": "clifford(1,1)", "factor_wrap": (1, 1)}
    if fam in ("round", "radial_graph"):
        return {"order": 1, "factor": fam, "factor_wrap": None}
    raise DomainError("irreducible_factor supports built-in families only")
