"""Gauss map, fundamental forms, principal curvatures and the radii interval.

The sign conventions are pinned by one calibration: the round family at
latitude r must report principal curvature cot(r) everywhere, and the
radial dilation p -> tan(r) p of the unit sphere inside euclidean space
must report -cot(r).  Everything downstream (translate shifts, dual
inversion, convexity flags) inherits from these two anchors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import immersion as im
from . import jets as jm
from .errors import DegeneracyError, NumericError

UMBILIC_TOL = 1e-9


# ----------------------------------------------------------------------
# data types


@dataclass
class CurvatureSample:
    """Principal data of one parameter point."""

    chart: int
    x: np.ndarray  # chart coordinates
    gauss: np.ndarray  # unit normal, ambient components
    kappas: np.ndarray  # sorted ascending
    radii: np.ndarray  # arccot(kappas) in (0, pi), matching kappas order
    directions: np.ndarray  # (d, n): ambient principal directions, I-orthonormal
    l_count: int  # number of positive principal curvatures


@dataclass
class CurvatureBatch:
    """Vectorized curvature data over a parameter batch."""

    params: im.Params
    points: np.ndarray  # (B, d)
    gauss: np.ndarray  # (B, d)
    kappas: np.ndarray  # (B, n) sorted ascending
    radii: np.ndarray  # (B, n)
    directions: np.ndarray  # (B, d, n)
    l_count: np.ndarray  # (B,) int

    def __len__(self):
        return len(self.params)

    def sample(self, i):
        return CurvatureSample(
            int(self.params.chart[i]),
            self.params.coords[i].copy(),
            self.gauss[i].copy(),
            self.kappas[i].copy(),
            self.radii[i].copy(),
            self.directions[i].copy(),
            int(self.l_count[i]),
        )


class CircleInterval:
    """A closed interval of the circle R mod pi, stored as mid +- half_width."""

    def __init__(self, mid, half_width, ambiguous=False):
        self.mid = float(mid) % np.pi
        self.half_width = float(half_width)
        self.ambiguous = bool(ambiguous)

    @property
    def width(self):
        return 2.0 * self.half_width

    def endpoints(self):
        return ((self.mid - self.half_width) % np.pi, (self.mid + self.half_width) % np.pi)

    def contains(self, x, tol=0.0):
        d = circle_distance(x, self.mid)
        return d <= self.half_width + tol

    def intersects(self, other, tol=0.0):
        d = circle_distance(self.mid, other.mid)
        return d <= self.half_width + other.half_width + tol

    def shifted(self, delta):
        return CircleInterval(self.mid + delta, self.half_width, self.ambiguous)

    def reflected(self):
        return CircleInterval(-self.mid, self.half_width, self.ambiguous)

    def __repr__(self):
        a, b = self.endpoints()
        return f"CircleInterval[{a:.6f}, {b:.6f} mod pi]"


def circle_distance(a, b):
    """Distance on R mod pi."""
    d = np.abs(np.asarray(a) - np.asarray(b)) % np.pi
    return np.minimum(d, np.pi - d)


def radii_from_kappas(kappas):
    """Principal radii in (0, pi): the angles whose cotangent is kappa."""
    return np.arctan2(1.0, np.asarray(kappas))


# ----------------------------------------------------------------------
# pointwise normals


def gauss_batch(f, params=None):
    """Unit normals from the Jacobian (no closed-form normal required)."""
    params = f.atlas.samples() if params is None else params
    V = im.evaluate(f, params)
    J = im.jacobian(f, params)
    return _oriented_normal(f.ambient, V, J)


def _oriented_normal(ambient, V, J):
    B, d, n = J.shape
    if ambient == "sphere":
        M = np.concatenate([J, V[:, :, None]], axis=2)
    else:
        M = J
    cross = np.empty((B, d))
    rows = np.arange(d)
    for i in range(d):
        minor = M[:, rows != i, :]
        sign = 1.0 if (i + 1 + d) % 2 == 0 else -1.0
        cross[:, i] = sign * np.linalg.det(minor)
    if ambient == "sphere":
        cross = -cross
    nrm = np.linalg.norm(cross, axis=1, keepdims=True)
    if np.any(nrm < 1e-300):
        raise DegeneracyError("tangent frame degenerates; Jacobian loses rank")
    return cross / nrm


def gauss_vector(f, chart, coords):
    """Unit normal at a single parameter point, as a TangentVector."""
    from .sphere import SpherePoint, TangentVector

    if f.ambient != "sphere":
        raise NumericError("gauss_vector expects a sphere-ambient immersion")
    params = im.Params(np.array([int(chart)]), np.atleast_2d(np.asarray(coords, dtype=float)))
    V = im.evaluate(f, params)
    N = gauss_batch(f, params)
    return TangentVector(SpherePoint(V[0]), N[0])


# ----------------------------------------------------------------------
# shape operator spectrum


def _rank_check(f, params, J):
    s = np.linalg.svd(J, compute_uv=False)
    ratios = s[:, -1] / s[:, 0]
    bad = int(np.argmin(ratios))
    if ratios[bad] < im.RANK_TOL:
        raise DegeneracyError(
            f"immersion loses rank (ratio {ratios[bad]:.2e}) at sample {bad}",
            sample=(int(params.chart[bad]), params.coords[bad].copy()),
        )


def shape_spectra(f, params=None, normals=None):
    """Principal curvatures, radii and directions over a parameter batch.

    The second fundamental form is contracted from the Hessian against the
    oriented unit normal; the spectrum solves the symmetric generalized
    eigenproblem II u = kappa I u via Cholesky whitening of I.
    """
    params = f.atlas.samples() if params is None else params
    V = im.evaluate(f, params)
    J = im.jacobian(f, params)
    H = im.hessian(f, params)
    _rank_check(f, params, J)
    N = _oriented_normal(f.ambient, V, J) if normals is None else normals

    I = np.einsum("bdi,bdj->bij", J, J)
    II = np.einsum("bd,bdij->bij", N, H)
    II = 0.5 * (II + II.transpose(0, 2, 1))

    kappas, dirs_chart = _generalized_eigh(I, II, params)
    directions = np.einsum("bdi,bin->bdn", J, dirs_chart)
    radii = radii_from_kappas(kappas)
    l_count = (kappas > 0).sum(axis=1)
    return CurvatureBatch(params, V, N, kappas, radii, directions, l_count)


def _generalized_eigh(I, II, params):
    """Batched solve of II u = kappa I u with I symmetric positive definite."""
    try:
        L = np.linalg.cholesky(I)
    except np.linalg.LinAlgError:
        if I.shape[1] == 2:
            return _eig2x2(I, II)
        raise NumericError(
            f"first fundamental form not positive definite (cond ~ {np.linalg.cond(I).max():.2e})"
        )
    Linv = np.linalg.inv(L)
    A = Linv @ II @ Linv.transpose(0, 2, 1)
    A = 0.5 * (A + A.transpose(0, 2, 1))
    try:
        w, y = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}")
    u = Linv.transpose(0, 2, 1) @ y
    return w, u


def _eig2x2(I, II):
    """Closed-form generalized spectrum for n = 2 (robust near umbilics)."""
    E, F, G = I[:, 0, 0], I[:, 0, 1], I[:, 1, 1]
    L, M, N_ = II[:, 0, 0], II[:, 0, 1], II[:, 1, 1]
    det_I = E * G - F * F
    b = (E * N_ + G * L - 2 * F * M) / det_I
    c = (L * N_ - M * M) / det_I
    disc = np.sqrt(np.maximum(b * b - 4 * c, 0.0))
    k1 = 0.5 * (b - disc)
    k2 = 0.5 * (b + disc)
    w = np.stack([k1, k2], axis=1)
    u = np.empty(I.shape)
    for j, k in enumerate((k1, k2)):
        A = II - k[:, None, None] * I
        v1 = np.stack([-A[:, 0, 1], A[:, 0, 0]], axis=1)
        v2 = np.stack([-A[:, 1, 1], A[:, 1, 0]], axis=1)
        pick = np.linalg.norm(v1, axis=1) >= np.linalg.norm(v2, axis=1)
        v = np.where(pick[:, None], v1, v2)
        degen = np.linalg.norm(v, axis=1) < 1e-14
        v[degen] = np.eye(2)[j]
        q = np.einsum("bi,bij,bj->b", v, I, v)
        u[:, :, j] = v / np.sqrt(q)[:, None]
    return w, u


def shape_spectrum(f, chart, coords):
    """Curvature data at a single parameter point."""
    params = im.Params(np.array([int(chart)]), np.atleast_2d(np.asarray(coords, dtype=float)))
    return shape_spectra(f, params).sample(0)


def euclidean_shape_spectrum(f, chart, coords):
    """Alias of :func:`shape_spectrum` for euclidean-ambient immersions."""
    if f.ambient != "euclidean":
        raise NumericError("euclidean_shape_spectrum expects a euclidean immersion")
    return shape_spectrum(f, chart, coords)


# ----------------------------------------------------------------------
# the radii interval J and hypothesis classification


def smallest_circular_cover(values):
    """Smallest closed interval of R mod pi containing all values.

    Computed as the complement of the largest gap between consecutive
    values on the circle; near-ties are flagged as ambiguous together with
    any cover of half-width >= pi/4.
    """
    v = np.sort(np.asarray(values, dtype=float) % np.pi)
    if v.size == 0:
        raise ValueError("no radii supplied")
    if v.size == 1 or v[-1] - v[0] < 1e-15:
        return CircleInterval(v[0], 0.0)
    gaps = np.diff(v)
    wrap = v[0] + np.pi - v[-1]
    all_gaps = np.append(gaps, wrap)
    order = np.argsort(all_gaps)
    largest, second = all_gaps[order[-1]], all_gaps[order[-2]]
    candidates = [i for i in range(len(all_gaps)) if all_gaps[i] >= largest - 1e-12]
    best = None
    for i in candidates:
        lo = v[(i + 1) % v.size]
        width = np.pi - all_gaps[i]
        mid = (lo + width / 2.0) % np.pi
        if best is None or mid < best[0]:
            best = (mid, width / 2.0)
    ambiguous = best[1] >= np.pi / 4 - 1e-12 or (len(candidates) > 1)
    if second >= largest - 1e-9:
        ambiguous = True
    return CircleInterval(best[0], best[1], ambiguous)


def radii_interval(f, params=None, batch=None):
    """Smallest circular interval (mod pi) covering all sampled radii."""
    batch = shape_spectra(f, params) if batch is None else batch
    return smallest_circular_cover(batch.radii.ravel())


@dataclass
class ClassifyReport:
    """Checkable hypotheses of the rigidity statements for one immersion."""

    interval: CircleInterval
    width_below_half_pi: bool
    contains_zero: bool
    contains_half_pi: bool
    locally_convex: bool
    disjoint_from_quarter_shift: bool
    l_count_constant: bool
    l_count: int

    def as_dict(self):
        a, b = self.interval.endpoints()
        return {
            "J_lo": a,
            "J_hi": b,
            "J_mid": self.interval.mid,
            "J_width": self.interval.width,
            "J_ambiguous": self.interval.ambiguous,
            "width_below_half_pi": self.width_below_half_pi,
            "contains_zero": self.contains_zero,
            "contains_half_pi": self.contains_half_pi,
            "locally_convex": self.locally_convex,
            "disjoint_from_quarter_shift": self.disjoint_from_quarter_shift,
            "l_count_constant": self.l_count_constant,
            "l_count": self.l_count,
        }


def classify(f, params=None, batch=None):
    """Evaluate the hypothesis booleans used by the rigidity checks."""
    batch = shape_spectra(f, params) if batch is None else batch
    J = smallest_circular_cover(batch.radii.ravel())
    shifted = J.shifted(np.pi / 2)
    return ClassifyReport(
        interval=J,
        width_below_half_pi=J.width < np.pi / 2,
        contains_zero=bool(J.contains(0.0)),
        contains_half_pi=bool(J.contains(np.pi / 2)),
        locally_convex=bool(np.all(batch.kappas > 0)),
        disjoint_from_quarter_shift=not J.intersects(shifted),
        l_count_constant=bool(np.all(batch.l_count == batch.l_count[0])),
        l_count=int(batch.l_count[0]),
    )


# ----------------------------------------------------------------------
# intrinsic spot check (n = 2)


def sectional_curvature(f, params=None):
    """Intrinsic curvature of the induced metric by the Brioschi formula."""
    if f.n != 2:
        raise NumericError("sectional_curvature spot check is for n = 2 only")
    params = f.atlas.samples() if params is None else params
    comps = im.jets_at(f, params, 3)
    cols = jm.component_partials(comps)
    E = jm.dot(cols[0], cols[0])
    F = jm.dot(cols[0], cols[1])
    G = jm.dot(cols[1], cols[1])

    def d1(j, i):
        return j.terms[1][:, i]

    def d2(j, i, k):
        return j.terms[2][:, i, k]

    Ev, Eu = d1(E, 1), d1(E, 0)
    Gv, Gu = d1(G, 1), d1(G, 0)
    Fu, Fv = d1(F, 0), d1(F, 1)
    Evv, Guu, Fuv = d2(E, 1, 1), d2(G, 0, 0), d2(F, 0, 1)
    Ev_, Fv_, Gu_ = Ev, Fv, Gu
    E0, F0, G0 = E.value, F.value, G.value
    B = E0.shape[0]
    M1 = np.empty((B, 3, 3))
    M1[:, 0, 0] = -0.5 * Evv + Fuv - 0.5 * Guu
    M1[:, 0, 1] = 0.5 * Eu
    M1[:, 0, 2] = Fu - 0.5 * Ev_
    M1[:, 1, 0] = Fv_ - 0.5 * Gu_
    M1[:, 1, 1] = E0
    M1[:, 1, 2] = F0
    M1[:, 2, 0] = 0.5 * Gv
    M1[:, 2, 1] = F0
    M1[:, 2, 2] = G0
    M2 = np.empty((B, 3, 3))
    M2[:, 0, 0] = 0.0
    M2[:, 0, 1] = 0.5 * Ev_
    M2[:, 0, 2] = 0.5 * Gu_
    M2[:, 1, 0] = 0.5 * Ev_
    M2[:, 1, 1] = E0
    M2[:, 1, 2] = F0
    M2[:, 2, 0] = 0.5 * Gu_
    M2[:, 2, 1] = F0
    M2[:, 2, 2] = G0
    den = (E0 * G0 - F0 * F0) ** 2
    return (np.linalg.det(M1) - np.linalg.det(M2)) / den


# ----------------------------------------------------------------------
# serialization


def batch_to_csv(batch, path):
    """Write per-sample curvature rows: chart, params, kappas, radii, l_count."""
    n = batch.kappas.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = (
            ["chart"]
            + [f"x{i}" for i in range(batch.params.coords.shape[1])]
            + [f"kappa{i}" for i in range(n)]
            + [f"rho{i}" for i in range(n)]
            + ["l_count"]
        )
        w.writerow(header)
        for i in range(len(batch)):
            row = (
                [int(batch.params.chart[i])]
                + [f"{v:.17g}" for v in batch.params.coords[i]]
                + [f"{v:.17g}" for v in batch.kappas[i]]
                + [f"{v:.17g}" for v in batch.radii[i]]
                + [int(batch.l_count[i])]
            )
            w.writerow(row)
