"""Ambient linear algebra on the round sphere.

Points live on the unit sphere of R^(n+2); the equatorial subsphere is the
slice with vanishing last coordinate.  All transformations are written
against component lists so they accept either plain floats/arrays or
:class:`~spherelab.jets.Jet` objects, which is how the immersion layer
differentiates through them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jets as jm
from .errors import DomainError, PoleError

POLE_TOL = 1e-9  # ambient distance below which projections are refused


# ----------------------------------------------------------------------
# value types


def _as_array(x):
    if isinstance(x, (SpherePoint, AmbientVector)):
        return x.coords
    if isinstance(x, EuclideanPoint):
        return x.coords
    if isinstance(x, TangentVector):
        return x.dir
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class AmbientVector:
    """A vector of R^(n+2)."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if not np.all(np.isfinite(c)):
            raise DomainError("ambient vector has non-finite entries")
        object.__setattr__(self, "coords", c)

    @property
    def dim(self):
        return self.coords.shape[0]


@dataclass(frozen=True)
class SpherePoint:
    """A unit vector of R^(n+2); inputs are renormalized on construction."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        r = np.linalg.norm(c)
        if not np.isfinite(r) or r < 1e-8:
            raise DomainError("cannot normalize a (near-)zero vector onto the sphere")
        object.__setattr__(self, "coords", c / r)

    @property
    def dim(self):
        return self.coords.shape[0]


@dataclass(frozen=True)
class TangentVector:
    """A vector attached to, and orthogonal to, a base sphere point."""

    base: SpherePoint
    dir: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dir, dtype=float)
        object.__setattr__(self, "dir", d)
        r = np.linalg.norm(d)
        if r > 0 and abs(float(d @ self.base.coords)) > 1e-10 * r:
            raise DomainError("tangent vector is not orthogonal to its base point")

    @property
    def length(self):
        return float(np.linalg.norm(self.dir))


@dataclass(frozen=True)
class Rotation:
    """An element of SO(n+2)."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        object.__setattr__(self, "m", m)
        d = m.shape[0]
        if np.max(np.abs(m.T @ m - np.eye(d))) > 1e-10:
            raise DomainError("matrix is not orthogonal within 1e-10")
        if abs(np.linalg.det(m) - 1.0) > 1e-10:
            raise DomainError("matrix does not have determinant +1")

    def apply(self, p):
        return SpherePoint(self.m @ _as_array(p))

    def inverse(self):
        return Rotation(self.m.T)


@dataclass(frozen=True)
class EuclideanPoint:
    """A point of the affine hyperplane R^(n+1) x {-1}, stored without the -1."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if not np.all(np.isfinite(c)):
            raise DomainError("euclidean point has non-finite entries")
        object.__setattr__(self, "coords", c)


def basis_vector(dim, i):
    e = np.zeros(dim)
    e[i] = 1.0
    return e


# ----------------------------------------------------------------------
# jet-polymorphic cores (component lists in, component lists out)


def stereo_core(comps):
    """Stereographic chart from the south pole -e onto the equator plane."""
    inv = 1.0 / (1.0 + comps[-1])
    return [c * inv for c in comps[:-1]]


def stereo_inv_core(xcomps):
    """Inverse of :func:`stereo_core`."""
    r2 = jm.dot(xcomps, xcomps)
    inv = 1.0 / (1.0 + r2)
    out = [x * 2.0 * inv for x in xcomps]
    out.append((1.0 - r2) * inv)
    return out


def squeeze_core(s, comps):
    """Conformal squeeze toward the north pole: stereo-conjugated scaling by s.

    Globally smooth rational form of p -> stereo_inv(s * stereo(p)).
    """
    z = comps[-1]
    num_z = (1.0 + z) - (s * s) * (1.0 - z)
    den = (1.0 + z) + (s * s) * (1.0 - z)
    inv = 1.0 / den
    out = [c * (2.0 * s) * inv for c in comps[:-1]]
    out.append(num_z * inv)
    return out


def squeeze_diff_core(s, comps, vec):
    """Differential of :func:`squeeze_core` at ``comps`` applied to ``vec``."""
    z = comps[-1]
    vz = vec[-1]
    den = (1.0 + z) + (s * s) * (1.0 - z)
    dden = vz * (1.0 - s * s)
    inv = 1.0 / den
    inv2 = inv * inv
    out = [(v * (2.0 * s)) * inv - (c * (2.0 * s)) * dden * inv2 for c, v in zip(comps[:-1], vec[:-1])]
    num_z = (1.0 + z) - (s * s) * (1.0 - z)
    dnum_z = vz * (1.0 + s * s)
    out.append(dnum_z * inv - num_z * dden * inv2)
    return out


def zeta_core(s, comps):
    """Flatten the last coordinate by the factor (1-s), then renormalize."""
    w = list(comps[:-1]) + [comps[-1] * (1.0 - s)]
    return jm.normalize(w)


def tau_core(comps):
    """Normalized projection onto the equatorial subsphere (n+1 components)."""
    return jm.normalize(list(comps[:-1]))


def central_core(comps):
    """Central projection of a southern point onto R^(n+1) x {-1}."""
    inv = 1.0 / (-comps[-1])
    return [c * inv for c in comps[:-1]]


def central_inv_core(xcomps):
    """Inverse central projection back onto the southern hemisphere."""
    r2 = jm.dot(xcomps, xcomps)
    inv = 1.0 / jm.sqrt(1.0 + r2)
    out = [x * inv for x in xcomps]
    out.append(inv * (-1.0))
    return out


def iota_core(r, comps):
    """Include the n-sphere as the parallel at latitude r from -e."""
    out = [c * np.sin(r) for c in comps]
    out.append(-np.cos(r) + 0.0 * comps[0])
    return out


def moebius_core(Q, s, comps):
    """Moebius pull toward Q(e_last) realized as a conjugated squeeze."""
    q = jm.mat_apply(Q.T, comps)
    return jm.mat_apply(Q, squeeze_core(s, q))


def moebius_diff_core(Q, s, comps, vec):
    """Differential of :func:`moebius_core` applied to ``vec``."""
    q = jm.mat_apply(Q.T, comps)
    eta = jm.mat_apply(Q.T, vec)
    return jm.mat_apply(Q, squeeze_diff_core(s, q, eta))


# ----------------------------------------------------------------------
# point-level operations


def exp_sphere(p, v):
    """Geodesic exponential: walk distance |v| from p in direction v."""
    p = SpherePoint(_as_array(p))
    d = _as_array(v)
    if isinstance(v, TangentVector) and v.base.coords @ p.coords < 1 - 1e-9:
        raise DomainError("tangent vector is based at a different point")
    r = np.linalg.norm(d)
    if r == 0.0:
        return p
    return SpherePoint(np.cos(r) * p.coords + np.sin(r) * (d / r))


def iota_r(r, p):
    """Map a point of the equatorial n-sphere to the parallel at latitude r.

    Accepts the point either as an n+1 vector or as an n+2 vector with
    vanishing last coordinate.
    """
    if not 0.0 < r < np.pi:
        raise DomainError(f"latitude r={r} outside (0, pi)")
    q = _as_array(p)
    if abs(np.linalg.norm(q) - 1.0) > 1e-9:
        raise DomainError("iota_r expects a unit vector")
    if q.shape[0] >= 3 and abs(q[-1]) < 1e-12:
        q = q[:-1]
    return SpherePoint(np.append(np.sin(r) * q, -np.cos(r)))


def _chart_rotation(c):
    """Rotation taking the pole c to the north pole e (its transpose's action)."""
    c = SpherePoint(_as_array(c)).coords
    return rotation_to(-c).m  # maps e -> c, so transpose maps c -> e


def stereographic(c, p):
    """Stereographic projection with pole c (projection center -c)."""
    c = SpherePoint(_as_array(c)).coords
    q = SpherePoint(_as_array(p)).coords
    if np.linalg.norm(q + c) < POLE_TOL:
        raise PoleError("point is within 1e-9 of the projection center -c")
    Q = _chart_rotation(c)
    comps = list(Q.T @ q)
    return EuclideanPoint(np.array(stereo_core(comps)))


def stereographic_inv(c, x):
    """Inverse stereographic projection with pole c."""
    c = SpherePoint(_as_array(c)).coords
    xs = _as_array(x)
    Q = _chart_rotation(c)
    comps = stereo_inv_core(list(xs))
    return SpherePoint(Q @ np.array(comps))


def moebius(c, s, p):
    """Conformal pull of the sphere toward c with strength 1/s."""
    if not 0.0 < s <= 1.0:
        raise DomainError(f"moebius strength s={s} outside (0, 1]")
    c = SpherePoint(_as_array(c)).coords
    q = SpherePoint(_as_array(p)).coords
    if np.linalg.norm(q + c) < POLE_TOL:
        raise PoleError("point is within 1e-9 of the pole -c")
    Q = rotation_to(-c).m
    return SpherePoint(np.array(moebius_core(Q, s, list(q))))


def zeta(s, q):
    """Interpolate between the identity (s=0) and equatorial projection (s=1)."""
    v = SpherePoint(_as_array(q)).coords
    pole = basis_vector(v.shape[0], v.shape[0] - 1)
    if min(np.linalg.norm(v - pole), np.linalg.norm(v + pole)) < POLE_TOL:
        raise PoleError("point is within 1e-9 of a pole +-e")
    return SpherePoint(np.array(zeta_core(s, list(v))))


def tau(q):
    """Normalized equatorial projection (zeta at s=1)."""
    return zeta(1.0, q)


def dzeta(s, q, u):
    """Closed-form differential of :func:`zeta` at q applied to u."""
    v = SpherePoint(_as_array(q)).coords
    d = v.shape[0]
    pole = basis_vector(d, d - 1)
    if min(np.linalg.norm(v - pole), np.linalg.norm(v + pole)) < POLE_TOL:
        raise PoleError("point is within 1e-9 of a pole +-e")
    uu = _as_array(u)
    w = v - s * v[-1] * pole
    nw = np.linalg.norm(w)
    first = (uu - s * uu[-1] * pole) / nw
    second = ((2 * s - s * s) * v[-1] * uu[-1] / nw**3) * w
    return AmbientVector(first + second)


def central_projection(q):
    """Central projection of a strictly southern point onto R^(n+1) x {-1}."""
    v = SpherePoint(_as_array(q)).coords
    if v[-1] > -POLE_TOL:
        raise DomainError("central projection needs a strictly southern point")
    return EuclideanPoint(np.array(central_core(list(v))))


def central_projection_inv(x):
    """Lift a point of R^(n+1) x {-1} back to the southern hemisphere."""
    xs = _as_array(x)
    return SpherePoint(np.array(central_inv_core(list(xs))))


def j_r(r, p):
    """Radial dilation p -> tan(r) p of the unit n-sphere inside E^(n+1)."""
    if not 0.0 < r < np.pi / 2:
        raise DomainError(f"radial dilation angle r={r} outside (0, pi/2)")
    return EuclideanPoint(np.tan(r) * _as_array(p))


def rotation_to(c):
    """A deterministic Q in SO(n+2) with Q(-e) = c.

    Realized as the geodesic rotation in the plane spanned by -e and c; it is
    the identity at c = -e, continuous away from c = +e, and falls back to a
    half-turn in the (e_1, e) plane at c = +e.
    """
    c = SpherePoint(_as_array(c)).coords
    d = c.shape[0]
    a = -basis_vector(d, d - 1)
    ca = float(c @ a)
    w = c - ca * a
    nw = np.linalg.norm(w)
    if nw < 1e-9:
        if ca > 0:
            return Rotation(np.eye(d))
        m = np.eye(d)
        m[0, 0] = -1.0
        m[d - 1, d - 1] = -1.0
        return Rotation(m)
    b = w / nw
    cos_t, sin_t = ca, nw
    m = (
        np.eye(d)
        + (cos_t - 1.0) * (np.outer(a, a) + np.outer(b, b))
        + sin_t * (np.outer(b, a) - np.outer(a, b))
    )
    return Rotation(m)
