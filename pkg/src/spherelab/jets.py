"""Forward-mode Taylor jets over numpy batches.

A :class:`Jet` carries the value and the first ``order`` derivative tensors
of one scalar quantity with respect to ``n`` chart variables, for a whole
batch of sample points at once.  Arithmetic is exact truncated-Taylor
algebra, so Jacobians and Hessians of closed-form maps come out at machine
precision.  Higher orders stay available for maps that consume derivatives
of other maps (unit normals, normal translates, conformal images), where
each layer of composition eats one derivative order.

The helpers :func:`sin`, :func:`cos`, :func:`sqrt` dispatch between jets
and plain ndarrays, so the same closure can be evaluated for values only or
for values-with-derivatives.
"""

from __future__ import annotations

from itertools import permutations
from math import comb

import numpy as np

_PERM_CACHE: dict[int, list[tuple[int, ...]]] = {}


def _perms(k):
    if k not in _PERM_CACHE:
        _PERM_CACHE[k] = list(permutations(range(k)))
    return _PERM_CACHE[k]


def _sym(T, k):
    """Symmetrize the k trailing tensor axes of T (axis 0 is the batch)."""
    if k < 2:
        return T
    acc = None
    for p in _perms(k):
        axes = (0,) + tuple(1 + i for i in p)
        t = T.transpose(axes)
        acc = t.copy() if acc is None else acc + t
    return acc / len(_perms(k))


def _pad(c, k):
    """Reshape a (B,) coefficient so it broadcasts against a k-tensor term."""
    c = np.asarray(c, dtype=float)
    if c.ndim == 0 or k == 0:
        return c
    return c.reshape(c.shape + (1,) * k)


class Jet:
    """Truncated multivariate Taylor expansion of one scalar over a batch.

    ``terms[k]`` has shape ``(B,) + (n,) * k`` and holds the k-th derivative
    tensor divided by nothing (plain derivatives, not Taylor coefficients).
    """

    __slots__ = ("n", "terms")

    def __init__(self, n, terms):
        self.n = n
        self.terms = list(terms)

    # ------------------------------------------------------------------
    @staticmethod
    def seed(X, order):
        """Identity-seeded jets of the chart variables.  X: (B, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B, n = X.shape
        out = []
        for i in range(n):
            terms = [X[:, i].copy()]
            for k in range(1, order + 1):
                t = np.zeros((B,) + (n,) * k)
                if k == 1:
                    t[:, i] = 1.0
                terms.append(t)
            out.append(Jet(n, terms))
        return out

    @staticmethod
    def constant(value, like):
        """A constant jet shaped like ``like``."""
        B = like.terms[0].shape[0]
        terms = [np.broadcast_to(np.asarray(value, dtype=float), (B,)).copy()]
        for k in range(1, like.order + 1):
            terms.append(np.zeros((B,) + (like.n,) * k))
        return Jet(like.n, terms)

    # ------------------------------------------------------------------
    @property
    def order(self):
        return len(self.terms) - 1

    @property
    def value(self):
        return self.terms[0]

    def truncated(self, order):
        return Jet(self.n, self.terms[: order + 1])

    # ------------------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            K = min(self.order, other.order)
            return Jet(self.n, [self.terms[k] + other.terms[k] for k in range(K + 1)])
        terms = list(self.terms)
        terms[0] = terms[0] + np.asarray(other, dtype=float)
        return Jet(self.n, terms)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.n, [-t for t in self.terms])

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=float)
            return Jet(self.n, [t * _pad(c, k) for k, t in enumerate(self.terms)])
        K = min(self.order, other.order)
        a, b = self.terms, other.terms
        B = a[0].shape[0]
        n = self.n
        out = [a[0] * b[0]]
        for k in range(1, K + 1):
            acc = np.zeros((B,) + (n,) * k)
            for j in range(k + 1):
                # outer product of the j- and (k-j)-tensors, then symmetrize once
                lo = a[j].reshape(B, -1, 1)
                hi = b[k - j].reshape(B, 1, -1)
                acc += comb(k, j) * (lo * hi).reshape((B,) + (n,) * k)
            out.append(_sym(acc, k))
        return Jet(n, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if not isinstance(p, int) or p < 0:
            raise ValueError("jets support integer powers >= 0 only")
        out = Jet.constant(1.0, self)
        base = self
        while p:
            if p & 1:
                out = out * base
            base = base * base if p > 1 else base
            p >>= 1
        return out

    # ------------------------------------------------------------------
    def _compose(self, coeffs):
        """Evaluate sum_k coeffs[k] * (self - value)^k in the jet algebra.

        coeffs[k] = g^(k)(value) / k! for the scalar function g being applied.
        """
        K = self.order
        delta = Jet(self.n, [np.zeros_like(self.terms[0])] + self.terms[1:])
        out = Jet.constant(0.0, self) + coeffs[K]
        for k in range(K - 1, -1, -1):
            out = out * delta + coeffs[k]
        return out

    def reciprocal(self):
        x = self.terms[0]
        coeffs = [((-1.0) ** k) * x ** (-(k + 1)) for k in range(self.order + 1)]
        return self._compose(coeffs)

    def sqrt(self):
        x = self.terms[0]
        coeffs = [np.sqrt(x)]
        for k in range(1, self.order + 1):
            coeffs.append(coeffs[-1] * (0.5 - (k - 1)) / (k * x))
        return self._compose(coeffs)

    def sin(self):
        x = self.terms[0]
        table = [np.sin(x), np.cos(x), -np.sin(x), -np.cos(x)]
        fact = 1.0
        coeffs = []
        for k in range(self.order + 1):
            fact = fact * k if k else 1.0
            coeffs.append(table[k % 4] / fact)
        return self._compose(coeffs)

    def cos(self):
        x = self.terms[0]
        table = [np.cos(x), -np.sin(x), -np.cos(x), np.sin(x)]
        fact = 1.0
        coeffs = []
        for k in range(self.order + 1):
            fact = fact * k if k else 1.0
            coeffs.append(table[k % 4] / fact)
        return self._compose(coeffs)


# ----------------------------------------------------------------------
# polymorphic scalar functions


def sin(x):
    return x.sin() if isinstance(x, Jet) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Jet) else np.cos(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Jet) else np.sqrt(x)


def value_of(x):
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)


# ----------------------------------------------------------------------
# small vector algebra on component lists (entries: Jet, ndarray or float)


def dot(a, b):
    acc = a[0] * b[0]
    for x, y in zip(a[1:], b[1:]):
        acc = acc + x * y
    return acc


def norm(comps):
    return sqrt(dot(comps, comps))


def normalize(comps):
    r = norm(comps)
    return [c / r for c in comps]


def scale(comps, s):
    return [c * s for c in comps]


def add(a, b):
    return [x + y for x, y in zip(a, b)]


def sub(a, b):
    return [x - y for x, y in zip(a, b)]


def mat_apply(M, comps):
    """Apply a constant matrix to a component list."""
    M = np.asarray(M, dtype=float)
    out = []
    for i in range(M.shape[0]):
        acc = None
        for j, c in enumerate(comps):
            if M[i, j] == 0.0:
                continue
            term = c * M[i, j]
            acc = term if acc is None else acc + term
        out.append(acc if acc is not None else 0.0)
    return out


def det_small(rows):
    """Determinant by cofactor expansion; entries may be jets or arrays."""
    d = len(rows)
    if d == 1:
        return rows[0][0]
    if d == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    acc = None
    for j in range(d):
        minor = [r[:j] + r[j + 1 :] for r in rows[1:]]
        term = rows[0][j] * det_small(minor)
        if j % 2:
            term = -term
        acc = term if acc is None else acc + term
    return acc


def gencross(vectors):
    """Generalized cross product of d-1 component lists in dimension d.

    Returns c with <c, w> = det[v_1, ..., v_{d-1}, w] for every w.
    """
    d = len(vectors[0])
    comps = []
    for i in range(d):
        rows = [[v[r] for v in vectors] for r in range(d) if r != i]
        s = 1.0 if (i + 1 + d) % 2 == 0 else -1.0
        comps.append(det_small(rows) * s)
    return comps


# ----------------------------------------------------------------------
# extraction helpers


def _coerce(comps, like):
    return [c if isinstance(c, Jet) else Jet.constant(c, like) for c in comps]


def _template(comps):
    for c in comps:
        if isinstance(c, Jet):
            return c
    raise ValueError("component list contains no jets")


def values(comps):
    """Stack component values into a (B, d) array."""
    like = _template(comps)
    comps = _coerce(comps, like)
    return np.stack([c.terms[0] for c in comps], axis=-1)


def jacobian(comps):
    """Stack first derivatives into a (B, d, n) array."""
    like = _template(comps)
    comps = _coerce(comps, like)
    return np.stack([c.terms[1] for c in comps], axis=1)


def hessian(comps):
    """Stack second derivatives into a (B, d, n, n) array."""
    like = _template(comps)
    comps = _coerce(comps, like)
    return np.stack([c.terms[2] for c in comps], axis=1)


def partial(jet, i):
    """The jet of the i-th partial derivative, one order lower."""
    return Jet(jet.n, [t[..., i] for t in jet.terms[1:]])


def component_partials(comps, like=None):
    """Turn a component list of order K+1 into its list of partial lists.

    Returns ``cols`` with ``cols[i]`` the component list of the i-th
    partial-derivative vector (order K jets).
    """
    like = like or _template(comps)
    comps = _coerce(comps, like)
    n = like.n
    return [[partial(c, i) for c in comps] for i in range(n)]
