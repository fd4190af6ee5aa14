"""Polyhedral penalty norms on half-vectorized matrices.

A norm is described by :class:`AtomicNormSpec`. Four variants are
supported: the l1 norm, the l-infinity norm, the sorted-l1 (SLOPE) norm
with nonincreasing weights, and a generic polyhedral gauge given by the
vertices of its dual unit ball.
"""
import itertools
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "AtomicNormSpec",
    "Pattern",
    "UnsupportedOperation",
    "norm_eval",
    "dual_eval",
    "restricted_dual_eval",
    "prox",
    "project_dual_ball",
    "prox_residual",
    "pattern_of",
    "dual_ball_vertices",
    "slope_groups",
]

VARIANTS = ("l1", "linf", "slope", "polytope")

# vertex enumeration limits for the combinatorial families
_M_MAX = {"l1": 12, "linf": 10_000, "slope": 6}


class UnsupportedOperation(ValueError):
    """Raised when an operation is not available for a norm variant."""


def _lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=(0, None)):
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    return res


class AtomicNormSpec:
    """Description of a polyhedral norm on R^m.

    Use the constructors :meth:`l1`, :meth:`linf`, :meth:`slope` and
    :meth:`polytope` rather than calling the class directly.

    Attributes
    ----------
    variant : str
        One of ``"l1"``, ``"linf"``, ``"slope"``, ``"polytope"``.
    m : int
        Dimension of the space the norm acts on.
    weights : ndarray or None
        SLOPE weights (nonincreasing, nonnegative, first entry positive).
    vertices : ndarray or None
        Vertices of the dual unit ball, one per row (polytope only).
    """

    __slots__ = ("variant", "m", "weights", "vertices")

    def __init__(self, variant, m, weights=None, vertices=None):
        if variant not in VARIANTS:
            raise ValueError("unknown variant %r" % (variant,))
        m = int(m)
        if m < 1:
            raise ValueError("dimension must be positive")
        if weights is not None:
            weights = np.array(weights, dtype=float)
            weights.setflags(write=False)
        if vertices is not None:
            vertices = np.array(vertices, dtype=float)
            vertices.setflags(write=False)
        object.__setattr__(self, "variant", variant)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "vertices", vertices)

    def __setattr__(self, name, value):
        raise AttributeError("AtomicNormSpec is immutable")

    def __repr__(self):
        if self.variant == "slope":
            return "AtomicNormSpec.slope(%s)" % np.array2string(
                self.weights, precision=4, threshold=8)
        if self.variant == "polytope":
            return "AtomicNormSpec.polytope(<%d vertices in R^%d>)" % (
                len(self.vertices), self.m)
        return "AtomicNormSpec.%s(%d)" % (self.variant, self.m)

    def __eq__(self, other):
        if not isinstance(other, AtomicNormSpec):
            return NotImplemented
        if (self.variant, self.m) != (other.variant, other.m):
            return False
        for a, b in ((self.weights, other.weights),
                     (self.vertices, other.vertices)):
            if (a is None) != (b is None):
                return False
            if a is not None and (a.shape != b.shape
                                  or not np.array_equal(a, b)):
                return False
        return True

    def __hash__(self):
        extra = None
        if self.weights is not None:
            extra = self.weights.tobytes()
        elif self.vertices is not None:
            extra = self.vertices.tobytes()
        return hash((self.variant, self.m, extra))

    @classmethod
    def l1(cls, m):
        return cls("l1", m)

    @classmethod
    def linf(cls, m):
        return cls("linf", m)

    @classmethod
    def slope(cls, weights):
        w = np.asarray(weights, dtype=float).ravel()
        if w.size == 0:
            raise ValueError("SLOPE needs at least one weight")
        if not np.all(np.isfinite(w)):
            raise ValueError("SLOPE weights must be finite")
        if w[0] <= 0:
            raise ValueError("first SLOPE weight must be positive")
        if np.any(w < 0):
            raise ValueError("SLOPE weights must be nonnegative")
        if np.any(np.diff(w) > 0):
            raise ValueError("SLOPE weights must be nonincreasing")
        return cls("slope", w.size, weights=w)

    @classmethod
    def polytope(cls, vertices, check=True):
        """Gauge whose dual unit ball is ``conv(vertices)``.

        With ``check=True`` two LPs per vertex certify that the origin is
        an interior point and that no vertex is redundant.
        """
        V = np.atleast_2d(np.asarray(vertices, dtype=float))
        if V.ndim != 2 or V.shape[0] < 2:
            raise ValueError("need at least two vertices")
        if not np.all(np.isfinite(V)):
            raise ValueError("vertices must be finite")
        if check:
            _check_polytope(V)
        return cls("polytope", V.shape[1], vertices=V)

    # -- serialization -------------------------------------------------
    def to_dict(self):
        d = {"variant": self.variant}
        if self.variant == "slope":
            d["weights"] = self.weights.tolist()
        elif self.variant == "polytope":
            d["vertices"] = self.vertices.tolist()
        else:
            d["m"] = self.m
        return d

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d, m=None):
        variant = d.get("variant")
        if variant == "slope":
            return cls.slope(d["weights"])
        if variant == "polytope":
            return cls.polytope(d["vertices"])
        if variant in ("l1", "linf"):
            dim = d.get("m", m)
            if dim is None:
                raise ValueError("dimension missing for variant %r" % variant)
            return cls(variant, dim)
        raise ValueError("unknown variant %r" % (variant,))

    @classmethod
    def from_json(cls, text, m=None):
        return cls.from_dict(json.loads(text), m=m)


def _check_polytope(V):
    K, m = V.shape
    if np.linalg.matrix_rank(V) < m:
        raise ValueError("dual ball is not full dimensional")
    s = _relative_interior_margin(V, np.zeros(m))
    if s is None or s <= 1e-12:
        raise ValueError("origin is not an interior point of conv(vertices)")
    for i in range(K):
        others = np.delete(V, i, axis=0)
        # feasibility of v_i as a convex combination of the others
        res = _lp(np.zeros(K - 1), A_eq=np.vstack([others.T, np.ones(K - 1)]),
                  b_eq=np.append(V[i], 1.0))
        if res.status == 0:
            raise ValueError("vertex %d is redundant" % i)


def _relative_interior_margin(V, y):
    """Largest ``s`` with ``y = sum l_i v_i``, ``sum l_i = 1``, ``l_i >= s``.

    Returns None when ``y`` is not in ``conv(V)``.
    """
    K, m = V.shape
    c = np.zeros(K + 1)
    c[-1] = -1.0
    A_eq = np.zeros((m + 1, K + 1))
    A_eq[:m, :K] = V.T
    A_eq[m, :K] = 1.0
    b_eq = np.append(y, 1.0)
    A_ub = np.hstack([-np.eye(K), np.ones((K, 1))])
    b_ub = np.zeros(K)
    bounds = [(0, None)] * K + [(None, 1.0)]
    res = _lp(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds)
    if res.status != 0:
        return None
    return float(res.x[-1])


def _check_dim(spec, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != spec.m:
        raise ValueError("expected a vector of length %d, got shape %s"
                         % (spec.m, x.shape))
    return x


# -- patterns -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Pattern:
    """Canonical identifier of the subdifferential face at a point.

    Attributes
    ----------
    variant : str
    code : tuple
        l1: signs in {-1, 0, 1}. linf: signs on the max-set, zero
        elsewhere. slope: signed ranks ``sign(x_i) * rank(|x|)_i`` with
        ties sharing a rank and zero for zero entries. polytope: sorted
        active vertex indices.
    key : tuple
        Equality key. Two points have equal keys exactly when their
        subdifferentials coincide. For SLOPE with tied weights this is
        coarser than ``code``.
    """

    variant: str
    code: tuple
    key: tuple

    def __eq__(self, other):
        if not isinstance(other, Pattern):
            return NotImplemented
        return self.variant == other.variant and self.key == other.key

    def __hash__(self):
        return hash((self.variant, self.key))

    def as_array(self):
        return np.array(self.code, dtype=int)

    def to_list(self):
        return list(self.code)

    @classmethod
    def from_code(cls, spec, code):
        """Rebuild a pattern of ``spec`` from its ``code``.

        For the closed families the code is read as a point and
        canonicalized, so ``(0, 2)`` gives the l1 pattern ``(0, 1)``.
        """
        if spec.variant == "polytope":
            code = tuple(sorted(int(c) for c in code))
            return cls("polytope", code, code)
        return pattern_of(spec, np.array([int(c) for c in code], dtype=float))


def _const(block, scale):
    return block.size == 0 or np.ptp(block) <= 1e-12 * max(scale, 1.0)


def slope_groups(M, w):
    """Split a SLOPE pattern into clusters with their weight blocks.

    Parameters
    ----------
    M : array_like of int
        Signed rank vector.
    w : ndarray
        SLOPE weights.

    Returns
    -------
    list of dict
        One entry per cluster, largest magnitude first, then the zero
        cluster (if non-empty). Keys: ``idx`` (coordinates), ``signs``,
        ``start``/``stop`` (positions in the sorted order), ``block``
        (weights ``w[start:stop]``), ``zero`` (bool) and ``constant``
        (block weights all equal).
    """
    M = np.asarray(M, dtype=int)
    w = np.asarray(w, dtype=float)
    absM = np.abs(M)
    groups = []
    pos = 0
    for r in sorted(set(absM[absM > 0].tolist()), reverse=True):
        idx = np.flatnonzero(absM == r)
        block = w[pos:pos + idx.size]
        groups.append(dict(idx=idx, signs=np.sign(M[idx]), start=pos,
                           stop=pos + idx.size, block=block, zero=False,
                           constant=_const(block, w[0])))
        pos += idx.size
    idx = np.flatnonzero(absM == 0)
    if idx.size:
        block = w[pos:]
        groups.append(dict(idx=idx, signs=np.zeros(idx.size, dtype=int),
                           start=pos, stop=w.size, block=block, zero=True,
                           constant=_const(block, w[0])))
    return groups


def _slope_key(M, w):
    key = [None] * len(M)
    for g in slope_groups(M, w):
        for j, s in zip(g["idx"], g["signs"]):
            if g["constant"]:
                c = float(g["block"][0])
                if g["zero"]:
                    key[j] = ("pt", 0.0) if c == 0 else ("box", c)
                else:
                    key[j] = ("pt", c * float(s) + 0.0)
            else:
                key[j] = ("blk", g["start"], g["stop"], int(s))
    return tuple(key)


def _rank_sign(x, tol):
    a = np.abs(x)
    M = np.zeros(x.size, dtype=int)
    nz = np.flatnonzero(a > tol)
    if nz.size == 0:
        return M
    order = nz[np.argsort(a[nz], kind="stable")]
    rank = 1
    M[order[0]] = 1
    for prev, cur in zip(order[:-1], order[1:]):
        if a[cur] - a[prev] > tol:
            rank += 1
        M[cur] = rank
    return M * np.sign(x).astype(int)


def pattern_of(spec, x, tol=0.0):
    """Pattern of ``x`` with respect to ``spec``.

    Parameters
    ----------
    spec : AtomicNormSpec
    x : array_like, shape (m,)
    tol : float
        Absolute tolerance. Entries with magnitude at most ``tol`` count
        as zero and magnitudes within ``tol`` of each other are tied.

    Returns
    -------
    Pattern
    """
    x = _check_dim(spec, x)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    v = spec.variant
    if v == "l1":
        code = tuple(int(s) for s in np.where(np.abs(x) > tol, np.sign(x), 0))
        return Pattern("l1", code, code)
    if v == "linf":
        a = np.abs(x)
        top = a.max()
        if top <= tol:
            code = (0,) * spec.m
        else:
            J = a >= top - tol
            code = tuple(int(s) for s in np.where(J, np.sign(x), 0))
        return Pattern("linf", code, code)
    if v == "slope":
        M = _rank_sign(x, tol)
        return Pattern("slope", tuple(int(c) for c in M),
                       _slope_key(M, spec.weights))
    vals = spec.vertices @ x
    act = tuple(int(i) for i in np.flatnonzero(vals >= vals.max() - tol))
    return Pattern("polytope", act, act)


# -- evaluation ---------------------------------------------------------

def norm_eval(spec, x):
    """Evaluate the norm at ``x``."""
    x = _check_dim(spec, x)
    v = spec.variant
    if v == "l1":
        return float(np.abs(x).sum())
    if v == "linf":
        return float(np.abs(x).max())
    if v == "slope":
        return float(np.sort(np.abs(x))[::-1] @ spec.weights)
    return float((spec.vertices @ x).max())


def dual_eval(spec, y):
    """Evaluate the dual norm (gauge of the dual ball) at ``y``.

    For the polytope variant the gauge is found by LP; a ``ValueError``
    is raised when ``y`` lies outside every scaling of the dual ball,
    which can only happen for gauges that are not norms.
    """
    y = _check_dim(spec, y)
    v = spec.variant
    if v == "l1":
        return float(np.abs(y).max())
    if v == "linf":
        return float(np.abs(y).sum())
    if v == "slope":
        a = np.cumsum(np.sort(np.abs(y))[::-1])
        return float(np.max(a / np.cumsum(spec.weights)))
    return _gauge_lp(spec.vertices, y)


def _gauge_lp(V, y):
    """min sum(mu) subject to V^T mu = y, mu >= 0."""
    if not np.any(y):
        return 0.0
    K = V.shape[0]
    res = _lp(np.ones(K), A_eq=V.T, b_eq=y)
    if res.status != 0:
        raise ValueError("point is outside the cone generated by the "
                         "dual ball")
    return float(res.fun)


def restricted_dual_eval(spec, y, geom, tol=1e-9):
    """Gauge of ``y`` with respect to the projected dual ball ``P_I B*``.

    Parameters
    ----------
    spec : AtomicNormSpec
    y : array_like
        A vector in the pattern subspace of ``geom``.
    geom : PatternGeometry
        Supplies the projector and the subspace basis.

    Notes
    -----
    For l1, l-infinity and SLOPE the dual norm is invariant under signed
    permutations and convex, so averaging over a cluster or zeroing
    coordinates cannot increase it. The minimum over the orthogonal
    complement is therefore attained at ``y`` itself and the restricted
    value equals the dual norm. Polytopes are handled by an LP in the
    coordinates of the subspace basis.
    """
    y = _check_dim(spec, y)
    B = geom.basis
    resid = y - B @ (B.T @ y)
    scale = max(np.abs(y).max(), 1.0)
    if np.abs(resid).max() > tol * scale:
        raise ValueError("vector is not in the pattern subspace")
    if B.shape[1] == 0:
        return 0.0
    if spec.variant != "polytope":
        return dual_eval(spec, y)
    return _gauge_lp(spec.vertices @ B, B.T @ y)


# -- proximal operators -------------------------------------------------

def _pav_nonincreasing(y):
    """Nonincreasing least-squares fit by pool-adjacent-violators."""
    sums = []
    counts = []
    for v in y.tolist():
        s, c = v, 1
        # pool while the previous block mean is below the new one
        while sums and sums[-1] * c < s * counts[-1]:
            s += sums.pop()
            c += counts.pop()
        sums.append(s)
        counts.append(c)
    return np.repeat(np.array(sums) / np.array(counts), counts)


def _project_l1_ball(v, radius):
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    cs = np.cumsum(u) - radius
    j = np.arange(1, u.size + 1)
    rho = np.flatnonzero(u - cs / j > 0)[-1]
    theta = cs[rho] / (rho + 1)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def prox(spec, v, t):
    """Proximal operator ``argmin_z 0.5 ||z - v||^2 + t * norm(z)``.

    Raises
    ------
    UnsupportedOperation
        For the polytope variant.
    """
    v = _check_dim(spec, v)
    if not t > 0:
        raise ValueError("t must be positive")
    kind = spec.variant
    if kind == "l1":
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    if kind == "linf":
        return v - _project_l1_ball(v, t)
    if kind == "slope":
        a = np.abs(v)
        order = np.argsort(a, kind="stable")[::-1]
        fit = np.maximum(_pav_nonincreasing(a[order] - t * spec.weights), 0.0)
        z = np.empty_like(v)
        z[order] = fit
        return np.sign(v) * z
    raise UnsupportedOperation("prox is not available for polytope gauges")


def project_dual_ball(spec, y, t=1.0):
    """Euclidean projection onto ``t * B*`` via the Moreau identity."""
    y = _check_dim(spec, y)
    if spec.variant == "l1":
        return np.clip(y, -t, t)
    if spec.variant == "linf":
        return _project_l1_ball(y, t)
    return y - prox(spec, y, t)


def prox_residual(spec, v, t, z):
    """Violation of ``(v - z) / t`` being a subgradient of the norm at ``z``.

    Returns the larger of ``dual(g) - 1`` and ``norm(z) - <g, z>``
    (clipped at zero), with the second term divided by ``max(1, |z|_2)``.
    """
    g = (np.asarray(v, dtype=float) - z) / t
    r1 = dual_eval(spec, g) - 1.0
    r2 = (norm_eval(spec, z) - g @ z) / max(1.0, float(np.linalg.norm(z)))
    return max(r1, r2, 0.0)


# -- dual ball ----------------------------------------------------------

def dual_ball_vertices(spec, m_max=None):
    """Vertex list of the dual unit ball.

    Parameters
    ----------
    spec : AtomicNormSpec
    m_max : int, optional
        Refuse to enumerate the combinatorial families above this
        dimension. Defaults to 12 for l1 and 6 for SLOPE (the SLOPE
        dual ball has up to ``m! 2^m`` vertices).

    Returns
    -------
    ndarray, shape (K, m)
    """
    kind = spec.variant
    m = spec.m
    if kind == "polytope":
        return np.array(spec.vertices)
    limit = _M_MAX[kind] if m_max is None else m_max
    if m > limit:
        raise ValueError("dimension %d exceeds the enumeration limit %d for %s"
                         % (m, limit, kind))
    if kind == "linf":
        E = np.eye(m)
        return np.vstack([E, -E])
    if kind == "l1":
        return np.array(list(itertools.product((1.0, -1.0), repeat=m)))
    w = spec.weights
    out = set()
    for perm in itertools.permutations(range(m)):
        base = w[list(perm)]
        nz = np.flatnonzero(base)
        for signs in itertools.product((1.0, -1.0), repeat=nz.size):
            u = base.copy()
            u[nz] *= signs
            out.add(tuple(u.tolist()))
    return np.array(sorted(out))
