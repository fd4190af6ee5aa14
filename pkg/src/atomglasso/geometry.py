"""Geometry of a single pattern.

For a pattern ``I`` of an atomic norm this module builds the pattern
subspace ``S_I`` (basis and orthogonal projector), the face projection
``f_I``, the threshold ``tau`` (closed forms and an LP/facet oracle), the
constant ``c``, the pattern-stability lower bound and the constant
``eta``. It also provides the SLOPE weight tuning rules.
"""
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .atomic_norm import (Pattern, _relative_interior_margin,
                          dual_ball_vertices, dual_eval, slope_groups)
from .symmat import opnorm_inf, vecp

__all__ = [
    "PatternGeometry",
    "ThresholdReport",
    "TauUndefinedError",
    "build_geometry",
    "geometry_from_vertices",
    "face_in_relative_interior",
    "dual_ball_facets",
    "tau_closed_form",
    "tau_oracle",
    "tau_value",
    "pattern_margin",
    "zeta_lower_bound",
    "c_diamond",
    "eta",
    "tune_slope_weights",
    "slope_weights_for_edges",
]

AMBIENTS = ("linf", "mahalanobis")
# hull-based facet enumeration of the closed families
FACET_M_MAX = 6


class TauUndefinedError(ValueError):
    """The face projection lies outside the dual ball (skewed gauge).

    Attributes
    ----------
    dual_value : float
        The dual norm of the face projection, which exceeds one.
    """

    def __init__(self, dual_value):
        self.dual_value = float(dual_value)
        super().__init__("threshold undefined: dual norm of the face "
                         "projection is %.6g > 1" % self.dual_value)


@dataclass
class PatternGeometry:
    """Subspace, projector and face projection of one pattern.

    Attributes
    ----------
    pattern : Pattern
    basis : ndarray, shape (m, s)
        Orthonormal basis of the pattern subspace ``S_I``.
    face_projection : ndarray, shape (m,)
        The common projection ``P_I v_i`` of the active vertices.
    ambient : str
        Norm used on R^{p^2}: ``"linf"`` or ``"mahalanobis"``.
    tau : float or None
        Filled in by :func:`tau_value` when requested.
    """

    pattern: Pattern
    basis: np.ndarray
    face_projection: np.ndarray
    ambient: str = "linf"
    tau: float = None
    tau_method: str = None
    _projector: np.ndarray = field(default=None, repr=False)

    @property
    def m(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def projector(self):
        """Orthogonal projector ``P_I`` onto the pattern subspace."""
        if self._projector is None:
            self._projector = self.basis @ self.basis.T
        return self._projector

    @property
    def tau_defined(self):
        return self.tau is not None

    def project(self, y):
        return self.basis @ (self.basis.T @ y)


@dataclass
class ThresholdReport:
    tau: float
    tau_method: str
    zeta_lower_bound: float
    c_diamond: float
    eta: float
    eta_method: str

    def to_dict(self):
        return dict(self.__dict__)


def _unit(m, j):
    e = np.zeros(m)
    e[j] = 1.0
    return e


def build_geometry(spec, pattern, p=None, ambient="linf"):
    """Build the :class:`PatternGeometry` of ``pattern``.

    Parameters
    ----------
    spec : AtomicNormSpec
    pattern : Pattern or array_like
        A pattern from :func:`pattern_of`, or a raw pattern code.
    p : int, optional
        Matrix dimension; only used to check ``m == p(p-1)/2``.
    ambient : {"linf", "mahalanobis"}

    Raises
    ------
    ValueError
        For the pattern of the origin, whose face is the whole dual ball.
    """
    if ambient not in AMBIENTS:
        raise ValueError("unknown ambient norm %r" % (ambient,))
    if not isinstance(pattern, Pattern):
        pattern = Pattern.from_code(spec, pattern)
    m = spec.m
    if p is not None and p * (p - 1) // 2 != m:
        raise ValueError("pattern length %d does not match p=%d" % (m, p))
    kind = spec.variant
    code = np.array(pattern.code, dtype=int)
    if kind == "polytope":
        geom = geometry_from_vertices(spec.vertices, pattern.code)
        geom.pattern = pattern
        geom.ambient = ambient
        return geom
    if not np.any(code):
        raise ValueError("the origin has no proper face; pattern is empty")
    cols = []
    f = np.zeros(m)
    if kind == "l1":
        for j in np.flatnonzero(code):
            cols.append(_unit(m, j))
        f = code.astype(float)
    elif kind == "linf":
        J = np.flatnonzero(code)
        s = np.zeros(m)
        s[J] = code[J]
        cols.append(s / np.sqrt(J.size))
        for j in np.flatnonzero(code == 0):
            cols.append(_unit(m, j))
        f = s / J.size
    else:
        for g in slope_groups(code, spec.weights):
            idx, sg = g["idx"], g["signs"]
            if g["zero"]:
                # coordinates under zero weights are free
                if g["constant"] and g["block"].size and g["block"][0] == 0:
                    cols.extend(_unit(m, j) for j in idx)
                continue
            if g["constant"]:
                cols.extend(_unit(m, j) for j in idx)
                f[idx] = g["block"][0] * sg
            else:
                u = np.zeros(m)
                u[idx] = sg / np.sqrt(idx.size)
                cols.append(u)
                f[idx] = g["block"].mean() * sg
    B = np.array(cols).T if cols else np.zeros((m, 0))
    return PatternGeometry(pattern=pattern, basis=B, face_projection=f,
                           ambient=ambient)


def geometry_from_vertices(vertices, active, tol=1e-10):
    """Pattern geometry of a face given by its active vertices.

    ``S_I`` is the orthogonal complement of the differences
    ``v_i - v_{i0}`` over the active set and ``f_I = P_I v_{i0}``.
    """
    V = np.asarray(vertices, dtype=float)
    active = [int(i) for i in active]
    if not active:
        raise ValueError("empty active set")
    H = (V[active[1:]] - V[active[0]]).T
    if H.size == 0:
        B = np.eye(V.shape[1])
    else:
        B = null_space(H.T, rcond=tol)
    f = B @ (B.T @ V[active[0]])
    pat = Pattern("polytope", tuple(sorted(active)), tuple(sorted(active)))
    return PatternGeometry(pattern=pat, basis=B, face_projection=f)


def _active_vertices(spec, geom, V=None, tol=1e-9):
    """Indices of dual-ball vertices on the face of ``geom``."""
    if V is None:
        V = dual_ball_vertices(spec)
    if spec.variant == "polytope":
        return V, np.array(geom.pattern.code, dtype=int)
    # a point in the relative interior of the pattern class
    x = _representative(spec, geom.pattern)
    vals = V @ x
    return V, np.flatnonzero(vals >= vals.max() - tol * max(1.0, vals.max()))


def _representative(spec, pattern):
    code = np.array(pattern.code, dtype=float)
    if spec.variant == "linf":
        x = np.where(code != 0, 2.0 * code, 0.0)
        free = code == 0
        # distinct small magnitudes so no accidental ties
        x[free] = np.linspace(0.1, 0.9, free.sum()) if free.any() else x[free]
        return x
    return code


def face_in_relative_interior(spec, geom, V=None):
    """Whether ``f_I`` is a strictly positive convex combination of the
    active vertices (LP certificate). Needs the vertex list."""
    V, act = _active_vertices(spec, geom, V)
    s = _relative_interior_margin(V[act], geom.face_projection)
    return s is not None and s > 1e-9


def dual_ball_facets(spec, vertices=None):
    """Facet normals ``u`` with ``B* = {y : u^T y <= 1}``, by convex hull.

    Duplicate normals from the triangulated hull are merged.
    """
    if vertices is None and spec.m > FACET_M_MAX:
        raise ValueError("facet enumeration is limited to m <= %d"
                         % FACET_M_MAX)
    V = dual_ball_vertices(spec) if vertices is None else np.asarray(vertices)
    m = V.shape[1]
    if m == 1:
        return np.array([[1.0 / V.max()], [1.0 / V.min()]])
    if V.shape[0] > 5000:
        raise ValueError("too many vertices (%d) for hull-based facet "
                         "enumeration" % V.shape[0])
    hull = ConvexHull(V)
    eq = hull.equations
    U = eq[:, :-1] / (-eq[:, -1:])
    U = np.unique(np.round(U, 10), axis=0)
    return U


def tau_closed_form(spec, pattern):
    """Threshold from the known formulas (l-infinity ambient norm).

    Returns 1 for l1, ``1/k`` for l-infinity with a max-set of size
    ``k``, and the single-cluster SLOPE formula. Returns None when no
    closed form is known (several SLOPE clusters, polytopes).
    """
    if not isinstance(pattern, Pattern):
        pattern = Pattern.from_code(spec, pattern)
    code = np.array(pattern.code, dtype=int)
    if not np.any(code):
        return None
    if spec.variant == "l1":
        return 1.0
    if spec.variant == "linf":
        return 1.0 / np.count_nonzero(code)
    if spec.variant != "slope" or np.abs(code).max() != 1:
        return None
    w = spec.weights
    k = np.count_nonzero(code)
    m = w.size
    h = _slope_h(w[:k])
    if k == m:
        return h
    return min(h, w[k:].mean())


def _slope_h(wk):
    k = wk.size
    if k == 1:
        return float(wk[0])
    i = k // 2
    mean_k = wk.mean()
    a = wk[:i].mean() - mean_k
    if k % 2 == 0:
        return float(a)
    return float(min(a, mean_k - wk[i + 1:].mean()))


def _complement_basis(B, m):
    if B.shape[1] == 0:
        return np.eye(m)
    return null_space(B.T)


def tau_oracle(spec, geom, p=None, metric=None, facets=None):
    """Threshold by facet enumeration and linear programming.

    For every facet ``u^T y <= 1`` of the dual ball the smallest
    perturbation ``pi`` orthogonal to the pattern subspace that reaches
    the facet has size ``(1 - u^T f_I) / h`` with
    ``h = max{u^T pi : pi in S_I^perp, ||pi|| <= 1}``. The threshold is
    the minimum over facets.

    Parameters
    ----------
    spec : AtomicNormSpec
    geom : PatternGeometry
    p : int, optional
        Unused except for a dimension check.
    metric : ndarray, optional
        PSD matrix ``W`` such that the ambient norm of ``D pi`` equals
        ``sqrt(pi^T W pi)``. Without it the ambient norm is l-infinity.
    facets : ndarray, optional
        Precomputed facet normals.

    Raises
    ------
    TauUndefinedError
        If the dual norm of ``f_I`` exceeds one.
    """
    m = spec.m
    if p is not None and p * (p - 1) // 2 != m:
        raise ValueError("dimension mismatch")
    f = geom.face_projection
    dval = dual_eval(spec, f)
    if dval > 1 + 1e-8:
        raise TauUndefinedError(dval)
    U = dual_ball_facets(spec) if facets is None else facets
    Bc = _complement_basis(geom.basis, m)
    if Bc.shape[1] == 0:
        return np.inf
    slack = np.maximum(1.0 - U @ f, 0.0)
    G = Bc.T @ U.T
    if metric is not None:
        Ginv = np.linalg.inv(Bc.T @ metric @ Bc)
    best = np.inf
    # h depends on u only through its projection onto S_I^perp
    cache = {}
    for j in range(U.shape[0]):
        g = G[:, j]
        if np.abs(g).max() <= 1e-12:
            continue
        key = tuple(np.round(g, 10))
        h = cache.get(key)
        if h is None:
            if metric is not None:
                h = np.sqrt(g @ Ginv @ g)
            else:
                h = _support_slice(Bc @ g, geom.basis)
            cache[key] = h
        if h <= 1e-12:
            continue
        best = min(best, slack[j] / h)
    return float(best)


def _support_slice(u, B):
    """max u^T pi subject to B^T pi = 0 and |pi_i| <= 1."""
    m = u.size
    A_eq = B.T if B.shape[1] else None
    b_eq = np.zeros(B.shape[1]) if B.shape[1] else None
    res = linprog(-u, A_eq=A_eq, b_eq=b_eq, bounds=[(-1, 1)] * m,
                  method="highs")
    if res.status != 0:
        raise RuntimeError("support LP failed: %s" % res.message)
    return -res.fun


def tau_value(spec, geom, metric=None):
    """Threshold for ``geom`` and record it on the geometry.

    Closed forms are used for the l-infinity ambient norm when available;
    otherwise :func:`tau_oracle` runs (small ``m``), with the l1 facets
    written down directly so that the Mahalanobis case scales.
    """
    if metric is None:
        t = tau_closed_form(spec, geom.pattern)
        if t is not None:
            geom.tau, geom.tau_method = t, "closed_form"
            return t
    facets = None
    if spec.variant == "l1" and spec.m > 6:
        E = np.eye(spec.m)
        facets = np.vstack([E, -E])
    t = tau_oracle(spec, geom, metric=metric, facets=facets)
    geom.tau, geom.tau_method = t, "oracle"
    return t


# -- second threshold, constants ---------------------------------------

def pattern_margin(spec, x, rel_tol=1e-9):
    """Smallest l-infinity move inside the pattern subspace of ``x`` that
    changes the pattern (or a lower bound for it).

    l1: the smallest nonzero magnitude. l-infinity: the smaller of the
    maximum and half the gap to the largest entry outside the max-set.
    SLOPE: the smaller of the lowest nonzero level and half the smallest
    gap between distinct levels.

    Magnitudes within ``rel_tol * max|x|`` of zero count as zero and
    magnitudes within that distance of each other count as tied, so
    round-off in ``x`` does not produce spurious tiny gaps.
    """
    a = np.abs(np.asarray(x, dtype=float))
    if a.size == 0 or a.max() == 0:
        raise ValueError("degenerate pattern: no nonzero entries")
    tol = rel_tol * a.max()
    nz = np.sort(a[a > tol])
    if spec is None or spec.variant in ("l1", "polytope"):
        return float(nz[0])
    # merge near-equal magnitudes into levels
    breaks = np.flatnonzero(np.diff(nz) > tol) + 1
    levels = np.array([g.mean() for g in np.split(nz, breaks)])
    if spec.variant == "linf":
        top = levels[-1]
        if levels.size == 1 and nz.size == a.size:
            return float(top)
        below = levels[-2] if levels.size > 1 else 0.0
        return float(min(top, (top - below) / 2))
    gap = np.diff(levels).min() / 2 if levels.size > 1 else np.inf
    return float(min(levels[0], gap))


def zeta_lower_bound(instance, spec=None, ambient="linf"):
    """Lower bound on the pattern-stability threshold of ``K*``.

    With the l-infinity ambient norm this is
    ``margin / |||K*|||_inf^2`` where the margin is ``Theta_min`` for l1,
    single-cluster SLOPE, and the default ``spec=None``. With the
    Mahalanobis norm it is ``sqrt(2) * lambda_min(Sigma*) * margin``.
    """
    K = instance.K_star
    x = vecp(K)
    if not np.any(np.abs(x) > 0):
        raise ValueError("K* has no off-diagonal support")
    margin = pattern_margin(spec, x)
    if ambient == "linf":
        return margin / opnorm_inf(K) ** 2
    if ambient == "mahalanobis":
        lam = np.linalg.eigvalsh(instance.Sigma_star)[0]
        return np.sqrt(2.0) * lam * margin
    raise ValueError("unknown ambient norm %r" % (ambient,))


def _restricted_vertices(spec, geom, cap=1 << 16):
    """Vertices (possibly with repeats) of the projected dual ball."""
    kind = spec.variant
    B = geom.basis
    if kind == "l1":
        S = np.flatnonzero(geom.pattern.code)
        if 2 ** S.size > cap:
            raise ValueError("too many restricted vertices")
        out = []
        for bits in range(2 ** S.size):
            v = np.zeros(spec.m)
            v[S] = [1.0 if (bits >> t) & 1 else -1.0 for t in range(S.size)]
            out.append(v)
        return np.array(out)
    if kind == "linf":
        f = geom.face_projection
        J = np.flatnonzero(geom.pattern.code)
        out = [f, -f]
        for j in np.setdiff1d(np.arange(spec.m), J):
            out.extend([_unit(spec.m, j), -_unit(spec.m, j)])
        return np.array(out)
    single = np.abs(geom.pattern.code).max() == 1
    if kind == "slope" and single and geom.dim == 1:
        f = geom.face_projection
        return np.array([f, -f])
    V = dual_ball_vertices(spec)
    return (B @ (B.T @ V.T)).T


def c_diamond(spec, geom, metric=None, tight=False):
    """Constant ``c`` with ``||D pi|| <= c * restricted_dual(pi)`` on S_I.

    With the l-infinity ambient norm and ``tight=False`` the published
    values are returned: 1 for l1 and l-infinity, ``1 / mean(w_1..w_k)``
    for single-cluster SLOPE. ``tight=True`` (or a Mahalanobis
    ``metric``) computes the smallest valid constant as the maximum of
    the ambient norm over the vertices of the projected dual ball.
    """
    code = np.array(geom.pattern.code)
    if metric is None and not tight:
        if spec.variant in ("l1", "linf"):
            return 1.0
        if spec.variant == "slope" and np.abs(code).max() == 1:
            k = np.count_nonzero(code)
            return 1.0 / spec.weights[:k].mean()
    R = _restricted_vertices(spec, geom)
    if metric is None:
        return float(np.abs(R).max())
    return float(np.sqrt(np.max(np.einsum("ij,jk,ik->i", R, metric, R))))


def eta(instance, spec, ambient="linf"):
    """Constant ``eta`` relating ``|||Sigma* Delta|||`` to the deviation.

    Returns
    -------
    value : float
    method : str
        ``"degree_bound"``, ``"l1_bound"`` or ``"mahalanobis_unit"``.
    """
    if ambient == "mahalanobis":
        return 1.0, "mahalanobis_unit"
    if ambient != "linf":
        raise ValueError("unknown ambient norm %r" % (ambient,))
    K = instance.K_star
    l1 = float(np.abs(K).sum())
    if spec.variant == "linf":
        return l1, "l1_bound"
    deg = instance.d * opnorm_inf(instance.Sigma_star) * opnorm_inf(K) ** 2
    if deg <= l1:
        return float(deg), "degree_bound"
    return l1, "l1_bound"


# -- SLOPE tuning -------------------------------------------------------

def tune_slope_weights(m, k=None, exact=False):
    """Weights maximizing the SLOPE threshold.

    Parameters
    ----------
    m : int
        Number of weights.
    k : int, optional
        Size of the single nonzero cluster, if known. Without it the
        linearly decreasing weights ``(m + 1/2 - i) / (m - 1/2)`` are
        returned, whose worst-case threshold over all patterns is
        ``1 / (2m - 1)``.
    exact : bool
        Return :class:`fractions.Fraction` entries instead of floats.
    """
    m = int(m)
    if m < 1:
        raise ValueError("m must be positive")
    if k is None:
        w = [Fraction(2 * m + 1 - 2 * i, 2 * m - 1) for i in range(1, m + 1)]
    else:
        k = int(k)
        if not 1 <= k <= m:
            raise ValueError("k must be in 1..m")
        i, odd = divmod(k, 2)
        if k == 1:
            w = [Fraction(1)] * m
        elif k == m:
            w = [Fraction(1)] * i + [Fraction(1, 2)] * odd + [Fraction(0)] * i
        else:
            w = ([Fraction(1)] * i + [Fraction(2, 3)] * odd
                 + [Fraction(1, 3)] * (m - i - odd))
    if exact:
        return w
    return np.array([float(v) for v in w])


def slope_weights_for_edges(m, k):
    """Tuned weights for a single cluster of ``k`` edges among ``m``.

    Ones up to ``floor(k/2)``, ``2/3`` at ``ceil(k/2)`` when ``k`` is odd
    and ``1/3`` afterwards.
    """
    if not 1 <= k <= m:
        raise ValueError("k must be in 1..m")
    i = np.arange(1, m + 1)
    w = np.where(i <= k // 2, 1.0, 1.0 / 3.0)
    if k % 2 == 1:
        w[(k + 1) // 2 - 1] = 2.0 / 3.0
    return w
