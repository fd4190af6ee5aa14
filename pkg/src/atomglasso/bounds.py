"""Deviation bounds for pattern recovery of the penalized log-det estimator.

Given a true model (``Sigma*``, ``K*``) and a penalty norm, this module
computes ``Gamma* = Sigma* kron Sigma*``, the projectors ``P`` and ``Q``
on the matrix pattern subspace, the irrepresentability constant
``alpha`` and the resulting ``(lambda, delta)`` guarantees. A GLASSO
specific bound and the corrected comparison bound ``delta_R`` are also
provided.
"""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .atomic_norm import AtomicNormSpec, pattern_of
from .geometry import (build_geometry, c_diamond, eta,
                       slope_weights_for_edges, tau_value, zeta_lower_bound)
from .symmat import (duplication_matrix, half_dim, kron, opnorm_inf, pinv,
                     sym_sqrt, vecp)

__all__ = [
    "ProblemInstance",
    "BoundsReport",
    "IrrepresentabilityError",
    "PatternProjectors",
    "gamma_and_projectors",
    "irrepresentability",
    "glasso_irrepresentability",
    "bounds_general",
    "bounds_glasso",
    "classical_delta",
    "main_bound_quantities",
    "example_3_5_instance",
    "support_mask",
    "mahalanobis_metric",
    "ambient_operator_norms",
    "compute_bounds",
    "default_spec",
    "true_pattern",
]


class IrrepresentabilityError(ValueError):
    """The irrepresentability condition fails (``alpha <= 0``).

    Attributes
    ----------
    lhs : float
        Left-hand side of the condition.
    tau : float
        The threshold it is compared against.
    """

    def __init__(self, lhs, tau, message=None):
        self.lhs = float(lhs)
        self.tau = float(tau)
        super().__init__(message or "irrepresentability fails: lhs %.4g >= "
                         "tau %.4g" % (self.lhs, self.tau))


@dataclass
class ProblemInstance:
    """True covariance and precision matrix of a Gaussian graphical model.

    Build with :meth:`from_sigma` or :meth:`from_precision`, which fill in
    the inverse and the support statistics.

    Attributes
    ----------
    Sigma_star, K_star : ndarray
    support : ndarray of bool, shape (m,)
        Nonzero pattern of ``vecp(K*)``.
    d : int
        Largest number of nonzeros in a row of ``K*`` (diagonal included).
    Theta_min : float
        Smallest nonzero off-diagonal magnitude of ``K*``.
    rho : float or None
        Common off-diagonal value when all nonzero ones are equal.
    graph : str
    """

    Sigma_star: np.ndarray
    K_star: np.ndarray
    support: np.ndarray
    d: int
    Theta_min: float
    rho: float = None
    graph: str = "custom"
    meta: dict = field(default_factory=dict)

    @property
    def p(self):
        return self.K_star.shape[0]

    @property
    def m(self):
        return half_dim(self.p)

    @property
    def x_star(self):
        return vecp(self.K_star)

    @classmethod
    def _build(cls, Sigma, K, graph, zero_tol, meta):
        Sigma = 0.5 * (Sigma + Sigma.T)
        K = 0.5 * (K + K.T)
        p = K.shape[0]
        scale = np.abs(K).max()
        K = np.where(np.abs(K) <= zero_tol * scale, 0.0, K)
        if np.linalg.eigvalsh(Sigma)[0] <= 0:
            raise ValueError("Sigma* is not positive definite")
        if np.linalg.norm(Sigma @ K - np.eye(p)) > 1e-8 * p:
            raise ValueError("K* is not the inverse of Sigma*")
        x = vecp(K)
        support = x != 0
        d = int((K != 0).sum(axis=1).max())
        theta = float(np.abs(x[support]).min()) if support.any() else 0.0
        vals = x[support]
        rho = float(vals[0]) if vals.size and np.ptp(vals) <= 1e-12 else None
        return cls(Sigma, K, support, d, theta, rho, graph, dict(meta or {}))

    @classmethod
    def from_sigma(cls, Sigma, graph="custom", zero_tol=1e-10, meta=None):
        Sigma = np.array(Sigma, dtype=float)
        return cls._build(Sigma, np.linalg.inv(Sigma), graph, zero_tol, meta)

    @classmethod
    def from_precision(cls, K, graph="custom", zero_tol=0.0, meta=None):
        K = np.array(K, dtype=float)
        return cls._build(np.linalg.inv(K), K, graph, zero_tol, meta)


@dataclass
class BoundsReport:
    """All bound quantities for one instance and penalty."""

    graph: str
    p: int
    norm: str
    ambient: str
    variant: str
    lhs_irrep: float
    lhs_table: float
    alpha: float
    tau: float
    eta: float
    eta_method: str
    c: float
    zeta_lb: float
    q_norm: float
    iq_norm: float
    M: float
    r: float
    lam: float
    delta: float
    radius: float
    delta_R: float = None
    alpha_glasso: float = None
    # zeta is always replaced by its pattern-margin lower bound
    zeta_method: str = "margin_lower_bound"
    tau_method: str = None

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return {k: float(v) if isinstance(v, np.floating) else v
                for k, v in d.items()}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def support_mask(instance):
    """Boolean mask over ``vec`` indices of the nonzeros of ``K*``.

    Includes the diagonal and both ``(i, j)`` and ``(j, i)``.
    """
    return (instance.K_star != 0).reshape(-1, order="F")


def _gamma_block(Sigma, rows, cols):
    # Gamma[a, b] = Sigma[a // p, b // p] * Sigma[a % p, b % p]
    p = Sigma.shape[0]
    return (Sigma[np.ix_(rows // p, cols // p)]
            * Sigma[np.ix_(rows % p, cols % p)])


class PatternProjectors:
    """``Gamma*``, ``P_M`` and ``Q_M`` for one instance and pattern.

    ``P_M = U U^T`` where the orthonormal columns of ``U`` are the
    diagonal unit matrices and ``D b / sqrt(2)`` for an orthonormal basis
    ``b`` of the pattern subspace. Then
    ``Q_M = Gamma U (U^T Gamma U)^{-1} U^T``, which coincides with
    ``Gamma pinv(P Gamma P)`` because ``Gamma`` is positive definite.
    """

    def __init__(self, instance, geom):
        p = instance.p
        D = duplication_matrix(p)
        diag = np.zeros((p * p, p))
        diag[np.arange(p) * (p + 1), np.arange(p)] = 1.0
        self.U = np.hstack([diag, D @ geom.basis / np.sqrt(2.0)])
        self.Gamma = kron(instance.Sigma_star, instance.Sigma_star)
        self.GU = self.Gamma @ self.U
        A = self.U.T @ self.GU
        w = np.linalg.eigvalsh(A)
        if w[0] <= 1e-12 * w[-1]:
            raise ValueError("restricted Gamma block is numerically singular")
        self._Ainv = np.linalg.inv(A)
        self._Q = None
        self.p = p

    @property
    def P(self):
        return self.U @ self.U.T

    @property
    def Q(self):
        if self._Q is None:
            self._Q = (self.GU @ self._Ainv) @ self.U.T
        return self._Q

    def apply_Q(self, z):
        return self.GU @ (self._Ainv @ (self.U.T @ z))

    def apply_P(self, z):
        return self.U @ (self.U.T @ z)


def gamma_and_projectors(instance, geom):
    """Return ``(Gamma*, P_M, Q_M)`` as dense ``p^2 x p^2`` arrays."""
    pr = PatternProjectors(instance, geom)
    return pr.Gamma, pr.P, pr.Q


def gamma_and_projectors_pinv(instance, geom, rank_tol=1e-10):
    """Same as :func:`gamma_and_projectors` but with the literal formula
    ``Q = Gamma pinv(P Gamma P)``. Slow; meant for cross-checks."""
    pr = PatternProjectors(instance, geom)
    P = pr.P
    G = pr.Gamma
    return G, P, G @ pinv(P @ G @ P, rank_tol)


def mahalanobis_metric(instance):
    """``D^T (Gamma*)^{-1} D``: the Mahalanobis norm of ``D pi`` squared is
    ``pi^T W pi``."""
    D = duplication_matrix(instance.p)
    K = instance.K_star
    # (K kron K) D, column by column as vec(K X K)
    p = instance.p
    cols = []
    for k in range(D.shape[1]):
        X = D[:, k].reshape(p, p, order="F")
        cols.append((K @ X @ K).reshape(-1, order="F"))
    return D.T @ np.array(cols).T


def _ambient_norm(z, instance, ambient):
    if ambient == "linf":
        return float(np.abs(z).max())
    R = sym_sqrt(instance.K_star)
    p = instance.p
    X = z.reshape(p, p, order="F")
    return float(np.linalg.norm(R @ X @ R, "fro"))


def _operator_norms(pr, instance, ambient):
    Q = pr.Q
    I = np.eye(Q.shape[0])
    if ambient == "linf":
        return opnorm_inf(Q), opnorm_inf(I - Q)
    # |||A|||_Gamma = ||Gamma^{-1/2} A Gamma^{1/2}||_2
    S = sym_sqrt(instance.Sigma_star)
    Sinv = np.linalg.inv(S)
    Gh = kron(S, S)
    Ghi = kron(Sinv, Sinv)
    return (np.linalg.norm(Ghi @ Q @ Gh, 2),
            np.linalg.norm(Ghi @ (I - Q) @ Gh, 2))


def ambient_operator_norms(instance, geom, ambient=None):
    """``(|||Q|||, |||I - Q|||)`` in the ambient operator norm.

    Needs no threshold, so it is available when the irrepresentability
    condition fails.
    """
    return _operator_norms(PatternProjectors(instance, geom), instance,
                           ambient or geom.ambient)


def irrepresentability(instance, geom, spec, projectors=None, tau=None):
    """Left-hand side of the irrepresentability condition.

    Returns
    -------
    dict
        ``lhs``: ambient norm of ``(Q - P) D f_I``; ``lhs_table``: the
        same with ``f_I`` replaced by the sign vector of ``x*``;
        ``alpha = 1 - lhs / tau``.

    Raises
    ------
    IrrepresentabilityError
        When ``alpha <= 0``.
    """
    pr = projectors or PatternProjectors(instance, geom)
    D = duplication_matrix(instance.p)
    if tau is None:
        tau = geom.tau
    if tau is None:
        raise ValueError("threshold not available for this pattern")
    ambient = geom.ambient

    def lhs_for(f):
        z = D @ f
        return _ambient_norm(pr.apply_Q(z) - pr.apply_P(z), instance, ambient)

    lhs = lhs_for(geom.face_projection)
    lhs_table = lhs_for(np.sign(instance.x_star))
    if tau <= 0:
        raise IrrepresentabilityError(lhs, tau, "threshold is zero")
    alpha = 1.0 - lhs / tau
    if alpha <= 0:
        raise IrrepresentabilityError(lhs, tau)
    return dict(lhs=lhs, lhs_table=lhs_table, alpha=min(alpha, 1.0),
                projectors=pr)


def glasso_irrepresentability(instance):
    """``1 - |||Gamma_{S^c S} Gamma_{SS}^{-1}|||_inf`` and ``kappa_Gamma``.

    ``S`` indexes the nonzeros of ``K*`` in ``vec`` order.
    """
    mask = support_mask(instance)
    S = np.flatnonzero(mask)
    Sc = np.flatnonzero(~mask)
    Sigma = instance.Sigma_star
    GSS = _gamma_block(Sigma, S, S)
    GSSi = np.linalg.inv(GSS)
    if Sc.size:
        irr = opnorm_inf(_gamma_block(Sigma, Sc, S) @ GSSi)
    else:
        irr = 0.0
    return 1.0 - irr, opnorm_inf(GSSi)


def main_bound_quantities(alpha, tau, c, eta_, zeta, q_norm, iq_norm):
    """``(M, r, lambda, delta, radius)`` of the general recovery bound."""
    M = alpha * tau / (q_norm * (iq_norm * c + alpha * tau))
    s = np.sqrt(1.0 + M)
    ez = eta_ * zeta
    r = min(1.0 - 1.0 / s, ez)
    # branch on the unclipped radius; the two forms agree at the switch
    if 1.0 - 1.0 / s <= ez:
        delta = (s - 1.0) ** 2 / eta_
    else:
        delta = M * zeta - eta_ * zeta ** 2 / (1.0 - ez)
    lam = r * iq_norm / (eta_ * q_norm * (c * iq_norm + alpha * tau))
    radius = (1.0 - 1.0 / s) / eta_
    return M, r, lam, delta, radius


def bounds_general(instance, geom, spec, ambient=None, alpha_info=None,
                   c_tight=False):
    """Recovery bounds for a general atomic norm.

    Parameters
    ----------
    instance : ProblemInstance
    geom : PatternGeometry
        Geometry of the pattern of ``vecp(K*)``.
    spec : AtomicNormSpec
    ambient : {"linf", "mahalanobis"}, optional
        Defaults to ``geom.ambient``.
    c_tight : bool
        Use the smallest valid ``c`` instead of the published one.

    Returns
    -------
    BoundsReport
    """
    ambient = ambient or geom.ambient
    geom.ambient = ambient
    metric = mahalanobis_metric(instance) if ambient == "mahalanobis" else None
    tau = geom.tau if geom.tau is not None else tau_value(spec, geom, metric)
    if ambient == "mahalanobis" and geom.tau_method == "closed_form":
        tau = tau_value(spec, geom, metric)
    info = alpha_info or irrepresentability(instance, geom, spec, tau=tau)
    pr = info["projectors"]
    q_norm, iq_norm = _operator_norms(pr, instance, ambient)
    c = c_diamond(spec, geom, metric=metric, tight=c_tight)
    eta_, eta_method = eta(instance, spec, ambient)
    zeta = zeta_lower_bound(instance, spec, ambient)
    M, r, lam, delta, radius = main_bound_quantities(
        info["alpha"], tau, c, eta_, zeta, q_norm, iq_norm)
    return BoundsReport(
        graph=instance.graph, p=instance.p, norm=spec.variant,
        ambient=ambient, variant="general", lhs_irrep=info["lhs"],
        lhs_table=info["lhs_table"], alpha=info["alpha"], tau=tau,
        eta=eta_, eta_method=eta_method, c=c, zeta_lb=zeta, q_norm=q_norm,
        iq_norm=iq_norm, M=M, r=r, lam=lam, delta=delta, radius=radius,
        tau_method=geom.tau_method)


def classical_delta(instance, alpha, kappa_gamma=None):
    """Corrected comparison bound
    ``1 / (6 kappa_Sigma^3 kappa_Gamma^2 d (1 + 8/alpha)^2)``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if kappa_gamma is None:
        kappa_gamma = glasso_irrepresentability(instance)[1]
    kS = opnorm_inf(instance.Sigma_star)
    return 1.0 / (6.0 * kS ** 3 * kappa_gamma ** 2 * instance.d
                  * (1.0 + 8.0 / alpha) ** 2)


def classical_delta_original(instance, alpha, kappa_gamma=None):
    """Uncorrected form ``1 / (6 kS^3 kG^2 d (1 + 8/alpha))``.

    Reported for reference only; it lacks one factor ``(1 + 8/alpha)``.
    """
    if kappa_gamma is None:
        kappa_gamma = glasso_irrepresentability(instance)[1]
    kS = opnorm_inf(instance.Sigma_star)
    return 1.0 / (6.0 * kS ** 3 * kappa_gamma ** 2 * instance.d
                  * (1.0 + 8.0 / alpha))


def bounds_glasso(instance):
    """GLASSO-specific bound under the classical irrepresentability.

    Returns
    -------
    dict
        ``alpha``, ``eta``, ``lambda``, ``delta``, ``radius`` (bound on
        ``||vec(K_hat - K*)||_inf``), ``delta_R`` and ``kappa_gamma``.
    """
    alpha, kG = glasso_irrepresentability(instance)
    if not alpha > 0:
        raise IrrepresentabilityError(1.0 - alpha, 1.0)
    K = instance.K_star
    kK = opnorm_inf(K)
    eta_ = min(instance.d * opnorm_inf(instance.Sigma_star) * kK ** 2,
               float(np.abs(K).sum()))
    z = instance.Theta_min / kK ** 2
    lam = min(alpha / 4.0, eta_ * z) * (1.0 - alpha / 2.0) / eta_
    if alpha <= 4.0 * eta_ * z:
        delta = alpha ** 2 / (16.0 * eta_) * (1.0 - alpha / 3.0)
    else:
        delta = alpha / 6.0 * z
    return dict(alpha=alpha, eta=eta_, lam=lam, delta=delta,
                radius=alpha * kK ** 2 / (4.0 * eta_),
                delta_R=classical_delta(instance, alpha, kG),
                kappa_gamma=kG)


def example_3_5_instance(p, rho):
    """Block instance: unit diagonal, ``rho`` among the first ``p - 1``
    vertices, vertex ``p`` isolated.

    Returns
    -------
    instance : ProblemInstance
    closed : dict
        Closed-form ``kappa_gamma``, ``K_inf``, ``kappa_sigma`` and
        ``K_l1``.
    """
    if not -1.0 / (p - 2) < rho < 1:
        raise ValueError("rho must lie in (-1/(p-2), 1)")
    K = np.full((p, p), float(rho))
    K[-1, :] = 0.0
    K[:, -1] = 0.0
    np.fill_diagonal(K, 1.0)
    inst = ProblemInstance.from_precision(K, graph="dense")
    a = abs(rho)
    closed = dict(
        kappa_gamma=(1 + (p - 2) * a) ** 2,
        K_inf=1 + (p - 2) * a,
        kappa_sigma=(1 - rho + (p - 2) * (rho + a))
        / ((1 - rho) * (1 + (p - 2) * rho)),
        K_l1=p + a * (p - 1) * (p - 2),
    )
    return inst, closed


def true_pattern(instance, spec, rel_tol=1e-9):
    """Pattern of ``vecp(K*)``, tying entries equal up to ``rel_tol``."""
    x = instance.x_star
    return pattern_of(spec, x, rel_tol * np.abs(x).max())


def compute_bounds(instance, spec, ambient="linf", c_tight=False):
    """Full pipeline: pattern of ``K*``, geometry, threshold, bounds.

    For l1 the GLASSO irrepresentability and the corrected comparison
    bound are attached to the report.
    """
    pat = true_pattern(instance, spec)
    geom = build_geometry(spec, pat, instance.p, ambient=ambient)
    rep = bounds_general(instance, geom, spec, ambient, c_tight=c_tight)
    if spec.variant == "l1" and ambient == "linf":
        a, kG = glasso_irrepresentability(instance)
        rep.alpha_glasso = a
        if a > 0:
            rep.delta_R = classical_delta(instance, a, kG)
    return rep, geom


def default_spec(norm, instance, weights=None):
    """Penalty spec for ``norm`` sized to ``instance``.

    SLOPE without explicit weights uses the tuned single-cluster weights
    for the number of edges of ``K*``.
    """
    m = instance.m
    if norm == "l1":
        return AtomicNormSpec.l1(m)
    if norm == "linf":
        return AtomicNormSpec.linf(m)
    if norm == "slope":
        if weights is None:
            weights = slope_weights_for_edges(m, int(instance.support.sum()))
        return AtomicNormSpec.slope(weights)
    raise ValueError("unknown norm %r" % (norm,))
