"""Penalized log-det estimation by ADMM.

Solves

    minimize  tr(S K) - log det K + 2 * lam * norm(vecp(K))

over positive definite ``K``, where the diagonal is not penalized, and
the same problem restricted to a matrix pattern subspace.

The ADMM iterates are followed by a polishing step: once the splitting
variable has settled on a pattern, Newton's method is run on the smooth
objective obtained by fixing that pattern, and the result is accepted
only if it satisfies the optimality conditions of the original problem.
"""
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .atomic_norm import (dual_eval, norm_eval, pattern_of, project_dual_ball,
                          prox, restricted_dual_eval)
from .geometry import build_geometry
from .symmat import as_symmetric, duplication_matrix, kron, unvecp, vecp

__all__ = [
    "SolverConfig",
    "SolverResult",
    "solve",
    "solve_restricted",
    "primal_dual_witness_check",
    "kkt_residual",
    "restricted_prox",
]


@dataclass
class SolverConfig:
    """ADMM settings.

    Attributes
    ----------
    admm_rho : float
        Augmented Lagrangian parameter.
    max_iter : int
    tol_primal, tol_dual : float
        Relative stopping tolerances on the ADMM residuals.
    tol_kkt : float
        Accepted violation of the optimality conditions.
    pattern_tol : float
        Relative tolerance used when reading off the solution pattern.
    adaptive_rho : bool
        Residual balancing for ``admm_rho``.
    polish : bool
        Try the Newton polishing step.
    polish_every : int
        Iterations between polishing attempts once the residuals are
        small.
    """

    admm_rho: float = 1.0
    max_iter: int = 5000
    tol_primal: float = 1e-9
    tol_dual: float = 1e-9
    tol_kkt: float = 1e-7
    pattern_tol: float = 1e-6
    adaptive_rho: bool = False
    polish: bool = True
    polish_every: int = 25

    def __post_init__(self):
        for name in ("admm_rho", "tol_primal", "tol_dual", "tol_kkt",
                     "pattern_tol"):
            if not getattr(self, name) > 0:
                raise ValueError("%s must be positive" % name)
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class SolverResult:
    """Output of :func:`solve` and :func:`solve_restricted`.

    Attributes
    ----------
    K_hat : ndarray
    iterations : int
    kkt_residual : float
    dual_certificate : ndarray, shape (m,)
        ``vecp((K_hat^{-1} - S) / lam)``, projected onto the pattern
        subspace for restricted solves.
    pattern : Pattern
    converged : bool
    polished : bool
        Whether the returned matrix comes from the polishing step.
    """

    K_hat: np.ndarray
    iterations: int
    kkt_residual: float
    dual_certificate: np.ndarray
    pattern: object
    converged: bool
    polished: bool = False
    history: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "K_hat": self.K_hat.tolist(),
            "iterations": int(self.iterations),
            "kkt_residual": float(self.kkt_residual),
            "dual_certificate": self.dual_certificate.tolist(),
            "pattern": list(self.pattern.code),
            "converged": bool(self.converged),
            "polished": bool(self.polished),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _check_sigma(S):
    S = as_symmetric(S, atol=1e-9)
    if np.any(np.diag(S) <= 0):
        raise ValueError("empirical covariance must have a positive diagonal")
    if np.linalg.eigvalsh(S)[0] <= 0:
        warnings.warn("empirical covariance is not positive definite; "
                      "convergence is best effort", RuntimeWarning)
    return S


def _logdet_prox(A, rho):
    # argmin_X  -log det X + rho/2 ||X - (A/rho)||^2 ... written for
    # X-update with A = rho (Z - U) - S
    g, V = np.linalg.eigh(A)
    x = (g + np.sqrt(g * g + 4.0 * rho)) / (2.0 * rho)
    return (V * x) @ V.T


def restricted_prox(spec, v, t, geom, warm=None, max_iter=5000, tol=1e-14):
    """``argmin_{z in S_I} 0.5 ||z - v||^2 + t * norm(z)``.

    Closed forms for coordinate subspaces with a separable norm (l1) and
    for one-dimensional subspaces; otherwise accelerated projected
    gradient on the dual variable ``pi in t B*`` with
    ``z = P_I (v - pi)``.

    Returns
    -------
    z : ndarray
    pi : ndarray or None
        Final dual variable (for warm starts).
    """
    B = geom.basis
    if B.shape[1] == 0:
        return np.zeros_like(v), None
    if spec.variant == "l1" and np.all(np.abs(B).max(axis=0) == 1.0):
        # coordinate subspace: the l1 prox separates
        mask = np.abs(B).sum(axis=1) > 0
        z = np.zeros_like(v)
        z[mask] = prox(spec, v, t)[mask]
        return z, None
    if B.shape[1] == 1:
        b = B[:, 0]
        a = norm_eval(spec, b)
        th = b @ v
        th = np.sign(th) * max(abs(th) - t * a, 0.0)
        return th * b, None
    pi = np.zeros_like(v) if warm is None else warm.copy()
    y = pi.copy()
    k = 1.0
    for _ in range(max_iter):
        r = v - y
        grad = -(B @ (B.T @ r))
        new = project_dual_ball(spec, y - grad, t)
        k_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * k * k))
        y = new + ((k - 1.0) / k_new) * (new - pi)
        step = np.abs(new - pi).max()
        pi, k = new, k_new
        if step <= tol * max(1.0, np.abs(v).max()):
            break
    z = B @ (B.T @ (v - pi))
    return z, pi


def _penalty_map(spec, geom, t):
    """Z-update on the half-vector: unrestricted or restricted prox."""
    if geom is None:
        return lambda v: prox(spec, v, t)
    state = {"pi": None}

    def f(v):
        z, state["pi"] = restricted_prox(spec, v, t, geom, warm=state["pi"])
        return z
    return f


def _admm(S, spec, lam, cfg, geom=None, Z0=None, callback=None):
    p = S.shape[0]
    rho = cfg.admm_rho
    Z = np.diag(1.0 / np.diag(S)) if Z0 is None else np.array(Z0, dtype=float)
    U = np.zeros((p, p))
    zmap = _penalty_map(spec, geom, lam / rho)
    hist = {"r": [], "s": []}
    it = 0
    for it in range(1, cfg.max_iter + 1):
        X = _logdet_prox(rho * (Z - U) - S, rho)
        V = X + U
        Z_old = Z
        Z = unvecp(zmap(vecp(V)), np.diag(V))
        U = U + X - Z
        r = np.linalg.norm(X - Z)
        s = rho * np.linalg.norm(Z - Z_old)
        hist["r"].append(r)
        hist["s"].append(s)
        eps_p = cfg.tol_primal * max(np.linalg.norm(X), np.linalg.norm(Z), 1.0)
        eps_d = cfg.tol_dual * max(rho * np.linalg.norm(U), 1.0)
        if r <= eps_p and s <= eps_d:
            return X, Z, U, it, True, hist
        if callback is not None and callback(it, Z, r, s):
            return X, Z, U, it, True, hist
        if cfg.adaptive_rho and it % 10 == 0:
            if r > 10 * s:
                rho *= 2.0
                U /= 2.0
            elif s > 10 * r:
                rho /= 2.0
                U *= 2.0
            if r > 10 * s or s > 10 * r:
                zmap = _penalty_map(spec, geom, lam / rho)
    return X, Z, U, it, False, hist


def _pattern_basis(p, geom):
    """Columns ``vec`` of the diagonal units and of ``unvecp(b)``."""
    D = duplication_matrix(p)
    diag = np.zeros((p * p, p))
    diag[np.arange(p) * (p + 1), np.arange(p)] = 1.0
    return np.hstack([diag, D @ geom.basis])


def _newton_polish(S, lam, geom, K0, max_iter=50, tol=1e-13):
    """Minimize ``tr((S + lam F) K) - log det K`` over the pattern subspace.

    ``F = unvecp(f_I)``. Returns None if Newton fails to converge or
    leaves the positive definite cone.
    """
    p = S.shape[0]
    Ub = _pattern_basis(p, geom)
    C = S + lam * unvecp(geom.face_projection)
    c = Ub.T @ C.reshape(-1, order="F")
    # least squares coordinates of K0 in the pattern basis
    theta = np.linalg.lstsq(Ub, K0.reshape(-1, order="F"), rcond=None)[0]

    def unpack(th):
        return (Ub @ th).reshape(p, p, order="F")

    def value(K):
        sign, ld = np.linalg.slogdet(K)
        if sign <= 0:
            return np.inf
        return float(np.sum(C * K) - ld)

    K = unpack(theta)
    f = value(K)
    if not np.isfinite(f):
        return None
    for _ in range(max_iter):
        W = np.linalg.inv(K)
        W = 0.5 * (W + W.T)
        g = c - Ub.T @ W.reshape(-1, order="F")
        H = Ub.T @ (kron(W, W) @ Ub)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return None
        dec = g @ step
        if dec <= 2 * tol:
            return K
        t = 1.0
        while t > 1e-12:
            Kn = unpack(theta - t * step)
            fn = value(Kn)
            if fn <= f - 0.25 * t * dec:
                break
            t *= 0.5
        else:
            return K if dec < 1e-10 else None
        theta = theta - t * step
        K, f = Kn, fn
    return K if dec < 1e-10 else None


def kkt_residual(S, spec, lam, K):
    """Violation of the optimality conditions at ``K``.

    With ``pi = vecp(K^{-1} - S) / lam`` the conditions are a zero
    diagonal of ``K^{-1} - S``, ``dual(pi) <= 1`` and
    ``<pi, vecp K> = norm(vecp K)``.

    Returns
    -------
    residual : float
    pi : ndarray
    """
    W = np.linalg.inv(K)
    G = W - S
    pi = vecp(G) / lam
    x = vecp(K)
    r_diag = np.abs(np.diag(G)).max() / max(1.0, np.abs(np.diag(S)).max())
    r_dual = dual_eval(spec, pi) - 1.0
    r_comp = (norm_eval(spec, x) - pi @ x) / max(1.0, np.abs(x).max())
    return max(r_diag, r_dual, abs(r_comp), 0.0), pi


def _restricted_kkt(S, spec, lam, K, geom):
    W = np.linalg.inv(K)
    G = W - S
    pi = geom.project(vecp(G)) / lam
    x = vecp(K)
    r_diag = np.abs(np.diag(G)).max() / max(1.0, np.abs(np.diag(S)).max())
    r_dual = restricted_dual_eval(spec, pi, geom, tol=1e-6) - 1.0
    r_comp = (norm_eval(spec, x) - pi @ x) / max(1.0, np.abs(x).max())
    return max(r_diag, r_dual, abs(r_comp), 0.0), pi


def _pattern(spec, K, rel_tol):
    x = vecp(K)
    return pattern_of(spec, x, rel_tol * max(np.abs(x).max(), 1e-300))


def _try_polish(S, spec, lam, Z, cfg, target_geom=None):
    """Polish on the pattern of ``Z``; return ``(K, residual, pi)`` or None.

    Without ``target_geom`` the full optimality conditions are checked;
    with it, the polished point must keep the target pattern and satisfy
    the restricted conditions.
    """
    p = S.shape[0]
    if target_geom is None:
        pat = _pattern(spec, Z, 1e-12)
        if not np.any(pat.code):
            geom = None
        else:
            geom = build_geometry(spec, pat, p)
    else:
        pat = target_geom.pattern
        geom = target_geom
    if geom is None:
        # diagonal solution; closed form
        K = np.diag(1.0 / np.diag(S))
    else:
        K = _newton_polish(S, lam, geom, Z)
        if K is None:
            return None
    if np.linalg.eigvalsh(K)[0] <= 0:
        return None
    if _pattern(spec, K, 1e-10) != pat:
        return None
    if target_geom is None:
        res, pi = kkt_residual(S, spec, lam, K)
    else:
        res, pi = _restricted_kkt(S, spec, lam, K, target_geom)
    if res > cfg.tol_kkt:
        return None
    return K, res, pi


def _finish(S, spec, lam, cfg, X, Z, it, conv, hist, geom=None):
    K = 0.5 * (X + X.T)
    if np.linalg.eigvalsh(K)[0] <= 0:
        K = Z
    if geom is None:
        res, pi = kkt_residual(S, spec, lam, K)
    else:
        res, pi = _restricted_kkt(S, spec, lam, K, geom)
    return SolverResult(K_hat=K, iterations=it, kkt_residual=res,
                        dual_certificate=pi,
                        pattern=_pattern(spec, K, cfg.pattern_tol),
                        converged=bool(conv and res <= max(cfg.tol_kkt,
                                                           1e-5)),
                        history=hist)


def _run(S, spec, lam, cfg, geom, Z0):
    S = _check_sigma(S)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if vecp(S).size != spec.m:
        raise ValueError("norm dimension %d does not match p=%d"
                         % (spec.m, S.shape[0]))
    cfg = cfg or SolverConfig()
    found = {}

    def callback(it, Z, r, s):
        if not cfg.polish or it % cfg.polish_every:
            return False
        scale = max(np.linalg.norm(Z), 1.0)
        if r > 1e-5 * scale or s > 1e-5 * scale:
            return False
        out = _try_polish(S, spec, lam, Z, cfg, geom)
        if out is None:
            return False
        found["out"] = out
        return True

    X, Z, U, it, conv, hist = _admm(S, spec, lam, cfg, geom, Z0, callback)
    out = found.get("out")
    if out is None and cfg.polish:
        out = _try_polish(S, spec, lam, Z, cfg, geom)
    if out is not None:
        K, res, pi = out
        return SolverResult(K_hat=K, iterations=it, kkt_residual=res,
                            dual_certificate=pi,
                            pattern=_pattern(spec, K, cfg.pattern_tol),
                            converged=True, polished=True, history=hist)
    return _finish(S, spec, lam, cfg, X, Z, it, conv, hist, geom)


def solve(Sigma_hat, spec, lam, cfg=None, Z0=None):
    """Penalized log-det estimate with penalty ``2 * lam * norm(vecp K)``.

    Parameters
    ----------
    Sigma_hat : array_like, shape (p, p)
        Symmetric with positive diagonal.
    spec : AtomicNormSpec
        Norm on the ``p(p-1)/2`` off-diagonal entries.
    lam : float
    cfg : SolverConfig, optional
    Z0 : ndarray, optional
        Initial splitting variable; ``diag(1 / diag(Sigma_hat))`` if
        omitted.

    Returns
    -------
    SolverResult
        ``converged`` is False when neither the ADMM tolerances nor the
        polishing certificate were reached within ``max_iter``.
    """
    return _run(Sigma_hat, spec, lam, cfg, None, Z0)


def solve_restricted(Sigma_hat, spec, lam, geom, cfg=None, Z0=None):
    """Same estimator with ``vecp(K)`` constrained to the pattern subspace
    of ``geom``. The certificate is projected onto that subspace."""
    return _run(Sigma_hat, spec, lam, cfg, geom, Z0)


def primal_dual_witness_check(Sigma_hat, spec, lam, geom, cfg=None):
    """Certify pattern recovery through the restricted solution.

    Solves the restricted problem, forms
    ``pi = vecp(K_tilde^{-1} - Sigma_hat) / lam`` and reports its dual
    norm. A value at most one means the unrestricted estimate equals
    the restricted one.

    Returns
    -------
    dict
        ``dual_value``, ``pattern_match`` (restricted solution keeps the
        target pattern), ``certified`` (both), ``restricted`` (the
        SolverResult) and ``pi``.
    """
    cfg = cfg or SolverConfig()
    res = solve_restricted(Sigma_hat, spec, lam, geom, cfg)
    S = as_symmetric(Sigma_hat, atol=1e-9)
    pi = vecp(np.linalg.inv(res.K_hat) - S) / lam
    dval = dual_eval(spec, pi)
    match = _pattern(spec, res.K_hat, cfg.pattern_tol) == geom.pattern
    return {
        "dual_value": float(dval),
        "pattern_match": bool(match),
        "certified": bool(match and dval <= 1.0 + cfg.tol_kkt),
        "restricted": res,
        "pi": pi,
    }
