"""Discrete optimal transport under arbitrary (possibly negative) costs.

The exact path is the network simplex of POT, which returns an optimal
basic plan together with dual potentials. Problems larger than
``ENTROPIC_THRESHOLD`` cells fall back to log-domain Sinkhorn with
epsilon-scaling, rounded back onto the coupling polytope.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

for _backend in ("PYTORCH", "JAX", "CUPY", "TENSORFLOW"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")

import numpy as np
import ot as pot
from scipy.special import logsumexp

from .errors import DomainError
from .measures import DiscreteMeasure

ENTROPIC_THRESHOLD = 4_000_000
MIN_WEIGHT = 1e-15
FEW_COLUMNS = 8
FEW_COLUMNS_MIN_ROWS = 512


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray
    tag: str = "custom"

    def __post_init__(self):
        e = np.ascontiguousarray(self.entries, dtype=float)
        if e.ndim != 2:
            raise DomainError("cost matrix must be two-dimensional")
        if not np.all(np.isfinite(e)):
            raise DomainError("cost matrix has non-finite entries")
        object.__setattr__(self, "entries", e)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True)
class Coupling:
    plan: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def check(self, tol: float = 1e-9) -> None:
        if np.any(self.plan < 0):
            raise DomainError("coupling has negative entries")
        if np.abs(self.plan.sum(axis=1) - self.row_marginal).max() > tol:
            raise DomainError("coupling row sums differ from the first marginal")
        if np.abs(self.plan.sum(axis=0) - self.col_marginal).max() > tol:
            raise DomainError("coupling column sums differ from the second marginal")

    @classmethod
    def independent(cls, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
        return cls(np.outer(mu.weights, nu.weights), mu.weights, nu.weights)


@dataclass(frozen=True)
class OtSolution:
    value: float
    coupling: Coupling
    dual_f: np.ndarray
    dual_g: np.ndarray
    method: str
    duality_gap: float
    epsilon: float | None = None

    @property
    def plan(self) -> np.ndarray:
        return self.coupling.plan


def _check_problem(mu: DiscreteMeasure, nu: DiscreteMeasure, C: CostMatrix) -> None:
    if C.shape != (mu.size, nu.size):
        raise DomainError(f"cost matrix shape {C.shape} does not match ({mu.size}, {nu.size})")
    if mu.weights.min() < MIN_WEIGHT or nu.weights.min() < MIN_WEIGHT:
        raise DomainError(f"weights below {MIN_WEIGHT} are numerically degenerate; drop those atoms")


def _solution(C, a, b, plan, f, g, method, eps=None) -> OtSolution:
    value = float(np.sum(plan * C))
    gap = value - float(f @ a + g @ b)
    return OtSolution(value, Coupling(plan, a, b), f, g, method, gap, eps)


def _exact(C: np.ndarray, a: np.ndarray, b: np.ndarray) -> OtSolution:
    n, m = C.shape
    if n == 1 or m == 1:
        plan = np.outer(a, b)
        if n == 1:
            f, g = np.zeros(1), C[0].copy()
        else:
            f, g = C[:, 0].copy(), np.zeros(1)
        return _solution(C, a, b, plan, f, g, "exact")
    if m == 2:
        return _two_columns(C, a, b)
    if n == 2:
        sol = _two_columns(C.T, b, a)
        return _solution(C, a, b, sol.plan.T.copy(), sol.dual_g, sol.dual_f, "exact")
    if m <= FEW_COLUMNS and n >= FEW_COLUMNS_MIN_ROWS:
        sol = _few_columns(C, a, b)
        if sol is not None:
            return sol
    if n <= FEW_COLUMNS and m >= FEW_COLUMNS_MIN_ROWS:
        sol = _few_columns(C.T, b, a)
        if sol is not None:
            return _solution(C, a, b, sol.plan.T.copy(), sol.dual_g, sol.dual_f, "exact")
    return _network_simplex(C, a, b)


def _network_simplex(C: np.ndarray, a: np.ndarray, b: np.ndarray) -> OtSolution:
    n, m = C.shape
    # the backend misreports infeasibility on negative costs; a constant shift
    # leaves the optimal plan unchanged and moves the duals by the same constant
    shift = float(C.min())
    plan, log = pot.emd(a, b, C - shift, numItermax=max(100_000, 50 * n * m), log=True)
    if log.get("warning"):
        raise RuntimeError(f"network simplex failed: {log['warning']}")
    plan = np.maximum(plan, 0.0)
    f = np.asarray(log["u"]) + shift
    g = np.asarray(log["v"])
    return _solution(C, a, b, plan, f, g, "exact")


def _two_columns(C: np.ndarray, a: np.ndarray, b: np.ndarray) -> OtSolution:
    # with two targets the plan fills column 0 in increasing order of
    # C[:, 0] - C[:, 1]; the row where the fill stops fixes the duals
    delta = C[:, 0] - C[:, 1]
    order = np.argsort(delta, kind="stable")
    cum = np.cumsum(a[order])
    k = min(int(np.searchsorted(cum, b[0] * (1.0 - 1e-15))), len(a) - 1)
    to0 = np.zeros_like(a)
    to0[order[:k]] = a[order[:k]]
    to0[order[k]] = max(b[0] - (cum[k - 1] if k > 0 else 0.0), 0.0)
    to0 = np.minimum(to0, a)
    plan = np.column_stack([to0, a - to0])
    g = np.array([delta[order[k]], 0.0])
    f = C[:, 1] + np.minimum(delta - g[0], 0.0)
    return _solution(C, a, b, plan, f, g, "exact")


def _semidual_ascent(C: np.ndarray, a: np.ndarray, b: np.ndarray, sweeps: int) -> np.ndarray:
    # coordinate ascent on g -> <b, g> + sum_i a_i min_j (C_ij - g_j); each
    # coordinate step is exact: g_j becomes the a-weighted b_j-quantile of
    # the thresholds at which row i switches into column j
    n, m = C.shape
    g = np.zeros(m)
    for _ in range(sweeps):
        old = g.copy()
        for j in range(m):
            R = C - g
            R[:, j] = np.inf
            t = C[:, j] - R.min(axis=1)
            order = np.argsort(t)
            cum = np.cumsum(a[order])
            k = min(int(np.searchsorted(cum, b[j] * (1.0 - 1e-12))), n - 1)
            g[j] = t[order[k]]
        g -= g[-1]
        if np.abs(g - old).max() <= 1e-13 * (1.0 + np.abs(g).max()):
            break
    return g


def _few_columns(C: np.ndarray, a: np.ndarray, b: np.ndarray) -> OtSolution | None:
    """Exact OT when m is small: settle the clear-cut rows from approximate
    semidual potentials, solve the near-tie rows with the network simplex,
    and certify the glued solution by dual feasibility. Returns None if no
    certificate is found before the subproblem grows to half the rows."""
    n, m = C.shape
    g = _semidual_ascent(C, a, b, sweeps=20)
    R = C - g
    best = R.argmin(axis=1)
    two = np.partition(R, 1, axis=1)
    gap = two[:, 1] - two[:, 0]
    tol = 1e-12 * max(1.0, float(np.abs(C).max()))
    k = 16 * m
    order = np.argsort(gap, kind="stable")
    while k <= n // 2:
        S = np.sort(order[:k])
        N = np.sort(order[k:])
        r = b - np.bincount(best[N], weights=a[N], minlength=m)
        if r.min() < -1e-15:
            k *= 4
            continue
        r = np.maximum(r, 0.0)
        r *= a[S].sum() / r.sum()
        sub = _network_simplex(C[S], a[S], r)
        gs = sub.dual_g
        f = np.empty(n)
        f[S] = sub.dual_f
        f[N] = C[N, best[N]] - gs[best[N]]
        if (f[:, None] + gs[None, :] - C).max() <= tol:
            plan = np.zeros((n, m))
            plan[S] = sub.plan
            plan[N, best[N]] = a[N]
            return _solution(C, a, b, plan, f, gs, "exact")
        k *= 4
    return None


def _round_to_polytope(P: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Altschuler-Weed-Rigollet rounding: shrink rows, shrink columns, then
    # redistribute the missing mass with a rank-one correction.
    r = P.sum(axis=1)
    P = P * np.minimum(1.0, a / np.where(r > 0, r, 1.0))[:, None]
    c = P.sum(axis=0)
    P = P * np.minimum(1.0, b / np.where(c > 0, c, 1.0))[None, :]
    err_r = a - P.sum(axis=1)
    err_c = b - P.sum(axis=0)
    mass = err_r.sum()
    if mass > 0:
        P = P + np.outer(err_r, err_c) / mass
    return np.maximum(P, 0.0)


def sinkhorn_eps_scaling(
    C: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    final_ratio: float = 1e-3,
    tol: float = 1e-8,
    max_iter: int = 1000,
) -> OtSolution:
    """Log-domain Sinkhorn, halving epsilon from max|C| to ``final_ratio * max|C|``.

    Intermediate levels run to a loose marginal tolerance; only the last
    level targets ``tol``. The returned plan is rounded onto the coupling
    polytope and the gap is certified with c-transformed potentials.
    """
    scale = float(np.abs(C).max()) or 1.0
    eps = scale
    eps_final = final_ratio * scale
    log_a, log_b = np.log(a), np.log(b)
    f = np.zeros_like(a)
    g = np.zeros_like(b)
    while True:
        last = eps <= eps_final
        level_tol = tol if last else max(tol, 1e-4)
        for it in range(max_iter):
            f = -eps * logsumexp((g[None, :] - C) / eps + log_b[None, :], axis=1)
            g = -eps * logsumexp((f[:, None] - C) / eps + log_a[:, None], axis=0)
            if it % 10 == 9:
                logP = (f[:, None] + g[None, :] - C) / eps + log_b[None, :]
                row_err = np.abs(np.exp(logsumexp(logP, axis=1) + log_a) - a).sum()
                if row_err < level_tol:
                    break
        if last:
            break
        eps = max(0.5 * eps, eps_final)
    P = np.exp((f[:, None] + g[None, :] - C) / eps + log_a[:, None] + log_b[None, :])
    P = _round_to_polytope(P, a, b)
    # c-transforms make the potentials dual feasible, so the gap is a certificate
    g = np.min(C - f[:, None], axis=0)
    f = np.min(C - g[None, :], axis=1)
    return _solution(C, a, b, P, f, g, "entropic", eps)


def solve_ot(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    C: CostMatrix | np.ndarray,
    method: str = "auto",
    exact_only: bool = False,
) -> OtSolution:
    """Minimise <C, pi> over couplings of ``mu`` and ``nu``.

    ``method`` is ``"exact"``, ``"entropic"`` or ``"auto"`` (entropic only when
    the problem has more than ``ENTROPIC_THRESHOLD`` cells and
    ``exact_only`` is false).
    """
    if not isinstance(C, CostMatrix):
        C = CostMatrix(C)
    _check_problem(mu, nu, C)
    a, b = np.asarray(mu.weights), np.asarray(nu.weights)
    if method == "auto":
        big = C.shape[0] * C.shape[1] > ENTROPIC_THRESHOLD
        method = "entropic" if big and not exact_only else "exact"
    if method == "exact":
        return _exact(C.entries, a, b)
    if method == "entropic":
        if exact_only:
            raise DomainError("entropic solver requested with exact_only set")
        return sinkhorn_eps_scaling(C.entries, a, b)
    raise DomainError(f"unknown OT method {method!r}")


def pairwise_cost(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> CostMatrix:
    if mu.dim != nu.dim:
        raise DomainError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    diff = mu.atoms[:, None, :] - nu.atoms[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return CostMatrix(dist**p, f"w_p({p})")


def wasserstein_cost(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 2.0, **kw) -> tuple[float, float]:
    """Return ``(W_p^p, W_p)``."""
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    sol = solve_ot(mu, nu, pairwise_cost(mu, nu, p), **kw)
    wpp = max(sol.value, 0.0)
    return wpp, wpp ** (1.0 / p)


def cost_cA(X: np.ndarray, Y: np.ndarray, A: np.ndarray) -> CostMatrix:
    """c_A(x, y) = -4 |x|^2 |y|^2 - 32 x^T A y for every pair of rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (X.shape[1], Y.shape[1]):
        raise DomainError(f"A has shape {A.shape}, expected ({X.shape[1]}, {Y.shape[1]})")
    sx = np.einsum("ij,ij->i", X, X)
    sy = np.einsum("ij,ij->i", Y, Y)
    return CostMatrix(-4.0 * np.outer(sx, sy) - 32.0 * (X @ A) @ Y.T, "c_A")


def semidual_value(mu: DiscreteMeasure, nu: DiscreteMeasure, A: np.ndarray, g: np.ndarray) -> float:
    """g . nu + sum_i mu_i min_j {c_A(x_i, y_j) - g_j}."""
    g = np.asarray(g, dtype=float).reshape(-1)
    if g.shape[0] != nu.size:
        raise DomainError(f"potential has length {g.shape[0]}, nu has {nu.size} atoms")
    C = cost_cA(mu.atoms, nu.atoms, A).entries
    inner = C - g[None, :]
    ctrans = inner[np.arange(mu.size), np.argmin(inner, axis=1)]
    return float(g @ nu.weights + mu.weights @ ctrans)


def semidual_potential_bound(mu: DiscreteMeasure, nu: DiscreteMeasure, A: np.ndarray, g: np.ndarray) -> tuple[float, float]:
    """Return ``(max_j |g_j|, bound)`` after shifting g to sum zero.

    ``bound = (1 - 1/l) K / min_j nu_j`` with
    ``K = (8 + 32 |A|_op) m2(mu) + 32 |A|_op``; meaningful when the atoms of
    ``nu`` lie in the unit ball.
    """
    g = np.asarray(g, dtype=float).reshape(-1)
    g = g - g.mean()
    op = float(np.linalg.norm(np.atleast_2d(A), 2))
    m2 = float(mu.weights @ np.einsum("ij,ij->i", mu.atoms, mu.atoms))
    K = (8.0 + 32.0 * op) * m2 + 32.0 * op
    ell = nu.size
    bound = (1.0 - 1.0 / ell) * K / float(nu.weights.min())
    return float(np.abs(g).max()), bound
