"""Squared (2,2)-Gromov-Wasserstein estimation.

For centred measures D = S1 + S2 where S1 depends only on moments and

    S2 = inf_A { 32 |A|_F^2 + T_{c_A}(mu, nu) },  c_A(x, y) = -4|x|^2|y|^2 - 32 x^T A y.

``s2_alternating`` runs block-coordinate descent on the joint objective
J(A, pi) = 32 |A|_F^2 + <c_A, pi>: an exact OT solve for pi, then the
closed-form A = (1/2) int x y^T dpi projected onto the operator-norm ball.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .measures import DiscreteMeasure, SeedPath, center, moments
from .transport import (
    Coupling,
    CostMatrix,
    cost_cA,
    solve_ot,
    wasserstein_cost,
)

CENTER_TOL = 1e-10


@dataclass(frozen=True)
class AlignMatrix:
    entries: np.ndarray
    radius: float

    def __post_init__(self):
        e = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if op_norm(e) > self.radius + 1e-9:
            raise DomainError(f"|A|_op = {op_norm(e)} exceeds radius {self.radius}")
        object.__setattr__(self, "entries", e)

    @property
    def T(self) -> AlignMatrix:
        return AlignMatrix(self.entries.T, self.radius)


@dataclass
class GwResult:
    d_hat: float
    s1: float
    s2: float
    a_star: AlignMatrix
    coupling: Coupling
    objective_trace: list[float]
    starts_used: int
    iterations: int
    method: str
    run_values: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class OrthogonalAlign:
    rotation: np.ndarray
    value: float
    coupling: Coupling | None = None
    objective_trace: tuple[float, ...] = ()


@dataclass(frozen=True)
class GwOptions:
    """Solver knobs for the alternating S2 minimisation.

    ``start_subsample``: when set and a cloud is larger, every start is first
    run on a seeded subsample of that size and only the ``refine_top`` best
    are continued on the full problem.

    ``max_relaxation`` > 1 enables over-relaxed A-updates
    A + beta (G - A), beta doubling up to that cap while they keep lowering
    the objective; a rejected step falls back to the plain update.
    """

    tol: float = 1e-9
    max_iter: int = 100
    n_random: int = 8
    principal_starts: bool = True
    start_subsample: int | None = None
    refine_top: int = 1
    max_relaxation: float = 1.0
    method: str = "auto"
    exact_only: bool = False
    seed: int = 0


def op_norm(A: np.ndarray) -> float:
    return float(np.linalg.norm(np.atleast_2d(A), 2))


def clip_operator_norm(A: np.ndarray, radius: float) -> np.ndarray:
    """Frobenius projection onto {|A|_op <= radius} (singular-value clipping)."""
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] <= radius:
        return A
    return (U * np.minimum(s, radius)) @ Vt


def _require_centred(m: DiscreteMeasure, name: str) -> None:
    mean = m.mean()
    if np.abs(mean).max() >= CENTER_TOL:
        raise DomainError(f"{name} is not centred (mean {mean}); call measures.center first")


# --------------------------------------------------------------------------
# direct objective


def gw_objective(mu: DiscreteMeasure, nu: DiscreteMeasure, pi, p: float = 2.0, q: float = 2.0) -> float:
    """sum_{ijkl} pi_ij pi_kl | |x_i - x_k|^q - |y_j - y_l|^q |^p, evaluated exactly."""
    plan = pi.plan if isinstance(pi, Coupling) else np.asarray(pi, dtype=float)
    if plan.shape != (mu.size, nu.size):
        raise DomainError(f"plan shape {plan.shape} does not match ({mu.size}, {nu.size})")
    if np.any(plan < -1e-12):
        raise DomainError("plan has negative entries")
    if (np.abs(plan.sum(axis=1) - mu.weights).max() > 1e-9
            or np.abs(plan.sum(axis=0) - nu.weights).max() > 1e-9):
        raise DomainError("plan marginals do not match the measures")
    if p < 1 or q < 1:
        raise DomainError("p and q must be >= 1")
    dx = _distance_matrix(mu.atoms) ** q
    dy = _distance_matrix(nu.atoms) ** q
    ii, jj = np.nonzero(plan > 0)
    w = plan[ii, jj]
    total = 0.0
    chunk = max(1, 4_000_000 // max(1, len(w)))
    for start in range(0, len(w), chunk):
        sl = slice(start, start + chunk)
        block = np.abs(dx[ii[sl]][:, ii] - dy[jj[sl]][:, jj]) ** p
        total += float(w[sl] @ block @ w)
    return total


def _distance_matrix(Z: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", Z, Z)
    d2 = sq[:, None] + sq[None, :] - 2.0 * Z @ Z.T
    diff_exact = Z[:, None, :] - Z[None, :, :] if Z.shape[0] <= 512 else None
    if diff_exact is not None:
        d2 = np.einsum("ijk,ijk->ij", diff_exact, diff_exact)
    return np.sqrt(np.maximum(d2, 0.0))


# --------------------------------------------------------------------------
# S1


def s1(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Moment part of D for centred inputs.

    2(m4(mu) + m4(nu)) + 2(m2(mu)^2 + m2(nu)^2) + 4(|S_mu|_F^2 + |S_nu|_F^2) - 4 m2(mu) m2(nu)
    """
    _require_centred(mu, "mu")
    _require_centred(nu, "nu")
    a, b = moments(mu), moments(nu)
    fro_a = float(np.sum(a.covariance**2))
    fro_b = float(np.sum(b.covariance**2))
    return (2.0 * (a.m4 + b.m4) + 2.0 * (a.m2**2 + b.m2**2)
            + 4.0 * (fro_a + fro_b) - 4.0 * a.m2 * b.m2)


def s2_of_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure, plan: np.ndarray) -> float:
    """-4 int |x|^2|y|^2 dpi - 8 |int x y^T dpi|_F^2 (the S2 objective of a coupling)."""
    X, Y = mu.atoms, nu.atoms
    sx = np.einsum("ij,ij->i", X, X)
    sy = np.einsum("ij,ij->i", Y, Y)
    M = X.T @ plan @ Y
    return float(-4.0 * sx @ plan @ sy - 8.0 * np.sum(M * M))


def alignment_radius(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """sqrt((m2(mu) + 1)(m2(nu) + 1)) / 2."""
    return float(np.sqrt((moments(mu).m2 + 1.0) * (moments(nu).m2 + 1.0)) / 2.0)


# --------------------------------------------------------------------------
# starts


def _northwest_corner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    plan = np.zeros((a.size, b.size))
    a, b = a.copy(), b.copy()
    i = j = 0
    while i < a.size and j < b.size:
        t = min(a[i], b[j])
        plan[i, j] = t
        a[i] -= t
        b[j] -= t
        if a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return plan


def sorted_coordinate_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """Monotone (north-west corner) coupling after lexicographic sorting of atoms."""
    ox = np.lexsort(mu.atoms.T[::-1])
    oy = np.lexsort(nu.atoms.T[::-1])
    plan_sorted = _northwest_corner(mu.weights[ox], nu.weights[oy])
    plan = np.zeros_like(plan_sorted)
    plan[np.ix_(ox, oy)] = plan_sorted
    return plan


def default_starts(mu: DiscreteMeasure, nu: DiscreteMeasure, radius: float, options: GwOptions,
                   seed_path: SeedPath | None = None) -> list[np.ndarray]:
    """Zero, sorted-coordinate (equal dimensions), principal-axis sign patterns,
    then ``n_random`` random matrices at operator norm radius/2 with their negations."""
    dx, dy = mu.dim, nu.dim
    starts = [np.zeros((dx, dy))]
    if dx == dy:
        plan = sorted_coordinate_coupling(mu, nu)
        starts.append(0.5 * mu.atoms.T @ plan @ nu.atoms)
    if options.principal_starts:
        starts.extend(_principal_starts(mu, nu))
    rng = (seed_path or SeedPath(options.seed, "gw-starts")).generator(0)
    for _ in range(options.n_random):
        B = rng.standard_normal((dx, dy))
        nb = op_norm(B)
        if nb > 0:
            B *= (radius / 2.0) / nb
        starts.extend([B, -B])
    return [clip_operator_norm(A, radius) for A in starts]


def _principal_starts(mu: DiscreteMeasure, nu: DiscreteMeasure, max_flips: int = 5) -> list[np.ndarray]:
    # pair the leading principal axes of both clouds, all sign patterns on the first few
    ex, Ux = np.linalg.eigh(moments(mu).covariance)
    ey, Uy = np.linalg.eigh(moments(nu).covariance)
    k = min(mu.dim, nu.dim)
    Ux, ex = Ux[:, ::-1][:, :k], np.clip(ex[::-1][:k], 0.0, None)
    Uy, ey = Uy[:, ::-1][:, :k], np.clip(ey[::-1][:k], 0.0, None)
    scale = np.sqrt(ex * ey)
    flips = min(k, max_flips)
    out = []
    for signs in itertools.product((1.0, -1.0), repeat=flips):
        s = np.ones(k)
        s[:flips] = signs
        out.append(0.5 * (Ux * (scale * s)) @ Uy.T)
    return out


# --------------------------------------------------------------------------
# alternating minimisation


@dataclass
class AlternatingRun:
    value: float
    A: np.ndarray
    plan: np.ndarray
    trace: list[float]
    iterations: int
    method: str


def _alternate(X, Y, a_w, b_w, mu, nu, A0, radius, options: GwOptions) -> AlternatingRun:
    sx = np.einsum("ij,ij->i", X, X)
    sy = np.einsum("ij,ij->i", Y, Y)
    base = -4.0 * np.outer(sx, sy)
    method = "exact"

    def evaluate(A):
        nonlocal method
        C = CostMatrix(base - 32.0 * (X @ A) @ Y.T, "c_A")
        sol = solve_ot(mu, nu, C, method=options.method, exact_only=options.exact_only)
        method = sol.method
        return 32.0 * float(np.sum(A * A)) + sol.value, sol.plan

    A = A0
    J, plan = evaluate(A)
    trace = [J]
    beta = 1.0
    for _ in range(options.max_iter - 1):
        G = clip_operator_norm(0.5 * X.T @ plan @ Y, radius)
        if beta > 1.0:
            # over-relaxed step, kept only if it lowers the objective
            Ae = clip_operator_norm(A + beta * (G - A), radius)
            Je, pe = evaluate(Ae)
            if Je < J - options.tol * (1.0 + abs(J)):
                A, J, plan = Ae, Je, pe
                trace.append(J)
                beta = min(2.0 * beta, options.max_relaxation)
                continue
            beta = 1.0
        Jn, plan = evaluate(G)
        decrease = J - Jn
        A, J = G, Jn
        trace.append(J)
        if decrease < options.tol * (1.0 + abs(J)):
            break
        if options.max_relaxation > 1.0:
            beta = 2.0
    value = s2_of_coupling(mu, nu, plan)
    A_star = clip_operator_norm(0.5 * X.T @ plan @ Y, radius)
    return AlternatingRun(value, A_star, plan, trace, len(trace), method)


def _subsample(m: DiscreteMeasure, size: int, rng: np.random.Generator) -> DiscreteMeasure:
    if m.size <= size:
        return m
    idx = np.sort(rng.choice(m.size, size=size, replace=False, p=m.weights))
    return DiscreteMeasure.uniform(m.atoms[idx])


def s2_alternating(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    starts: list[np.ndarray] | None = None,
    tol: float | None = None,
    options: GwOptions | None = None,
    seed_path: SeedPath | None = None,
) -> tuple[float, AlignMatrix, Coupling, list[float], dict]:
    """Upper bound on S2 for centred inputs by multi-start alternating minimisation.

    Returns ``(s2, A, coupling, trace, info)``; ``trace`` is the objective
    sequence of the winning run and ``info`` holds per-run diagnostics.
    The reported value is the S2 objective of the returned coupling, which
    is never above the last trace entry.
    """
    options = options or GwOptions()
    if tol is not None:
        options = GwOptions(**{**options.__dict__, "tol": tol})
    _require_centred(mu, "mu")
    _require_centred(nu, "nu")
    radius = alignment_radius(mu, nu)
    if starts is None:
        starts = default_starts(mu, nu, radius, options, seed_path)
    else:
        starts = [clip_operator_norm(np.atleast_2d(np.asarray(A, dtype=float)), radius) for A in starts]
    if not starts:
        raise DomainError("need at least one start")
    for A in starts:
        if A.shape != (mu.dim, nu.dim):
            raise DomainError(f"start has shape {A.shape}, expected ({mu.dim}, {nu.dim})")

    sub = options.start_subsample
    if sub is not None and max(mu.size, nu.size) > sub and len(starts) > options.refine_top:
        rng = (seed_path or SeedPath(options.seed, "gw-starts")).generator(1)
        mu_s = center(_subsample(mu, sub, rng))
        nu_s = center(_subsample(nu, sub, rng))
        r_s = alignment_radius(mu_s, nu_s)
        coarse = [
            _alternate(mu_s.atoms, nu_s.atoms, mu_s.weights, nu_s.weights, mu_s, nu_s,
                       clip_operator_norm(A, r_s), r_s, options)
            for A in starts
        ]
        order = sorted(range(len(starts)), key=lambda i: (coarse[i].value, i))
        starts = [clip_operator_norm(coarse[i].A, radius) for i in order[: options.refine_top]]

    X, Y = mu.atoms, nu.atoms
    runs = [_alternate(X, Y, mu.weights, nu.weights, mu, nu, A, radius, options) for A in starts]
    best = min(range(len(runs)), key=lambda i: (runs[i].value, i))
    run = runs[best]
    info = {
        "starts_used": len(runs),
        "iterations": sum(r.iterations for r in runs),
        "best_start": best,
        "run_values": [r.value for r in runs],
        "method": run.method,
        "radius": radius,
    }
    return (run.value, AlignMatrix(run.A, radius),
            Coupling(run.plan, mu.weights, nu.weights), run.trace, info)


def _canonical_key(m: DiscreteMeasure):
    return (m.dim, m.size, m.atoms.tobytes(), m.weights.tobytes())


def estimate_gw(mu: DiscreteMeasure, nu: DiscreteMeasure, options: GwOptions | None = None,
                seed_path: SeedPath | None = None) -> GwResult:
    """Estimate D(mu, nu): centre both inputs, then S1 in closed form plus S2 by alternation.

    The pair is put in a canonical order before solving so the result is
    exactly symmetric in its arguments.
    """
    options = options or GwOptions()
    if _canonical_key(nu) < _canonical_key(mu):
        res = estimate_gw(nu, mu, options, seed_path)
        plan = res.coupling.plan.T
        return GwResult(res.d_hat, res.s1, res.s2, res.a_star.T,
                        Coupling(plan, mu.weights, nu.weights), res.objective_trace,
                        res.starts_used, res.iterations, res.method, res.run_values)
    mu_c, nu_c = center(mu), center(nu)
    first = s1(mu_c, nu_c)
    second, A, coupling, trace, info = s2_alternating(mu_c, nu_c, options=options, seed_path=seed_path)
    coupling = Coupling(coupling.plan, mu.weights, nu.weights)
    return GwResult(first + second, first, second, A, coupling, trace,
                    info["starts_used"], info["iterations"], info["method"], info["run_values"])


# --------------------------------------------------------------------------
# grid oracle


@dataclass(frozen=True)
class OracleResult:
    s2: float
    A: np.ndarray
    radius: float
    spacing: float
    tolerance: float


def oracle_grid(mu: DiscreteMeasure, nu: DiscreteMeasure, resolution: int = 201) -> OracleResult:
    """Exhaustive search of 32|A|_F^2 + T_{c_A} over a grid on [-R, R]^(dx*dy).

    R = sqrt(m2(mu) m2(nu)) / 2 contains a minimiser. With spacing h the
    value is within ``Lip * h`` of the infimum, where
    Lip = (64 R + 16 (m2(mu) + m2(nu))) sqrt(dx*dy).
    For uniform weights and equal sizes T_{c_A} is taken as the minimum over
    all permutations, so the oracle does not touch the OT solver.
    """
    _require_centred(mu, "mu")
    _require_centred(nu, "nu")
    k = mu.dim * nu.dim
    if k > 4:
        raise DomainError(f"grid oracle limited to dx*dy <= 4, got {k}")
    if mu.size > 32 or nu.size > 32:
        raise DomainError("grid oracle limited to 32 atoms per side")
    if resolution < 2:
        raise DomainError("resolution must be >= 2")
    m2x, m2y = moments(mu).m2, moments(nu).m2
    R = float(np.sqrt(m2x * m2y) / 2.0)
    axis = np.linspace(-R, R, resolution)
    h = float(axis[1] - axis[0]) if R > 0 else 0.0
    lip = (64.0 * R + 16.0 * (m2x + m2y)) * np.sqrt(k)
    grid = np.stack(np.meshgrid(*([axis] * k), indexing="ij"), axis=-1).reshape(-1, k)
    pen = 32.0 * np.einsum("gk,gk->g", grid, grid)

    X, Y = mu.atoms, nu.atoms
    uniform_square = (mu.size == nu.size and mu.size <= 8
                      and np.allclose(mu.weights, 1.0 / mu.size, atol=0, rtol=1e-12)
                      and np.allclose(nu.weights, 1.0 / nu.size, atol=0, rtol=1e-12))
    if uniform_square:
        n = mu.size
        sx = np.einsum("ij,ij->i", X, X)
        sy = np.einsum("ij,ij->i", Y, Y)
        perms = np.array(list(itertools.permutations(range(n))))
        const = -4.0 * (sx[None, :] * sy[perms]).sum(axis=1) / n           # (P,)
        cross = np.einsum("id,pie->pde", X, Y[perms]).reshape(len(perms), k) / n  # (P, k)
        values = np.empty(len(grid))
        step = max(1, 2_000_000 // len(perms))
        for s in range(0, len(grid), step):
            g = grid[s : s + step]
            values[s : s + step] = pen[s : s + step] + np.min(const[:, None] - 32.0 * cross @ g.T, axis=0)
    else:
        values = np.array([
            pen[i] + solve_ot(mu, nu, cost_cA(X, Y, g.reshape(mu.dim, nu.dim)), method="exact").value
            for i, g in enumerate(grid)
        ])
    best = int(np.argmin(values))
    return OracleResult(float(values[best]), grid[best].reshape(mu.dim, nu.dim), R, h, float(lip * h))


# --------------------------------------------------------------------------
# Procrustes-Wasserstein


def polar_factor(K: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(K)
    return U @ Vt


def procrustes_w2(mu: DiscreteMeasure, nu: DiscreteMeasure, starts: list[np.ndarray] | None = None,
                  tol: float = 1e-12, max_iter: int = 100, n_random: int = 8,
                  seed_path: SeedPath | None = None, exact_only: bool = False) -> OrthogonalAlign:
    """Upper bound on inf_O W2^2(O_# mu, nu) over orthogonal O by alternation.

    Given O, solve OT for |Ox - y|^2; given pi, O is the polar factor of
    int y x^T dpi.
    """
    if mu.dim != nu.dim:
        raise DomainError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    d = mu.dim
    X, Y = mu.atoms, nu.atoms
    if starts is None:
        starts = [np.eye(d)]
        _, Ux = np.linalg.eigh(moments(mu).covariance)
        _, Uy = np.linalg.eigh(moments(nu).covariance)
        for signs in itertools.product((1.0, -1.0), repeat=min(d, 5)):
            s = np.ones(d)
            s[: len(signs)] = signs
            starts.append((Uy * s) @ Ux.T)
        rng = (seed_path or SeedPath(0, "procrustes-starts")).generator(0)
        for _ in range(n_random):
            starts.append(polar_factor(rng.standard_normal((d, d))))
    sx = np.einsum("ij,ij->i", X, X)
    sy = np.einsum("ij,ij->i", Y, Y)
    best = None
    for O in starts:
        O = np.asarray(O, dtype=float)
        trace: list[float] = []
        plan = None
        for it in range(max_iter):
            C = CostMatrix(np.maximum(sx[:, None] + sy[None, :] - 2.0 * (X @ O.T) @ Y.T, 0.0), "custom")
            sol = solve_ot(mu, nu, C, exact_only=exact_only)
            plan = sol.plan
            trace.append(max(sol.value, 0.0))
            if it > 0 and trace[-2] - trace[-1] <= tol * (1.0 + trace[-1]):
                break
            O = polar_factor(Y.T @ plan.T @ X)
        cand = OrthogonalAlign(O, trace[-1], Coupling(plan, mu.weights, nu.weights), tuple(trace))
        if best is None or cand.value < best.value:
            best = cand
    return best


# --------------------------------------------------------------------------
# comparison inequalities


@dataclass(frozen=True)
class ComparisonReport:
    gw: float
    upper_bound: float
    upper_holds: bool
    lower_bound: float
    procrustes_w2: float
    lower_consistent: bool


def comparison_bounds(mu: DiscreteMeasure, nu: DiscreteMeasure, resolution: int = 401,
                      certified_d: float | None = None) -> ComparisonReport:
    """Evaluate both sides of the GW_{2,2} vs W_4 upper bound and the eigenvalue lower bound.

    GW_{2,2} <= 2 * 2^(2.75) * (m4(mu) + m4(nu))^(1/4) * W_4(mu, nu).
    The lower bound uses Procrustes after centring, an upper estimate of the
    infimum over isometries, so it is reported but not enforced.
    """
    if mu.dim != nu.dim:
        raise DomainError("comparison bounds need equal ambient dimension")
    mu_c, nu_c = center(mu), center(nu)
    if certified_d is None:
        certified_d = s1(mu_c, nu_c) + oracle_grid(mu_c, nu_c, resolution).s2
    gw = float(np.sqrt(max(certified_d, 0.0)))
    p = q = 2.0
    const = q * 2.0 ** (q + 1.0 - 1.0 / p + 1.0 / (p * q))
    m_pq = moments(mu).m4 + moments(nu).m4
    _, w4 = wasserstein_cost(mu, nu, p * q)
    upper = const * m_pq ** ((q - 1.0) / (p * q)) * w4
    lam = moments(mu).lambda_min ** 2 + moments(nu).lambda_min ** 2
    proc = procrustes_w2(mu_c, nu_c).value
    lower = (32.0 * lam) ** 0.25 * np.sqrt(proc)
    return ComparisonReport(gw, float(upper), bool(gw <= upper * (1 + 1e-12) + 1e-12),
                            float(lower), float(proc), bool(lower <= gw + 1e-9))


def lipschitz_comparison(mu: DiscreteMeasure, nu: DiscreteMeasure, plan, p: float = 2.0,
                         q: float = 2.0) -> tuple[float, float]:
    """At a fixed coupling return (GW_{p,q} objective^(1/p), q L^(q-1) GW_{p,1} objective^(1/p)).

    L is the larger of the two support diameters.
    """
    L = max(_distance_matrix(mu.atoms).max(), _distance_matrix(nu.atoms).max())
    lhs = gw_objective(mu, nu, plan, p, q) ** (1.0 / p)
    rhs = q * L ** (q - 1.0) * gw_objective(mu, nu, plan, p, 1.0) ** (1.0 / p)
    return float(lhs), float(rhs)
