"""Discrete measures, samplers and explicit point-set constructions.

Every random draw goes through :class:`SeedPath`, so a sample is a pure
function of ``(global seed, scenario id, replication, stream)`` and does not
depend on the order in which replications are executed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from .errors import ConfigError, ConstructionError, DomainError

FAMILIES = (
    "uniform-ball",
    "uniform-cube",
    "gaussian",
    "two-point",
    "pareto-fourth",
    "finite-support",
    "packing-uniform",
)

# families whose population measure is finitely supported
FINITE_FAMILIES = ("two-point", "finite-support", "packing-uniform")


class SeedPath(NamedTuple):
    """Coordinates of a random stream."""

    seed: int
    scenario: str = ""
    replication: int = 0

    def spawn_key(self, stream: int = 0) -> tuple[int, ...]:
        digest = hashlib.sha256(self.scenario.encode("utf-8")).digest()
        words = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))
        return words + (int(self.replication), int(stream))

    def generator(self, stream: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.spawn_key(stream))
        return np.random.Generator(np.random.PCG64(ss))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure on R^d.

    ``atoms`` has shape (n, d) and ``weights`` shape (n,). Both arrays are
    copied and frozen on construction.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float, copy=True)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        weights = np.array(self.weights, dtype=float, copy=True).reshape(-1)
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise DomainError(f"atoms must be a non-empty (n, d) array, got shape {atoms.shape}")
        if weights.shape[0] != atoms.shape[0]:
            raise DomainError(f"{atoms.shape[0]} atoms but {weights.shape[0]} weights")
        if not np.all(np.isfinite(atoms)):
            raise DomainError("atoms must be finite")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise DomainError("weights must be finite and nonnegative")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise DomainError(f"weights sum to {math.fsum(weights)!r}, not 1")
        object.__setattr__(self, "atoms", _readonly(atoms))
        object.__setattr__(self, "weights", _readonly(weights))

    @classmethod
    def uniform(cls, atoms) -> DiscreteMeasure:
        atoms = np.asarray(atoms, dtype=float)
        n = atoms.shape[0]
        return cls(atoms, np.full(n, 1.0 / n))

    @classmethod
    def normalized(cls, atoms, weights) -> DiscreteMeasure:
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not total > 0:
            raise DomainError("weights must have positive total mass")
        return cls(atoms, w / total)

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def merged(self) -> DiscreteMeasure:
        """Collapse repeated atoms, summing their weights (atoms sorted lexicographically)."""
        uniq, inverse = np.unique(self.atoms, axis=0, return_inverse=True)
        if uniq.shape[0] == self.size:
            return self
        w = np.bincount(inverse.reshape(-1), weights=self.weights, minlength=uniq.shape[0])
        return DiscreteMeasure(uniq, w / w.sum())

    def transformed(self, matrix=None, shift=None) -> DiscreteMeasure:
        """Push forward through x -> matrix @ x + shift."""
        atoms = self.atoms
        if matrix is not None:
            atoms = atoms @ np.asarray(matrix, dtype=float).T
        if shift is not None:
            atoms = atoms + np.asarray(shift, dtype=float)
        return DiscreteMeasure(atoms, self.weights)

    def scaled(self, factor: float) -> DiscreteMeasure:
        return DiscreteMeasure(self.atoms * factor, self.weights)

    def __repr__(self) -> str:
        return f"DiscreteMeasure(n={self.size}, d={self.dim})"


# --------------------------------------------------------------------------
# sampler specs


@dataclass(frozen=True)
class SamplerSpec:
    """A distribution family with its parameters.

    ``params`` keys by family:

    ========================  ==========================================
    uniform-ball              ``radius`` (default 1)
    uniform-cube              ``side`` (default 1), centred at the origin
    gaussian                  ``sigma`` (scalar, default 1) or ``cov``
    two-point                 ``eps`` in [0, 1/2); d must be 1
    pareto-fourth             ``alpha`` in (1, 2); d must be 1
    finite-support            ``atoms`` (l x d), ``weights`` (length l)
    packing-uniform           ``k`` >= d + 1
    ========================  ==========================================
    """

    family: str
    dim: int = 1
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        fam, d, p = self.family, self.dim, self.params
        if fam not in FAMILIES:
            raise ConfigError(f"unknown family {fam!r}; expected one of {', '.join(FAMILIES)}", "family")
        if not isinstance(d, (int, np.integer)) or isinstance(d, bool) or d < 1:
            raise ConfigError(f"must be a positive integer, got {d!r}", "dim")
        allowed = {
            "uniform-ball": {"radius"},
            "uniform-cube": {"side"},
            "gaussian": {"sigma", "cov"},
            "two-point": {"eps"},
            "pareto-fourth": {"alpha"},
            "finite-support": {"atoms", "weights"},
            "packing-uniform": {"k", "gamma"},
        }[fam]
        extra = set(p) - allowed
        if extra:
            raise ConfigError(f"unknown parameter(s) {sorted(extra)} for family {fam}", "params")

        def positive(key, default):
            v = p.get(key, default)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                raise ConfigError(f"must be a positive number, got {v!r}", f"params.{key}")

        if fam == "uniform-ball":
            positive("radius", 1.0)
        elif fam == "uniform-cube":
            positive("side", 1.0)
        elif fam == "gaussian":
            if "cov" in p and "sigma" in p:
                raise ConfigError("give either sigma or cov, not both", "params")
            if "cov" in p:
                cov = np.asarray(p["cov"], dtype=float)
                if cov.shape != (d, d) or not np.allclose(cov, cov.T):
                    raise ConfigError(f"must be a symmetric {d}x{d} matrix", "params.cov")
                if np.linalg.eigvalsh(cov).min() < -1e-12:
                    raise ConfigError("must be positive semidefinite", "params.cov")
            else:
                positive("sigma", 1.0)
        elif fam == "two-point":
            eps = p.get("eps", 0.0)
            if not isinstance(eps, (int, float)) or not 0.0 <= eps < 0.5:
                raise ConfigError(f"eps must lie in [0, 1/2), got {eps!r}", "params.eps")
            if d != 1:
                raise ConfigError("two-point family lives on the real line (dim 1)", "dim")
        elif fam == "pareto-fourth":
            alpha = p.get("alpha")
            if not isinstance(alpha, (int, float)) or isinstance(alpha, bool) or not 1.0 < alpha < 2.0:
                raise ConfigError(f"alpha must lie in (1, 2), got {alpha!r}", "params.alpha")
            if d != 1:
                raise ConfigError("pareto-fourth family lives on the real line (dim 1)", "dim")
        elif fam == "finite-support":
            if "atoms" not in p or "weights" not in p:
                raise ConfigError("finite-support needs atoms and weights", "params")
            atoms = np.asarray(p["atoms"], dtype=float)
            if atoms.ndim == 1:
                atoms = atoms[:, None]
            w = np.asarray(p["weights"], dtype=float)
            if atoms.ndim != 2 or atoms.shape[1] != d:
                raise ConfigError(f"atoms must have shape (l, {d})", "params.atoms")
            if w.shape != (atoms.shape[0],):
                raise ConfigError("one weight per atom required", "params.weights")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ConfigError("weights must be nonnegative and sum to 1", "params.weights")
        elif fam == "packing-uniform":
            k = p.get("k")
            if not isinstance(k, int) or isinstance(k, bool) or k < d + 1:
                raise ConfigError(f"k must be an integer >= dim + 1 = {d + 1}, got {k!r}", "params.k")

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, "dim": int(self.dim), "params": _plain(self.params)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SamplerSpec:
        unknown = set(data) - {"family", "dim", "params"}
        if unknown:
            raise ConfigError(f"unknown key(s) {sorted(unknown)}", "sampler")
        return cls(data.get("family", ""), data.get("dim", 1), dict(data.get("params") or {}))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def two_point(eps: float) -> DiscreteMeasure:
    """(1/2 + eps) at -1 and (1/2 - eps) at +1."""
    return DiscreteMeasure(np.array([[-1.0], [1.0]]), np.array([0.5 + eps, 0.5 - eps]))


def population(spec: SamplerSpec, seed_path: SeedPath | None = None) -> DiscreteMeasure:
    """Exact population measure for finitely supported families."""
    p = spec.params
    if spec.family == "two-point":
        return two_point(float(p.get("eps", 0.0)))
    if spec.family == "finite-support":
        return DiscreteMeasure(np.asarray(p["atoms"], dtype=float).reshape(-1, spec.dim), p["weights"])
    if spec.family == "packing-uniform":
        seed_path = seed_path or SeedPath(0)
        return packing_construction(p["k"], spec.dim, seed_path, gamma=p.get("gamma")).measure
    raise DomainError(f"family {spec.family} has no finite population representation")


def pareto_fourth_inverse_cdf(u, alpha: float):
    """|X| from a uniform draw: P(|X| >= x) = x^(-4 alpha) for x >= 1."""
    if not 1.0 < alpha < 2.0:
        raise ConfigError(f"alpha must lie in (1, 2), got {alpha!r}", "params.alpha")
    u = np.asarray(u, dtype=float)
    return u ** (-1.0 / (4.0 * alpha))


def sample(spec: SamplerSpec, n: int, seed_path: SeedPath, stream: int = 0) -> DiscreteMeasure:
    """Empirical measure of ``n`` i.i.d. draws (uniform weights 1/n)."""
    if n < 1:
        raise ConfigError(f"sample size must be >= 1, got {n}", "n")
    rng = seed_path.generator(stream)
    d, p = spec.dim, spec.params
    fam = spec.family
    if fam == "uniform-ball":
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        pts = g * (float(p.get("radius", 1.0)) * rng.random((n, 1)) ** (1.0 / d))
    elif fam == "uniform-cube":
        pts = (rng.random((n, d)) - 0.5) * float(p.get("side", 1.0))
    elif fam == "gaussian":
        z = rng.standard_normal((n, d))
        if "cov" in p:
            cov = np.asarray(p["cov"], dtype=float)
            vals, vecs = np.linalg.eigh(cov)
            pts = z @ (vecs * np.sqrt(np.clip(vals, 0.0, None))).T
        else:
            pts = z * float(p.get("sigma", 1.0))
    elif fam == "pareto-fourth":
        u = 1.0 - rng.random(n)  # (0, 1]
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        pts = (sign * pareto_fourth_inverse_cdf(u, float(p["alpha"])))[:, None]
    else:
        base = population(spec, SeedPath(seed_path.seed, seed_path.scenario + "/population", 0))
        idx = rng.choice(base.size, size=n, p=base.weights)
        pts = base.atoms[idx]
    return DiscreteMeasure.uniform(pts)


# --------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class MomentSummary:
    m2: float
    m4: float
    m8: float
    m_2q: float
    mean: np.ndarray
    covariance: np.ndarray
    lambda_min: float


def moments(m: DiscreteMeasure, q: float = 2.0) -> MomentSummary:
    """Weighted moments ``m_k = sum_i w_i |x_i|^k`` plus mean and covariance."""
    sq = np.einsum("ij,ij->i", m.atoms, m.atoms)
    w = m.weights
    mean = w @ m.atoms
    centred = m.atoms - mean
    cov = (centred * w[:, None]).T @ centred
    cov = 0.5 * (cov + cov.T)
    return MomentSummary(
        m2=float(w @ sq),
        m4=float(w @ sq**2),
        m8=float(w @ sq**4),
        m_2q=float(w @ sq**q),
        mean=mean,
        covariance=cov,
        lambda_min=float(np.linalg.eigvalsh(cov)[0]),
    )


def center(m: DiscreteMeasure) -> DiscreteMeasure:
    """Translate so the weighted mean is zero. Already-centred input is returned unchanged."""
    mean = m.mean()
    scale = max(1.0, float(np.abs(m.atoms).max()))
    if np.all(np.abs(mean) <= 32 * np.finfo(float).eps * scale):
        return m
    return DiscreteMeasure(m.atoms - mean, m.weights)


# --------------------------------------------------------------------------
# packing construction


@dataclass(frozen=True)
class Packing:
    measure: DiscreteMeasure
    gamma: float
    min_distance: float
    lambda_min: float


def _greedy_pack(proposals: np.ndarray, k: int, radius: float) -> np.ndarray:
    accepted = np.empty((k, proposals.shape[1]))
    count = 0
    r2 = radius * radius
    for x in proposals:
        if count:
            diff = accepted[:count] - x
            if np.einsum("ij,ij->i", diff, diff).min() <= r2:
                continue
        accepted[count] = x
        count += 1
        if count == k:
            break
    return accepted[:count]


def packing_construction(
    k: int,
    d: int,
    seed_path: SeedPath,
    gamma: float | None = None,
    budget_factor: int = 200,
    bisection_steps: int = 40,
) -> Packing:
    """Well-separated centred point set with covariance bounded away from zero.

    Points are proposed uniformly in the ball of radius 1/3 and accepted when
    farther than ``gamma * k**(-1/d)`` from all accepted points. Without an
    explicit ``gamma`` the largest value that still places ``k`` points within
    ``budget_factor * k`` proposals is found by bisection. The result is
    recentred, so atoms lie in the ball of radius 2/3.
    """
    if d < 1 or k < d + 1:
        raise ConfigError(f"need d >= 1 and k >= d + 1, got k={k}, d={d}", "k")
    rng = seed_path.generator(0)
    total = budget_factor * k
    g = rng.standard_normal((total, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    proposals = g * (rng.random((total, 1)) ** (1.0 / d) / 3.0)
    scale = k ** (-1.0 / d)

    if gamma is not None:
        pts = _greedy_pack(proposals, k, gamma * scale)
        if len(pts) < k:
            raise ConstructionError(f"could not place {k} points with gamma={gamma}", len(pts))
    else:
        lo, hi = 0.0, (2.0 / 3.0) / scale
        pts = _greedy_pack(proposals, k, 0.0)
        for _ in range(bisection_steps):
            mid = 0.5 * (lo + hi)
            trial = _greedy_pack(proposals, k, mid * scale)
            if len(trial) == k:
                lo, pts = mid, trial
            else:
                hi = mid
        gamma = lo
        if len(pts) < k:
            raise ConstructionError(f"could not place {k} distinct points", len(pts))

    pts = pts - pts.mean(axis=0)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(dist, np.inf)
    measure = DiscreteMeasure.uniform(pts)
    return Packing(measure, float(gamma), float(dist.min()), moments(measure).lambda_min)


# --------------------------------------------------------------------------
# divergences on a shared finite support


def _aligned_weights(p: DiscreteMeasure, q: DiscreteMeasure) -> tuple[np.ndarray, np.ndarray]:
    if p.dim != q.dim:
        raise DomainError("measures live in different dimensions")
    pm, qm = p.merged(), q.merged()
    index = {tuple(a): i for i, a in enumerate(qm.atoms.tolist())}
    if pm.size != qm.size or any(tuple(a) not in index for a in pm.atoms.tolist()):
        raise DomainError("measures are not supported on the same atom set")
    qw = np.empty(pm.size)
    for i, a in enumerate(pm.atoms.tolist()):
        qw[i] = qm.weights[index[tuple(a)]]
    return np.asarray(pm.weights), qw


def tv_distance(p: DiscreteMeasure, q: DiscreteMeasure) -> float:
    pw, qw = _aligned_weights(p, q)
    return 0.5 * float(np.abs(pw - qw).sum())


def chi2_divergence(p: DiscreteMeasure, q: DiscreteMeasure) -> float:
    """sum_i (p_i - q_i)^2 / q_i; ``inf`` when p is not absolutely continuous w.r.t. q."""
    pw, qw = _aligned_weights(p, q)
    zero = qw == 0
    if np.any(pw[zero] > 0):
        return math.inf
    keep = ~zero
    return float(((pw[keep] - qw[keep]) ** 2 / qw[keep]).sum())
