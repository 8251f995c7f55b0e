"""Exact finite-state verification tools.

Everything here works on small tabular systems: probability vectors and
column-stochastic conditional matrices (entry [i, j] is the probability of
output i given input j, so every column sums to one).  The operations
compute Bayes posteriors, denoising-chain transition matrices, stationary
distributions, a perturbation bound on stationary distributions, the
conditions under which clamping a subset of visible states yields the
renormalized conditional distribution, mutual compatibility of an
encoder/decoder pair, and a connectivity check for local-jump ergodicity.
No Monte-Carlo estimation happens in this module; tolerances are explicit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DegenerateSupportError,
    DomainError,
    ErgodicityError,
    IterationLimitError,
    NumericalError,
    ParameterError,
    ShapeError,
)
from .numkit import RngStream

__all__ = [
    "FiniteSystem",
    "ConditionReport",
    "CompatReport",
    "total_variation",
    "check_transition_matrix",
    "bayes_posterior",
    "dae_transition",
    "stationary",
    "stationary_linear_solve",
    "schweitzer_bound",
    "check_clamp_condition",
    "check_necessity",
    "check_mutual_compatibility",
    "check_local_ergodicity",
    "expected_posterior_nll",
    "posterior_nll_gap_vs_kl",
    "propagate_slice_joint",
    "random_finite_system",
    "random_compatible_pair",
    "random_conditional",
    "random_transition",
]

_COLUMN_TOL = 1e-12
STATIONARY_RESIDUAL = 1e-12
STATIONARY_MAX_ITERS = 10**6


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """Total-variation distance between two probability vectors."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"total_variation shapes differ: {p.shape} vs {q.shape}")
    return 0.5 * float(np.sum(np.abs(p - q)))


def _check_stochastic(name: str, mat: np.ndarray):
    if mat.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {mat.shape}")
    if np.any(mat < -_COLUMN_TOL):
        raise DomainError(f"{name} has negative entries")
    col_sums = mat.sum(axis=0)
    if np.any(np.abs(col_sums - 1.0) > _COLUMN_TOL):
        worst = float(np.max(np.abs(col_sums - 1.0)))
        raise DomainError(f"{name} columns must sum to 1 (worst deviation {worst:.3e})")


def check_transition_matrix(k: np.ndarray) -> np.ndarray:
    """Validate a square column-stochastic matrix and return it as float64."""
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ShapeError(f"transition matrix must be square, got shape {k.shape}")
    _check_stochastic("transition matrix", k)
    return k


@dataclass
class FiniteSystem:
    """A tabular model of a denoising setup on finite state spaces.

    ``p_x`` is the data distribution over visible states.  ``c`` is the
    corruption conditional (corrupted given clean).  Optionally ``f`` is an
    encoder conditional (hidden given visible) and ``g`` a decoder
    conditional (visible given hidden).  All matrices are column-stochastic.
    """

    p_x: np.ndarray
    c: np.ndarray
    f: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None

    def __post_init__(self):
        self.p_x = np.asarray(self.p_x, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        if self.p_x.ndim != 1:
            raise ShapeError(f"p_x must be a vector, got shape {self.p_x.shape}")
        if np.any(self.p_x < 0) or abs(float(self.p_x.sum()) - 1.0) > _COLUMN_TOL:
            raise DomainError("p_x must be a probability vector")
        _check_stochastic("corruption matrix", self.c)
        if self.c.shape[1] != self.n_x:
            raise ShapeError(
                f"corruption matrix has {self.c.shape[1]} columns for {self.n_x} visible states"
            )
        if (self.f is None) != (self.g is None):
            raise ShapeError("f and g must be provided together")
        if self.f is not None:
            self.f = np.asarray(self.f, dtype=np.float64)
            self.g = np.asarray(self.g, dtype=np.float64)
            _check_stochastic("encoder matrix", self.f)
            _check_stochastic("decoder matrix", self.g)
            if self.f.shape != (self.g.shape[1], self.g.shape[0]) or self.g.shape[0] != self.n_x:
                raise ShapeError(
                    f"encoder {self.f.shape} and decoder {self.g.shape} shapes are inconsistent"
                )

    @property
    def n_x(self) -> int:
        return self.p_x.shape[0]

    @property
    def n_h(self) -> Optional[int]:
        return None if self.f is None else self.f.shape[0]


def bayes_posterior(sys: FiniteSystem) -> np.ndarray:
    """Exact posterior over clean states given the corrupted state.

    Entry [x, xt] is p(x) c(xt | x) / p(xt); every corrupted state must be
    reachable, otherwise its posterior column is undefined.
    """
    joint = sys.c * sys.p_x[None, :]
    p_xt = joint.sum(axis=1)
    if np.any(p_xt <= 0.0):
        dead = int(np.argmin(p_xt))
        raise DegenerateSupportError(
            f"corrupted state {dead} is unreachable (probability 0); posterior undefined"
        )
    return joint.T / p_xt[None, :]


def dae_transition(sys: FiniteSystem, posterior: np.ndarray) -> np.ndarray:
    """Transition matrix of the corrupt-then-reconstruct chain.

    Entry [x_next, x] composes corruption from x with reconstruction from
    the corrupted state; the result is column-stochastic by construction.
    """
    posterior = np.asarray(posterior, dtype=np.float64)
    _check_stochastic("reconstruction matrix", posterior)
    if posterior.shape[1] != sys.c.shape[0]:
        raise ShapeError(
            f"reconstruction matrix {posterior.shape} does not compose with corruption {sys.c.shape}"
        )
    return posterior @ sys.c


def _require_ergodic(k: np.ndarray):
    n = k.shape[0]
    power = np.eye(n)
    reach = np.zeros((n, n))
    for _ in range(n):
        power = power @ k
        reach += power
    if not np.all(reach > 0.0):
        raise ErgodicityError("transition matrix is reducible: some state pair never communicates")
    if not np.any(np.diag(k) > 0.0):
        raise ErgodicityError(
            "transition matrix may be periodic: no state returns to itself in one step"
        )


def stationary(k: np.ndarray) -> np.ndarray:
    """Stationary distribution of an ergodic column-stochastic matrix.

    Uses power iteration to an l1 residual below 1e-12.  Reducibility and
    (conservatively) periodicity are rejected first: the chain must let every
    state pair communicate within n steps and must have at least one state
    with a positive self-transition.
    """
    k = check_transition_matrix(k)
    _require_ergodic(k)
    n = k.shape[0]
    v = np.full(n, 1.0 / n)
    for _ in range(STATIONARY_MAX_ITERS):
        w = k @ v
        residual = float(np.sum(np.abs(w - v)))
        v = w
        if residual < STATIONARY_RESIDUAL:
            return v / float(v.sum())
    raise IterationLimitError(
        f"power iteration did not reach residual {STATIONARY_RESIDUAL:g} "
        f"within {STATIONARY_MAX_ITERS} iterations (last residual {residual:.3e})"
    )


def stationary_linear_solve(k: np.ndarray) -> np.ndarray:
    """Stationary distribution via a direct linear solve (cross-check route).

    Solves (K - I) pi = 0 with the normalization row appended, by least
    squares on the stacked system.
    """
    k = check_transition_matrix(k)
    n = k.shape[0]
    a = np.vstack([k - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    return pi


def schweitzer_bound(k: np.ndarray, k_tilde: np.ndarray) -> tuple[float, float]:
    """Perturbation bound on stationary distributions.

    Returns (lhs, rhs) with lhs the l1 distance between the two stationary
    distributions and rhs = |Z| * |K - K_tilde| where Z is the inverse
    fundamental matrix (I - K + C)^-1, C having every column equal to the
    unperturbed stationary distribution.  The matrix norm is the maximum
    absolute column sum: for column-stochastic transition matrices this is
    the orientation under which the inequality provably holds (it is the
    transpose of the row-sum norm used with row-stochastic matrices).
    """
    k = check_transition_matrix(k)
    k_tilde = check_transition_matrix(k_tilde)
    if k.shape != k_tilde.shape:
        raise ShapeError(f"transition matrices differ in shape: {k.shape} vs {k_tilde.shape}")
    pi = stationary(k)
    pi_tilde = stationary(k_tilde)
    n = k.shape[0]
    c_mat = np.tile(pi[:, None], (1, n))
    try:
        z = np.linalg.inv(np.eye(n) - k + c_mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"fundamental matrix is singular (near-degenerate chain): {exc}")
    col_norm = lambda m: float(np.max(np.abs(m).sum(axis=0)))
    lhs = float(np.sum(np.abs(pi - pi_tilde)))
    rhs = col_norm(z) * col_norm(k - k_tilde)
    return lhs, rhs


def _gibbs_marginals(f: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stationary visible and hidden marginals of the alternating chain."""
    pi_x = stationary(g @ f)
    pi_h = f @ pi_x
    return pi_x, pi_h


@dataclass
class ConditionReport:
    """Result of checking the clamping-invariance condition on one subset."""

    holds: bool
    max_violation: float
    clamped_stationary: np.ndarray
    restricted_conditional: np.ndarray
    subset: np.ndarray


def _validate_subset(n_x: int, subset) -> np.ndarray:
    subset = np.unique(np.asarray(subset, dtype=np.int64))
    if subset.size == 0:
        raise DomainError("subset must be nonempty")
    if subset.min() < 0 or subset.max() >= n_x:
        raise DomainError(f"subset indices must lie in 0..{n_x - 1}")
    return subset


def check_clamp_condition(sys: FiniteSystem, subset) -> ConditionReport:
    """Check whether clamping the visible state into ``subset`` is exact.

    The condition compares, for every hidden state, the hidden distribution
    induced by encoding the renormalized restricted visible distribution
    against the hidden conditional of the chain's stationary joint given the
    visible state lying in the subset.  It holds when the largest absolute
    difference is below 1e-10; when it holds, the clamped chain's stationary
    distribution equals the renormalized conditional.  The report also
    carries both distributions computed independently: the stationary
    distribution of the explicitly built clamped transition matrix, and the
    restriction of the unclamped stationary distribution.
    """
    if sys.f is None:
        raise DomainError("clamping checks need encoder f and decoder g")
    subset = _validate_subset(sys.n_x, subset)
    f, g = sys.f, sys.g
    pi_x, pi_h = _gibbs_marginals(f, g)
    mass = float(pi_x[subset].sum())
    if mass <= 0.0:
        raise DomainError("subset has zero stationary mass")
    restricted = pi_x[subset] / mass
    cond_x = np.zeros(sys.n_x)
    cond_x[subset] = restricted
    lhs = f @ cond_x
    # Stationary joint of the chain slices: visible is decoded from hidden,
    # so joint[x, h] = g[x, h] * pi_h[h].
    joint = g * pi_h[None, :]
    rhs = joint[subset, :].sum(axis=0) / mass
    max_violation = float(np.max(np.abs(lhs - rhs)))

    g_sub = g[subset, :]
    col_mass = g_sub.sum(axis=0)
    if np.any(col_mass <= 0.0):
        dead = int(np.argmin(col_mass))
        raise DegenerateSupportError(
            f"decoder assigns no mass to the clamped set from hidden state {dead}"
        )
    g_clamped = g_sub / col_mass[None, :]
    clamped_transition = g_clamped @ f[:, subset]
    clamped_pi = stationary(clamped_transition)
    return ConditionReport(
        holds=max_violation < 1e-10,
        max_violation=max_violation,
        clamped_stationary=clamped_pi,
        restricted_conditional=restricted,
        subset=subset,
    )


def _rank_pivoted(mat: np.ndarray, tol: float) -> int:
    """Rank by Gaussian elimination with partial pivoting.

    The matrix is scaled by its largest absolute entry first, so ``tol`` is
    relative to that scale.
    """
    a = np.array(mat, dtype=np.float64, copy=True)
    m, n = a.shape
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale == 0.0:
        return 0
    a /= scale
    rank = 0
    row = 0
    for col in range(n):
        if row >= m:
            break
        piv = row + int(np.argmax(np.abs(a[row:, col])))
        if abs(a[piv, col]) <= tol:
            continue
        if piv != row:
            a[[row, piv]] = a[[piv, row]]
        a[row + 1 :, col:] -= np.outer(a[row + 1 :, col] / a[row, col], a[row, col:])
        rank += 1
        row += 1
    return rank


def check_necessity(sys: FiniteSystem, subset) -> bool:
    """Whether the clamping condition is also necessary on this subset.

    Necessity requires the decoder columns restricted to the subset to be
    linearly independent (rank equal to the number of hidden states, judged
    by pivoted elimination at tolerance 1e-10).  When they are, a clamped
    stationary distribution matching the renormalized conditional forces the
    invariance condition to hold; that implication is self-checked here.
    Returns False with a warning when the restricted columns are dependent,
    in which case necessity is not applicable.
    """
    if sys.f is None:
        raise DomainError("necessity checks need encoder f and decoder g")
    subset = _validate_subset(sys.n_x, subset)
    g_sub = sys.g[subset, :]
    independent = _rank_pivoted(g_sub, 1e-10) == sys.n_h
    if not independent:
        warnings.warn(
            "restricted decoder columns are linearly dependent; the clamping "
            "condition is sufficient but not necessary on this subset",
            stacklevel=2,
        )
        return False
    report = check_clamp_condition(sys, subset)
    match = total_variation(report.clamped_stationary, report.restricted_conditional) < 1e-8
    if match and not report.holds:
        raise NumericalError(
            "inconsistent clamping diagnosis: the clamped stationary matches the "
            "restricted conditional but the invariance equation fails despite "
            "independent decoder columns"
        )
    return True


@dataclass
class CompatReport:
    """Result of testing whether an encoder/decoder pair shares one joint."""

    compatible: bool
    joint: Optional[np.ndarray]
    residual: float


def check_mutual_compatibility(f: np.ndarray, g: np.ndarray) -> CompatReport:
    """Test whether f and g are the two conditionals of a single joint.

    Builds the candidate joint from the alternating chain's stationary
    hidden marginal (joint[x, h] = g[x, h] pi_h[h], which reproduces g by
    construction) and measures how far its other conditional is from f.
    Compatible means that residual is below 1e-10; the recovered joint is
    returned only in that case.
    """
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    _check_stochastic("encoder matrix", f)
    _check_stochastic("decoder matrix", g)
    if f.shape != (g.shape[1], g.shape[0]):
        raise ShapeError(f"encoder {f.shape} and decoder {g.shape} shapes are inconsistent")
    pi_x, pi_h = _gibbs_marginals(f, g)
    joint = g * pi_h[None, :]
    marg_x = joint.sum(axis=1)
    f_implied = (joint / marg_x[:, None]).T
    residual = float(np.max(np.abs(f_implied - f)))
    compatible = residual < 1e-10
    return CompatReport(compatible=compatible, joint=joint if compatible else None, residual=residual)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[ri] = rj


def check_local_ergodicity(points, epsilon: float) -> bool:
    """Whether bounded local jumps can reach every point from every other.

    Builds the graph connecting points within sup-norm distance ``epsilon``
    and reports whether it has a single connected component.
    """
    if epsilon <= 0.0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if n == 0:
        raise ParameterError("points must be nonempty")
    uf = _UnionFind(n)
    for i in range(n):
        dist = np.max(np.abs(pts[i + 1 :] - pts[i]), axis=1) if i + 1 < n else np.empty(0)
        for off in np.nonzero(dist <= epsilon)[0]:
            uf.union(i, i + 1 + int(off))
    root = uf.find(0)
    return all(uf.find(i) == root for i in range(n))


def expected_posterior_nll(sys: FiniteSystem, candidate: np.ndarray) -> float:
    """Expected negative log-likelihood of clean states under a candidate
    reconstruction conditional, with corrupted states drawn by the model."""
    candidate = np.asarray(candidate, dtype=np.float64)
    _check_stochastic("candidate reconstruction", candidate)
    joint = sys.c * sys.p_x[None, :]  # [xt, x]
    with np.errstate(divide="ignore"):
        log_q = np.log(candidate)  # [x, xt]
    contrib = joint.T * log_q
    if np.any(np.isneginf(log_q) & (joint.T > 0)):
        return float("inf")
    return -float(np.sum(np.where(joint.T > 0, contrib, 0.0)))


def posterior_nll_gap_vs_kl(sys: FiniteSystem, candidate: np.ndarray) -> tuple[float, float]:
    """Excess expected nll of a candidate over the exact posterior, and the
    corruption-averaged KL divergence from the posterior to the candidate.

    The two quantities are equal for any candidate, which is what makes the
    expected nll minimal exactly at the posterior.
    """
    post = bayes_posterior(sys)
    gap = expected_posterior_nll(sys, candidate) - expected_posterior_nll(sys, post)
    p_xt = (sys.c * sys.p_x[None, :]).sum(axis=1)
    candidate = np.asarray(candidate, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(post > 0, post / np.where(candidate > 0, candidate, 1.0), 1.0)
        kl_cols = np.sum(np.where(post > 0, post * np.log(ratio), 0.0), axis=0)
    expected_kl = float(np.sum(p_xt * kl_cols))
    return gap, expected_kl


def propagate_slice_joint(
    f: np.ndarray, g: np.ndarray, p_x_init: np.ndarray, steps: int
) -> list[np.ndarray]:
    """Exact joint distribution of (visible, hidden) after each chain step.

    Each step encodes the current visible marginal through f and decodes
    through g; the returned joints are over (visible, hidden) with the
    hidden state being the one that produced the visible sample.
    """
    p_x = np.asarray(p_x_init, dtype=np.float64)
    joints = []
    for _ in range(steps):
        p_h = f @ p_x
        joint = g * p_h[None, :]
        joints.append(joint)
        p_x = joint.sum(axis=1)
    return joints


def _positive_normalized(rng: RngStream, shape, floor: float = 0.05) -> np.ndarray:
    mat = rng.uniform(shape) + floor
    return mat / mat.sum(axis=0, keepdims=True)


def random_finite_system(rng: RngStream, n_x: int, n_xt: Optional[int] = None) -> FiniteSystem:
    """A random strictly positive system: data distribution plus corruption."""
    n_xt = n_x if n_xt is None else n_xt
    p = rng.uniform(n_x) + 0.05
    return FiniteSystem(p_x=p / p.sum(), c=_positive_normalized(rng, (n_xt, n_x)))


def random_conditional(rng: RngStream, n_out: int, n_in: int) -> np.ndarray:
    """A random strictly positive column-stochastic matrix."""
    return _positive_normalized(rng, (n_out, n_in))


def random_transition(rng: RngStream, n: int) -> np.ndarray:
    """A random strictly positive (hence ergodic) transition matrix."""
    return _positive_normalized(rng, (n, n))


def random_compatible_pair(
    rng: RngStream, n_x: int, n_h: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encoder/decoder conditionals carved from one random positive joint.

    Returns (f, g, joint) with f and g the exact conditionals of the joint,
    so they are mutually compatible by construction.
    """
    joint = rng.uniform((n_x, n_h)) + 0.05
    joint /= joint.sum()
    pi_x = joint.sum(axis=1)
    pi_h = joint.sum(axis=0)
    f = (joint / pi_x[:, None]).T
    g = joint / pi_h[None, :]
    return f, g, joint
