"""
actiongraphpy.oracles
---------------------

Analytic and brute-force checks of the coordination claims the learners are measured
against.

Features
- Independent-execution bounds: Top-K at p = K/N (plus a grid sweep confirming the
  maximum) and exactly-one at p = 1/N.
- Forward-KL projection of a dense joint distribution onto product policies
  (marginals, verified by a coordinate refinement that must not improve the KL).
- Third-order interaction of a 3-bit table and least-squares pairwise fits, showing
  parity is not a sum of unary and pairwise utilities.
- Greedy-vs-joint maximization on a two-agent value decomposition, the latent-matching
  optimum, and the centralized (brute-force) success rate of any built-in game.

Conventions: natural logarithms everywhere; 0 * log(0 / q) := 0. All functions are pure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import *

import numpy as np

from .environments import CoordinationGame, score_joint_action
from .exceptions import OracleCheckError, OracleRangeError, OracleSizeError
from .types_models import EnvSpec, GameName

logger = logging.getLogger(__name__)

__all__ = [
    "JointDistribution", "ProductPolicy", "PairwiseDecomposition", "KLProjection", "GreedyComparison",
    "LatentOptimum", "independent_topk_curve", "independent_topk_bound", "sweep_confirms_maximum",
    "kl_divergence", "best_product_kl", "closed_form_kl", "parity_delta", "pairwise_fit_residual",
    "greedy_vs_joint", "latent_matching_objective", "latent_matching_optimum", "independent_exactly_one_bound",
    "brute_force_joint_success", "smooth_distribution", "product_success",
]

MAX_DENSE_JOINT = 2 ** 20
MAX_FIT_AGENTS = 12
MAX_BRUTE_FORCE_AGENTS = 12
SUM_TOL = 1e-12
REFINE_TOL = 1e-9


@dataclass
class JointDistribution:
    """
    Dense probability table over A_1 x ... x A_N (axis i = agent i's action).

    Raises
    ------
    OracleRangeError
        Negative entries or total mass off 1 by more than 1e-12.
    """
    table: np.ndarray

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.float64)
        if self.table.ndim < 1:
            raise OracleRangeError("joint distribution needs at least one agent axis")
        if (self.table < 0).any():
            raise OracleRangeError("joint distribution has negative entries")
        total = float(self.table.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise OracleRangeError(f"joint distribution sums to {total!r}, not 1", detail={"sum": total})

    @property
    def num_agents(self) -> int:
        return int(self.table.ndim)

    @property
    def action_counts(self) -> Tuple[int, ...]:
        return tuple(int(s) for s in self.table.shape)

    def marginals(self) -> List[np.ndarray]:
        axes = range(self.num_agents)
        return [self.table.sum(axis=tuple(j for j in axes if j != i)) for i in axes]

    @classmethod
    def uniform_over(cls, action_counts: Sequence[int], support: Iterable[Sequence[int]]) -> "JointDistribution":
        table = np.zeros(tuple(action_counts))
        atoms = [tuple(int(x) for x in a) for a in support]
        if not atoms:
            raise OracleRangeError("support must be nonempty")
        for a in atoms:
            table[a] = 1.0
        return cls(table / table.sum())

    @classmethod
    def uniform_one_hot(cls, n: int) -> "JointDistribution":
        """Uniform over the N joint actions in which exactly one binary agent plays 1."""
        return cls.uniform_over([2] * n, (tuple(int(i == j) for j in range(n)) for i in range(n)))

    def __repr__(self) -> str:
        return f"<JointDistribution counts={self.action_counts}>"


@dataclass
class ProductPolicy:
    """Independent per-agent marginals p_i; the joint is their outer product."""
    marginals: List[np.ndarray]

    def __post_init__(self):
        self.marginals = [np.asarray(p, dtype=np.float64) for p in self.marginals]
        for i, p in enumerate(self.marginals):
            if p.ndim != 1 or (p < 0).any() or abs(float(p.sum()) - 1.0) > 1e-9:
                raise OracleRangeError(f"marginal {i} is not a probability vector: {p.tolist()}")

    @property
    def num_agents(self) -> int:
        return len(self.marginals)

    def joint(self) -> np.ndarray:
        table = np.ones(())
        for p in self.marginals:
            table = np.multiply.outer(table, p)
        return table

    @classmethod
    def bernoulli(cls, n: int, p: float) -> "ProductPolicy":
        """N binary agents, each playing 1 with probability p."""
        return cls([np.array([1.0 - p, p]) for _ in range(n)])


@dataclass
class PairwiseDecomposition:
    """
    c + sum_i u_i(a_i) + sum_{i<j} u_ij(a_i, a_j) over binary actions.

    `unary` has shape (N, 2); `pairwise[(i, j)]` has shape (2, 2) for i < j.
    """
    constant: float
    unary: np.ndarray
    pairwise: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    @property
    def num_agents(self) -> int:
        return int(self.unary.shape[0])

    def __call__(self, joint_action: Sequence[int]) -> float:
        a = tuple(int(x) for x in joint_action)
        value = self.constant + sum(self.unary[i, a[i]] for i in range(self.num_agents))
        for (i, j), table in self.pairwise.items():
            value += table[a[i], a[j]]
        return float(value)

    def table(self) -> np.ndarray:
        n = self.num_agents
        out = np.zeros((2,) * n)
        for a in product((0, 1), repeat=n):
            out[a] = self(a)
        return out

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "PairwiseDecomposition":
        return cls(constant=float(rng.normal()), unary=rng.normal(size=(n, 2)),
                   pairwise={(i, j): rng.normal(size=(2, 2)) for i, j in combinations(range(n), 2)})


class KLProjection(NamedTuple):
    product: ProductPolicy
    kl: float


class GreedyComparison(NamedTuple):
    greedy: Tuple[int, int]
    optimal: Tuple[int, int]
    match: bool


class LatentOptimum(NamedTuple):
    p: float
    q: float
    value: float


def _table_of(fn_or_table: Any, n: int) -> np.ndarray:
    if callable(fn_or_table):
        out = np.zeros((2,) * n)
        for a in product((0, 1), repeat=n):
            out[a] = float(fn_or_table(a))
        return out
    table = np.asarray(fn_or_table, dtype=np.float64)
    if table.shape != (2,) * n:
        raise OracleRangeError(f"table must have shape {(2,) * n}, got {table.shape}")
    return table


# Independent-execution bounds
def independent_topk_curve(n: int, k: int, p: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """C(N, K) p^K (1-p)^(N-K): success of N independent Bernoulli(p) agents on Top-K."""
    p = np.asarray(p, dtype=np.float64)
    out = math.comb(n, k) * p ** k * (1.0 - p) ** (n - k)
    return float(out) if out.ndim == 0 else out


def independent_topk_bound(n: int, k: int) -> float:
    """
    Best success probability of independent execution on Top-K, attained at p* = K/N.

    Raises
    ------
    OracleRangeError
        Unless 1 <= K <= N <= 30.

    Example
    -------
    >>> independent_topk_bound(5, 2)
    0.3456
    """
    if not (1 <= k <= n <= 30):
        raise OracleRangeError(f"need 1 <= K <= N <= 30, got N={n}, K={k}", detail={"N": n, "K": k})
    p = k / n
    return math.comb(n, k) * p ** k * (1.0 - p) ** (n - k)


def sweep_confirms_maximum(n: int, k: int, grid: int = 10_001) -> bool:
    """True iff no p on an evenly spaced grid over [0, 1] beats p = K/N by more than 1e-12."""
    if grid < 2:
        raise OracleRangeError(f"grid needs at least 2 points, got {grid}")
    best = independent_topk_bound(n, k)
    values = independent_topk_curve(n, k, np.linspace(0.0, 1.0, grid))
    return bool(np.max(values) <= best + 1e-12)


def independent_exactly_one_bound(n: int, grid: int = 10_001) -> float:
    """
    max_p N p (1-p)^(N-1) = (1 - 1/N)^(N-1), attained at p = 1/N.

    Raises
    ------
    OracleCheckError
        A grid point beats the closed form by more than 1e-12.
    """
    if n < 1:
        raise OracleRangeError(f"N must be positive, got {n}")
    value = (1.0 - 1.0 / n) ** (n - 1) if n > 1 else 1.0
    p = np.linspace(0.0, 1.0, grid)
    swept = float(np.max(n * p * (1.0 - p) ** (n - 1)))
    if swept > value + 1e-12:
        raise OracleCheckError(f"grid value {swept!r} exceeds closed form {value!r}", detail={"N": n})
    return value


# KL projection
def kl_divergence(p: Any, q: Any) -> float:
    """Forward KL(p || q) of two dense tables; inf when q misses mass of p."""
    pt = np.asarray(p.table if isinstance(p, JointDistribution) else p, dtype=np.float64)
    qt = np.asarray(q.table if isinstance(q, JointDistribution) else q, dtype=np.float64)
    if pt.shape != qt.shape:
        raise OracleRangeError(f"table shapes differ: {pt.shape} vs {qt.shape}")
    support = pt > 0
    if (qt[support] <= 0).any():
        return math.inf
    return float(np.sum(pt[support] * (np.log(pt[support]) - np.log(qt[support]))))


def _refinement_gain(target: np.ndarray, marginals: List[np.ndarray], kl: float) -> float:
    """Largest KL decrease found by nudging one marginal toward a vertex or the uniform vector."""
    gain = 0.0
    steps = (1e-2, 1e-3, 1e-4)
    for i, p in enumerate(marginals):
        directions = [np.eye(p.shape[0])[a] for a in range(p.shape[0])]
        directions.append(np.full(p.shape[0], 1.0 / p.shape[0]))
        for direction in directions:
            for t in steps:
                trial = list(marginals)
                trial[i] = (1.0 - t) * p + t * direction
                gain = max(gain, kl - kl_divergence(target, ProductPolicy(trial).joint()))
    return gain


def best_product_kl(target: JointDistribution) -> KLProjection:
    """
    Forward-KL projection of `target` onto product policies.

    Returns the product of the target's marginals and KL(target || product), computed
    by dense enumeration (inf when a support atom gets product mass 0). A coordinate
    refinement around the result must not lower the KL by more than 1e-9.

    Raises
    ------
    OracleSizeError
        More than 2^20 joint actions.
    OracleCheckError
        The refinement found a better product policy.
    """
    size = int(np.prod(target.action_counts))
    if size > MAX_DENSE_JOINT:
        raise OracleSizeError(f"{size} joint actions exceed the dense limit {MAX_DENSE_JOINT}",
                              detail={"joint_actions": size})
    policy = ProductPolicy(target.marginals())
    kl = kl_divergence(target, policy.joint())
    if math.isfinite(kl):
        gain = _refinement_gain(target.table, policy.marginals, kl)
        if gain > REFINE_TOL:
            raise OracleCheckError(f"coordinate refinement lowered KL by {gain!r}", detail={"kl": kl, "gain": gain})
    else:
        logger.debug("product of marginals misses target support; KL is infinite")
    return KLProjection(policy, kl)


def closed_form_kl(n: int) -> float:
    """
    -(N-1) ln(1 - 1/N): KL from the uniform one-hot target to its best product policy.

    Raises
    ------
    OracleCheckError
        The value falls below the lower bound 1 - 1/N.
    """
    if n < 1:
        raise OracleRangeError(f"N must be positive, got {n}")
    if n == 1:
        return 0.0
    value = -(n - 1) * math.log1p(-1.0 / n)
    if value < 1.0 - 1.0 / n - 1e-15:
        raise OracleCheckError(f"KL {value!r} below the 1 - 1/N bound for N={n}")
    return value


def smooth_distribution(dist: JointDistribution, eps: float) -> JointDistribution:
    """(1 - eps) * pi + eps / |A|: full support, so the forward KL projection is finite."""
    if not 0.0 <= eps <= 1.0:
        raise OracleRangeError(f"eps must lie in [0, 1], got {eps}")
    size = dist.table.size
    table = (1.0 - eps) * dist.table + eps / size
    return JointDistribution(table / table.sum())


def product_success(policy: ProductPolicy, predicate: Callable[[Tuple[int, ...]], bool]) -> float:
    """Exact probability that a joint action drawn from `policy` satisfies `predicate`."""
    joint = policy.joint()
    if joint.size > MAX_DENSE_JOINT:
        raise OracleSizeError(f"{joint.size} joint actions exceed the dense limit {MAX_DENSE_JOINT}")
    return float(sum(joint[a] for a in np.ndindex(*joint.shape) if predicate(a)))


# Pairwise representability
def parity_delta(fn: Any) -> float:
    """
    Third-order interaction sum_{a in {0,1}^3} (-1)^(a1+a2+a3) F(a).

    `fn` is a callable on 3-tuples or a (2, 2, 2) table. Zero for every function that is
    a sum of unary and pairwise terms; nonzero certifies a genuine three-way interaction.
    """
    table = _table_of(fn, 3)
    return float(sum((-1) ** sum(a) * table[a] for a in product((0, 1), repeat=3)))


def _pairwise_design(n: int) -> Tuple[np.ndarray, List[Tuple[int, ...]]]:
    rows = list(product((0, 1), repeat=n))
    a = np.array(rows, dtype=np.float64)
    columns = [np.ones(len(rows))]
    columns.extend(a[:, i] for i in range(n))
    columns.extend(a[:, i] * a[:, j] for i, j in combinations(range(n), 2))
    return np.column_stack(columns), rows


def pairwise_fit_residual(table: Any, n: int) -> float:
    """
    Max absolute residual of the least-squares fit of c + sum u_i + sum u_ij to a
    binary table over {0,1}^N.

    On binary actions the basis {1, a_i, a_i a_j} spans every unary plus pairwise sum,
    so the residual is ~0 exactly when the table is pairwise-representable.

    Raises
    ------
    OracleSizeError
        N > 12.
    """
    if n > MAX_FIT_AGENTS:
        raise OracleSizeError(f"pairwise fit supports N <= {MAX_FIT_AGENTS}, got {n}")
    if n < 1:
        raise OracleRangeError(f"N must be positive, got {n}")
    design, rows = _pairwise_design(n)
    values = _table_of(table, n)
    y = np.array([values[r] for r in rows])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(np.max(np.abs(design @ coef - y)))


# Two-agent value decomposition vs joint maximization
def greedy_vs_joint(u1: Sequence[float], u2: Sequence[float], u12: Any) -> GreedyComparison:
    """
    Decentralized greedy (argmax u1, argmax u2) against the argmax of u1 + u2 + u12.

    Ties go to the lowest index (row-major for the joint table).
    """
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    u12 = np.asarray(u12, dtype=np.float64)
    if u12.shape != (u1.shape[0], u2.shape[0]):
        raise OracleRangeError(f"pairwise table shape {u12.shape} does not match ({u1.shape[0]}, {u2.shape[0]})")
    greedy = (int(np.argmax(u1)), int(np.argmax(u2)))
    total = u1[:, None] + u2[None, :] + u12
    flat = int(np.argmax(total))
    optimal = (flat // total.shape[1], flat % total.shape[1])
    return GreedyComparison(greedy, optimal, greedy == optimal)


def latent_matching_objective(p: Union[float, np.ndarray], q: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """J(p, q) = 1/2 (1-p)(1-q) + 1/2 p q for P(a_1 = 1) = p, P(a_2 = 1) = q."""
    return 0.5 * (1.0 - p) * (1.0 - q) + 0.5 * p * q


def latent_matching_optimum(grid: int = 101) -> LatentOptimum:
    """Grid maximizer of J over [0, 1]^2 (first maximizer in row-major order)."""
    if grid < 2:
        raise OracleRangeError(f"grid needs at least 2 points, got {grid}")
    axis = np.linspace(0.0, 1.0, grid)
    values = latent_matching_objective(axis[:, None], axis[None, :])
    i, j = np.unravel_index(int(np.argmax(values)), values.shape)
    return LatentOptimum(float(axis[i]), float(axis[j]), float(values[i, j]))


# Centralized control
def brute_force_joint_success(spec: EnvSpec, samples: int, rng: np.random.Generator, *,
                              hidden_oracle: bool = True) -> float:
    """
    Success rate of a centralized controller that enumerates every joint action.

    Monte Carlo over `samples` resets. With `hidden_oracle=False` the latent-matching
    controller must commit to one joint action before the hidden state is drawn, so
    each reset is scored by its best expected success over the hidden state.

    Raises
    ------
    OracleSizeError
        N > 12.
    """
    spec.validate()
    n = int(spec.num_agents)
    if n > MAX_BRUTE_FORCE_AGENTS:
        raise OracleSizeError(f"brute force supports N <= {MAX_BRUTE_FORCE_AGENTS}, got {n}")
    if samples < 1:
        raise OracleRangeError(f"samples must be positive, got {samples}")
    joint_actions = [np.array(a) for a in product(range(spec.num_actions), repeat=n)]
    game = CoordinationGame(spec)
    blind = spec.game is GameName.LATENT_MATCHING and not hidden_oracle
    total = 0.0
    for _ in range(samples):
        obs = game.reset(rng)
        if blind:
            total += max(np.mean([score_joint_action(spec, obs.signals, a, hidden_state=s).success for s in (0, 1)])
                         for a in joint_actions)
            continue
        s = game.hidden_state
        total += float(any(score_joint_action(spec, obs.signals, a, hidden_state=s).success for a in joint_actions))
    return total / samples
