"""Credit-rating migration: marginal chains, joint dependence, calibration.

Ratings run from 1 (best) to K, with K the absorbing default state.  A
marginal matrix moves mass only to neighbouring ratings, plus a direct
default column reachable from ratings 3..K-1.  Moves are classified by
target: ``up`` (x-1), ``down`` (x+1 when below the default state) and
``default`` (straight to K, which from K-1 is also the neighbour move).

The joint chain is built row by row at the current joint state.  Each
dependence type is a particular solution of the marginal-consistency
equations: summing any joint row over the other members recovers the
corresponding marginal row exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations, product
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import CalibrationError, ConfigError, MarginalInfeasibleError
from .rng import MIGRATION_DOMAIN, substream

__all__ = [
    "DependenceType",
    "RatingTransitionMatrix",
    "JointState",
    "JointMigrationModel",
    "MigrationPath",
    "CalibrationResult",
    "pattern_mask",
    "daily_matrix_family",
    "study_migration_matrix",
    "calibrate_daily",
    "joint_transition_row",
    "marginal_of_row",
    "simulate_path",
    "simulate_paths_batch",
    "survival_indicator",
]

_ROW_SUM_TOL = 1e-12
_ROW_ENUMERATION_LIMIT = 200_000


class DependenceType(str, Enum):
    TYPE_I = "TYPE_I"
    TYPE_II = "TYPE_II"
    TYPE_III = "TYPE_III"


def pattern_mask(size: int) -> np.ndarray:
    """Allowed-transition mask: neighbours everywhere, defaults from 3..K-1."""
    mask = np.zeros((size, size), dtype=bool)
    for x in range(1, size):  # live states, 1-based x = index + 1
        idx = x - 1
        mask[idx, idx] = True
        if x >= 2:
            mask[idx, idx - 1] = True
        if x + 1 <= size - 1:
            mask[idx, idx + 1] = True
        if x >= 3:
            mask[idx, size - 1] = True
    mask[size - 1, size - 1] = True
    return mask


@dataclass(frozen=True)
class RatingTransitionMatrix:
    """Row-stochastic K x K matrix with an absorbing default state K."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 2 or probs.shape[0] != probs.shape[1]:
            raise ConfigError("transition matrix must be square")
        if probs.shape[0] < 2:
            raise ConfigError("transition matrix needs at least two states")
        if np.any(probs < -1e-15):
            raise ConfigError("transition probabilities must be nonnegative")
        probs = np.maximum(probs, 0.0)
        row_sums = probs.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > _ROW_SUM_TOL):
            raise ConfigError(f"row sums deviate from 1: {row_sums.tolist()}")
        k = probs.shape[0]
        if probs[k - 1, k - 1] != 1.0 or np.any(probs[k - 1, : k - 1] != 0.0):
            raise ConfigError("default state must be absorbing")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    def matches_pattern(self) -> bool:
        return not np.any(self.probs[~pattern_mask(self.size)] != 0.0)

    def require_pattern(self) -> None:
        if not self.matches_pattern():
            raise ConfigError("matrix has transitions outside the neighbour/default pattern")

    def power(self, m: int) -> "RatingTransitionMatrix":
        return RatingTransitionMatrix(np.linalg.matrix_power(self.probs, m))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "RatingTransitionMatrix":
        return cls(np.array(rows, dtype=float))

    @classmethod
    def from_csv(cls, path) -> "RatingTransitionMatrix":
        with open(path, newline="") as fh:
            rows = [[float(cell) for cell in row] for row in csv.reader(fh) if row]
        if not rows:
            raise ConfigError(f"no rows in matrix file {path}")
        return cls.from_rows(rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in self.probs:
                writer.writerow([repr(float(x)) for x in row])


def daily_matrix_family(
    size: int = 8,
    up_rate: float = 0.002,
    down_rate: float = 0.004,
    jump_rates: Mapping[int, float] | None = None,
    terminal_default_rate: float = 0.004,
) -> RatingTransitionMatrix:
    """One-step matrix with neighbour moves and rating-dependent default jumps.

    ``jump_rates`` maps ratings 3..K-2 to their direct-default probability;
    the default entries grow with worse ratings in the shipped preset.
    ``terminal_default_rate`` is the K-1 -> K probability.
    """
    if jump_rates is None:
        jump_rates = {x: 1e-4 * 2 ** (x - 3) for x in range(3, size - 1)}
    probs = np.zeros((size, size))
    for x in range(1, size):  # 1-based live states
        idx = x - 1
        row = np.zeros(size)
        if x >= 2:
            row[idx - 1] = up_rate
        if x + 1 <= size - 1:
            row[idx + 1] = down_rate
        if 3 <= x <= size - 2:
            row[size - 1] = float(jump_rates.get(x, 0.0))
        elif x == size - 1:
            row[size - 1] = terminal_default_rate
        total = row.sum()
        if total >= 1.0:
            raise ConfigError(f"rates from state {x} exceed probability 1 ({total})")
        row[idx] = 1.0 - total
        probs[idx] = row
    probs[size - 1, size - 1] = 1.0
    return RatingTransitionMatrix(probs)


def study_migration_matrix() -> RatingTransitionMatrix:
    """Default daily matrix used by the shipped experiment fixtures."""
    return daily_matrix_family(
        size=8,
        up_rate=0.002,
        down_rate=0.004,
        jump_rates={3: 1e-4, 4: 2e-4, 5: 5e-4, 6: 1e-3},
        terminal_default_rate=0.004,
    )


@dataclass(frozen=True)
class CalibrationResult:
    matrix: RatingTransitionMatrix
    reconstruction_error: float
    method: str
    clipped_mass: float


def _principal_root(matrix: np.ndarray, m: int) -> tuple[np.ndarray, str]:
    """Principal m-th root, by eigendecomposition with a Schur-based fallback."""
    try:
        eigvals, eigvecs = np.linalg.eig(matrix)
        cond = np.linalg.cond(eigvecs)
        if np.isfinite(cond) and cond < 1e10:
            root = eigvecs @ np.diag(eigvals.astype(complex) ** (1.0 / m)) @ np.linalg.inv(eigvecs)
            if np.max(np.abs(root.imag)) < 1e-8:
                return root.real, "eigendecomposition"
    except np.linalg.LinAlgError:
        pass
    root = scipy.linalg.fractional_matrix_power(matrix, 1.0 / m)
    if np.iscomplexobj(root):
        if np.max(np.abs(root.imag)) > 1e-6:
            raise CalibrationError("matrix root has a large imaginary component")
        root = root.real
    return root, "schur"


def calibrate_daily(
    annual: RatingTransitionMatrix, m: int, enforce_pattern: bool = True
) -> CalibrationResult:
    """Solve P^m = annual for a valid one-step matrix P.

    The principal root is projected onto the feasible set: negative entries
    are clipped, entries outside the transition pattern are zeroed (when
    requested), the default row is pinned absorbing and rows are
    renormalized.  The sup-norm reconstruction error of P^m against the
    annual input is reported alongside the result.
    """
    if m < 1:
        raise ConfigError(f"root order must be a positive integer, got {m}")
    size = annual.size
    root, method = _principal_root(annual.probs, m)

    projected = np.where(root > 0.0, root, 0.0)
    if enforce_pattern:
        projected = np.where(pattern_mask(size), projected, 0.0)
    projected[size - 1] = 0.0
    projected[size - 1, size - 1] = 1.0
    clipped = float(np.abs(root - projected).sum())

    row_sums = projected.sum(axis=1)
    dead_rows = np.flatnonzero(row_sums <= 0.0)
    if dead_rows.size:
        raise CalibrationError(
            f"calibration failed: rows {dead_rows.tolist()} lost all mass after "
            f"projection (method={method}, clipped mass={clipped:.3e})"
        )
    projected = projected / row_sums[:, None]

    daily = RatingTransitionMatrix(projected)
    error = float(np.max(np.abs(np.linalg.matrix_power(projected, m) - annual.probs)))
    return CalibrationResult(daily, error, method, clipped)


@dataclass(frozen=True)
class JointState:
    """Vector of member ratings."""

    ratings: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ratings", tuple(int(r) for r in self.ratings))
        if len(self.ratings) == 0:
            raise ConfigError("joint state needs at least one member")

    def validate(self, size: int) -> None:
        for i, r in enumerate(self.ratings):
            if not 1 <= r <= size:
                raise ConfigError(f"member {i} rating {r} outside 1..{size}")


@dataclass(frozen=True)
class JointMigrationModel:
    """Marginal matrices plus the dependence type of the joint chain."""

    marginals: tuple[RatingTransitionMatrix, ...]
    dependence: DependenceType

    def __post_init__(self):
        marginals = tuple(self.marginals)
        if not marginals:
            raise ConfigError("model needs at least one member")
        size = marginals[0].size
        for i, mat in enumerate(marginals):
            if mat.size != size:
                raise ConfigError(f"marginal {i} has size {mat.size}, expected {size}")
            mat.require_pattern()
        object.__setattr__(self, "marginals", marginals)
        object.__setattr__(self, "dependence", DependenceType(self.dependence))

    @classmethod
    def homogeneous(
        cls, matrix: RatingTransitionMatrix, members: int, dependence: DependenceType
    ) -> "JointMigrationModel":
        return cls(tuple(matrix for _ in range(members)), dependence)

    @property
    def member_count(self) -> int:
        return len(self.marginals)

    @property
    def size(self) -> int:
        return self.marginals[0].size


@dataclass(frozen=True)
class _MemberMoves:
    """Marginal move decomposition of one live member at its current state."""

    up_target: int
    up: float
    down_target: int
    down: float
    default: float
    stay: float

    @classmethod
    def at(cls, matrix: RatingTransitionMatrix, rating: int) -> "_MemberMoves":
        size = matrix.size
        row = matrix.probs[rating - 1]
        up_t, up_p = (rating - 1, float(row[rating - 2])) if rating >= 2 else (0, 0.0)
        if rating + 1 <= size - 1:
            down_t, down_p = rating + 1, float(row[rating])
        else:
            down_t, down_p = 0, 0.0
        default_p = float(row[size - 1])
        stay_p = float(row[rating - 1])
        return cls(up_t, up_p, down_t, down_p, default_p, stay_p)


def _type2_branches(moves: Sequence[_MemberMoves], live: Sequence[int]):
    """Joint-factor move weights per live member for the two default branches.

    Returns ``(q, clean, stressed)`` where ``clean`` applies on steps with no
    new default anywhere and ``stressed`` when some other member defaults.
    Weights include the member's own survival probability, so the weights of
    a member's three moves sum to ``1 - q_i`` in both branches.
    """
    q = [mv.default for mv in moves]
    survival = [1.0 - qi for qi in q]
    clean, stressed = [], []
    for pos, mv in enumerate(moves):
        beta = 1.0
        for other in range(len(moves)):
            if other != pos:
                beta *= survival[other]
        if mv.up > 0.0 and beta <= 0.0:
            raise MarginalInfeasibleError(
                f"member {live[pos]} cannot keep its upgrade probability: another "
                "member defaults with certainty",
                member=live[pos],
                direction="up",
            )
        up_clean = mv.up / beta if mv.up > 0.0 else 0.0
        stay_clean = mv.stay - (mv.up * (1.0 - beta) / beta if mv.up > 0.0 else 0.0)
        if stay_clean < -1e-15:
            raise MarginalInfeasibleError(
                f"member {live[pos]} stay probability driven negative "
                f"({stay_clean:.3e}) by the upgrade prohibition",
                member=live[pos],
                direction="stay",
            )
        clean.append((up_clean, mv.down, max(stay_clean, 0.0)))
        stressed.append((0.0, mv.down, mv.stay + mv.up))
    return q, clean, stressed


def _type3_outcomes(moves: Sequence[_MemberMoves], live: Sequence[int], state: tuple[int, ...], size: int):
    """Common-move mixture: per-direction joint moves plus single-member moves."""
    directions = ("up", "down", "default")
    targets = {
        "up": [mv.up_target for mv in moves],
        "down": [mv.down_target for mv in moves],
        "default": [size for _ in moves],
    }
    margins = {
        "up": [mv.up for mv in moves],
        "down": [mv.down for mv in moves],
        "default": [mv.default for mv in moves],
    }
    outcomes: dict[tuple[int, ...], float] = {}

    def add(next_state: tuple[int, ...], prob: float) -> None:
        if prob > 0.0:
            outcomes[next_state] = outcomes.get(next_state, 0.0) + prob

    common_weight = {}
    for direction in directions:
        weight = min(margins[direction])
        common_weight[direction] = max(weight, 0.0)
        if common_weight[direction] > 0.0:
            joint = list(state)
            for pos, member in enumerate(live):
                joint[member] = targets[direction][pos]
            add(tuple(joint), common_weight[direction])

    for direction in directions:
        for pos, member in enumerate(live):
            residual = margins[direction][pos] - common_weight[direction]
            if residual < -1e-15:
                raise MarginalInfeasibleError(
                    f"member {member} has negative residual {residual:.3e} in "
                    f"direction {direction}",
                    member=member,
                    direction=direction,
                )
            if residual > 0.0:
                single = list(state)
                single[member] = targets[direction][pos]
                add(tuple(single), residual)
    # Marginal algebra: each member stays unless it moves alone or jointly,
    # which pins the all-stay weight exactly.
    stay_weight = 1.0 - sum(1.0 - mv.stay for mv in moves) + (len(live) - 1) * sum(
        common_weight.values()
    )
    if stay_weight < -1e-12:
        raise MarginalInfeasibleError(
            f"all-stay weight is negative ({stay_weight:.3e}); the common-move "
            "mixture cannot satisfy these marginals",
            member=None,
            direction="stay",
        )
    add(tuple(state), max(stay_weight, 0.0))
    return outcomes


def joint_transition_row(
    model: JointMigrationModel, state: JointState | Sequence[int]
) -> dict[tuple[int, ...], float]:
    """One-step joint law at the given state, as a mapping to probabilities.

    The support grows exponentially in the member count for Types I and II;
    use the path samplers for study-scale work.
    """
    ratings = state.ratings if isinstance(state, JointState) else tuple(int(r) for r in state)
    JointState(ratings).validate(model.size)
    size = model.size
    live = [i for i, r in enumerate(ratings) if r < size]
    if not live:
        return {ratings: 1.0}
    moves = [_MemberMoves.at(model.marginals[i], ratings[i]) for i in live]

    outcomes: dict[tuple[int, ...], float] = {}

    def add(next_state: tuple[int, ...], prob: float) -> None:
        if prob > 0.0:
            outcomes[next_state] = outcomes.get(next_state, 0.0) + prob

    if model.dependence is DependenceType.TYPE_I:
        options = []
        count = 1
        for mv in moves:
            opts = [(mv.up_target, mv.up), (mv.down_target, mv.down), (size, mv.default)]
            opts = [(t, p) for t, p in opts if p > 0.0]
            opts.append((None, mv.stay))
            options.append(opts)
            count *= len(opts)
            if count > _ROW_ENUMERATION_LIMIT:
                raise ValueError("joint row enumeration too large; use the path sampler")
        for combo in product(*options):
            prob = math.prod(p for _, p in combo)
            if prob <= 0.0:
                continue
            joint = list(ratings)
            for pos, (target, _) in enumerate(combo):
                if target is not None:
                    joint[live[pos]] = target
            add(tuple(joint), prob)
        return outcomes

    if model.dependence is DependenceType.TYPE_II:
        q, clean, stressed = _type2_branches(moves, live)
        if 3 ** len(live) * 2 > _ROW_ENUMERATION_LIMIT:
            raise ValueError("joint row enumeration too large; use the path sampler")

        def expand(weights) -> Iterable[tuple[tuple[int, ...], float]]:
            per_member = []
            for pos, mv in enumerate(moves):
                w_up, w_down, w_stay = weights[pos]
                opts = []
                if w_up > 0.0:
                    opts.append((mv.up_target, w_up))
                if w_down > 0.0:
                    opts.append((mv.down_target, w_down))
                opts.append((None, w_stay))
                per_member.append(opts)
            for combo in product(*per_member):
                yield combo, math.prod(p for _, p in combo)

        # No new default anywhere.
        for combo, prob in expand(clean):
            if prob <= 0.0:
                continue
            joint = list(ratings)
            for pos, (target, _) in enumerate(combo):
                if target is not None:
                    joint[live[pos]] = target
            add(tuple(joint), prob)
        # Every nonempty set of new defaults; survivors cannot upgrade.
        for n_def in range(1, len(live) + 1):
            for subset in combinations(range(len(live)), n_def):
                base = math.prod(q[pos] for pos in subset)
                if base <= 0.0:
                    continue
                rest = [pos for pos in range(len(live)) if pos not in subset]
                per_member = []
                for pos in rest:
                    mv = moves[pos]
                    _, w_down, w_stay = stressed[pos]
                    opts = []
                    if w_down > 0.0:
                        opts.append((mv.down_target, w_down))
                    opts.append((None, w_stay))
                    per_member.append(opts)
                for combo in product(*per_member):
                    prob = base * math.prod(p for _, p in combo)
                    if prob <= 0.0:
                        continue
                    joint = list(ratings)
                    for pos in subset:
                        joint[live[pos]] = size
                    for rest_pos, (target, _) in zip(rest, combo):
                        if target is not None:
                            joint[live[rest_pos]] = target
                    add(tuple(joint), prob)
        return outcomes

    return _type3_outcomes(moves, live, ratings, size)


def marginal_of_row(
    row: Mapping[tuple[int, ...], float], member: int, size: int
) -> np.ndarray:
    """Sum a joint row over all other members; entry y-1 is P(member -> y)."""
    out = np.zeros(size)
    for state, prob in row.items():
        out[state[member] - 1] += prob
    return out


class _StateSampler:
    """Vectorized one-step sampler for a fixed joint state.

    Consumes a fixed budget of ``2 * I`` uniforms per path and step so draws
    are identical under any batching of the paths.
    """

    def __init__(self, model: JointMigrationModel, state: tuple[int, ...]):
        size = model.size
        self.size = size
        self.state = np.array(state, dtype=np.int16)
        self.members = len(state)
        self.live = [i for i, r in enumerate(state) if r < size]
        self.kind = model.dependence
        moves = [_MemberMoves.at(model.marginals[i], state[i]) for i in self.live]

        if not self.live:
            self.kind = None
            return

        if self.kind is DependenceType.TYPE_I:
            self.tables = []
            for mv in moves:
                targets = [mv.up_target, mv.down_target, size, state[self.live[len(self.tables)]]]
                probs = [mv.up, mv.down, mv.default, mv.stay]
                t, c = _cumulative(targets, probs)
                self.tables.append((t, c))
        elif self.kind is DependenceType.TYPE_II:
            q, clean, stressed = _type2_branches(moves, self.live)
            self.q = np.array(q)
            self.clean, self.stressed = [], []
            for pos, mv in enumerate(moves):
                stay_target = state[self.live[pos]]
                survival = 1.0 - q[pos]
                for weights, store in ((clean[pos], self.clean), (stressed[pos], self.stressed)):
                    w_up, w_down, w_stay = weights
                    targets = [mv.up_target, mv.down_target, stay_target]
                    probs = [w / survival if survival > 0 else 0.0 for w in (w_up, w_down, w_stay)]
                    store.append(_cumulative(targets, probs))
        else:
            outcomes = _type3_outcomes(moves, self.live, tuple(state), size)
            states = list(outcomes)
            self.outcome_states = np.array(states, dtype=np.int16)
            cum = np.cumsum([outcomes[s] for s in states])
            cum[-1] = max(cum[-1], 1.0)
            self.outcome_cum = cum

    def sample(self, uniforms: np.ndarray) -> np.ndarray:
        n = uniforms.shape[0]
        out = np.broadcast_to(self.state, (n, self.members)).copy()
        if self.kind is None:
            return out
        if self.kind is DependenceType.TYPE_I:
            for pos, member in enumerate(self.live):
                targets, cum = self.tables[pos]
                idx = np.searchsorted(cum, uniforms[:, member], side="right")
                out[:, member] = targets[np.minimum(idx, targets.size - 1)]
            return out
        if self.kind is DependenceType.TYPE_II:
            m = self.members
            defaults = np.zeros((n, len(self.live)), dtype=bool)
            for pos, member in enumerate(self.live):
                defaults[:, pos] = uniforms[:, member] < self.q[pos]
            totals = defaults.sum(axis=1)
            for pos, member in enumerate(self.live):
                others = (totals - defaults[:, pos]) > 0
                u_move = uniforms[:, m + member]
                t_clean, c_clean = self.clean[pos]
                t_stress, c_stress = self.stressed[pos]
                idx_c = np.minimum(
                    np.searchsorted(c_clean, u_move, side="right"), t_clean.size - 1
                )
                idx_s = np.minimum(
                    np.searchsorted(c_stress, u_move, side="right"), t_stress.size - 1
                )
                column = np.where(others, t_stress[idx_s], t_clean[idx_c])
                column = np.where(defaults[:, pos], self.size, column)
                out[:, member] = column
            return out
        idx = np.searchsorted(self.outcome_cum, uniforms[:, 0], side="right")
        idx = np.minimum(idx, self.outcome_states.shape[0] - 1)
        return self.outcome_states[idx]


def _cumulative(targets: Sequence[int], probs: Sequence[float]):
    kept = [(t, p) for t, p in zip(targets, probs) if p > 0.0]
    if not kept:
        kept = [(targets[-1], 1.0)]
    t = np.array([t for t, _ in kept], dtype=np.int16)
    cum = np.cumsum([p for _, p in kept])
    cum[-1] = max(cum[-1], 1.0)
    return t, cum


@dataclass(frozen=True)
class MigrationPath:
    """A simulated joint rating trajectory and per-member default steps."""

    states: tuple[tuple[int, ...], ...]
    default_steps: tuple[int | None, ...]

    def __post_init__(self):
        states = tuple(tuple(int(r) for r in s) for s in self.states)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "default_steps", tuple(self.default_steps))
        members = len(states[0])
        if any(len(s) != members for s in states):
            raise ConfigError("inconsistent member count along the path")
        if len(self.default_steps) != members:
            raise ConfigError("default steps do not match the member count")
        # Absorption: from its default step onward a member's rating is frozen.
        for i, tau in enumerate(self.default_steps):
            if tau is None:
                continue
            if not 0 <= tau < len(states):
                raise ConfigError(f"default step {tau} outside the path for member {i}")
            frozen = states[tau][i]
            if any(s[i] != frozen for s in states[tau:]):
                raise ConfigError(f"member {i} left the default state after step {tau}")


def survival_indicator(path: MigrationPath, member: int, t: int) -> bool:
    """True when the member has not defaulted by time step t."""
    if not 0 <= member < len(path.default_steps):
        raise ConfigError(f"member index {member} out of range")
    if not 0 <= t < len(path.states):
        raise ConfigError(f"time index {t} out of range")
    tau = path.default_steps[member]
    return tau is None or tau > t


def simulate_paths_batch(
    model: JointMigrationModel,
    initial: JointState | Sequence[int],
    steps: int,
    n_paths: int,
    seed: int,
    chunk_size: int = 8192,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate joint rating paths; returns (states, default_steps).

    ``states`` has shape (n_paths, steps + 1, members); ``default_steps`` is
    -1 for members that never default.  Path ``p`` always consumes stream
    ``(seed, p)``, so results do not depend on ``chunk_size``.
    """
    ratings = initial.ratings if isinstance(initial, JointState) else tuple(int(r) for r in initial)
    JointState(ratings).validate(model.size)
    if steps < 1:
        raise ConfigError("horizon must be at least one step")
    if n_paths < 1:
        raise ConfigError("need at least one path")
    members = len(ratings)
    if members != model.member_count:
        raise ConfigError("initial state does not match the model's member count")
    budget = 2 * members
    size = model.size

    states = np.empty((n_paths, steps + 1, members), dtype=np.int16)
    default_steps = np.full((n_paths, members), -1, dtype=np.int32)
    samplers: dict[tuple[int, ...], _StateSampler] = {}

    for start in range(0, n_paths, chunk_size):
        stop = min(start + chunk_size, n_paths)
        n = stop - start
        uniforms = np.empty((n, steps, budget))
        for offset in range(n):
            gen = substream(seed, MIGRATION_DOMAIN, start + offset)
            uniforms[offset] = gen.random((steps, budget))
        current = np.tile(np.array(ratings, dtype=np.int16), (n, 1))
        states[start:stop, 0] = current
        for t in range(steps):
            unique, inverse = np.unique(current, axis=0, return_inverse=True)
            nxt = np.empty_like(current)
            for g in range(unique.shape[0]):
                key = tuple(int(r) for r in unique[g])
                sampler = samplers.get(key)
                if sampler is None:
                    sampler = _StateSampler(model, key)
                    samplers[key] = sampler
                rows = np.flatnonzero(inverse == g)
                nxt[rows] = sampler.sample(uniforms[rows, t, :])
            newly = (nxt == size) & (current != size)
            if newly.any():
                rows, cols = np.nonzero(newly)
                default_steps[start + rows, cols] = t + 1
            current = nxt
            states[start:stop, t + 1] = current
    return states, default_steps


def simulate_path(
    model: JointMigrationModel,
    initial: JointState | Sequence[int],
    horizon_steps: int,
    seed: int,
) -> MigrationPath:
    """Simulate a single joint path (stream index 0 of the seed)."""
    states, defaults = simulate_paths_batch(model, initial, horizon_steps, 1, seed)
    default_steps = tuple(int(d) if d >= 0 else None for d in defaults[0])
    return MigrationPath(
        states=tuple(tuple(int(r) for r in row) for row in states[0]),
        default_steps=default_steps,
    )
