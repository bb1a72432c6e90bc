"""Monte Carlo study engine: margin tables, fund sizing, covers, scaling.

The engine separates the two sources of randomness.  Reference-name default
times are drawn per contract from their constant intensities; member default
times come from the joint migration chain.  Margins at future dates are
computed in closed form from the conditional exposure laws, so simulation
error enters only through the exposure scenarios themselves.

Exposure bookkeeping exploits that one member's realized period exposure
depends on the migration path only through that member's own default step.
A table of exposures indexed by (member, default step, reference path) is
built once; scenario exposures are then pure lookups.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cds import (
    BUSINESS_DAYS_PER_YEAR,
    CdsContract,
    PositionMatrix,
    add_business_days,
    last_premium_date,
    margin_period_exposure_at_offset,
    next_premium_date,
    portfolio_exposure_law,
    pre_default_upfront_at_offset,
    year_fraction,
)
from .distributions import DiscreteDistribution, RiskMeasureKind
from .errors import ConfigError
from .migration import (
    DependenceType,
    JointMigrationModel,
    RatingTransitionMatrix,
    calibrate_daily,
    simulate_paths_batch,
    study_migration_matrix,
)
from .rng import REFERENCE_DOMAIN, substream
from .waterfall import (
    ExposureMode,
    WaterfallConfig,
    default_fund,
    empirical_extreme_density,
    initial_margin,
    unfunded_df,
)

__all__ = [
    "EVALUATION_DATE",
    "H_BALANCED",
    "H_UNBALANCED",
    "study_contracts",
    "ExperimentConfig",
    "ImStudyResult",
    "StudyResult",
    "sample_reference_defaults",
    "member_exposure_law",
    "run_im_study",
    "run_df_study",
    "run_scaling_study",
    "cover1_cover2_baseline",
    "scale_positions",
    "config_from_dict",
]

EVALUATION_DATE = dt.date(2015, 9, 22)

H_BALANCED = np.array(
    [
        [1, -1, 1, -1],
        [-1, 1, -1, 1],
        [10, -1, -8, -1],
        [-1, 2, -2, 1],
        [-10, 5, -5, 10],
        [-1, -1, -5, 7],
        [20, 10, 18, -48],
        [-18, -15, 2, 31],
    ],
    dtype=float,
)

H_UNBALANCED = np.array(
    [
        [1, 1, 1, 1],
        [10, -1, 10, -1],
        [-1, 10, -1, 10],
        [100, -5, 100, -5],
        [-110, -5, -110, -5],
        [-1, -1, -1, -1],
        [-2, -1, -6, -3],
        [3, 2, 7, 4],
    ],
    dtype=float,
)

_STUDY_INTENSITIES = (0.002, 0.01, 0.015, 0.03)


def study_contracts() -> tuple[CdsContract, ...]:
    """The four fixture contracts: 100 bps coupon, 40% recovery, 2015-2018."""
    return tuple(
        CdsContract(
            intensity=lam,
            spread=0.01,
            recovery=0.4,
            inception=dt.date(2015, 6, 20),
            maturity=dt.date(2018, 6, 20),
        )
        for lam in _STUDY_INTENSITIES
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one study run."""

    contracts: tuple[CdsContract, ...]
    positions: PositionMatrix
    evaluation_date: dt.date
    initial_ratings: tuple[int, ...]
    dependence: DependenceType
    migration_matrix: RatingTransitionMatrix
    waterfall: WaterfallConfig
    paths_reference: int = 100
    paths_migration: int = 10_000
    seed: int = 0
    alpha_grid: tuple[float, ...] = (0.01,)
    beta_grid: tuple[float, ...] = (0.01,)

    def __post_init__(self):
        object.__setattr__(self, "contracts", tuple(self.contracts))
        object.__setattr__(self, "initial_ratings", tuple(int(r) for r in self.initial_ratings))
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))
        object.__setattr__(self, "dependence", DependenceType(self.dependence))
        if self.positions.contract_count != len(self.contracts):
            raise ConfigError("positions columns must match the contract list")
        if self.positions.member_count != len(self.initial_ratings):
            raise ConfigError("positions rows must match the member count")
        size = self.migration_matrix.size
        for i, r in enumerate(self.initial_ratings):
            if not 1 <= r <= size:
                raise ConfigError(f"initial rating {r} of member {i} outside 1..{size}")
        if self.paths_reference < 1 or self.paths_migration < 1:
            raise ConfigError("path counts must be positive")
        for level in self.alpha_grid + self.beta_grid:
            if not 0.0 < level <= 1.0:
                raise ConfigError(f"grid level {level} outside (0, 1]")
        if not self.alpha_grid or not self.beta_grid:
            raise ConfigError("alpha and beta grids must be nonempty")

    @property
    def member_count(self) -> int:
        return self.positions.member_count

    def migration_model(self) -> JointMigrationModel:
        return JointMigrationModel.homogeneous(
            self.migration_matrix, self.member_count, self.dependence
        )

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "evaluation_date": self.evaluation_date.isoformat(),
            "contracts": [c.to_dict() for c in self.contracts],
            "positions": self.positions.matrix.tolist(),
            "initial_ratings": list(self.initial_ratings),
            "dependence": self.dependence.value,
            "migration": {"matrix": self.migration_matrix.probs.tolist()},
            "waterfall": {
                "alpha_im": self.waterfall.alpha_im,
                "beta_df": self.waterfall.beta_df,
                "im_method": self.waterfall.im_method.value,
                "im_risk_measure": self.waterfall.im_risk_measure.value,
                "liquidation_recovery": self.waterfall.liquidation_recovery,
                "skin_in_game": self.waterfall.skin_in_game,
                "delta_f": self.waterfall.delta_f,
                "delta": self.waterfall.delta,
                "period_steps": self.waterfall.period_steps,
                "exposure_mode": self.waterfall.exposure_mode.value,
                "exposure_cap": self.waterfall.exposure_cap,
            },
            "paths_reference": self.paths_reference,
            "paths_migration": self.paths_migration,
            "seed": self.seed,
            "alpha_grid": list(self.alpha_grid),
            "beta_grid": list(self.beta_grid),
        }


def _positions_from_config(spec, contracts: int) -> PositionMatrix:
    if isinstance(spec, str):
        name = spec.strip().lower()
        if name == "balanced":
            return PositionMatrix(H_BALANCED)
        if name == "unbalanced":
            return PositionMatrix(H_UNBALANCED)
        raise ConfigError(f"unknown positions preset {spec!r}")
    if isinstance(spec, Mapping) and "csv" in spec:
        return PositionMatrix.from_csv(spec["csv"])
    return PositionMatrix(np.asarray(spec, dtype=float))


def _ratings_from_config(spec, members: int) -> tuple[int, ...]:
    if isinstance(spec, str):
        name = spec.strip().upper()
        if name == "ALL_ONES":
            return tuple([1] * members)
        if name == "ALL_SEVENS":
            return tuple([7] * members)
        raise ConfigError(f"unknown initial rating preset {spec!r}")
    return tuple(int(r) for r in spec)


def _migration_from_config(spec) -> RatingTransitionMatrix:
    if spec is None or spec == "study-default":
        return study_migration_matrix()
    if isinstance(spec, Mapping):
        if "matrix" in spec:
            inner = spec["matrix"]
            if isinstance(inner, Mapping) and "csv" in inner:
                matrix = RatingTransitionMatrix.from_csv(inner["csv"])
            else:
                matrix = RatingTransitionMatrix.from_rows(inner)
            matrix.require_pattern()
            return matrix
        if "annual_csv" in spec:
            annual = RatingTransitionMatrix.from_csv(spec["annual_csv"])
            m = int(spec.get("calibrate_m", BUSINESS_DAYS_PER_YEAR))
            return calibrate_daily(annual, m).matrix
        if "family" in spec:
            params = dict(spec["family"])
            jumps = params.pop("jump_rates", None)
            if jumps is not None:
                jumps = {int(k): float(v) for k, v in jumps.items()}
            from .migration import daily_matrix_family

            return daily_matrix_family(jump_rates=jumps, **params)
    raise ConfigError("migration section must give a matrix, an annual_csv or a family")


def config_from_dict(data: Mapping) -> ExperimentConfig:
    """Build a validated experiment from a parsed JSON configuration."""
    if not isinstance(data, Mapping):
        raise ConfigError("configuration must be a JSON object")
    try:
        contracts_spec = data.get("contracts", "study")
        if contracts_spec == "study":
            contracts = study_contracts()
        else:
            contracts = tuple(CdsContract.from_dict(c) for c in contracts_spec)
        positions = _positions_from_config(data.get("positions", "balanced"), len(contracts))
        ratings = _ratings_from_config(
            data.get("initial_ratings", "ALL_SEVENS"), positions.member_count
        )
        wf_spec = dict(data.get("waterfall", {}))
        waterfall = WaterfallConfig(**wf_spec)
        evaluation = dt.date.fromisoformat(str(data.get("evaluation_date", EVALUATION_DATE)))
        try:
            dependence = DependenceType(str(data.get("dependence", "TYPE_I")).strip().upper())
        except ValueError as exc:
            raise ConfigError(f"unknown dependence type {data.get('dependence')!r}") from exc
        return ExperimentConfig(
            contracts=contracts,
            positions=positions,
            evaluation_date=evaluation,
            initial_ratings=ratings,
            dependence=dependence,
            migration_matrix=_migration_from_config(data.get("migration")),
            waterfall=waterfall,
            paths_reference=int(data.get("paths_reference", 100)),
            paths_migration=int(data.get("paths_migration", 10_000)),
            seed=int(data.get("seed", 0)),
            alpha_grid=tuple(data.get("alpha_grid", [0.01])),
            beta_grid=tuple(data.get("beta_grid", [0.01])),
        )
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def sample_reference_defaults(
    contracts: Sequence[CdsContract], count: int, seed: int
) -> np.ndarray:
    """Default steps of the reference names, one row per path.

    Each default time is a unit exponential scaled by the inverse intensity
    and snapped up to the next grid step; entry (p, j) is the first step at
    which contract j is in default on path p.
    """
    if count < 1:
        raise ConfigError("need at least one reference path")
    lambdas = np.array([c.intensity for c in contracts], dtype=float)
    steps = np.empty((count, lambdas.size), dtype=np.int64)
    for p in range(count):
        gen = substream(seed, REFERENCE_DOMAIN, p)
        phi_years = gen.standard_exponential(lambdas.size) / lambdas
        steps[p] = np.ceil(phi_years * BUSINESS_DAYS_PER_YEAR).astype(np.int64)
    return steps


def member_exposure_law(
    contracts: Sequence[CdsContract],
    positions_row: Sequence[float],
    anchor: dt.date,
    offset: int,
    delta: int,
    alive: Sequence[bool] | None = None,
) -> DiscreteDistribution:
    """Conditional law of one member's margin-period cash flow at a grid date."""
    positions_row = np.asarray(positions_row, dtype=float)
    if alive is None:
        alive = [True] * len(contracts)
    kept_positions = []
    kept_laws = []
    for h, contract, live in zip(positions_row, contracts, alive):
        if not live or h == 0.0:
            continue
        kept_positions.append(h)
        kept_laws.append(margin_period_exposure_at_offset(contract, anchor, offset, delta))
    if not kept_positions:
        return DiscreteDistribution.point_mass(0.0)
    return portfolio_exposure_law(kept_positions, kept_laws)


@dataclass(frozen=True)
class ImStudyResult:
    alphas: tuple[float, ...]
    measures: tuple[RiskMeasureKind, ...]
    # table[measure][alpha_index][member]
    table: dict
    laws: tuple[DiscreteDistribution, ...]

    def member_table(self, measure: RiskMeasureKind) -> np.ndarray:
        return np.array(self.table[RiskMeasureKind(measure).value])

    def plateau(self, measure: RiskMeasureKind) -> list[bool]:
        """Per member: whether the margin is constant across the level grid."""
        rows = self.member_table(measure)
        return [bool(np.all(rows[:, i] == rows[0, i])) for i in range(rows.shape[1])]

    def to_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "measures": [m.value for m in self.measures],
            "table": self.table,
        }


def run_im_study(
    cfg: ExperimentConfig,
    measures: Sequence[RiskMeasureKind] = (RiskMeasureKind.VAR, RiskMeasureKind.AVAR),
) -> ImStudyResult:
    """Per-member margins across the level grid, from the exact exposure laws."""
    wf = cfg.waterfall
    laws = tuple(
        member_exposure_law(cfg.contracts, cfg.positions.row(i), cfg.evaluation_date, 0, wf.delta)
        for i in range(cfg.member_count)
    )
    table: dict = {}
    for measure in measures:
        rows = []
        for alpha in cfg.alpha_grid:
            margin_cfg = dataclasses.replace(wf, alpha_im=alpha, im_risk_measure=measure)
            rows.append([initial_margin(law, margin_cfg) for law in laws])
        table[RiskMeasureKind(measure).value] = rows
    return ImStudyResult(
        alphas=cfg.alpha_grid,
        measures=tuple(RiskMeasureKind(m) for m in measures),
        table=table,
        laws=laws,
    )


@dataclass
class StudyResult:
    """Everything one fund study produces, JSON-serializable via to_dict."""

    config_digest: str
    seed: int
    paths_migration: int
    paths_reference: int
    alphas: tuple[float, ...]
    betas: tuple[float, ...]
    im_per_member: dict  # measure -> rows per alpha
    im_total: list  # per alpha (configured IM measure)
    df_total: dict  # alpha index -> list per beta
    df_allocation: list  # per beta at the primary alpha, list per member
    df_standard_error: list  # per beta at the primary alpha
    ratio_grid: list  # rows alphas x cols betas (None when IM total is zero)
    covers: list  # per beta at the primary alpha
    baseline: dict
    effective_loss_stats: dict
    member_rows: list
    diagnostics: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coupon_events(
    contracts: Sequence[CdsContract], anchor: dt.date, period_steps: int, delta: int
) -> tuple[np.ndarray, np.ndarray]:
    """Survival-branch coupon flow and default-branch settlement per (j, m)."""
    j_count = len(contracts)
    surv = np.zeros((j_count, period_steps + 1))
    dflt = np.zeros((j_count, period_steps + 1))
    for m in range(1, period_steps + 1):
        date_m = add_business_days(anchor, m)
        window_end = add_business_days(date_m, delta)
        for j, contract in enumerate(contracts):
            t_d = last_premium_date(date_m, floor=contract.inception)
            t_next = next_premium_date(date_m)
            if date_m < t_next <= window_end:
                surv[j, m] = -contract.spread * year_fraction(t_d, t_next) * contract.notional
            dflt[j, m] = (
                contract.recovery - contract.spread * year_fraction(t_d, date_m)
            ) * contract.notional
    return surv, dflt


class _FundStudyEngine:
    """One-shot engine holding the precomputed tables for a study run."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        wf = cfg.waterfall
        self.period = wf.period_steps
        self.delta = wf.delta
        self.members = cfg.member_count
        self.H = cfg.positions.matrix
        anchor = cfg.evaluation_date
        n_off = self.period + self.delta + 2  # offsets -1 .. period + delta
        self.marks = np.zeros((len(cfg.contracts), n_off))
        for j, contract in enumerate(cfg.contracts):
            for o in range(-1, self.period + self.delta + 1):
                self.marks[j, o + 1] = pre_default_upfront_at_offset(contract, anchor, o)
        self.coupon_surv, self.coupon_dflt = _coupon_events(
            cfg.contracts, anchor, self.period, self.delta
        )
        self.ref_steps = sample_reference_defaults(cfg.contracts, cfg.paths_reference, cfg.seed)
        self._im_cache: dict = {}

    def _im_vector(self, offset: int, alive_key: tuple[bool, ...], alpha: float) -> np.ndarray:
        key = (offset, alive_key, alpha)
        cached = self._im_cache.get(key)
        if cached is not None:
            return cached
        wf = dataclasses.replace(self.cfg.waterfall, alpha_im=alpha)
        values = np.empty(self.members)
        for i in range(self.members):
            law = member_exposure_law(
                self.cfg.contracts,
                self.H[i],
                self.cfg.evaluation_date,
                offset,
                self.delta,
                alive=alive_key,
            )
            values[i] = initial_margin(law, wf)
        self._im_cache[key] = values
        return values

    def exposure_tables(self, alpha: float) -> tuple[np.ndarray, np.ndarray]:
        """Exposure and shortfall tables indexed (member, step-1, reference path).

        The exposure table holds the capped positive-part summand used for
        fund sizing; the shortfall table holds the raw defaulter term used
        for the effective loss (no dividends, never floored).
        """
        cfg = self.cfg
        wf = cfg.waterfall
        n_ref = cfg.paths_reference
        exposure = np.zeros((self.members, self.period, n_ref))
        shortfall = np.zeros((self.members, self.period, n_ref))
        recovery = wf.liquidation_recovery
        for m in range(1, self.period + 1):
            alive_liq = self.ref_steps > m + self.delta  # (n_ref, J)
            alive_prev = self.ref_steps > m - 1
            alive_now = self.ref_steps > m
            v_liq = (alive_liq * self.marks[:, m + self.delta + 1]) @ self.H.T
            vm = (alive_prev * self.marks[:, m - 1 + 1]) @ self.H.T
            flows = alive_liq * self.coupon_surv[:, m] + (
                alive_now & ~alive_liq
            ) * self.coupon_dflt[:, m]
            div = flows @ self.H.T
            im = np.empty((n_ref, self.members))
            patterns, inverse = np.unique(alive_now, axis=0, return_inverse=True)
            for g in range(patterns.shape[0]):
                vec = self._im_vector(m, tuple(bool(b) for b in patterns[g]), alpha)
                im[inverse == g] = vec
            if wf.exposure_mode is ExposureMode.NETTED:
                summand = (1.0 - recovery) * v_liq + div - vm - im
            else:
                summand = v_liq - vm - im
            capped = np.maximum(summand, 0.0)
            if wf.exposure_cap is not None:
                capped = np.minimum(capped, wf.exposure_cap)
            exposure[:, m - 1, :] = capped.T
            shortfall[:, m - 1, :] = ((1.0 - recovery) * v_liq - vm - im).T
        return exposure, shortfall

    def scenario_exposures(
        self, exposure_table: np.ndarray, default_steps: np.ndarray
    ) -> np.ndarray:
        """Expand the lookup table onto the (migration x reference) space."""
        n_mig = default_steps.shape[0]
        n_ref = self.cfg.paths_reference
        ep = np.zeros((self.members, n_mig * n_ref))
        paths, members = np.nonzero(default_steps > 0)
        for p, i in zip(paths.tolist(), members.tolist()):
            step = default_steps[p, i]
            ep[i, p * n_ref : (p + 1) * n_ref] = exposure_table[i, step - 1, :]
        return ep


def _cover_stats(ep: np.ndarray, df_total: float, allocation: np.ndarray) -> dict:
    members, n = ep.shape
    order = np.argsort(ep, axis=0)
    first = order[-1]
    cols = np.arange(n)
    largest = ep[first, cols]
    if members >= 2:
        second = order[-2]
        top2 = largest + ep[second, cols]
    else:
        second = first
        top2 = largest
    total = ep.sum(axis=0)
    self1 = allocation[first] >= largest
    self2 = self1 & (allocation[second] >= ep[second, cols])
    return {
        "cover1": float(np.mean(df_total >= largest)),
        "cover2": float(np.mean(df_total >= top2)),
        "cover_all": float(np.mean(df_total >= total)),
        "self_cover1": float(np.mean(self1)),
        "self_cover2": float(np.mean(self2)),
    }


def cover1_cover2_baseline(ep_samples: np.ndarray) -> tuple[float, float]:
    """Fund sizes under the largest-one / largest-two coverage conventions."""
    ep_samples = np.asarray(ep_samples, dtype=float)
    members = ep_samples.shape[0]
    sorted_ep = np.sort(ep_samples, axis=0)
    c1 = float(sorted_ep[-1].mean())
    c2 = float((sorted_ep[-1] + (sorted_ep[-2] if members >= 2 else 0.0)).mean())
    return c1, c2


def _batch_standard_error(
    losses: np.ndarray, n_mig: int, n_ref: int, beta: float, batches: int = 20
) -> float:
    batches = min(batches, n_mig)
    bounds = np.linspace(0, n_mig, batches + 1, dtype=int)
    estimates = []
    for b in range(batches):
        lo, hi = bounds[b] * n_ref, bounds[b + 1] * n_ref
        if hi <= lo:
            continue
        chunk = losses[lo:hi]
        estimates.append(float(np.dot(empirical_extreme_density(chunk, beta), chunk) / chunk.size))
    if len(estimates) < 2:
        return 0.0
    return float(np.std(estimates, ddof=1) / math.sqrt(len(estimates)))


def run_df_study(cfg: ExperimentConfig, chunk_size: int = 8192) -> StudyResult:
    """Size the default fund over the study grids and collect statistics."""
    engine = _FundStudyEngine(cfg)
    wf = cfg.waterfall
    model = cfg.migration_model()
    _, default_steps = simulate_paths_batch(
        model, cfg.initial_ratings, wf.period_steps, cfg.paths_migration, cfg.seed, chunk_size
    )

    im_study = run_im_study(cfg)
    measure_key = wf.im_risk_measure.value
    if measure_key not in im_study.table:
        im_study = run_im_study(cfg, measures=(wf.im_risk_measure,))
    im_rows = im_study.table[measure_key]
    im_total = [float(np.sum(row)) for row in im_rows]

    try:
        primary_alpha_idx = cfg.alpha_grid.index(wf.alpha_im)
    except ValueError:
        primary_alpha_idx = 0
    try:
        primary_beta_idx = cfg.beta_grid.index(wf.beta_df)
    except ValueError:
        primary_beta_idx = 0

    n_ref = cfg.paths_reference
    n_scenarios = cfg.paths_migration * n_ref
    df_total: dict = {}
    ratio_grid: list = []
    covers: list = []
    df_allocation: list = []
    df_se: list = []
    baseline: dict = {}
    el_stats: dict = {}
    member_rows: list = []
    diagnostics: dict = {}

    primary_ep = None
    primary_shortfall = None
    for a_idx, alpha in enumerate(cfg.alpha_grid):
        exposure_table, shortfall_table = engine.exposure_tables(alpha)
        ep = engine.scenario_exposures(exposure_table, default_steps)
        losses = ep.sum(axis=0)
        totals = []
        ratios = []
        for beta in cfg.beta_grid:
            result = default_fund(ep, beta)
            totals.append(result.total)
            ratios.append(result.total / im_total[a_idx] if im_total[a_idx] > 0 else None)
            if a_idx == primary_alpha_idx:
                df_allocation.append([float(x) for x in result.allocation])
                df_se.append(_batch_standard_error(losses, cfg.paths_migration, n_ref, beta))
                covers.append(_cover_stats(ep, result.total, result.allocation))
        df_total[str(a_idx)] = totals
        ratio_grid.append(ratios)
        if a_idx == primary_alpha_idx:
            primary_ep = ep
            primary_shortfall = shortfall_table
            c1, c2 = cover1_cover2_baseline(ep)
            baseline = {
                "c1": c1,
                "c2": c2,
                "c1_ratio": c1 / im_total[a_idx] if im_total[a_idx] > 0 else None,
                "c2_ratio": c2 / im_total[a_idx] if im_total[a_idx] > 0 else None,
            }

    # Effective loss and unfunded assessments at the configured (alpha, beta).
    df_primary = df_total[str(primary_alpha_idx)][primary_beta_idx]
    alloc_primary = np.array(df_allocation[primary_beta_idx])
    el_sum = 0.0
    el_positive = 0
    udf_sum = np.zeros(cfg.member_count)
    udf_gap = 0.0
    paths_with_defaults = np.flatnonzero((default_steps > 0).any(axis=1))
    for p in paths_with_defaults.tolist():
        steps = default_steps[p]
        by_step: dict[int, list[int]] = {}
        for i, s in enumerate(steps):
            if s > 0:
                by_step.setdefault(int(s), []).append(i)
        for s, members in by_step.items():
            terms = primary_shortfall[members, s - 1, :]  # (len(members), n_ref)
            el_vec = np.maximum(
                terms.sum(axis=0) - wf.skin_in_game - df_primary, 0.0
            )
            el_sum += float(el_vec.sum())
            el_positive += int(np.count_nonzero(el_vec))
            alive = [steps[i] <= 0 or steps[i] > s for i in range(cfg.member_count)]
            calls = unfunded_df(float(el_vec.sum()), alloc_primary, alive)
            udf_sum += calls
            if calls.sum() > 0.0:
                udf_gap = max(udf_gap, abs(float(calls.sum()) - float(el_vec.sum())))
    el_stats = {
        "mean": el_sum / n_scenarios,
        "p_positive": el_positive / n_scenarios,
        "udf_mean": [float(x) for x in udf_sum / n_scenarios],
        "conservation_gap": udf_gap,
    }

    # Per-member summary at the configured levels.
    vm_now = engine.marks[:, -1 + 1] @ engine.H.T  # previous-day marks, all names alive
    for i in range(cfg.member_count):
        member_ep = primary_ep[i]
        member_rows.append(
            {
                "member": i,
                "vm": float(vm_now[i]),
                "im": float(im_rows[primary_alpha_idx][i]),
                "df_contribution": float(alloc_primary[i]),
                "udf_mean": el_stats["udf_mean"][i],
                "ep_mean": float(member_ep.mean()),
                "ep_max": float(member_ep.max()),
                "default_prob": float(np.mean(default_steps[:, i] > 0)),
            }
        )

    alloc_gap = 0.0
    for b_idx in range(len(cfg.beta_grid)):
        gap = abs(sum(df_allocation[b_idx]) - df_total[str(primary_alpha_idx)][b_idx])
        alloc_gap = max(alloc_gap, gap)
    ordering_ok = all(
        c["cover_all"] <= c["cover2"] + 1e-15 and c["cover2"] <= c["cover1"] + 1e-15
        for c in covers
    )
    matched_book = float(np.max(np.abs(engine.H.sum(axis=0)))) * float(
        np.max(np.abs(engine.marks))
    )
    diagnostics = {
        "allocation_gap": alloc_gap,
        "cover_ordering_ok": ordering_ok,
        "udf_conservation_gap": el_stats["conservation_gap"],
        "matched_book_residual": matched_book,
        "paths_with_defaults": int(paths_with_defaults.size),
    }

    return StudyResult(
        config_digest=cfg.digest(),
        seed=cfg.seed,
        paths_migration=cfg.paths_migration,
        paths_reference=cfg.paths_reference,
        alphas=cfg.alpha_grid,
        betas=cfg.beta_grid,
        im_per_member=im_study.table,
        im_total=im_total,
        df_total=df_total,
        df_allocation=df_allocation,
        df_standard_error=df_se,
        ratio_grid=ratio_grid,
        covers=covers,
        baseline=baseline,
        effective_loss_stats=el_stats,
        member_rows=member_rows,
        diagnostics=diagnostics,
    )


def scale_positions(base: PositionMatrix, count: int) -> PositionMatrix:
    """Resize the book to ``count`` members, keeping columns netted to zero.

    Larger books stack whole copies of the base block; smaller books take
    the leading rows and re-zero every column by removing its mean.
    """
    base_count = base.member_count
    if count < 2:
        raise ConfigError("a matched book needs at least two members")
    if count == base_count:
        return base
    if count > base_count:
        if count % base_count:
            raise ConfigError(
                f"member count {count} is not a multiple of the base book ({base_count})"
            )
        reps = count // base_count
        return PositionMatrix(np.vstack([base.matrix] * reps))
    block = base.matrix[:count].copy()
    block -= block.mean(axis=0, keepdims=True)
    return PositionMatrix(block)


def run_scaling_study(cfg: ExperimentConfig, member_counts: Sequence[int]) -> list[dict]:
    """Fund-to-margin ratios across member counts, same seed throughout."""
    seen = []
    for count in member_counts:
        if count not in seen:
            seen.append(int(count))
    rows = []
    for count in seen:
        positions = scale_positions(cfg.positions, count)
        base_ratings = cfg.initial_ratings
        ratings = tuple(base_ratings[i % len(base_ratings)] for i in range(count))
        scaled = dataclasses.replace(cfg, positions=positions, initial_ratings=ratings)
        result = run_df_study(scaled)
        a_idx = (
            cfg.alpha_grid.index(cfg.waterfall.alpha_im)
            if cfg.waterfall.alpha_im in cfg.alpha_grid
            else 0
        )
        b_idx = (
            cfg.beta_grid.index(cfg.waterfall.beta_df)
            if cfg.waterfall.beta_df in cfg.beta_grid
            else 0
        )
        rows.append(
            {
                "member_count": count,
                "df_total": result.df_total[str(a_idx)][b_idx],
                "im_total": result.im_total[a_idx],
                "df_im_ratio": result.ratio_grid[a_idx][b_idx],
                "c1_ratio": result.baseline["c1_ratio"],
                "c2_ratio": result.baseline["c2_ratio"],
            }
        )
    return rows
