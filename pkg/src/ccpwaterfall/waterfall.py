"""Default-waterfall ledger: margins, default fund sizing and allocation.

All cash flows are seen from the clearing house: positive numbers are owed
to it.  The default fund is sized by expected shortfall of the aggregate
member exposure and allocated through the worst-case density of its dual
representation, which makes the per-member pieces sum to the total by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .distributions import (
    DiscreteDistribution,
    LossTransformMode,
    RiskMeasureKind,
    avar,
    entropic,
    loss_transform,
    var,
)
from .errors import ConfigError

__all__ = [
    "ImMethod",
    "ExposureMode",
    "WaterfallConfig",
    "MemberAccounts",
    "variation_margin",
    "risk_measure_value",
    "initial_margin",
    "member_period_exposure",
    "empirical_extreme_density",
    "DefaultFundResult",
    "default_fund",
    "effective_loss",
    "unfunded_df",
]


class ImMethod(str, Enum):
    # Risk of the exposure's positive part; never smaller than POS_OF_RHO.
    POS_PART = "POS_PART"
    # Positive part of the risk of the full cash flow.
    POS_OF_RHO = "POS_OF_RHO"


class ExposureMode(str, Enum):
    NETTED = "NETTED"
    REGULATORY = "REGULATORY"


@dataclass(frozen=True)
class WaterfallConfig:
    """Margin and default-fund policy for one evaluation date."""

    alpha_im: float = 0.01
    beta_df: float = 0.01
    im_method: ImMethod = ImMethod.POS_PART
    im_risk_measure: RiskMeasureKind = RiskMeasureKind.AVAR
    liquidation_recovery: float = 0.4
    skin_in_game: float = 0.0
    delta_f: int = 1
    delta: int = 10
    period_steps: int = 30
    exposure_mode: ExposureMode = ExposureMode.NETTED
    exposure_cap: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "im_method", ImMethod(self.im_method))
        object.__setattr__(self, "im_risk_measure", RiskMeasureKind(self.im_risk_measure))
        object.__setattr__(self, "exposure_mode", ExposureMode(self.exposure_mode))
        if not 0.0 < self.alpha_im <= 1.0:
            raise ConfigError(f"alpha_im must lie in (0, 1], got {self.alpha_im}")
        if not 0.0 < self.beta_df <= 1.0:
            raise ConfigError(f"beta_df must lie in (0, 1], got {self.beta_df}")
        if not 0.0 <= self.liquidation_recovery <= 1.0:
            raise ConfigError("liquidation_recovery must lie in [0, 1]")
        if self.skin_in_game < 0.0:
            raise ConfigError("skin_in_game must be nonnegative")
        if self.delta_f < 1 or self.delta < 1 or self.period_steps < 1:
            raise ConfigError("tenors must be positive step counts")
        if self.delta % self.delta_f or self.period_steps % self.delta_f:
            raise ConfigError("delta and the fund period must be multiples of delta_f")
        if self.exposure_cap is not None and self.exposure_cap <= 0.0:
            raise ConfigError("exposure_cap must be positive when set")


@dataclass
class MemberAccounts:
    """Per-member waterfall balances at one evaluation date."""

    vm: float
    im: float
    df_contribution: float
    udf_call: float = 0.0
    alive: bool = True

    def __post_init__(self):
        if self.im < 0 or self.df_contribution < 0 or self.udf_call < 0:
            raise ConfigError("margin balances cannot be negative")


def variation_margin(member_value_prev: float) -> float:
    """Variation margin call: the member portfolio's previous mark."""
    return float(member_value_prev)


def risk_measure_value(dist: DiscreteDistribution, kind: RiskMeasureKind, level: float) -> float:
    kind = RiskMeasureKind(kind)
    if kind is RiskMeasureKind.VAR:
        return var(dist, level)
    if kind is RiskMeasureKind.AVAR:
        return avar(dist, level)
    return entropic(dist, level)


def initial_margin(x_law: DiscreteDistribution, cfg: WaterfallConfig) -> float:
    """Initial margin from the law of the member's margin-period cash flow.

    ``x_law`` is the law of the raw cash flow (positive values are owed to
    the clearing house); the loss-sign transform is applied here, in exactly
    one place.
    """
    if cfg.im_method is ImMethod.POS_PART:
        loss_law = loss_transform(x_law, LossTransformMode.NEG_POS_PART)
        value = risk_measure_value(loss_law, cfg.im_risk_measure, cfg.alpha_im)
        return max(value, 0.0)
    loss_law = loss_transform(x_law, LossTransformMode.NEG)
    value = risk_measure_value(loss_law, cfg.im_risk_measure, cfg.alpha_im)
    return max(value, 0.0)


def member_period_exposure(
    liquidation_values: Sequence[float],
    dividends: Sequence[float],
    vms: Sequence[float],
    ims: Sequence[float],
    default_step: int | None,
    cfg: WaterfallConfig,
) -> float:
    """Realized net exposure of one member over one fund period.

    Inputs are aligned with the period's steps (entry ``m`` belongs to the
    ``m+1``-th step).  Only the member's default step contributes: the
    portfolio value at the end of the liquidation window, less the assumed
    auction recovery, plus passed-through dividends, net of the margins held.
    The regulatory variant drops the recovery and dividend terms.
    """
    if default_step is None:
        return 0.0
    idx = default_step - 1
    if not 0 <= idx < len(liquidation_values):
        raise ConfigError(f"default step {default_step} outside the fund period")
    value = float(liquidation_values[idx])
    if cfg.exposure_mode is ExposureMode.NETTED:
        summand = (
            (1.0 - cfg.liquidation_recovery) * value
            + float(dividends[idx])
            - float(vms[idx])
            - float(ims[idx])
        )
    else:
        summand = value - float(vms[idx]) - float(ims[idx])
    exposure = max(summand, 0.0)
    if cfg.exposure_cap is not None:
        exposure = min(exposure, cfg.exposure_cap)
    return exposure


def empirical_extreme_density(losses: np.ndarray, beta: float) -> np.ndarray:
    """Worst-case density weights on equally likely loss samples.

    ``losses`` holds aggregate losses (nonnegative).  The weights are
    ``1/beta`` on samples strictly beyond the tail quantile, a fractional
    weight split uniformly across samples tied at the quantile, and zero
    elsewhere; they average to one.
    """
    if not 0.0 < beta <= 1.0:
        raise ConfigError(f"beta must lie in (0, 1], got {beta}")
    losses = np.asarray(losses, dtype=float)
    n = losses.size
    if n == 0:
        raise ConfigError("no loss samples")
    if beta == 1.0:
        return np.ones(n)
    x = -losses  # risk-convention variable; its lower tail is the loss tail
    x_sorted = np.sort(x)
    cutoff = int(np.ceil(beta * n)) - 1
    q = x_sorted[cutoff]
    n_below = int(np.searchsorted(x_sorted, q, side="left"))
    n_at = int(np.searchsorted(x_sorted, q, side="right")) - n_below
    eps = (beta * n - n_below) / n_at
    weights = np.zeros(n)
    weights[x < q] = 1.0 / beta
    weights[x == q] = eps / beta
    return weights


@dataclass(frozen=True)
class DefaultFundResult:
    total: float
    allocation: np.ndarray
    density: np.ndarray


def default_fund(
    ep_samples: np.ndarray, beta_df: float, density: np.ndarray | None = None
) -> DefaultFundResult:
    """Size the default fund and allocate it across members.

    ``ep_samples`` has one row per member and one column per equally likely
    scenario.  The total is the expected shortfall at ``beta_df`` of the
    aggregate exposure; each member's share is the expectation of its own
    exposure under the worst-case density, so shares sum to the total.  A
    caller-supplied feasible ``density`` may replace the canonical maximizer
    for sensitivity work.
    """
    ep_samples = np.asarray(ep_samples, dtype=float)
    if ep_samples.ndim != 2 or ep_samples.size == 0:
        raise ConfigError("ep_samples must be a nonempty members x scenarios array")
    if np.any(ep_samples < 0.0):
        raise ConfigError("exposures must be nonnegative")
    losses = ep_samples.sum(axis=0)
    n = losses.size
    if density is None:
        density = empirical_extreme_density(losses, beta_df)
    else:
        density = np.asarray(density, dtype=float)
        if density.shape != losses.shape:
            raise ConfigError("density must align with the scenario axis")
        if np.any(density < -1e-12) or np.any(density > 1.0 / beta_df + 1e-9):
            raise ConfigError("density must lie in [0, 1/beta]")
        if abs(density.mean() - 1.0) > 1e-8:
            raise ConfigError("density must average to one")
    total = float(np.dot(density, losses) / n)
    allocation = ep_samples @ density / n
    return DefaultFundResult(total=total, allocation=allocation, density=density)


def effective_loss(
    defaulter_shortfalls: Sequence[float], skin_in_game: float, df_total: float
) -> float:
    """Loss left after defaulters' resources, equity tranche and the fund.

    The member terms are aggregated before the positive part is taken, so a
    defaulter whose margins overcover offsets another's shortfall.
    """
    shortfall = float(np.sum(np.asarray(defaulter_shortfalls, dtype=float)))
    return max(shortfall - skin_in_game - df_total, 0.0)


def unfunded_df(
    el: float, df_contributions: Sequence[float], alive: Sequence[bool]
) -> np.ndarray:
    """Assess the effective loss on survivors pro rata to funded shares.

    Uses the 0/0 = 0 convention when no surviving contribution remains.
    """
    df_contributions = np.asarray(df_contributions, dtype=float)
    alive_mask = np.asarray(alive, dtype=bool)
    if df_contributions.shape != alive_mask.shape:
        raise ConfigError("contributions and alive flags must align")
    weights = df_contributions * alive_mask
    denom = weights.sum()
    if denom <= 0.0:
        return np.zeros_like(weights)
    return el * weights / denom
