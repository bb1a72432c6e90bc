"""CDS contract economics and per-contract margin-period exposure laws.

Conventions
-----------
* Contracts follow the post-standardization convention: fixed coupon, upfront
  exchanged at trade, termination dates on the 20th of Mar/Jun/Sep/Dec.
* Marking uses the pre-default upfront under a constant default intensity;
  the discount factor is one throughout the numerical machinery.
* Time is measured in years.  The time to maturity at an evaluation date is
  the calendar ACT/365 fraction; marks on the margin grid step in units of
  one business day worth 1/252 years.  Premium accrual periods are ACT/365
  fractions between calendar dates.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .distributions import DiscreteDistribution, LossTransformMode, loss_transform
from .errors import ConfigError

__all__ = [
    "BUSINESS_DAYS_PER_YEAR",
    "CdsContract",
    "ExposureLaw",
    "PositionMatrix",
    "add_business_days",
    "year_fraction",
    "next_premium_date",
    "last_premium_date",
    "pre_default_upfront",
    "pre_default_upfront_at_offset",
    "upfront",
    "margin_period_exposure",
    "margin_period_exposure_at_offset",
    "portfolio_exposure_law",
    "loss_transform",
    "LossTransformMode",
]

BUSINESS_DAYS_PER_YEAR = 252
DAYS_PER_YEAR = 365.0
_IMM_MONTHS = (3, 6, 9, 12)


def is_business_day(d: dt.date) -> bool:
    return d.weekday() < 5


def add_business_days(d: dt.date, n: int) -> dt.date:
    """Shift a date by n business days on a weekday calendar."""
    step = 1 if n >= 0 else -1
    remaining = abs(n)
    while remaining > 0:
        d += dt.timedelta(days=step)
        if is_business_day(d):
            remaining -= 1
    return d


def year_fraction(d1: dt.date, d2: dt.date) -> float:
    """ACT/365 fraction from d1 to d2 (negative when d2 precedes d1)."""
    return (d2 - d1).days / DAYS_PER_YEAR


def _is_imm(d: dt.date) -> bool:
    return d.day == 20 and d.month in _IMM_MONTHS


def next_premium_date(t: dt.date) -> dt.date:
    """First coupon date strictly after t."""
    for year in (t.year, t.year + 1):
        for month in _IMM_MONTHS:
            candidate = dt.date(year, month, 20)
            if candidate > t:
                return candidate
    raise RuntimeError("premium calendar scan failed")  # pragma: no cover


def last_premium_date(t: dt.date, floor: dt.date | None = None) -> dt.date:
    """Last coupon date on or before t, floored at the contract inception."""
    candidates = [dt.date(y, m, 20) for y in (t.year - 1, t.year) for m in _IMM_MONTHS]
    best = max(d for d in candidates if d <= t)
    if floor is not None and best < floor:
        return floor
    return best


@dataclass(frozen=True)
class CdsContract:
    """Single-name CDS economics under a constant default intensity."""

    intensity: float
    spread: float
    recovery: float
    inception: dt.date
    maturity: dt.date
    notional: float = 1.0

    def __post_init__(self):
        if self.intensity <= 0.0:
            raise ConfigError(f"intensity must be positive, got {self.intensity}")
        if not 0.0 <= self.recovery <= 1.0:
            raise ConfigError(f"recovery must lie in [0, 1], got {self.recovery}")
        if self.inception >= self.maturity:
            raise ConfigError("inception must precede maturity")
        for name, d in (("inception", self.inception), ("maturity", self.maturity)):
            if not _is_imm(d):
                raise ConfigError(f"{name} {d} is not on the Mar/Jun/Sep/Dec 20 grid")

    @classmethod
    def from_dict(cls, data: dict) -> "CdsContract":
        try:
            return cls(
                intensity=float(data["lambda"]),
                spread=float(data["kappa"]),
                recovery=float(data["recovery"]),
                inception=dt.date.fromisoformat(data["inception"]),
                maturity=dt.date.fromisoformat(data["maturity"]),
                notional=float(data.get("notional", 1.0)),
            )
        except KeyError as exc:
            raise ConfigError(f"contract definition missing field {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "lambda": self.intensity,
            "kappa": self.spread,
            "recovery": self.recovery,
            "inception": self.inception.isoformat(),
            "maturity": self.maturity.isoformat(),
            "notional": self.notional,
        }


def _stilde(contract: CdsContract, tau: float) -> float:
    """Pre-default upfront for time-to-maturity tau (years)."""
    if tau <= 0.0:
        return 0.0
    lam = contract.intensity
    return (math.exp(-lam * tau) - 1.0) * (contract.spread - lam * contract.recovery) / lam


def pre_default_upfront(contract: CdsContract, t: dt.date) -> float:
    """Mark of the contract at date t, conditional on no reference default."""
    if t < contract.inception or t > contract.maturity:
        raise ConfigError(f"{t} lies outside the contract life")
    return _stilde(contract, year_fraction(t, contract.maturity)) * contract.notional


def pre_default_upfront_at_offset(contract: CdsContract, anchor: dt.date, steps: int) -> float:
    """Mark at ``anchor + steps`` business days, stepping 1/252 years per day."""
    tau = year_fraction(anchor, contract.maturity) - steps / BUSINESS_DAYS_PER_YEAR
    return _stilde(contract, tau) * contract.notional


def upfront(contract: CdsContract, t: dt.date, defaulted: bool) -> float:
    """Mark of the contract: zero once the reference name has defaulted."""
    if defaulted:
        return 0.0
    return pre_default_upfront(contract, t)


@dataclass(frozen=True)
class ExposureLaw:
    """Two-atom conditional law of one contract's margin-period cash flow."""

    survival_value: float
    survival_prob: float
    default_value: float

    def __post_init__(self):
        if not 0.0 < self.survival_prob <= 1.0:
            raise ValueError("survival probability must lie in (0, 1]")

    @property
    def default_prob(self) -> float:
        return 1.0 - self.survival_prob

    def to_distribution(self) -> DiscreteDistribution:
        return DiscreteDistribution.from_atoms(
            [(self.survival_value, self.survival_prob), (self.default_value, self.default_prob)]
        )


def margin_period_exposure_at_offset(
    contract: CdsContract, anchor: dt.date, offset: int, delta: int
) -> ExposureLaw:
    """Exposure law at grid date ``anchor + offset`` business days.

    Survival branch: mark move over the margin period net of any coupon
    falling due inside it.  Default branch: recovery less the accrued coupon,
    net of the previous mark; the default time is approximated by the period
    start.
    """
    t_k = add_business_days(anchor, offset)
    if t_k < contract.inception or t_k >= contract.maturity:
        raise ConfigError(f"{t_k} lies outside the contract life")
    window_end = add_business_days(t_k, delta)

    mark_prev = pre_default_upfront_at_offset(contract, anchor, offset - 1)
    mark_liq = pre_default_upfront_at_offset(contract, anchor, offset + delta)

    t_d = last_premium_date(t_k, floor=contract.inception)
    t_next = next_premium_date(t_k)
    coupon = 0.0
    if t_k < t_next <= window_end:
        coupon = contract.spread * year_fraction(t_d, t_next)

    survival_value = mark_liq - coupon * contract.notional - mark_prev
    default_value = (
        contract.recovery * contract.notional
        - contract.spread * year_fraction(t_d, t_k) * contract.notional
        - mark_prev
    )
    survival_prob = math.exp(-contract.intensity * delta / BUSINESS_DAYS_PER_YEAR)
    return ExposureLaw(survival_value, survival_prob, default_value)


def margin_period_exposure(contract: CdsContract, t_k: dt.date, delta: int) -> ExposureLaw:
    """Exposure law of the contract over the margin period starting at t_k."""
    return margin_period_exposure_at_offset(contract, t_k, 0, delta)


def portfolio_exposure_law(
    positions: Sequence[float], laws: Sequence[ExposureLaw]
) -> DiscreteDistribution:
    """Exact law of a position-weighted sum of independent two-atom exposures.

    Enumerates the full outcome product space, so it is intended for books of
    a few contracts per member.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.size != len(laws):
        raise ValueError("positions and laws must have equal length")
    n = positions.size
    if n == 0:
        return DiscreteDistribution.point_mass(0.0)
    if n > 20:
        raise ValueError("outcome enumeration limited to 20 contracts")

    values = np.zeros(1)
    probs = np.ones(1)
    for h, law in zip(positions, laws):
        branch_vals = np.array([h * law.survival_value, h * law.default_value])
        branch_probs = np.array([law.survival_prob, law.default_prob])
        values = (values[:, None] + branch_vals[None, :]).ravel()
        probs = (probs[:, None] * branch_probs[None, :]).ravel()
    return DiscreteDistribution(values, probs)


@dataclass(frozen=True)
class PositionMatrix:
    """CCP positions per member and contract; columns net to zero."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2:
            raise ConfigError("position matrix must be two-dimensional")
        scale = max(1.0, float(np.abs(matrix).sum()))
        col_sums = matrix.sum(axis=0)
        if np.any(np.abs(col_sums) > 1e-12 * scale):
            raise ConfigError(
                f"matched-book violation: column sums {col_sums.tolist()} are not zero"
            )
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def member_count(self) -> int:
        return self.matrix.shape[0]

    @property
    def contract_count(self) -> int:
        return self.matrix.shape[1]

    def row(self, member: int) -> np.ndarray:
        return self.matrix[member]

    @classmethod
    def from_csv(cls, path) -> "PositionMatrix":
        with open(path, newline="") as fh:
            rows = [[float(cell) for cell in row] for row in csv.reader(fh) if row]
        if not rows:
            raise ConfigError(f"no rows in position file {path}")
        return cls(np.array(rows))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in self.matrix:
                writer.writerow([repr(float(x)) for x in row])
