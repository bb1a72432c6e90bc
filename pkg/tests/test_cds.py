"""Contract valuation, exposure laws, and the fixture-book benchmarks."""

import datetime as dt
import itertools
import math

import numpy as np
import pytest

from ccpwaterfall.cds import (
    CdsContract,
    PositionMatrix,
    add_business_days,
    last_premium_date,
    margin_period_exposure,
    next_premium_date,
    portfolio_exposure_law,
    pre_default_upfront,
    upfront,
    year_fraction,
)
from ccpwaterfall.errors import ConfigError

from conftest import (
    EVAL_DATE,
    H1,
    H2,
    H3,
    TABLE1_BENCHMARK,
    TABLE2_BENCHMARK,
    TABLE3_BENCHMARK,
    TABLE4_BENCHMARK,
    TABLE4_ZERO_PROB,
)


def make_contract(lam=0.002, kappa=0.01, recovery=0.4):
    return CdsContract(
        intensity=lam,
        spread=kappa,
        recovery=recovery,
        inception=dt.date(2015, 6, 20),
        maturity=dt.date(2018, 6, 20),
    )


STUDY = [make_contract(lam) for lam, *_ in TABLE1_BENCHMARK]


class TestCalendar:
    def test_add_business_days(self):
        assert add_business_days(EVAL_DATE, 10) == dt.date(2015, 10, 6)
        assert add_business_days(EVAL_DATE, -1) == dt.date(2015, 9, 21)
        # Friday + 1 skips the weekend.
        assert add_business_days(dt.date(2015, 9, 25), 1) == dt.date(2015, 9, 28)

    def test_year_fraction(self):
        assert year_fraction(EVAL_DATE, dt.date(2018, 6, 20)) == pytest.approx(1002 / 365)

    def test_premium_dates(self):
        assert next_premium_date(EVAL_DATE) == dt.date(2015, 12, 20)
        assert next_premium_date(dt.date(2015, 12, 20)) == dt.date(2016, 3, 20)
        assert last_premium_date(EVAL_DATE) == dt.date(2015, 9, 20)
        assert last_premium_date(dt.date(2015, 7, 1), floor=dt.date(2015, 6, 20)) == dt.date(
            2015, 6, 20
        )


class TestContractValidation:
    def test_rejects_off_grid_dates(self):
        with pytest.raises(ConfigError):
            CdsContract(0.01, 0.01, 0.4, dt.date(2015, 6, 21), dt.date(2018, 6, 20))

    def test_rejects_bad_parameters(self):
        with pytest.raises(ConfigError):
            make_contract(lam=0.0)
        with pytest.raises(ConfigError):
            make_contract(recovery=1.5)

    def test_dict_round_trip(self):
        c = make_contract()
        assert CdsContract.from_dict(c.to_dict()) == c


class TestUpfront:
    def test_fair_spread_contract_is_zero(self):
        c = make_contract(lam=0.025, kappa=0.025 * 0.4)
        assert pre_default_upfront(c, EVAL_DATE) == pytest.approx(0.0, abs=1e-15)

    def test_zero_at_maturity(self):
        c = make_contract()
        assert pre_default_upfront(c, c.maturity) == 0.0
        assert upfront(c, c.maturity, defaulted=False) == 0.0

    def test_direct_formula_value(self):
        c = make_contract(lam=0.002, kappa=0.01, recovery=0.4)
        tau = year_fraction(EVAL_DATE, c.maturity)
        assert tau == pytest.approx(2.745, abs=5e-4)
        expected = (math.exp(-0.002 * tau) - 1.0) * (0.01 - 0.002 * 0.4) / 0.002
        value = pre_default_upfront(c, EVAL_DATE)
        assert value == pytest.approx(expected, abs=1e-15)
        assert value == pytest.approx(-0.0252, abs=1e-4)

    def test_defaulted_contract_marks_zero(self):
        c = make_contract()
        assert upfront(c, EVAL_DATE, defaulted=True) == 0.0
        assert upfront(c, EVAL_DATE, defaulted=False) == pre_default_upfront(c, EVAL_DATE)

    def test_outside_life_raises(self):
        c = make_contract()
        with pytest.raises(ConfigError):
            pre_default_upfront(c, dt.date(2015, 6, 19))
        with pytest.raises(ConfigError):
            pre_default_upfront(c, dt.date(2018, 6, 21))

    def test_more_negative_with_longer_life_when_rich(self):
        # kappa above the fair level: the mark falls as maturity recedes.
        marks = []
        for maturity in (dt.date(2016, 6, 20), dt.date(2017, 6, 20), dt.date(2018, 6, 20)):
            c = CdsContract(0.002, 0.01, 0.4, dt.date(2015, 6, 20), maturity)
            marks.append(pre_default_upfront(c, EVAL_DATE))
        assert marks[0] > marks[1] > marks[2]


class TestMarginPeriodExposure:
    @pytest.mark.parametrize("lam,surv,p,dflt,decimals", TABLE1_BENCHMARK)
    def test_benchmark_table(self, lam, surv, p, dflt, decimals):
        law = margin_period_exposure(make_contract(lam), EVAL_DATE, 10)
        assert law.survival_value == pytest.approx(surv, abs=5e-4)
        assert law.survival_prob == pytest.approx(p, abs=1e-4)
        tol = max(5e-4, 0.5 * 10.0 ** (-decimals))
        assert law.default_value == pytest.approx(dflt, abs=tol)

    def test_survival_probability_formula(self):
        for lam, *_ in TABLE1_BENCHMARK:
            law = margin_period_exposure(make_contract(lam), EVAL_DATE, 10)
            assert law.survival_prob == pytest.approx(math.exp(-lam * 10 / 252), abs=1e-15)

    def test_vanishing_hazard_limit(self):
        c = make_contract(lam=1e-9, kappa=0.0)
        law = margin_period_exposure(c, EVAL_DATE, 10)
        assert law.default_prob < 1e-9
        assert abs(law.survival_value) < 1e-9

    def test_coupon_inside_window_hits_survival_branch(self):
        # Ten days ahead of the December coupon the full period accrual is paid.
        t_k = dt.date(2015, 12, 10)
        c = make_contract(lam=0.002)
        law = margin_period_exposure(c, t_k, 10)
        no_coupon = margin_period_exposure(c, dt.date(2015, 11, 10), 10)
        accrual = 0.01 * year_fraction(dt.date(2015, 9, 20), dt.date(2015, 12, 20))
        assert law.survival_value < no_coupon.survival_value
        assert accrual == pytest.approx(0.01 * 91 / 365)

    def test_outside_life_raises(self):
        with pytest.raises(ConfigError):
            margin_period_exposure(make_contract(), dt.date(2018, 6, 20), 10)


def _brute_force_law(positions, laws):
    """Independent enumeration of the joint outcomes."""
    atoms = {}
    for combo in itertools.product((0, 1), repeat=len(laws)):
        value = 0.0
        prob = 1.0
        for h, law, defaulted in zip(positions, laws, combo):
            value += h * (law.default_value if defaulted else law.survival_value)
            prob *= law.default_prob if defaulted else law.survival_prob
        atoms[round(value, 9)] = atoms.get(round(value, 9), 0.0) + prob
    return atoms


class TestPortfolioLaw:
    def laws(self):
        return [margin_period_exposure(c, EVAL_DATE, 10) for c in STUDY]

    def test_matches_brute_force_enumeration(self):
        laws = self.laws()
        dist = portfolio_exposure_law(H1, laws)
        expected = _brute_force_law(H1, laws)
        assert len(dist.atoms) == len(expected)
        for value, prob in dist.atoms:
            assert prob == pytest.approx(expected[round(value, 9)], rel=1e-12)

    def test_zero_positions_give_point_mass(self):
        dist = portfolio_exposure_law([0.0] * 4, self.laws())
        assert dist.atoms == ((0.0, 1.0),)

    @pytest.mark.parametrize(
        "positions,benchmark",
        [(H1, TABLE2_BENCHMARK), (H2, TABLE3_BENCHMARK), (H3, TABLE4_BENCHMARK)],
    )
    def test_benchmark_loss_laws(self, positions, benchmark):
        from ccpwaterfall.distributions import LossTransformMode, loss_transform

        dist = loss_transform(portfolio_exposure_law(positions, self.laws()), LossTransformMode.NEG_POS_PART)
        for value, prob in benchmark:
            matches = [
                (v, p) for v, p in dist.atoms if abs(v - value) <= 0.01 and p > 0.0
            ]
            assert matches, f"no atom near {value}"
            total = sum(p for _, p in matches)
            assert total == pytest.approx(prob, rel=0.15)

    def test_benchmark_zero_mass_for_short_book(self):
        from ccpwaterfall.distributions import LossTransformMode, loss_transform

        dist = loss_transform(portfolio_exposure_law(H3, self.laws()), LossTransformMode.NEG_POS_PART)
        zero_mass = dict(dist.atoms)[0.0]
        assert zero_mass == pytest.approx(TABLE4_ZERO_PROB, abs=1e-5)

    def test_matched_book_nets_to_zero_per_outcome(self):
        laws = self.laws()
        H = np.array([[1, -1, 1, -1], [-1, 2, -2, 1], [0, -1, 1, 0]], dtype=float)
        H[-1] = -H[:-1].sum(axis=0)
        for combo in itertools.product((0, 1), repeat=4):
            values = np.array(
                [law.default_value if d else law.survival_value for law, d in zip(laws, combo)]
            )
            member_exposures = H @ values
            assert abs(member_exposures.sum()) < 1e-12


class TestPositionMatrix:
    def test_matched_book_enforced(self):
        with pytest.raises(ConfigError):
            PositionMatrix(np.array([[1.0, 2.0], [1.0, -2.0]]))

    def test_csv_round_trip(self, tmp_path):
        matrix = PositionMatrix(np.array([[1.0, -2.5], [-1.0, 2.5]]))
        path = tmp_path / "positions.csv"
        matrix.to_csv(path)
        again = PositionMatrix.from_csv(path)
        assert np.array_equal(matrix.matrix, again.matrix)

    def test_shape_accessors(self):
        matrix = PositionMatrix(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        assert matrix.member_count == 2
        assert matrix.contract_count == 2
        assert matrix.row(0).tolist() == [1.0, -1.0]
