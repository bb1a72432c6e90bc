"""Shared fixtures: benchmark values and small helpers.

The benchmark tables below are independently tabulated reference results for
the fixture book (four contracts, intensities 0.002/0.01/0.015/0.03, coupon
100 bps, recovery 0.4, evaluated 2015-09-22 with a 10-day margin period).
They anchor the engine's exposure laws and margin numbers.
"""

import datetime as dt

import numpy as np
import pytest

from ccpwaterfall.cds import CdsContract
from ccpwaterfall.distributions import DiscreteDistribution

EVAL_DATE = dt.date(2015, 9, 22)

# Per contract: (intensity, survival value, survival prob, default value,
# decimals printed in the benchmark for the default value).
TABLE1_BENCHMARK = [
    (0.002, 0.0004, 0.9999, 0.4252, 4),
    (0.010, 0.0003, 0.9996, 0.4162, 4),
    (0.015, 0.0002, 0.9994, 0.4107, 4),
    (0.030, -0.00008, 0.9988, 0.39, 2),
]

# Benchmark law of the loss -(X)^+ for the moderately long book (10,10,-1,-1).
# The -4.17 atom is printed with a flipped sign in the benchmark table; the
# neighbouring atoms and the tail average pin it as a loss.
TABLE2_BENCHMARK = [
    (-8.41, 3.2e-8),
    (-8.02, 3.8e-11),
    (-8.00, 1.9e-11),
    (-7.61, 2.2e-14),
    (-4.25, 7.9e-5),
    (-4.17, 4.0e-4),
    (-3.86, 9.5e-8),
    (-3.84, 4.7e-8),
    (-3.77, 4.7e-7),
    (-3.76, 2.4e-7),
    (-3.45, 5.6e-11),
    (-3.36, 2.8e-10),
    (-0.0065, 0.998),
]

# Benchmark law for the moderately short book (10,-100,5,5).
TABLE3_BENCHMARK = [
    (-8.25, 5.6e-11),
    (-6.28, 4.7e-8),
    (-6.20, 9.5e-8),
    (-4.223, 7.9e-5),
    (-4.01, 7.1e-7),
    (-2.03, 6.0e-4),
    (-1.95, 1.2e-3),
]

# Benchmark law for the extremely short book (1,-100,-100,-100).
TABLE4_BENCHMARK = [(-0.39, 7.93e-5)]
TABLE4_ZERO_PROB = 0.999921

H1 = (10.0, 10.0, -1.0, -1.0)
H2 = (10.0, -100.0, 5.0, 5.0)
H3 = (1.0, -100.0, -100.0, -100.0)


def benchmark_loss_law(rows) -> DiscreteDistribution:
    """Benchmark atoms completed with a zero atom carrying the rest of the mass."""
    total = sum(p for _, p in rows)
    atoms = list(rows) + [(0.0, 1.0 - total)]
    return DiscreteDistribution.from_atoms(atoms)


@pytest.fixture(scope="session")
def study_contract_fixtures() -> tuple[CdsContract, ...]:
    from ccpwaterfall.simulation import study_contracts

    return study_contracts()


def random_loss_dist(rng: np.random.Generator, max_atoms: int = 32, span=(-5.0, 5.0)):
    n = int(rng.integers(1, max_atoms + 1))
    values = rng.uniform(*span, size=n)
    probs = rng.dirichlet(np.ones(n))
    return DiscreteDistribution(values, probs)
