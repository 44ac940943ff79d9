import numpy as np
import pytest

from ifsmeasure.distributions import (
    CantorUniform,
    Exponential,
    TabulatedCdf,
    Triangular,
    Uniform01,
    empirical_smoothed_from_samples,
)

TABLE_X = (0.0, 1.0, 3.0, 4.0)
TABLE_F = (0.0, 0.2, 0.9, 1.0)
EMPIRICAL_SAMPLES = (0.3, 1.2, 1.2, 2.0, 2.9, 3.5, 4.1, 5.6, 5.7, 7.0)


def closed_form_dists():
    return [Uniform01(), Exponential(1.0), Exponential(0.5), Triangular(), CantorUniform()]


def all_dists():
    return closed_form_dists() + [
        TabulatedCdf(xs=TABLE_X, fs=TABLE_F),
        empirical_smoothed_from_samples(EMPIRICAL_SAMPLES),
    ]


def dist_id(d):
    return getattr(d, "spec", None) or d.kind


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def table_csv(tmp_path):
    p = tmp_path / "table.csv"
    p.write_text("x,F\n" + "".join(f"{x},{f}\n" for x, f in zip(TABLE_X, TABLE_F)))
    return p


@pytest.fixture
def samples_csv(tmp_path):
    p = tmp_path / "samples.csv"
    p.write_text("value\n" + "".join(f"{v}\n" for v in EMPIRICAL_SAMPLES))
    return p
