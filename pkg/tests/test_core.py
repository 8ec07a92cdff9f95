import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cardpattern.core import (ConfidencePoint, InvalidValue, ModelConfig, NonPositiveAmount,
                              Transaction, TransactionSequence, log_transform)


def test_log_of_ones_is_zero():
    seq = TransactionSequence.from_columns([1, 1, 1], [1, 2, 1])
    assert log_transform(seq).tolist() == [0.0, 0.0, 0.0]


def test_log_of_e():
    assert abs(log_transform([math.e])[0] - 1.0) < 1e-12


def test_zero_amount_rejected():
    with pytest.raises(NonPositiveAmount) as err:
        log_transform([3.0, 0.0])
    assert err.value.index == 2
    with pytest.raises(NonPositiveAmount):
        Transaction(0.0, 1, 1)


@given(st.floats(1e-6, 1e9), st.floats(1e-6, 1e9))
def test_log_transform_strictly_monotone(a, b):
    la, lb = log_transform([a, b])
    if a < b:
        assert la < lb
    elif a > b:
        assert la > lb


def test_region_zero_reserved():
    with pytest.raises(InvalidValue):
        Transaction(5.0, 0, 1)


def test_indices_must_be_contiguous():
    with pytest.raises(InvalidValue):
        TransactionSequence((Transaction(1.0, 1, 1), Transaction(2.0, 1, 3)))


@pytest.mark.parametrize("x,y", [(-0.1, 5), (5, 100.5), (101, 0)])
def test_confidence_point_rejects_out_of_range(x, y):
    with pytest.raises(InvalidValue):
        ConfidencePoint(x, y)


def test_confidence_point_bounds_inclusive():
    ConfidencePoint(0, 100)
    ConfidencePoint(100, 0)


def test_model_config_defaults_and_validation():
    cfg = ModelConfig()
    assert (cfg.p, cfg.d, cfg.theta_ev, cfg.theta_xy, cfg.row_len) == (5, 0, 0.6, 40.0, 10)
    for bad in (dict(p=0), dict(d=-1), dict(theta_ev=1.5), dict(theta_xy=120), dict(row_len=0),
                dict(lag_padding="x"), dict(evp_side="lower"), dict(refit="never")):
        with pytest.raises(InvalidValue):
            ModelConfig(**bad)
    assert ModelConfig().to_dict()["thetas"] == [10.0, 20.0, 30.0, 40.0, 50.0]
