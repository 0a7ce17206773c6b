import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from poolroutes import pooling as P
from poolroutes.tensor import ShapeError


def test_parse_and_format():
    stack = P.parse_stack("AP3, mp2")
    assert stack == [P.AP(3), P.MP(2)]
    assert P.format_stack(stack) == "AP3,MP2"
    assert P.reduction(stack) == 6
    for bad in ("XP2", "MP1", "AP", ""):
        with pytest.raises(ValueError):
            P.parse_stack(bad)


def test_max_and_average_values():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    assert P.pool_forward(P.MP(2), x)[0][0, 0].tolist() == [[5, 7], [13, 15]]
    assert P.pool_forward(P.AP(2), x)[0][0, 0].tolist() == [[2.5, 4.5], [10.5, 12.5]]
    with pytest.raises(ShapeError):
        P.pool_forward(P.MP(3), x)


def test_max_tie_goes_to_first_index():
    x = np.ones((1, 1, 2, 2))
    y, memo = P.pool_forward(P.MP(2), x)
    g = P.pool_backward(P.MP(2), memo, np.ones_like(y))
    assert g[0, 0].tolist() == [[1, 0], [0, 0]]


def test_stack_order_matters():
    x = np.random.default_rng(0).standard_normal((1, 1, 4, 4))
    a = P.stack_forward([P.AP(2), P.MP(2)], x)[0]
    b = P.stack_forward([P.MP(2), P.AP(2)], x)[0]
    assert a.shape == b.shape == (1, 1, 1, 1)
    assert a[0, 0, 0, 0] != b[0, 0, 0, 0]


finite = st.floats(-1e6, 1e6, allow_nan=False, width=64)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (1, 2, 8, 8), elements=finite))
def test_max_pool_composes(x):
    a = P.stack_forward([P.MP(2), P.MP(4)], x)[0]
    assert np.array_equal(a, P.pool_forward(P.MP(8), x)[0])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (1, 2, 8, 8), elements=finite))
def test_average_pool_composes(x):
    a = P.stack_forward([P.AP(4), P.AP(2)], x)[0]
    np.testing.assert_allclose(a, P.pool_forward(P.AP(8), x)[0], rtol=1e-12, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (1, 1, 6, 6), elements=finite),
       st.sampled_from(["AP3,MP2", "MP3,AP2", "AP2,MP3", "MP2,AP3"]))
def test_backward_mass_conservation(x, text):
    # a unit upstream gradient distributes total mass 1 per output
    stack = P.parse_stack(text)
    y, memos = P.stack_forward(stack, x)
    g = P.stack_backward(stack, memos, np.ones_like(y))
    assert g.sum() == pytest.approx(y.size)
    assert np.all(g >= 0)


def test_route_counts_and_classification():
    rng = np.random.default_rng(0)
    expect = {"AP3,MP2": (9, "localized"), "MP3,AP2": (4, "delocalized"),
              "AP2,MP3": (4, "localized"), "MP2,MP2": (1, "localized")}
    for text, (count, cls) in expect.items():
        stack = P.parse_stack(text)
        assert P.expected_route_count(stack) == count
        for _ in range(50):
            x = rng.standard_normal((1, 1, 6, 6) if P.reduction(stack) == 6 else (1, 1, 4, 4))
            (rep,) = P.route_report(P.route_mask(stack, x), P.reduction(stack), P.stack_cell(stack))
            assert rep.count == count
            assert rep.classification == cls


def test_bounding_box_rule_without_cell():
    mask = np.zeros((6, 6), bool)
    mask[2:4, 2:4] = True
    (rep,) = P.route_report(mask, 6)
    assert (rep.bbox_rows, rep.bbox_cols) == (2, 2) and rep.localized
    # the same 2x2 box straddles the aligned 3x3 cells
    (rep,) = P.route_report(mask, 6, cell=3)
    assert not rep.localized
    assert rep.to_dict()["classification"] == "delocalized"


def test_enumerate_stacks():
    stacks = P.enumerate_stacks(3)
    assert len(stacks) == 8
    assert all(P.reduction(s) == 8 for s in stacks)
    with pytest.raises(ValueError):
        P.enumerate_stacks(0)


@pytest.mark.parametrize("name", ["MP2,MP2", "AP3,MP2", "MP3,AP2", "AP2,MP3"])
def test_stack_gradients(name):
    from poolroutes import gradcheck

    res = gradcheck.check_stack(P.parse_stack(name), trials=5)
    assert res.passed, res.row()
