import numpy as np
import pytest

from poolroutes import gradcheck
from poolroutes.arch import ARCH_NAMES, build_spec
from poolroutes.layers import softmax_cross_entropy
from poolroutes.network import (Activation, ArchError, ArchSpec, ConvBlock, Fc, Flatten, Pool,
                                SoftmaxOutput, build, flatten_width, param_count, shape_trace)
from poolroutes.pooling import AP, MP
from poolroutes.tensor import ShapeError

SMALL = ArchSpec([ConvBlock(1, 4), Pool(AP(2)), ConvBlock(1, 4), Pool(MP(2)), Flatten(),
                  Fc(8), Activation(), SoftmaxOutput()], "small")


def test_shape_trace_and_width():
    trace = shape_trace(SMALL, (3, 8, 8))
    assert trace[1] == (4, 4, 4)
    assert flatten_width(SMALL, (3, 8, 8)) == 16
    assert trace[-1] == (10,)


def test_param_count_matches_instantiated_network():
    for spec in (SMALL, build_spec("A-LeNet5-c")):
        shape = (3, 8, 8) if spec is SMALL else (3, 32, 32)
        net = build(spec, input_shape=shape)
        assert sum(p.size for _, _, p in net.parameters()) == param_count(spec, shape)


@pytest.mark.parametrize("items,index", [
    ([ConvBlock(1, 4), Flatten()], 1),
    ([ConvBlock(1, 4), Pool(MP(3)), Flatten(), SoftmaxOutput()], 1),
    ([Flatten(), ConvBlock(1, 4), SoftmaxOutput()], 1),
    ([ConvBlock(1, 4), SoftmaxOutput(), Flatten(), SoftmaxOutput()], 3),
])
def test_invalid_specs_name_the_item(items, index):
    with pytest.raises(ArchError) as e:
        shape_trace(ArchSpec(items), (3, 8, 8))
    assert e.value.index == index


def test_spec_json_roundtrip():
    for name in ARCH_NAMES:
        spec = build_spec(name)
        again = ArchSpec.from_json(spec.to_json())
        assert again.items == spec.items and again.name == spec.name
    with pytest.raises(ArchError):
        ArchSpec.from_dict({"items": [{"type": "Dropout"}]})


def test_forward_modes_and_errors():
    net = build(SMALL, seed=1, input_shape=(3, 8, 8))
    x = np.random.default_rng(0).standard_normal((5, 3, 8, 8))
    assert net.forward(x, "train").shape == (5, 10)
    assert net.forward(x, "eval").shape == (5, 10)
    with pytest.raises(RuntimeError):
        net.backward(np.zeros((5, 10)))
    with pytest.raises(ShapeError):
        net.forward(np.zeros((1, 3, 16, 16)))
    with pytest.raises(ValueError):
        net.forward(x, "test")


def test_backward_groups():
    net = build(SMALL, seed=1, input_shape=(3, 8, 8))
    x = np.random.default_rng(0).standard_normal((5, 3, 8, 8))
    _, g = softmax_cross_entropy(net.forward(x), np.arange(5))
    bundles = net.backward(g)
    assert set(bundles) == {"CL", "FC"}
    assert bundles["CL"].input.shape == x.shape
    cl_keys = {k for grp, k, _ in net.parameters() if grp == "CL"}
    assert set(bundles["CL"].params) == cl_keys
    assert any(k.endswith("gamma") for k in cl_keys)


def test_same_seed_same_weights_and_state_roundtrip():
    a, b = build(SMALL, seed=3, input_shape=(3, 8, 8)), build(SMALL, seed=3, input_shape=(3, 8, 8))
    for (_, ka, pa), (_, kb, pb) in zip(a.parameters(), b.parameters()):
        assert ka == kb and np.array_equal(pa, pb)
    c = build(SMALL, seed=4, input_shape=(3, 8, 8))
    c.load_state_dict(a.state_dict())
    x = np.ones((2, 3, 8, 8))
    assert np.array_equal(c.forward(x, "eval"), a.forward(x, "eval"))


def test_end_to_end_gradient():
    res = gradcheck.check_network(trials=3)
    assert res.passed, res.row()
