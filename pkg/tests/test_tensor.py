import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from afgan import ops
from afgan.tensor import Graph, GraphError, Tensor, backward, no_grad

import gradcheck


def test_default_dtype_is_float32_and_float64_is_kept():
    assert Tensor([1, 2, 3]).dtype == np.float32
    assert Tensor(np.zeros(2, np.float64)).dtype == np.float64


def test_sum_gives_all_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_mse_against_zero_of_two_has_grad_four():
    x = Tensor(np.array([2.0]), requires_grad=True)
    ops.mse_loss(x, np.zeros(1)).backward()
    assert x.grad[0] == pytest.approx(4.0)


def test_non_scalar_root_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(GraphError, match="scalar"):
        backward(ops.relu(x))


def test_second_backward_on_same_graph_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    loss = x.sum()
    loss.backward()
    with pytest.raises(GraphError, match="consumed"):
        loss.backward()


def test_root_without_trainable_inputs_rejected():
    with pytest.raises(GraphError):
        Tensor(np.ones(3)).sum().backward()


def test_grads_accumulate_across_separate_graphs():
    x = Tensor(np.ones(2), requires_grad=True)
    x.sum().backward()
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])
    x.zero_grad()
    assert x.grad is None


def test_shared_subexpression_is_visited_once():
    x = Tensor(np.array([3.0]), requires_grad=True)
    y = x * x  # dy/dx = 2x
    z = y + y
    graph = backward(z.sum())
    assert x.grad[0] == pytest.approx(12.0)
    ops_seen = [n for n in graph.nodes]
    assert len(ops_seen) == len({id(n) for n in ops_seen})


def test_graph_is_topologically_ordered():
    x = Tensor(np.ones((1, 1, 4, 4)), requires_grad=True)
    w = Tensor(np.ones((2, 1, 3, 3)), requires_grad=True)
    loss = ops.mse_loss(ops.relu(ops.conv2d(x, w, pad=1)), np.zeros((1, 2, 4, 4)))
    g = Graph(loss)
    pos = {id(n): i for i, n in enumerate(g.nodes)}
    for node in g.nodes:
        if node._record:
            for parent in node._record.inputs:
                if id(parent) in pos:
                    assert pos[id(parent)] < pos[id(node)]
    assert [r.op for r in g.records] == ["conv2d", "relu", "mse_loss"]


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = ops.relu(x)
    assert not y.requires_grad and y._record is None


def test_intermediate_tensors_get_no_grad_slot():
    x = Tensor(np.ones(3), requires_grad=True)
    y = ops.relu(x)
    y.sum().backward()
    assert y.grad is None and x.grad is not None


def test_composite_conv_relu_mse_matches_finite_differences():
    rng = np.random.default_rng(3)
    x = gradcheck.away_from_zero(rng, (2, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    target = rng.standard_normal((2, 3, 3, 3))

    def fn(x, w):
        return ops.mse_loss(ops.relu(ops.conv2d(x, w, stride=1, pad=0)), target)

    assert gradcheck.check(fn, [x, w]) < 1e-4


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(-100, 100, allow_nan=False)))
def test_grad_shape_matches_data(a):
    x = Tensor(a, requires_grad=True)
    ops.mse_loss(ops.relu(x), np.zeros_like(a)).backward()
    assert x.grad.shape == x.shape
    assert np.isfinite(x.grad).all()
