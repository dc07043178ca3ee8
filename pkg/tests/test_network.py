import pytest
import numpy as np

from relulimit.core import Layer, Network, ActivationPattern, ActivationMatrix, \
        InvalidArgument, InvalidState
from relulimit.network import forward, forward_batch, preactivations, affine_piece, \
        representation_check, output_map, boundary_margin, random_network


@pytest.fixture
def scalar_network():
    return Network(1, 1, [Layer([[2.0]], [-1.0])])


def test_forward(scalar_network):
    y, pattern = forward(scalar_network, [1.0])
    assert np.allclose(y, [1.0])
    assert pattern.as_list() == [[0]]
    y, pattern = forward(scalar_network, [0.25])
    assert np.allclose(y, [0.0])
    assert pattern.as_list() == [[]]
    y, pattern = forward(scalar_network, [0.5]) # pre-activation exactly zero
    assert pattern.as_list() == [[]]
    assert boundary_margin(scalar_network, [0.5]) == 0.0

    identity = Network(2, 2, [Layer(np.eye(2), np.zeros(2))] * 5)
    y, pattern = forward(identity, [0.3, 0.7])
    assert np.allclose(y, [0.3, 0.7])
    assert all(mask == ActivationMatrix.identity(2) for mask in pattern.layers)
    with pytest.raises(InvalidArgument):
        forward(identity, [0.3])


def test_pattern_consistency():
    rng = np.random.default_rng(1)
    network = random_network(rng, 3, 4, 5)
    for x in rng.random((50, 3)):
        _, pattern = forward(network, x)
        h = x
        for k, layer in enumerate(network.layers):
            z = layer.weight @ h + layer.bias
            assert pattern.layers[k] == ActivationMatrix.from_preactivation(z)
            h = np.maximum(z, 0)

    X = rng.random((20, 3))
    Y, active = forward_batch(network, X)
    assert active.shape == (20, 5, 4)
    for i, x in enumerate(X):
        y, pattern = forward(network, x)
        assert np.allclose(Y[i], y, atol=1e-12)
        assert [list(np.flatnonzero(a)) for a in active[i]] == pattern.as_list()
    assert len(preactivations(network, X[0], depth=2)) == 2


def test_affine_piece(scalar_network):
    piece = affine_piece(scalar_network, ActivationPattern.from_list([[0]], 1))
    assert np.allclose(piece.A, [[2.0]])
    assert np.allclose(piece.c, [-1.0])

    rng = np.random.default_rng(0)
    network = random_network(rng, 3, 4, 5)
    _, pattern = forward(network, [0.5, 0.5, 0.5])
    layers = pattern.layers[:-1] + (ActivationMatrix.zero(4),)
    piece = affine_piece(network, ActivationPattern(layers))
    assert np.all(piece.A == 0)
    assert np.all(piece.c == 0)

    for x in rng.random((1000, 3)):
        y, pattern = forward(network, x)
        piece = affine_piece(network, pattern)
        assert np.max(np.abs(y - piece(x))) <= 1e-10
        inactive = ~pattern.layers[-1].diagonal
        assert np.all(piece.A[inactive] == 0)
        assert np.all(piece.c[inactive] == 0)
    with pytest.raises(InvalidArgument):
        affine_piece(network, pattern.prefix(2))


def test_zero_mask_absorption():
    rng = np.random.default_rng(4)
    network = random_network(rng, 2, 3, 4)
    supports = [[0, 1], [], [0, 2], [1]]
    piece = affine_piece(network, ActivationPattern.from_list(supports, 3))
    assert np.all(piece.A == 0) # nothing of the input survives layer 2

    # remaining offset is that of layers 3 and 4 started from zero
    c = np.zeros(3)
    for layer, support in zip(network.layers[2:], supports[2:]):
        mask = ActivationMatrix.from_diagonal(np.isin(np.arange(3), support))
        c = mask.apply(layer.weight @ c + layer.bias)
    assert np.allclose(piece.c, c)


def test_piecewise_linearity():
    rng = np.random.default_rng(2)
    network = random_network(rng, 2, 3, 3)
    checked = 0
    for _ in range(200):
        x, x_ = rng.random(2), rng.random(2)
        _, pattern = forward(network, x)
        _, pattern_ = forward(network, x_)
        if pattern != pattern_:
            continue
        piece = affine_piece(network, pattern)
        for t in np.linspace(0, 1, 5):
            z = t * x + (1 - t) * x_
            y, pattern_z = forward(network, z)
            if pattern_z == pattern:
                assert np.allclose(y, t * piece(x) + (1 - t) * piece(x_), atol=1e-10)
                checked += 1
    assert checked > 0


def test_representation_check(scalar_network):
    samples = np.array([[0.0], [0.25], [0.5], [0.75], [1.0]])
    assert representation_check(scalar_network, samples) == 0.0
    identity = Network(2, 2, [Layer(np.eye(2), np.zeros(2))] * 3)
    assert representation_check(identity, np.random.default_rng(0).random((10, 2))) == 0.0

    rng = np.random.default_rng(3)
    network = random_network(rng, 4, 6, 8)
    samples = rng.random((1000, 4))
    assert representation_check(network, samples) <= 1e-10

    # a flipped bit of a live neuron breaks the representation
    def flip(pattern):
        return pattern.flip(0, 0)
    single = Network(1, 1, [Layer([[1.0]], [1.0])])
    assert representation_check(single, [[0.5]], pattern_hook=flip) == pytest.approx(1.5)
    with pytest.raises(InvalidArgument):
        representation_check(network, np.zeros((0, 4)))


def test_output_map():
    layers = [Layer(np.eye(2), np.zeros(2))]
    network = Network(2, 2, layers, Layer([[1.0, 1.0]], [1.0]))
    assert np.allclose(output_map(network, [2.0, 3.0]), [6.0])
    network = Network(2, 2, layers, Layer(np.eye(2), np.zeros(2)))
    assert np.allclose(output_map(network, [2.0, 3.0]), [2.0, 3.0])
    network = Network(2, 2, layers, Layer(np.zeros((2, 2)), [4.0, 5.0]))
    assert np.allclose(output_map(network, [2.0, 3.0]), [4.0, 5.0])
    with pytest.raises(InvalidState):
        output_map(Network(2, 2, layers), [2.0, 3.0])
