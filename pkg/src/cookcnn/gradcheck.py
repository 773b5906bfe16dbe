"""Finite-difference suite over every layer type and a tiny whole network."""

import numpy as np

from . import layers as L
from .model import ModelGraph, PRESETS
from .tensor import Rng, kaiming_uniform_init

TOLERANCE = 1e-4


class LossLayer(L.Layer):
    """softmax_cross_entropy with fixed labels, shaped like a layer for grad_check."""

    kind = "softmax_cross_entropy"

    def __init__(self, labels):
        super().__init__()
        self.labels = np.asarray(labels)

    def forward(self, x, train=False, rng=None):
        loss, d = L.softmax_cross_entropy(x, self.labels)
        self._cache = d
        return np.array([loss])

    def backward(self, dy):
        return self._take_cache() * dy[0]


def _away_from_zero(rng, shape, margin=0.1):
    mag = rng.uniform(margin, 1.0, shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign


def _distinct(rng, shape):
    """Values separated by at least 0.05 so no maxpool window is near a tie."""
    n = int(np.prod(shape))
    return (rng.permutation(n).astype(np.float64) * 0.05 - 0.025 * n).reshape(shape)


def layer_cases(seed):
    """(name, layer, input) triples, one per layer type, all float64."""
    rng = Rng(seed, ("gradcheck-cases",))
    conv_w = kaiming_uniform_init((3, 2, 3, 3), 18, rng.child("conv"))
    conv_b = rng.child("conv-b").uniform(-0.5, 0.5, 3)
    bn = L.BatchNorm2d(3, dtype=np.float64)
    bn.params["gamma"][...] = rng.child("bn-g").uniform(0.5, 1.5, 3)
    bn.params["beta"][...] = rng.child("bn-b").uniform(-0.5, 0.5, 3)
    dense_w = kaiming_uniform_init((12, 4), 12, rng.child("dense"))
    dense_b = rng.child("dense-b").uniform(-0.5, 0.5, 4)
    x4 = rng.child("x4").uniform(-1, 1, (2, 2, 5, 5))
    return [
        ("conv2d", L.Conv2d(conv_w, conv_b), x4),
        ("batchnorm2d", bn, rng.child("xbn").uniform(-1, 1, (2, 3, 4, 4))),
        ("relu", L.ReLU(), _away_from_zero(rng.child("xrelu"), (2, 3, 4, 4))),
        ("maxpool2d", L.MaxPool2d(), _distinct(rng.child("xpool"), (2, 2, 5, 5))),
        ("adaptive_avgpool2d", L.AdaptiveAvgPool2d((5, 5)), rng.child("xap").uniform(-1, 1, (2, 2, 3, 3))),
        ("dropout", L.Dropout(0.2), rng.child("xdrop").uniform(-1, 1, (2, 3, 4, 4))),
        ("flatten", L.Flatten(), rng.child("xflat").uniform(-1, 1, (2, 3, 2, 2))),
        ("dense", L.Dense(dense_w, dense_b), rng.child("xdense").uniform(-1, 1, (3, 12))),
        ("softmax_cross_entropy", LossLayer([1, 0, 3]), rng.child("xce").uniform(-2, 2, (3, 4))),
    ]


def network_case(seed, preset="proposed-tiny"):
    spec = PRESETS[preset]()
    graph = ModelGraph(spec, seed=seed, dtype="f64")
    for name, p in graph.parameters():
        if name.endswith("bias") or name.endswith("beta"):
            p[...] = Rng(seed, ("gradcheck-bias", name)).uniform(-0.1, 0.1, p.shape)
    # the zero-initialized head would hide every upstream gradient
    head = graph.layers[-1].params["weight"]
    head[...] = kaiming_uniform_init(head.shape, head.shape[0], Rng(seed, ("gradcheck-head",)))
    c, h, w = spec.input_shape
    x = Rng(seed, ("gradcheck-net",)).uniform(-1, 1, (2, c, h, w))
    return graph, x


def _inject(layer, factor=1.01):
    """Test hook: make ``layer``'s backward wrong by a constant factor."""
    original = layer.backward

    def broken(dy):
        return original(dy) * factor

    layer.backward = broken
    return layer


def run_suite(seeds=range(5), preset="proposed-tiny", fault=None, h=1e-5):
    """Worst relative error per layer type (plus "network") over ``seeds``.

    ``fault`` names a layer type whose backward is deliberately corrupted.
    """
    worst = {}
    for seed in seeds:
        for name, layer, x in layer_cases(seed):
            if name == fault:
                _inject(layer)
            err = L.grad_check(layer, x, h=h, seed=seed)
            worst[name] = max(worst.get(name, 0.0), err)
        graph, x = network_case(seed, preset)
        if fault == "network":
            _inject(graph)
        elif fault is not None:
            for n, layer in zip(graph.names, graph.layers):
                if layer.kind == fault:
                    _inject(layer)
        err = L.grad_check(graph, x, h=h, seed=seed)
        worst["network"] = max(worst.get("network", 0.0), err)
    return worst


def format_report(worst, tol=TOLERANCE):
    lines = [f"{'layer':<24}{'max rel err':>14}  status"]
    for name, err in worst.items():
        lines.append(f"{name:<24}{err:>14.3e}  {'ok' if err <= tol else 'FAIL'}")
    return "\n".join(lines)
