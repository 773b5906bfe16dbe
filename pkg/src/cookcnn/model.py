"""Architecture specs, presets, parameter counting and whole-network passes."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .errors import ConfigError, ShapeError, StateError
from .tensor import Rng, as_dtype, kaiming_uniform_init

CLASS_COUNT = 11


@dataclass(frozen=True)
class Conv:
    """3x3 same-padded convolution, optional batch-norm, ReLU, optional dropout."""

    out_channels: int
    batchnorm: bool = True
    dropout: float | None = None
    kernel: int = 3


@dataclass(frozen=True)
class MaxPool:
    pass


@dataclass(frozen=True)
class AdaptiveAvgPool:
    out_hw: tuple = (5, 5)


@dataclass(frozen=True)
class DropoutSpec:
    p: float = 0.2


@dataclass(frozen=True)
class DenseSpec:
    out_features: int
    relu: bool = False


_TYPE_NAMES = {
    Conv: "conv",
    MaxPool: "maxpool",
    AdaptiveAvgPool: "adaptive_avgpool",
    DropoutSpec: "dropout",
    DenseSpec: "dense",
}
_TYPES_BY_NAME = {v: k for k, v in _TYPE_NAMES.items()}


@dataclass
class ModelSpec:
    layers: list
    input_shape: tuple = (3, 224, 224)
    num_classes: int = CLASS_COUNT
    name: str = "custom"

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.validate()

    def validate(self):
        if not self.layers:
            raise ConfigError("model spec has no layers")
        for desc in self.layers:
            if type(desc) not in _TYPE_NAMES:
                raise ConfigError(f"unknown layer descriptor {desc!r}")
        last = self.layers[-1]
        if not isinstance(last, DenseSpec) or last.out_features != self.num_classes:
            raise ConfigError(
                f"the last layer must be dense with {self.num_classes} outputs, got {last!r}")
        if last.relu:
            raise ConfigError("the output dense layer must not apply ReLU")
        kinds = [type(d) for d in self.layers]
        pools = [i for i, k in enumerate(kinds) if k is AdaptiveAvgPool]
        if len(pools) > 1:
            raise ConfigError("adaptive_avgpool may appear at most once")
        if pools:
            convs = [i for i, k in enumerate(kinds) if k is Conv]
            if convs and convs[-1] > pools[0]:
                raise ConfigError("adaptive_avgpool must come after all conv layers")
        first_dense = kinds.index(DenseSpec)
        if any(k in (Conv, MaxPool, AdaptiveAvgPool) for k in kinds[first_dense:]):
            raise ConfigError("spatial layers cannot follow a dense layer")
        for d in self.layers:
            if isinstance(d, Conv) and (d.out_channels < 1 or d.kernel % 2 == 0):
                raise ConfigError(f"invalid conv descriptor {d!r}")
            p = getattr(d, "p", None) if isinstance(d, DropoutSpec) else getattr(d, "dropout", None)
            if p is not None and not 0 <= p < 1:
                raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ConfigError(f"input shape must be (C, H, W), got {self.input_shape}")

    def shape_trace(self, hw=None):
        """Activation shapes (C, H, W) or (F,) after every descriptor."""
        c, h, w = self.input_shape
        if hw is not None:
            h, w = hw
        flat = None
        trace = []
        for d in self.layers:
            if isinstance(d, Conv):
                c = d.out_channels
            elif isinstance(d, MaxPool):
                if h < 2 or w < 2:
                    raise ShapeError(f"input too small: maxpool reached a {h}x{w} map")
                h, w = h // 2, w // 2
            elif isinstance(d, AdaptiveAvgPool):
                h, w = d.out_hw
            elif isinstance(d, DenseSpec):
                flat = d.out_features
            trace.append((flat,) if flat is not None else (c, h, w))
        return trace

    def to_dict(self):
        layers = []
        for d in self.layers:
            entry = {"type": _TYPE_NAMES[type(d)]}
            entry.update(asdict(d))
            if "out_hw" in entry:
                entry["out_hw"] = list(entry["out_hw"])
            layers.append(entry)
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "layers": layers,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            descs = []
            for entry in doc["layers"]:
                entry = dict(entry)
                kind = _TYPES_BY_NAME.get(entry.pop("type", None))
                if kind is None:
                    raise ConfigError(f"unknown layer type in {entry!r}")
                if "out_hw" in entry:
                    entry["out_hw"] = tuple(entry["out_hw"])
                descs.append(kind(**entry))
            extra = set(doc) - {"name", "input_shape", "num_classes", "layers"}
            if extra:
                raise ConfigError(f"unknown model spec keys: {sorted(extra)}")
            return cls(
                layers=descs,
                input_shape=tuple(doc.get("input_shape", (3, 224, 224))),
                num_classes=int(doc.get("num_classes", CLASS_COUNT)),
                name=doc.get("name", "custom"),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed model spec: {exc}") from None

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model spec is not valid JSON: {exc}") from None
        return cls.from_dict(doc)


def preset_proposed(pool_out=(5, 5), with_batchnorm=True, conv_dropout=True, num_classes=CLASS_COUNT):
    """Six conv blocks [16, 32, 32, 64, 128, 128], adaptive pool, dropout, dense.

    Each block is conv3x3 -> (batch-norm) -> ReLU -> maxpool 2x2. Dropout 0.2
    follows blocks 2, 4 and 6 when ``conv_dropout`` is set.
    """
    descs = []
    for i, ch in enumerate([16, 32, 32, 64, 128, 128], start=1):
        descs += [Conv(ch, batchnorm=with_batchnorm), MaxPool()]
        if conv_dropout and i % 2 == 0:
            descs.append(DropoutSpec(0.2))
    descs += [AdaptiveAvgPool(tuple(pool_out)), DropoutSpec(0.2), DenseSpec(num_classes)]
    return ModelSpec(descs, num_classes=num_classes, name="proposed")


def preset_proposed_tiny(num_classes=2, channels=(2, 2), size=8):
    """Small variant of the proposed net for finite-difference checks."""
    descs = []
    for i, ch in enumerate(channels, start=1):
        descs += [Conv(ch), MaxPool()]
        if i % 2 == 0:
            descs.append(DropoutSpec(0.2))
    descs += [AdaptiveAvgPool((3, 3)), DropoutSpec(0.2), DenseSpec(num_classes)]
    return ModelSpec(descs, input_shape=(3, size, size), num_classes=num_classes, name="proposed-tiny")


def preset_vgg16(num_classes=1000, batchnorm=False):
    """Configuration D of Simonyan & Zisserman: 13 conv, 5 maxpool, 3 dense."""
    cfg = [64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512, "M"]
    descs = [MaxPool() if v == "M" else Conv(v, batchnorm=batchnorm) for v in cfg]
    descs += [
        AdaptiveAvgPool((7, 7)),
        DenseSpec(4096, relu=True), DropoutSpec(0.5),
        DenseSpec(4096, relu=True), DropoutSpec(0.5),
        DenseSpec(num_classes),
    ]
    return ModelSpec(descs, num_classes=num_classes, name="vgg16")


PRESETS = {
    "proposed": preset_proposed,
    "proposed-tiny": preset_proposed_tiny,
    "vgg16": preset_vgg16,
}


def count_params(spec):
    """Trainable parameter total from the spec alone."""
    return sum(n for _, n in param_breakdown(spec))


def param_breakdown(spec):
    """(label, count) for every parameterized piece, in layer order."""
    prev = spec.input_shape
    rows = []
    for i, (d, shape) in enumerate(zip(spec.layers, spec.shape_trace())):
        if isinstance(d, Conv):
            rows.append((f"{i}:conv", (d.kernel * d.kernel * prev[0] + 1) * d.out_channels))
            if d.batchnorm:
                rows.append((f"{i}:batchnorm", 2 * d.out_channels))
        elif isinstance(d, DenseSpec):
            rows.append((f"{i}:dense", (int(np.prod(prev)) + 1) * d.out_features))
        prev = shape
    return rows


class ModelGraph:
    """Runtime network built from a ModelSpec.

    Weights use Kaiming-uniform initialization, biases start at zero and
    batch-norm scale/shift at one/zero. The output layer's weights start at
    zero, so an untrained network predicts the uniform distribution and its
    loss is exactly ln(num_classes). Train-mode dropout draws its mask from
    ``Rng(seed).child("dropout", forward_index, layer_index)`` unless an rng
    is passed to ``forward``.
    """

    kind = "model"

    def __init__(self, spec, seed=0, dtype="f32"):
        self.spec = spec
        self.seed = int(seed)
        self.dtype = as_dtype(dtype)
        self.layers = []
        self.names = []
        self.metadata = {}
        self._forward_count = 0
        self._ready_for_backward = False
        init = Rng(self.seed, ("init",))
        prev = spec.input_shape
        for i, (d, shape) in enumerate(zip(spec.layers, spec.shape_trace())):
            tag = f"layer{i}"
            if isinstance(d, Conv):
                cin = prev[0]
                fan_in = cin * d.kernel * d.kernel
                w = kaiming_uniform_init((d.out_channels, cin, d.kernel, d.kernel), fan_in,
                                         init.child(i), self.dtype)
                self._add(f"{tag}.conv", L.Conv2d(w, np.zeros(d.out_channels, self.dtype)))
                if d.batchnorm:
                    self._add(f"{tag}.bn", L.BatchNorm2d(d.out_channels, dtype=self.dtype))
                self._add(f"{tag}.relu", L.ReLU())
                if d.dropout:
                    self._add(f"{tag}.dropout", L.Dropout(d.dropout))
            elif isinstance(d, MaxPool):
                self._add(f"{tag}.maxpool", L.MaxPool2d())
            elif isinstance(d, AdaptiveAvgPool):
                self._add(f"{tag}.avgpool", L.AdaptiveAvgPool2d(d.out_hw))
            elif isinstance(d, DropoutSpec):
                self._add(f"{tag}.dropout", L.Dropout(d.p))
            elif isinstance(d, DenseSpec):
                if len(prev) > 1:
                    self._add(f"{tag}.flatten", L.Flatten())
                fan_in = int(np.prod(prev))
                if i == len(spec.layers) - 1:
                    w = np.zeros((fan_in, d.out_features), self.dtype)
                else:
                    w = kaiming_uniform_init((fan_in, d.out_features), fan_in, init.child(i), self.dtype)
                self._add(f"{tag}.dense", L.Dense(w, np.zeros(d.out_features, self.dtype)))
                if d.relu:
                    self._add(f"{tag}.relu", L.ReLU())
            prev = shape

    def _add(self, name, layer):
        self.names.append(name)
        self.layers.append(layer)

    def parameters(self):
        return [(f"{n}.{p}", arr) for n, layer in zip(self.names, self.layers)
                for p, arr in layer.parameters()]

    def gradients(self):
        return [g for layer in self.layers for g in layer.gradients()]

    def buffers(self):
        return [(f"{n}.{b}", arr) for n, layer in zip(self.names, self.layers)
                for b, arr in layer.buffers()]

    def state(self):
        """Every persisted tensor: parameters followed by batch-norm running stats."""
        return self.parameters() + self.buffers()

    def num_parameters(self):
        return sum(arr.size for _, arr in self.parameters())

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x)
        c = self.spec.input_shape[0]
        if x.ndim != 4 or x.shape[1] != c:
            raise ShapeError(f"model expects N x {c} x H x W input, got {x.shape}")
        self.spec.shape_trace(x.shape[2:])
        x = x.astype(self.dtype, copy=False)
        if train:
            if rng is None:
                rng = Rng(self.seed, ("dropout", self._forward_count))
            self._forward_count += 1
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, train=train, rng=rng.child(i) if train else None)
        self._ready_for_backward = train
        return x

    def backward(self, dlogits):
        if not self._ready_for_backward:
            raise StateError("backward requires a preceding train-mode forward")
        self._ready_for_backward = False
        g = np.asarray(dlogits, dtype=self.dtype)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def predict(self, x):
        return self.forward(x, train=False).argmax(axis=1)

    def __repr__(self):
        return f"ModelGraph({self.spec.name!r}, params={self.num_parameters()}, dtype={self.dtype})"


def build(spec, seed=0, dtype="f32"):
    return ModelGraph(spec, seed=seed, dtype=dtype)
