"""Type-A / Type-B 1D-CNN architectures with hand-written backpropagation.

Type-A runs one convolutional pipeline over all link channels stacked
together.  Type-B gives every link its own pipeline of identical shape and
fuses the flattened pipeline outputs with a dense head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L

LAYER_KINDS = ("conv1d", "relu", "maxpool", "flatten", "dense")


class TrainingDivergence(FloatingPointError):
    """Loss became NaN or infinite during training."""

    def __init__(self, message: str, step: int | None = None, epoch: int | None = None):
        self.step = step
        self.epoch = epoch
        super().__init__(f"{message} (epoch={epoch}, step={step})")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    size: int = 1
    out_units: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv1d" and (self.out_channels < 1 or self.kernel < 1 or self.stride < 1 or self.padding < 0):
            raise ValueError(f"invalid conv1d spec {self}")
        if self.kind == "maxpool" and (self.size < 1 or self.stride < 1):
            raise ValueError(f"invalid maxpool spec {self}")
        if self.kind == "dense" and self.out_units < 1:
            raise ValueError(f"invalid dense spec {self}")

    @classmethod
    def conv(cls, out_channels: int, kernel: int = 5, stride: int = 1, padding: int = 2) -> LayerSpec:
        return cls("conv1d", out_channels=out_channels, kernel=kernel, stride=stride, padding=padding)

    @classmethod
    def pool(cls, size: int = 2, stride: int | None = None) -> LayerSpec:
        return cls("maxpool", size=size, stride=size if stride is None else stride)

    @classmethod
    def dense(cls, out_units: int) -> LayerSpec:
        return cls("dense", out_units=out_units)


RELU = LayerSpec("relu")
FLATTEN = LayerSpec("flatten")


@dataclass(frozen=True)
class NetworkSpec:
    variant: str
    num_links: int
    input_length: int
    per_pipeline: tuple[LayerSpec, ...]
    fusion_head: tuple[LayerSpec, ...]
    task: str
    channels_per_link: int = 1

    def __post_init__(self):
        object.__setattr__(self, "per_pipeline", tuple(self.per_pipeline))
        object.__setattr__(self, "fusion_head", tuple(self.fusion_head))
        if self.variant not in ("TypeA", "TypeB"):
            raise ValueError(f"variant must be TypeA or TypeB, got {self.variant!r}")
        if self.task not in ("detect", "position"):
            raise ValueError(f"task must be detect or position, got {self.task!r}")
        if not 1 <= self.num_links:
            raise ValueError("num_links must be >= 1")
        if any(s.kind in ("dense", "flatten") for s in self.per_pipeline):
            raise ValueError("pipelines hold conv1d / relu / maxpool layers only")
        if any(s.kind not in ("dense", "relu") for s in self.fusion_head):
            raise ValueError("the fusion head holds dense / relu layers only")
        last = self.fusion_head[-1] if self.fusion_head else None
        if last is None or last.kind != "dense" or last.out_units != self.output_units:
            raise ValueError(f"the fusion head must end in dense({self.output_units}) for task {self.task!r}")
        self.pipeline_output_shape()

    @property
    def output_units(self) -> int:
        return 1 if self.task == "detect" else 2

    @property
    def loss(self) -> str:
        return "binary-cross-entropy" if self.task == "detect" else "mean-squared-error"

    @property
    def n_pipelines(self) -> int:
        return 1 if self.variant == "TypeA" else self.num_links

    @property
    def pipeline_in_channels(self) -> int:
        c = self.channels_per_link
        return c * self.num_links if self.variant == "TypeA" else c

    def pipeline_output_shape(self) -> tuple[int, int]:
        channels, length = self.pipeline_in_channels, self.input_length
        for s in self.per_pipeline:
            if s.kind == "conv1d":
                channels, length = s.out_channels, L.conv_output_length(length, s.kernel, s.stride, s.padding)
            elif s.kind == "maxpool":
                length = (length - s.size) // s.stride + 1
            if length < 1:
                raise ValueError(f"input length {self.input_length} is too short for the pipeline")
        return channels, length

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for p in range(self.n_pipelines):
            channels = self.pipeline_in_channels
            for i, s in enumerate(self.per_pipeline):
                if s.kind == "conv1d":
                    shapes[f"pipe{p}.{i}.w"] = (s.out_channels, channels, s.kernel)
                    shapes[f"pipe{p}.{i}.b"] = (s.out_channels,)
                    channels = s.out_channels
        c, length = self.pipeline_output_shape()
        units = c * length * self.n_pipelines
        for i, s in enumerate(self.fusion_head):
            if s.kind == "dense":
                shapes[f"head.{i}.w"] = (units, s.out_units)
                shapes[f"head.{i}.b"] = (s.out_units,)
                units = s.out_units
        return shapes

    def n_params(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes().values()))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "num_links": self.num_links,
            "input_length": self.input_length,
            "channels_per_link": self.channels_per_link,
            "task": self.task,
            "per_pipeline": [_layer_dict(s) for s in self.per_pipeline],
            "fusion_head": [_layer_dict(s) for s in self.fusion_head],
        }

    @classmethod
    def from_dict(cls, d: dict) -> NetworkSpec:
        return cls(
            variant=d["variant"],
            num_links=int(d["num_links"]),
            input_length=int(d["input_length"]),
            per_pipeline=tuple(LayerSpec(**s) for s in d["per_pipeline"]),
            fusion_head=tuple(LayerSpec(**s) for s in d["fusion_head"]),
            task=d["task"],
            channels_per_link=int(d.get("channels_per_link", 1)),
        )


def _layer_dict(s: LayerSpec) -> dict:
    return {
        "kind": s.kind,
        "out_channels": s.out_channels,
        "kernel": s.kernel,
        "stride": s.stride,
        "padding": s.padding,
        "size": s.size,
        "out_units": s.out_units,
    }


def default_spec(
    variant: str,
    num_links: int,
    task: str,
    input_length: int = 256,
    channels_per_link: int = 1,
    n_blocks: int = 3,
    kernels: int = 32,
    kernel_size: int = 5,
    hidden_units: int = 64,
) -> NetworkSpec:
    """``n_blocks`` x [conv(32 kernels) -> ReLU -> maxpool(2)] then dense(64) -> ReLU -> head."""
    pipeline = []
    for _ in range(n_blocks):
        pipeline += [LayerSpec.conv(kernels, kernel_size, 1, kernel_size // 2), RELU, LayerSpec.pool(2)]
    out_units = 1 if task == "detect" else 2
    head = (LayerSpec.dense(hidden_units), RELU, LayerSpec.dense(out_units))
    return NetworkSpec(variant, num_links, input_length, tuple(pipeline), head, task, channels_per_link)


def init_params(spec: NetworkSpec, seed: int) -> dict[str, np.ndarray]:
    """Uniform fan-in initialisation; the output layer uses a smaller scale."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1417]))
    shapes = spec.param_shapes()
    last_head = max(k for k in shapes if k.startswith("head."))
    params = {}
    for name, shape in shapes.items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
            continue
        fan_in = shape[0] if name.startswith("head.") else shape[1] * shape[2]
        scale = 3.0 if name == last_head else 6.0
        limit = np.sqrt(scale / fan_in)
        params[name] = rng.uniform(-limit, limit, size=shape)
    return params


def split_inputs(spec: NetworkSpec, x: np.ndarray) -> list[np.ndarray]:
    """Channel groups fed to each pipeline."""
    x = np.asarray(x, dtype=float)
    expected = (spec.channels_per_link * spec.num_links, spec.input_length)
    if x.ndim != 3 or x.shape[1:] != expected:
        raise ValueError(f"network expects input (batch, {expected[0]}, {expected[1]}), got {x.shape}")
    if spec.variant == "TypeA":
        return [x]
    c = spec.channels_per_link
    return [x[:, p * c : (p + 1) * c, :] for p in range(spec.n_pipelines)]


def _forward(spec: NetworkSpec, params, x):
    caches = []
    features = []
    for p, xp in enumerate(split_inputs(spec, x)):
        cache = []
        h = xp
        for i, s in enumerate(spec.per_pipeline):
            cache.append(h)
            if s.kind == "conv1d":
                h = L.conv1d_forward(h, params[f"pipe{p}.{i}.w"], params[f"pipe{p}.{i}.b"], s.stride, s.padding)
            elif s.kind == "relu":
                h = L.relu_forward(h)
            elif s.kind == "maxpool":
                h, arg = L.maxpool_forward(h, s.size, s.stride)
                cache[-1] = (cache[-1], arg)
        caches.append(cache)
        features.append(h.reshape(h.shape[0], -1))
    pipeline_shape = h.shape[1:]
    h = np.concatenate(features, axis=1)
    head_cache = []
    for i, s in enumerate(spec.fusion_head):
        head_cache.append(h)
        if s.kind == "dense":
            h = L.dense_forward(h, params[f"head.{i}.w"], params[f"head.{i}.b"])
        else:
            h = L.relu_forward(h)
    return h, (caches, pipeline_shape, head_cache)


def network_forward(spec: NetworkSpec, params, batch) -> np.ndarray:
    """Detection logits of shape (B,) or positions in metres of shape (B, 2)."""
    out, _ = _forward(spec, params, batch)
    return out[:, 0] if spec.task == "detect" else out


def compute_loss(spec: NetworkSpec, outputs: np.ndarray, labels) -> tuple[float, np.ndarray]:
    labels = np.asarray(labels, dtype=float)
    if spec.task == "detect":
        return L.bce_with_logits(outputs, labels.reshape(outputs.shape))
    return L.mse(outputs, labels.reshape(outputs.shape))


def network_backward(spec: NetworkSpec, params, batch, labels) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and gradient of every parameter, by reverse traversal of the layer list."""
    out, (caches, pipeline_shape, head_cache) = _forward(spec, params, batch)
    loss, grad = compute_loss(spec, out, labels)
    grads = {}
    for i in reversed(range(len(spec.fusion_head))):
        s, h_in = spec.fusion_head[i], head_cache[i]
        if s.kind == "dense":
            grad, grads[f"head.{i}.w"], grads[f"head.{i}.b"] = L.dense_backward(grad, h_in, params[f"head.{i}.w"])
        else:
            grad = L.relu_backward(grad, h_in)

    width = int(np.prod(pipeline_shape))
    for p, cache in enumerate(caches):
        g = grad[:, p * width : (p + 1) * width].reshape((-1,) + tuple(pipeline_shape))
        for i in reversed(range(len(spec.per_pipeline))):
            s = spec.per_pipeline[i]
            if s.kind == "conv1d":
                g, grads[f"pipe{p}.{i}.w"], grads[f"pipe{p}.{i}.b"] = L.conv1d_backward(
                    g, cache[i], params[f"pipe{p}.{i}.w"], s.stride, s.padding
                )
            elif s.kind == "relu":
                g = L.relu_backward(g, cache[i])
            elif s.kind == "maxpool":
                h_in, arg = cache[i]
                g = L.maxpool_backward(g, arg, h_in.shape[2], s.size, s.stride)
    return loss, grads


def pipeline_activations(spec: NetworkSpec, params, batch) -> list[np.ndarray]:
    """Flattened output of every pipeline, before fusion."""
    _, (caches, shape, head_cache) = _forward(spec, params, batch)
    width = int(np.prod(shape))
    fused = head_cache[0]
    return [fused[:, p * width : (p + 1) * width] for p in range(spec.n_pipelines)]
