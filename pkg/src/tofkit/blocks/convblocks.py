"""Convolutional building blocks: serial dilated depthwise stacks with
residual connections, separable downsampling convs, and the per-sample
channel normalization they share."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor

__all__ = [
    "Conv2dParams", "ChannelNorm", "channel_norm",
    "SdcLayerParams", "SdcBlockParams", "sdc_forward",
    "DownConvParams", "downconv_forward", "sdc_flops",
]


@dataclass
class Conv2dParams:
    weight: Tensor
    bias: Tensor | None
    stride: int = 1
    dilation: int = 1
    groups: int = 1

    @classmethod
    def init(cls, rng, c_in, c_out, k=3, stride=1, dilation=1, groups=1,
             bias=True, zero=False) -> "Conv2dParams":
        fan_in = (c_in // groups) * k * k
        w = np.zeros((c_out, c_in // groups, k, k)) if zero else \
            rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(c_out, c_in // groups, k, k))
        return cls(weight=Tensor(w, requires_grad=True),
                   bias=Tensor(np.zeros(c_out), requires_grad=True) if bias else None,
                   stride=stride, dilation=dilation, groups=groups)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight, self.bias, stride=self.stride,
                         dilation=self.dilation, groups=self.groups)

    def named_params(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out


@dataclass
class ChannelNorm:
    """Per-sample, per-channel normalization over the spatial axes with a
    learnable scale/shift. No running statistics, so evaluation is independent
    of batch composition."""

    gamma: Tensor
    beta: Tensor
    eps: float = 1e-5

    @classmethod
    def init(cls, channels: int) -> "ChannelNorm":
        return cls(gamma=Tensor(np.ones(channels), requires_grad=True),
                   beta=Tensor(np.zeros(channels), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        return channel_norm(x, self.gamma, self.beta, self.eps)

    def named_params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]


def channel_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    n, c, h, w = x.shape
    mu = ad.reduce_mean(ad.reduce_mean(x, axis=3, keepdims=True), axis=2, keepdims=True)
    centered = x - ad.expand(mu, x.shape)
    var = ad.reduce_mean(ad.reduce_mean(centered * centered, axis=3, keepdims=True),
                         axis=2, keepdims=True)
    std = ad.expand(ad.sqrt(var + eps), x.shape)
    xn = centered / std
    g = ad.expand(ad.reshape(gamma, (1, c, 1, 1)), x.shape)
    b = ad.expand(ad.reshape(beta, (1, c, 1, 1)), x.shape)
    return xn * g + b


@dataclass
class SdcLayerParams:
    depthwise: Conv2dParams
    norm: ChannelNorm
    pointwise: Conv2dParams

    def named_params(self):
        out = []
        for pre, obj in (("dw", self.depthwise), ("norm", self.norm), ("pw", self.pointwise)):
            out += [(f"{pre}.{n}", t) for n, t in obj.named_params()]
        return out


@dataclass
class SdcBlockParams:
    """Serial dilated depthwise convolutions: each layer is depthwise dilated
    conv -> norm -> GELU -> pointwise conv with a residual connection, and the
    dilation schedule is non-decreasing so the receptive field grows cheaply."""

    layers: list[SdcLayerParams]
    dilations: tuple[int, ...]

    @classmethod
    def init(cls, rng, channels: int, dilations=(1, 2)) -> "SdcBlockParams":
        if any(b < a for a, b in zip(dilations, dilations[1:])):
            raise ValueError(f"dilation schedule must be non-decreasing, got {dilations}")
        layers = [
            SdcLayerParams(
                depthwise=Conv2dParams.init(rng, channels, channels, k=3,
                                            dilation=d, groups=channels),
                norm=ChannelNorm.init(channels),
                pointwise=Conv2dParams.init(rng, channels, channels, k=1),
            )
            for d in dilations
        ]
        return cls(layers=layers, dilations=tuple(dilations))

    def named_params(self):
        out = []
        for i, layer in enumerate(self.layers):
            out += [(f"layer{i}.{n}", t) for n, t in layer.named_params()]
        return out


def sdc_forward(x: Tensor, p: SdcBlockParams) -> Tensor:
    if x.shape[1] != p.layers[0].depthwise.weight.shape[0]:
        raise ValueError(f"sdc: channel mismatch, input {x.shape[1]}")
    for layer in p.layers:
        y = layer.depthwise(x)
        y = layer.norm(y)
        y = ad.gelu(y)
        y = layer.pointwise(y)
        x = x + y
    return x


@dataclass
class DownConvParams:
    """Separable stride-2 downsampling: depthwise 3x3 stride 2, then 1x1."""

    depthwise: Conv2dParams
    pointwise: Conv2dParams

    @classmethod
    def init(cls, rng, c_in: int, c_out: int) -> "DownConvParams":
        return cls(depthwise=Conv2dParams.init(rng, c_in, c_in, k=3, stride=2, groups=c_in),
                   pointwise=Conv2dParams.init(rng, c_in, c_out, k=1))

    def named_params(self):
        out = [(f"dw.{n}", t) for n, t in self.depthwise.named_params()]
        out += [(f"pw.{n}", t) for n, t in self.pointwise.named_params()]
        return out


def downconv_forward(x: Tensor, p: DownConvParams) -> Tensor:
    return p.pointwise(ad.gelu(p.depthwise(x)))


def sdc_flops(channels: int, h: int, w: int, n_layers: int) -> int:
    per_layer = (2 * channels * 9 * h * w          # depthwise 3x3
                 + 8 * channels * h * w            # norm
                 + 2 * channels * channels * h * w  # pointwise
                 + 10 * channels * h * w)          # gelu + residual
    return n_layers * per_layer
