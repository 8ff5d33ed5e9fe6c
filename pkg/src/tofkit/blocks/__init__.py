"""Network building blocks, each standalone and individually testable."""

from .attention import (
    XcaParams,
    mxca_block_decomposed,
    mxca_forward,
    quadratic_attention,
    quadratic_attention_flops,
    xca_flops,
    xca_forward,
)
from .convblocks import (
    ChannelNorm,
    Conv2dParams,
    DownConvParams,
    SdcBlockParams,
    SdcLayerParams,
    channel_norm,
    downconv_forward,
    sdc_flops,
    sdc_forward,
)
from .pointgraph import EdgeConvParams, edgeconv_flops, edgeconv_forward, knn
from .jpp import JppParams, jpp_accumulate, jpp_flops, jpp_forward
from .spn import (
    ALL_OFFSETS,
    RING_OFFSETS,
    SpnParams,
    spn_flops,
    spn_heads,
    spn_propagate,
    spn_step,
)

__all__ = [
    "XcaParams", "xca_forward", "mxca_forward", "mxca_block_decomposed",
    "quadratic_attention", "xca_flops", "quadratic_attention_flops",
    "Conv2dParams", "ChannelNorm", "channel_norm", "SdcLayerParams",
    "SdcBlockParams", "sdc_forward", "DownConvParams", "downconv_forward",
    "sdc_flops", "knn", "EdgeConvParams", "edgeconv_forward", "edgeconv_flops",
    "JppParams", "jpp_accumulate", "jpp_forward", "jpp_flops",
    "SpnParams", "spn_step", "spn_propagate", "spn_heads", "RING_OFFSETS",
    "ALL_OFFSETS", "spn_flops",
]
