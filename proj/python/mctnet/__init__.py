"""Siamese CNN-transformer change detection: tensor engine, blocks and
training utilities, backed by the C++ core."""

from mctnet._core import (  # noqa: F401
    MctError,
    Model,
    Tape,
    Tensor,
    abs,
    add,
    argmax_channel,
    bilinear_upsample2x,
    conv2d,
    depthwise_conv2d,
    flatten_tokens,
    gelu,
    generate_dataset,
    global_avg_pool,
    layernorm,
    linear,
    lr_at,
    mean,
    metrics_from_masks,
    mul,
    relu,
    resolved_config,
    run_verify_suite,
    softmax,
    sub,
    sum,
    unflatten_tokens,
    weighted_ce_loss,
)

__version__ = "0.1.0"
