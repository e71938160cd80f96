#!/usr/bin/env python3
"""Independent reference for the analytic cost model.

Parameter counts come from enumerating every weight tensor of the
network by name and shape and summing element counts. FLOPs come from
explicit per-stage token counts. Neither path shares code with the C++
implementation; the printed constants are frozen into
tests/unit/cost_model_test.cpp and tests/acceptance/acceptance_test.cpp.
"""

import math

WINDOW = (8, 7, 7)
INPUT_CHANNELS = 1
NUM_OUTPUTS = 2
FRAMES = 16
HW = 256

SPECS = {
    "default": dict(patch=(2, 4, 4), embed=96, depths=(2, 2, 6, 2),
                    heads=(3, 6, 12, 24), mlp=4),
    "planted": dict(patch=(4, 4, 4), embed=48, depths=(2, 2, 4, 2),
                    heads=(6, 6, 12, 12), mlp=2),
    "minimal": dict(patch=(4, 4, 4), embed=24, depths=(1, 1, 1, 1),
                    heads=(3, 3, 3, 3), mlp=1),
}


def tensors(spec):
    """Yield (name, shape) for every learnable tensor."""
    e = spec["embed"]
    pt, ph, pw = spec["patch"]
    yield "patch_embed.proj.weight", (e, INPUT_CHANNELS, pt, ph, pw)
    yield "patch_embed.proj.bias", (e,)
    bias_rows = (2 * WINDOW[0] - 1) * (2 * WINDOW[1] - 1) * (2 * WINDOW[2] - 1)
    for i in range(4):
        d = e * 2 ** i
        hidden = spec["mlp"] * d
        for b in range(spec["depths"][i]):
            p = f"layers.{i}.blocks.{b}."
            yield p + "norm1.weight", (d,)
            yield p + "norm1.bias", (d,)
            yield p + "attn.relative_position_bias_table", (bias_rows, spec["heads"][i])
            yield p + "attn.qkv.weight", (3 * d, d)
            yield p + "attn.qkv.bias", (3 * d,)
            yield p + "attn.proj.weight", (d, d)
            yield p + "attn.proj.bias", (d,)
            yield p + "norm2.weight", (d,)
            yield p + "norm2.bias", (d,)
            yield p + "mlp.fc1.weight", (hidden, d)
            yield p + "mlp.fc1.bias", (hidden,)
            yield p + "mlp.fc2.weight", (d, hidden)
            yield p + "mlp.fc2.bias", (d,)
        if i < 3:
            yield f"layers.{i}.downsample.reduction.weight", (2 * d, 4 * d)
            yield f"layers.{i}.downsample.norm.weight", (4 * d,)
    d3 = e * 8
    yield "norm.weight", (d3,)
    yield "norm.bias", (d3,)
    yield "head.weight", (NUM_OUTPUTS, d3)
    yield "head.bias", (NUM_OUTPUTS,)


def param_count(spec):
    return sum(math.prod(shape) for _, shape in tensors(spec))


def stage_tokens(spec):
    pt, ph, pw = spec["patch"]
    t, h, w = FRAMES // pt, HW // ph, HW // pw
    out = []
    for _ in range(4):
        out.append(t * h * w)
        h, w = (h + 1) // 2, (w + 1) // 2
    return out


def gflops(spec):
    e = spec["embed"]
    pt, ph, pw = spec["patch"]
    window_volume = WINDOW[0] * WINDOW[1] * WINDOW[2]
    tokens = stage_tokens(spec)
    macs = tokens[0] * INPUT_CHANNELS * pt * ph * pw * e
    for i, tok in enumerate(tokens):
        d = e * 2 ** i
        per_block = (4 * tok * d * d + 2 * tok * window_volume * d
                     + 2 * tok * spec["mlp"] * d * d)
        macs += spec["depths"][i] * per_block
    macs += e * 8 * NUM_OUTPUTS
    return macs / 1e9


if __name__ == "__main__":
    for name, spec in SPECS.items():
        print(f"{name}: tokens={stage_tokens(spec)} params={param_count(spec)} "
              f"gflops={gflops(spec)!r}")
