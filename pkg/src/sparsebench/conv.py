"""Zero-skipping convolution engine with fused ReLU and max-pooling.

Two computation paths share one fixed-point pipeline (32-bit saturating
accumulators, ties-to-even renormalization):

* conv_dense_oracle: gather-style reference that multiplies every
  (output position, kernel element) pair, padded zeros included.
* conv_zeroskip: input-stationary scatter that walks only the non-zero
  pixels of a compressed input and touches only the accumulators each
  one feeds. Skipped pixels cost nothing, not even an iteration.

Both accumulate each output in the same term order (input channel, then
kernel row, then kernel column), and adding zero to a saturating
accumulator is the identity, so the two paths agree bit-exactly even
when intermediate sums clip.

ReLU and 2x2 pooling are fused after accumulation: the window maximum
is taken on the 32-bit plane and clamped once, so no full-resolution
post-activation map is ever written to the modeled memory.
"""

from dataclasses import dataclass, field

import numpy as np

from .codec import (SparseFeatureMap, SparsityStats, decode_sm, encode_sm,
                    measure_sparsity, nonzero_arrays)
from .errors import ShapeMismatch
from .fxp import (INT32_MAX, INT32_MIN, OpCounter, QFormat, QTensor,
                  renormalize_array)
from .trace import AccessTrace

POOL_MODES = ("none", "max2x2")


@dataclass
class ConvLayerSpec:
    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int
    pad: int
    weights: QTensor              # (out_c, in_c, kh, kw)
    bias: np.ndarray              # int32, accumulator scale, length out_c
    relu: bool
    pool: str                     # "none" | "max2x2"
    out_fmt: QFormat

    def __post_init__(self):
        expect = (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
        if self.weights.dims != expect:
            raise ShapeMismatch(
                f"weight dims {self.weights.dims} do not match layer {expect}")
        if self.stride < 1:
            raise ShapeMismatch(f"stride must be >= 1, got {self.stride}")
        if self.pad < 0:
            raise ShapeMismatch(f"pad must be >= 0, got {self.pad}")
        if self.pool not in POOL_MODES:
            raise ShapeMismatch(f"unknown pool mode {self.pool!r}")
        self.bias = np.asarray(self.bias, dtype=np.int32)
        if self.bias.shape != (self.out_channels,):
            raise ShapeMismatch(
                f"bias length {self.bias.shape} does not match out_channels")

    def out_dims(self, h: int, w: int) -> tuple[int, int]:
        """Post-convolution spatial dims, before pooling."""
        h_out = (h + 2 * self.pad - self.kernel_h) // self.stride + 1
        w_out = (w + 2 * self.pad - self.kernel_w) // self.stride + 1
        if h_out < 1 or w_out < 1:
            raise ShapeMismatch(
                f"kernel {self.kernel_h}x{self.kernel_w} does not fit input {h}x{w}")
        return h_out, w_out

    def pooled_dims(self, h: int, w: int) -> tuple[int, int]:
        """Final spatial dims; 2x2 pooling floors away odd edges."""
        h_out, w_out = self.out_dims(h, w)
        if self.pool == "max2x2":
            h_out, w_out = h_out // 2, w_out // 2
            if h_out < 1 or w_out < 1:
                raise ShapeMismatch("output too small to pool 2x2")
        return h_out, w_out

    @property
    def weight_words(self) -> int:
        return self.out_channels * self.in_channels * self.kernel_h * self.kernel_w

    @property
    def bias_words(self) -> int:
        return 2 * self.out_channels  # 32-bit biases, 16-bit words

    def dense_equivalent_macs(self, h: int, w: int) -> int:
        h_out, w_out = self.out_dims(h, w)
        return (h_out * w_out * self.out_channels
                * self.kernel_h * self.kernel_w * self.in_channels)


@dataclass
class LayerRunResult:
    output: SparseFeatureMap
    counters: OpCounter
    accesses: AccessTrace
    output_sparsity: SparsityStats
    pixels_visited: int = 0   # inner-loop iterations; nnz for zero-skip
    live_bytes: int = 0       # input + output + weight buffer footprint


def _sat32(v: np.ndarray) -> np.ndarray:
    return np.clip(v, INT32_MIN, INT32_MAX)


def fused_relu_pool(acc: np.ndarray, relu: bool, pool: str,
                    counter: OpCounter | None = None) -> np.ndarray:
    """Reduce a 32-bit accumulator plane by ReLU and/or 2x2 max in one pass.

    Pooling takes the window maximum first and clamps once: max commutes
    with the monotone clamp, so this equals relu-then-pool while doing a
    quarter of the clamps. Accepts (H, W) or (C, H, W); returns the same
    rank. Odd trailing rows or columns are dropped when pooling.
    """
    plane = np.asarray(acc)
    squeeze = plane.ndim == 2
    if squeeze:
        plane = plane[None]
    if pool == "max2x2":
        c, h, w = plane.shape
        ph, pw = h // 2, w // 2
        blocks = plane[:, : 2 * ph, : 2 * pw].reshape(c, ph, 2, pw, 2)
        out = blocks.max(axis=(2, 4))
        if counter is not None:
            counter.comparisons += c * ph * pw * 3
        if relu:
            out = np.maximum(out, 0)
            if counter is not None:
                counter.comparisons += out.size
    else:
        out = plane
        if relu:
            out = np.maximum(out, 0)
            if counter is not None:
                counter.comparisons += out.size
    out = out.astype(np.int64)
    return out[0] if squeeze else out


def _finish_layer(spec: ConvLayerSpec, acc: np.ndarray, h: int, w: int,
                  in_fmt: QFormat, counter: OpCounter) -> QTensor:
    """Shared tail: fused ReLU/pool on accumulators, then renormalize."""
    reduced = fused_relu_pool(acc, spec.relu, spec.pool, counter)
    frac_in = in_fmt.frac_bits + spec.weights.fmt.frac_bits
    vals = renormalize_array(reduced, frac_in, spec.out_fmt, counter)
    ph, pw = spec.pooled_dims(h, w)
    return QTensor((spec.out_channels, ph, pw), spec.out_fmt,
                   vals.reshape(-1).copy())


def conv_dense_oracle(spec: ConvLayerSpec, x: QTensor,
                      counter: OpCounter | None = None) -> QTensor:
    """Reference convolution over every position, padded zeros included.

    Accumulation order per output is (in channel, kernel row, kernel
    column) with saturation after every term, matching the zero-skip
    path exactly.
    """
    if len(x.dims) != 3 or x.dims[0] != spec.in_channels:
        raise ShapeMismatch(
            f"input dims {x.dims} do not match {spec.in_channels} channels")
    counter = counter if counter is not None else OpCounter()
    c, h, w = x.dims
    h_out, w_out = spec.out_dims(h, w)
    s, p = spec.stride, spec.pad
    acc = np.broadcast_to(
        spec.bias[:, None, None], (spec.out_channels, h_out, w_out)
    ).astype(np.int32).copy()
    counter.adds += acc.size
    xv = x.data.reshape(c, h, w).astype(np.int64)
    wv = spec.weights.data.reshape(spec.weights.dims).astype(np.int64)
    for ic in range(c):
        for ky in range(spec.kernel_h):
            oy0 = max(0, -(-(p - ky) // s))
            oy1 = min(h_out - 1, (h - 1 + p - ky) // s)
            if oy1 < oy0:
                continue
            for kx in range(spec.kernel_w):
                ox0 = max(0, -(-(p - kx) // s))
                ox1 = min(w_out - 1, (w - 1 + p - kx) // s)
                if ox1 < ox0:
                    continue
                xs = xv[ic,
                        oy0 * s + ky - p: oy1 * s + ky - p + 1: s,
                        ox0 * s + kx - p: ox1 * s + kx - p + 1: s]
                prod = wv[:, ic, ky, kx][:, None, None] * xs[None]
                blk = acc[:, oy0:oy1 + 1, ox0:ox1 + 1].astype(np.int64) + prod
                clipped = _sat32(blk)
                counter.saturations += int(np.count_nonzero(clipped != blk))
                acc[:, oy0:oy1 + 1, ox0:ox1 + 1] = clipped.astype(np.int32)
    n_dense = spec.dense_equivalent_macs(h, w)
    counter.macs_executed += n_dense
    counter.macs_dense_equivalent += n_dense
    return _finish_layer(spec, acc, h, w, x.fmt, counter)


def conv_zeroskip(spec: ConvLayerSpec, sfm: SparseFeatureMap,
                  weight_base: int = 0) -> LayerRunResult:
    """Scatter-accumulate from the non-zero pixels of a compressed input.

    Each non-zero pixel updates exactly the output positions whose
    receptive field contains it, for every output channel; nothing else
    is touched. The result is bit-identical to the dense oracle on the
    decoded input.
    """
    if sfm.dims[0] != spec.in_channels:
        raise ShapeMismatch(
            f"input dims {sfm.dims} do not match {spec.in_channels} channels")
    counter = OpCounter()
    trace = AccessTrace()
    c, h, w = sfm.dims
    h_out, w_out = spec.out_dims(h, w)
    s, p = spec.stride, spec.pad
    acc = np.broadcast_to(
        spec.bias[:, None, None], (spec.out_channels, h_out, w_out)
    ).astype(np.int32).copy()
    counter.adds += acc.size

    wv = spec.weights.data.reshape(spec.weights.dims).astype(np.int64)
    cs, ys, xs, vals = nonzero_arrays(sfm)
    pixels_visited = 0
    for ic, y, x, v in zip(cs.tolist(), ys.tolist(), xs.tolist(), vals.tolist()):
        pixels_visited += 1
        oy0 = max(0, -(-(y + p - spec.kernel_h + 1) // s))
        oy1 = min(h_out - 1, (y + p) // s)
        ox0 = max(0, -(-(x + p - spec.kernel_w + 1) // s))
        ox1 = min(w_out - 1, (x + p) // s)
        if oy1 < oy0 or ox1 < ox0:
            continue
        kys = (y + p) - np.arange(oy0, oy1 + 1) * s
        kxs = (x + p) - np.arange(ox0, ox1 + 1) * s
        wblk = wv[:, ic][:, kys][:, :, kxs]
        blk = acc[:, oy0:oy1 + 1, ox0:ox1 + 1].astype(np.int64) + v * wblk
        clipped = _sat32(blk)
        counter.saturations += int(np.count_nonzero(clipped != blk))
        acc[:, oy0:oy1 + 1, ox0:ox1 + 1] = clipped.astype(np.int32)
        counter.macs_executed += wblk.size

    counter.macs_dense_equivalent += spec.dense_equivalent_macs(h, w)
    out_tensor = _finish_layer(spec, acc, h, w, sfm.fmt, counter)
    out_sfm = encode_sm(out_tensor)

    # Traffic: weights and compressed input stream in from DRAM, values
    # are served from SRAM during compute, the pooled compressed output
    # streams back out. Accumulators live in registers and are untraced.
    trace.add("DRAM", "read", "weights", weight_base,
              spec.weight_words + spec.bias_words)
    in_base = weight_base + spec.weight_words + spec.bias_words
    trace.add("DRAM", "read", "activations", in_base, sfm.payload_words)
    trace.add("SRAM", "read", "weights", 0, counter.macs_executed)
    trace.add("SRAM", "read", "activations", 0, sfm.nnz)
    trace.add("SRAM", "write", "activations", 0, out_tensor.size)
    out_base = in_base + sfm.payload_words
    trace.add("DRAM", "write", "activations", out_base, out_sfm.payload_words)

    live = 2 * (sfm.payload_words + out_sfm.payload_words
                + spec.weight_words + spec.bias_words)
    return LayerRunResult(out_sfm, counter, trace, measure_sparsity(out_tensor),
                          pixels_visited, live)


def conv_dense_run(spec: ConvLayerSpec, sfm: SparseFeatureMap,
                   weight_base: int = 0) -> LayerRunResult:
    """Dense-mode layer run: same math, no skipping, uncompressed traffic."""
    x = decode_sm(sfm)
    counter = OpCounter()
    out_tensor = conv_dense_oracle(spec, x, counter)
    out_sfm = encode_sm(out_tensor)
    trace = AccessTrace()
    trace.add("DRAM", "read", "weights", weight_base,
              spec.weight_words + spec.bias_words)
    in_base = weight_base + spec.weight_words + spec.bias_words
    in_words = x.size
    trace.add("DRAM", "read", "activations", in_base, in_words)
    trace.add("SRAM", "read", "weights", 0, counter.macs_executed)
    trace.add("SRAM", "read", "activations", 0, in_words)
    trace.add("SRAM", "write", "activations", 0, out_tensor.size)
    out_base = in_base + in_words
    trace.add("DRAM", "write", "activations", out_base, out_tensor.size)
    live = 2 * (in_words + out_tensor.size
                + spec.weight_words + spec.bias_words)
    return LayerRunResult(out_sfm, counter, trace, measure_sparsity(out_tensor),
                          x.size, live)


@dataclass
class ConvNetRun:
    layer_results: list[LayerRunResult] = field(default_factory=list)
    counters: OpCounter = field(default_factory=OpCounter)
    trace: AccessTrace = field(default_factory=AccessTrace)
    peak_live_bytes: int = 0

    @property
    def per_layer_sparsity(self) -> list[float]:
        return [r.output_sparsity.sparsity for r in self.layer_results]


def run_network(layers: list[ConvLayerSpec], x: QTensor,
                mode: str = "sparse") -> tuple[ConvNetRun, SparseFeatureMap]:
    """Run stacked conv layers; only one layer's buffers are live at a time."""
    if mode not in ("sparse", "dense"):
        raise ValueError(f"unknown mode {mode!r}")
    dims = x.dims
    for i, spec in enumerate(layers):
        if dims[0] != spec.in_channels:
            raise ShapeMismatch(
                f"layer {i} expects {spec.in_channels} channels, chain gives {dims[0]}")
        ph, pw = spec.pooled_dims(dims[1], dims[2])
        dims = (spec.out_channels, ph, pw)

    run = ConvNetRun()
    cur = encode_sm(x)
    weight_base = 0
    for spec in layers:
        if mode == "sparse":
            res = conv_zeroskip(spec, cur, weight_base)
        else:
            res = conv_dense_run(spec, cur, weight_base)
        weight_base += spec.weight_words + spec.bias_words
        run.layer_results.append(res)
        run.counters.merge(res.counters)
        run.trace.extend(res.accesses)
        run.peak_live_bytes = max(run.peak_live_bytes, res.live_bytes)
        cur = res.output
    return run, cur
