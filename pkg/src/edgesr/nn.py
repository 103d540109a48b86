"""Layers with hand-derived forward/backward passes, the SRCNN and ESPCN
model builders, and the binary checkpoint format.

All convolutions are stride-1 cross-correlations with zero "same" padding,
so every intermediate stays HR-sized (SRCNN) or LR-sized until the final
pixel shuffle (ESPCN). Backward passes are exact gradients of a scalar
loss given the upstream gradient; the test suite verifies every one of
them against central finite differences in float64.
"""

import struct
import zlib

import numpy as np

from .resample import VALID_SCALES
from .tensors import ShapeMismatchError

# im2col buffers are tiled along output rows so full-image inference does
# not balloon memory; the budget is in elements.
_IM2COL_BUDGET = 1 << 24


class ChannelMismatchError(ValueError):
    pass


def _row_tiles(h, per_row):
    step = max(1, _IM2COL_BUDGET // max(1, per_row))
    for y0 in range(0, h, step):
        yield y0, min(h, y0 + step)


def conv2d_forward(x, kernel, bias):
    """x: (B, C, H, W), kernel: (O, C, kh, kw) odd, bias: (O,) -> (B, O, H, W)."""
    b, c, h, w = x.shape
    o, ck, kh, kw = kernel.shape
    if c != ck:
        raise ChannelMismatchError(f"input has {c} channels, kernel expects {ck}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = np.empty((b, o, h, w), dtype=x.dtype)
    kmat = kernel.reshape(o, -1)
    for y0, y1 in _row_tiles(h, b * c * w * kh * kw):
        rows = y1 - y0
        strip = xp[:, :, y0 : y1 + kh - 1, :]
        cols = np.lib.stride_tricks.sliding_window_view(strip, (kh, kw), axis=(2, 3))
        # cols: (B, C, rows, W, kh, kw) -> (B*rows*W, C*kh*kw)
        cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(b * rows * w, c * kh * kw)
        res = cols @ kmat.T  # (B*rows*W, O)
        out[:, :, y0:y1, :] = res.reshape(b, rows, w, o).transpose(0, 3, 1, 2)
    out += bias[None, :, None, None]
    return out


def conv2d_backward(x, kernel, upstream):
    """Gradients of sum(upstream * conv2d_forward(x, kernel, bias)).

    Returns (input grad, kernel grad, bias grad).
    """
    b, c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    if upstream.shape != (b, o, h, w):
        raise ShapeMismatchError(upstream.shape, (b, o, h, w))
    ph, pw = kh // 2, kw // 2

    grad_bias = upstream.sum(axis=(0, 2, 3))

    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    grad_kernel = np.zeros((o, c * kh * kw), dtype=x.dtype)
    for y0, y1 in _row_tiles(h, b * c * w * kh * kw):
        rows = y1 - y0
        strip = xp[:, :, y0 : y1 + kh - 1, :]
        cols = np.lib.stride_tricks.sliding_window_view(strip, (kh, kw), axis=(2, 3))
        cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(b * rows * w, c * kh * kw)
        up = upstream[:, :, y0:y1, :].transpose(0, 2, 3, 1).reshape(b * rows * w, o)
        grad_kernel += up.T @ cols
    grad_kernel = grad_kernel.reshape(o, c, kh, kw)

    # Input gradient: correlate the upstream map with the 180-degree rotated
    # kernel, summing over output channels.
    krot = kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, -1)  # (C, O*kh*kw)
    up_p = np.pad(upstream, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    grad_x = np.empty_like(x)
    for y0, y1 in _row_tiles(h, b * o * w * kh * kw):
        rows = y1 - y0
        strip = up_p[:, :, y0 : y1 + kh - 1, :]
        cols = np.lib.stride_tricks.sliding_window_view(strip, (kh, kw), axis=(2, 3))
        cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(b * rows * w, o * kh * kw)
        res = cols @ krot.T  # (B*rows*W, C)
        grad_x[:, :, y0:y1, :] = res.reshape(b, rows, w, c).transpose(0, 3, 1, 2)
    return grad_x, grad_kernel, grad_bias


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(x, upstream):
    return upstream * (x > 0)


def tanh_forward(x):
    return np.tanh(x)


def tanh_backward(y, upstream):
    """y is the forward output."""
    return upstream * (1.0 - y * y)


def pixel_shuffle(x, r):
    """(B, C*r^2, H, W) -> (B, C, r*H, r*W); out[c,y,x] picks channel
    c*r^2 + (y mod r)*r + (x mod r) at (y//r, x//r)."""
    b, crr, h, w = x.shape
    if crr % (r * r) != 0:
        raise ChannelMismatchError(f"{crr} channels not divisible by r^2 = {r * r}")
    c = crr // (r * r)
    out = x.reshape(b, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return out.reshape(b, c, h * r, w * r)


def pixel_shuffle_backward(upstream, r):
    """Exact inverse permutation of pixel_shuffle."""
    b, c, hr, wr = upstream.shape
    h, w = hr // r, wr // r
    g = upstream.reshape(b, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4)
    return g.reshape(b, c * r * r, h, w)


class ConvLayer:
    def __init__(self, name, in_ch, out_ch, ksize, dtype=np.float32):
        if ksize % 2 != 1:
            raise ValueError(f"kernel size must be odd, got {ksize}")
        self.name = name
        self.kernel = np.zeros((out_ch, in_ch, ksize, ksize), dtype=dtype)
        self.bias = np.zeros(out_ch, dtype=dtype)

    def forward(self, x):
        return conv2d_forward(x, self.kernel, self.bias), x

    def backward(self, cache, upstream):
        gx, gk, gb = conv2d_backward(cache, self.kernel, upstream)
        return gx, {"kernel": gk, "bias": gb}

    def params(self):
        return {"kernel": self.kernel, "bias": self.bias}

    def set_params(self, tensors):
        self.kernel = tensors["kernel"]
        self.bias = tensors["bias"]


class ReluLayer:
    name = None

    def forward(self, x):
        return relu_forward(x), x

    def backward(self, cache, upstream):
        return relu_backward(cache, upstream), None


class TanhLayer:
    name = None

    def forward(self, x):
        y = tanh_forward(x)
        return y, y

    def backward(self, cache, upstream):
        return tanh_backward(cache, upstream), None


class PixelShuffleLayer:
    name = None

    def __init__(self, r):
        self.r = r

    def forward(self, x):
        return pixel_shuffle(x, self.r), None

    def backward(self, cache, upstream):
        return pixel_shuffle_backward(upstream, self.r), None


ARCHITECTURES = ("srcnn", "espcn")
DEFAULT_WIDTHS = (64, 32)
SMALL_WIDTHS = (8, 4)


class Model:
    """An ordered layer stack plus the metadata a checkpoint carries."""

    def __init__(self, arch, scale, layers):
        self.arch = arch
        self.scale = scale
        self.layers = layers

    def conv_layers(self):
        return [l for l in self.layers if isinstance(l, ConvLayer)]

    def param_count(self):
        return sum(l.kernel.size + l.bias.size for l in self.conv_layers())

    def astype(self, dtype):
        for l in self.conv_layers():
            l.kernel = l.kernel.astype(dtype)
            l.bias = l.bias.astype(dtype)
        return self


def build_model(arch, scale, widths=DEFAULT_WIDTHS, dtype=np.float32):
    """SRCNN: 9-1-5 convs (relu, relu, linear) on a pre-upscaled plane.
    ESPCN: 5-3-3 convs (tanh, tanh, linear) on the LR plane, then a
    pixel shuffle by the scale."""
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}")
    if scale not in VALID_SCALES:
        raise ValueError(f"scale must be one of {VALID_SCALES}, got {scale}")
    n1, n2 = widths
    if arch == "srcnn":
        layers = [
            ConvLayer("conv1", 1, n1, 9, dtype),
            ReluLayer(),
            ConvLayer("conv2", n1, n2, 1, dtype),
            ReluLayer(),
            ConvLayer("conv3", n2, 1, 5, dtype),
        ]
    else:
        layers = [
            ConvLayer("conv1", 1, n1, 5, dtype),
            TanhLayer(),
            ConvLayer("conv2", n1, n2, 3, dtype),
            TanhLayer(),
            ConvLayer("conv3", n2, scale * scale, 3, dtype),
            PixelShuffleLayer(scale),
        ]
    return Model(arch, scale, layers)


def init_params(model, seed):
    """He-style init: kernels ~ Normal(0, sqrt(2 / (in_ch*kh*kw))), biases 0.
    Same seed gives bit-identical parameters."""
    rng = np.random.Generator(np.random.PCG64(seed))
    for layer in model.conv_layers():
        _, in_ch, kh, kw = layer.kernel.shape
        std = np.sqrt(2.0 / (in_ch * kh * kw))
        layer.kernel = (rng.standard_normal(layer.kernel.shape) * std).astype(
            layer.kernel.dtype
        )
        layer.bias = np.zeros_like(layer.bias)
    return model


def model_forward(model, x):
    """Run the stack, returning the output and a tape for the backward pass."""
    tape = []
    for layer in model.layers:
        x, cache = layer.forward(x)
        tape.append(cache)
    return x, tape


def model_backward(model, tape, upstream):
    """Walk the tape backwards; returns ({layer name: param grads}, input grad)."""
    grads = {}
    g = upstream
    for layer, cache in zip(reversed(model.layers), reversed(tape)):
        g, pg = layer.backward(cache, g)
        if pg is not None:
            grads[layer.name] = pg
    return grads, g


# --- checkpoint format -------------------------------------------------
#
# magic "MSCE" | u32 version=1 | u8 arch length + arch bytes | u32 scale
# | u32 record count | records | u32 CRC32 of all preceding bytes.
# Record: u16 name length + name bytes | u8 ndim | ndim x u32 dims
# | dims-product x f32 values. Everything little-endian.

CHECKPOINT_MAGIC = b"MSCE"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointCrcError(CheckpointError):
    pass


class CheckpointFormatError(CheckpointError):
    pass


def save_checkpoint(model, path):
    records = []
    for layer in model.conv_layers():
        for pname, arr in layer.params().items():
            records.append((f"{layer.name}.{pname}", arr))
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<I", CHECKPOINT_VERSION)
    arch_b = model.arch.encode("ascii")
    buf += struct.pack("<B", len(arch_b)) + arch_b
    buf += struct.pack("<I", model.scale)
    buf += struct.pack("<I", len(records))
    for name, arr in records:
        name_b = name.encode("ascii")
        buf += struct.pack("<H", len(name_b)) + name_b
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    with open(path, "wb") as f:
        f.write(bytes(buf))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointFormatError("checkpoint record runs past end of file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    """Reconstruct a Model (float32) from a checkpoint file."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointMagicError(f"{path}: not a model checkpoint (bad magic)")
    (stored_crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != stored_crc:
        raise CheckpointCrcError(f"{path}: checksum mismatch (corrupt or truncated)")

    r = _Reader(data[4:-4])
    (version,) = r.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    (arch_len,) = r.unpack("<B")
    arch = r.take(arch_len).decode("ascii")
    (scale,) = r.unpack("<I")
    (n_records,) = r.unpack("<I")
    tensors = {}
    order = []
    for _ in range(n_records):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("ascii")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        count = int(np.prod(shape)) if ndim else 1
        raw = r.take(count * 4)
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
        order.append(name)
    if r.pos != len(r.data):
        raise CheckpointFormatError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    return _rebuild_model(path, arch, scale, tensors)


def _rebuild_model(path, arch, scale, tensors):
    if arch not in ARCHITECTURES:
        raise CheckpointFormatError(f"{path}: unknown architecture tag {arch!r}")
    expected = [f"conv{i}.{p}" for i in (1, 2, 3) for p in ("kernel", "bias")]
    if sorted(tensors) != sorted(expected):
        raise CheckpointFormatError(
            f"{path}: unexpected record names {sorted(tensors)}"
        )
    n1 = tensors["conv1.kernel"].shape[0]
    n2 = tensors["conv2.kernel"].shape[0]
    model = build_model(arch, scale, widths=(n1, n2))
    for layer in model.conv_layers():
        kernel = tensors[f"{layer.name}.kernel"]
        bias = tensors[f"{layer.name}.bias"]
        if kernel.shape != layer.kernel.shape or bias.shape != layer.bias.shape:
            raise CheckpointFormatError(
                f"{path}: {layer.name} shape {kernel.shape}/{bias.shape} inconsistent "
                f"with architecture {arch} scale {scale}"
            )
        layer.set_params({"kernel": kernel, "bias": bias})
    return model
