"""A small convolutional U-Net that maps an image pair to a displacement field.

Layout (channel-last activations, ``L = len(enc_filters)``)::

    input (m, f)                      2 ch, full resolution
    enc_i : 3x3 conv, stride 2        level i + 1 (1/2 ... 1/2**L)
    dec_0 .. dec_{L-1}: 3x3 conv, then 2x nearest upsampling and
                        concatenation with the encoder output of the
                        level reached (level 1 also gets the 2x2 mean-pooled
                        input pair)
    dec_L ..          : extra 3x3 convs at half resolution
    flow  : 3x3 conv to 2 channels, then 2x bilinear upsampling

Every conv except ``flow`` is followed by a leaky ReLU (slope 0.2).  The
forward pass can record a tape so that :meth:`Network.backward` returns exact
gradients for every weight and bias.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .imgcore import ShapeError, as_image

LEAKY_SLOPE = 0.2
FLOW_INIT_STD = 1e-5
CHECKPOINT_MAGIC = b"CRNET\x00\x00\x00"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    enc_filters: tuple
    dec_filters: tuple
    name: str = "custom"

    def __post_init__(self):
        enc = tuple(int(v) for v in self.enc_filters)
        dec = tuple(int(v) for v in self.dec_filters)
        if not enc or any(v <= 0 for v in enc + dec):
            raise ValueError("filter counts must be positive and the encoder non-empty")
        if len(dec) < len(enc):
            raise ValueError("need at least one decoder layer per encoder level")
        object.__setattr__(self, "enc_filters", enc)
        object.__setattr__(self, "dec_filters", dec)

    @property
    def levels(self) -> int:
        return len(self.enc_filters)

    @property
    def layer_count(self) -> int:
        return len(self.enc_filters) + len(self.dec_filters)


PRESETS = {
    "full": NetConfig((16, 32, 32, 32), (32, 32, 32, 32, 32, 16, 16), "full"),
    "reduced": NetConfig((16, 32), (32, 32, 32, 16, 16), "reduced"),
    "filters16": NetConfig((16, 16, 16, 16), (16,) * 7, "filters16"),
}


def preset(name: str) -> NetConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown net structure {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class ConvSpec:
    name: str
    cin: int
    cout: int
    stride: int
    level: int
    act: bool = True

    @property
    def n_params(self) -> int:
        return 9 * self.cin * self.cout + self.cout


def layer_plan(cfg: NetConfig, in_ch: int = 2, out_ch: int = 2) -> list[ConvSpec]:
    enc, dec = cfg.enc_filters, cfg.dec_filters
    L = len(enc)
    plan = []
    prev = in_ch
    for i, nf in enumerate(enc):
        plan.append(ConvSpec(f"enc{i}", prev, nf, 2, i + 1))
        prev = nf
    skip = {lvl: enc[lvl - 1] for lvl in range(1, L + 1)}
    skip[1] += in_ch
    ch, level = enc[-1], L
    for j, nf in enumerate(dec):
        plan.append(ConvSpec(f"dec{j}", ch, nf, 1, level))
        ch = nf
        if j < L - 1:
            level -= 1
            ch += skip[level]
    plan.append(ConvSpec("flow", ch, out_ch, 1, level, act=False))
    return plan


def plan_param_count(cfg: NetConfig) -> int:
    return sum(s.n_params for s in layer_plan(cfg))


# --- primitives (channel-last) ---------------------------------------------------


def _pad_flat(x):
    h, w, c = x.shape
    wp = w + 2
    p = np.zeros(((h + 2) * wp + 2, c), dtype=x.dtype)
    p[:(h + 2) * wp].reshape(h + 2, wp, c)[1:h + 1, 1:w + 1] = x
    return p


def conv3x3(x, w, b):
    """Same-padded 3x3 convolution, stride 1.  Returns ``(y, padded_input)``.

    The zero-padded input is kept flat with row length ``W + 2`` so each of the
    nine taps is one contiguous slice and one GEMM; the two wrap-around
    columns of the result are discarded.
    """
    h, wd, _ = x.shape
    wp = wd + 2
    n = h * wp
    p = _pad_flat(x)
    out = np.empty((n, w.shape[-1]), dtype=x.dtype)
    out[:] = b
    tmp = np.empty_like(out)
    for dy in range(3):
        for dx in range(3):
            s = dy * wp + dx
            np.matmul(p[s:s + n], w[dy, dx], out=tmp)
            out += tmp
    return out.reshape(h, wp, -1)[:, :wd], p


def conv3x3_backward(g, p, w, in_shape):
    h, wd, ci = in_shape
    wp = wd + 2
    n = h * wp
    gext = np.zeros((n, g.shape[-1]), dtype=g.dtype)
    gext.reshape(h, wp, -1)[:, :wd] = g
    gw = np.empty_like(w)
    gp = np.zeros(((h + 2) * wp + 2, ci), dtype=g.dtype)
    for dy in range(3):
        for dx in range(3):
            s = dy * wp + dx
            gw[dy, dx] = p[s:s + n].T @ gext
            gp[s:s + n] += gext @ w[dy, dx].T
    gx = gp[:(h + 2) * wp].reshape(h + 2, wp, ci)[1:h + 1, 1:wd + 1]
    return gx, gw, g.sum(axis=(0, 1))


def conv3x3_s2(x, w, b):
    """Same-padded 3x3 convolution with stride 2.  Returns ``(y, columns)``."""
    h, wd, ci = x.shape
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    ho, wo = h // 2, wd // 2
    cols = np.empty((ho, wo, 9, ci), dtype=x.dtype)
    for t in range(9):
        dy, dx = divmod(t, 3)
        cols[:, :, t] = xp[dy:dy + h:2, dx:dx + wd:2]
    y = cols.reshape(ho * wo, 9 * ci) @ w.reshape(9 * ci, -1) + b
    return y.reshape(ho, wo, -1), cols


def conv3x3_s2_backward(g, cols, w, in_shape):
    h, wd, ci = in_shape
    ho, wo, co = g.shape
    g2 = g.reshape(ho * wo, co)
    gw = (cols.reshape(ho * wo, 9 * ci).T @ g2).reshape(w.shape)
    gcols = (g2 @ w.reshape(9 * ci, co).T).reshape(ho, wo, 9, ci)
    gxp = np.zeros((h + 2, wd + 2, ci), dtype=g.dtype)
    for t in range(9):
        dy, dx = divmod(t, 3)
        gxp[dy:dy + h:2, dx:dx + wd:2] += gcols[:, :, t]
    return gxp[1:h + 1, 1:wd + 1], gw, g.sum(axis=(0, 1))


def conv_naive(x, w, b, stride=1):
    """Direct nested-loop 3x3 same convolution; the slow reference path."""
    h, wd, _ = x.shape
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    ho, wo = h // stride, wd // stride
    out = np.zeros((ho, wo, w.shape[-1]), dtype=x.dtype)
    for i in range(ho):
        for j in range(wo):
            acc = b.astype(x.dtype).copy()
            for dy in range(3):
                for dx in range(3):
                    acc += xp[i * stride + dy, j * stride + dx] @ w[dy, dx]
            out[i, j] = acc
    return out


def leaky(z):
    return np.maximum(z, LEAKY_SLOPE * z)


def leaky_grad(z, g):
    s = (z > 0).astype(g.dtype)
    s *= 1.0 - LEAKY_SLOPE
    s += LEAKY_SLOPE
    s *= g
    return s


def upsample2(a):
    return np.repeat(np.repeat(a, 2, axis=0), 2, axis=1)


def upsample2_backward(g):
    h, w, c = g.shape
    return g.reshape(h // 2, 2, w // 2, 2, c).sum(axis=(1, 3))


def pool2(a):
    h, w, c = a.shape
    return a.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))


def bilinear_matrix(n_out: int, dtype=np.float64) -> np.ndarray:
    """``(n_out, n_out // 2)`` linear 2x upsampling operator (half-pixel centres)."""
    n_in = n_out // 2
    mat = np.zeros((n_out, n_in), dtype=dtype)
    src = np.clip((np.arange(n_out) + 0.5) / 2.0 - 0.5, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    rows = np.arange(n_out)
    np.add.at(mat, (rows, i0), 1 - frac)
    np.add.at(mat, (rows, i1), frac)
    return mat


# --- network -----------------------------------------------------------------


class Network:
    """Weights plus topology.  ``params`` alternates weight ``(3, 3, cin, cout)`` and bias."""

    def __init__(self, cfg: NetConfig, params, seed: int | None = None):
        self.cfg = cfg
        self.plan = layer_plan(cfg)
        self.params = list(params)
        self.seed = seed
        if len(self.params) != 2 * len(self.plan):
            raise ValueError("parameter list does not match the layer plan")
        for spec, w, b in zip(self.plan, self.params[0::2], self.params[1::2]):
            if w.shape != (3, 3, spec.cin, spec.cout) or b.shape != (spec.cout,):
                raise ValueError(f"bad parameter shape for layer {spec.name}")
        self._tape = None
        self._umats = {}

    @property
    def dtype(self):
        return self.params[0].dtype

    def copy(self) -> "Network":
        return Network(self.cfg, [p.copy() for p in self.params], self.seed)

    def astype(self, dtype) -> "Network":
        return Network(self.cfg, [p.astype(dtype) for p in self.params], self.seed)

    def _upmats(self, h, w):
        key = (h, w)
        if key not in self._umats:
            self._umats[key] = (bilinear_matrix(h, self.dtype), bilinear_matrix(w, self.dtype))
        return self._umats[key]

    def _check(self, m, f):
        m = as_image(m)
        f = as_image(f)
        if m.shape != f.shape:
            raise ShapeError(f"moving {m.shape} and fixed {f.shape} differ in shape")
        div = 2 ** self.cfg.levels
        if m.shape[0] % div or m.shape[1] % div:
            raise ShapeError(f"image dims {m.shape} must be divisible by {div}")
        return m, f

    def forward(self, m, f, cache: bool = False, naive: bool = False) -> np.ndarray:
        """Displacement field ``(2, H, W)`` for moving ``m`` and fixed ``f``.

        With ``cache=True`` the intermediate values needed by :meth:`backward`
        are kept on the instance (training use only).  ``naive=True`` runs the
        nested-loop reference convolution instead of the GEMM path.
        """
        m, f = self._check(m, f)
        dt = self.dtype
        x = np.stack([m, f], axis=-1).astype(dt)
        L = self.cfg.levels
        tape = []
        enc_out = {}
        a = x
        k = 0
        for i in range(L):
            spec = self.plan[k]
            w, b = self.params[2 * k], self.params[2 * k + 1]
            if naive:
                z, saved = conv_naive(a, w, b, 2), a
            else:
                z, saved = conv3x3_s2(a, w, b)
            tape.append((spec, a.shape, saved, z))
            a = leaky(z)
            enc_out[spec.level] = a
            k += 1
        pooled = pool2(x)
        h = a
        for j in range(len(self.cfg.dec_filters)):
            spec = self.plan[k]
            w, b = self.params[2 * k], self.params[2 * k + 1]
            if naive:
                z, saved = conv_naive(h, w, b, 1), h
            else:
                z, saved = conv3x3(h, w, b)
            tape.append((spec, h.shape, saved, z))
            h = leaky(z)
            k += 1
            if j < L - 1:
                level = spec.level - 1
                parts = [upsample2(h), enc_out[level]]
                if level == 1:
                    parts.append(pooled)
                h = np.concatenate(parts, axis=-1)
        spec = self.plan[k]
        w, b = self.params[2 * k], self.params[2 * k + 1]
        if naive:
            z, saved = conv_naive(h, w, b, 1), h
        else:
            z, saved = conv3x3(h, w, b)
        tape.append((spec, h.shape, saved, z))
        uh, uw = self._upmats(*m.shape)
        flow = np.matmul(uw, np.tensordot(uh, z, axes=(1, 0)))
        if cache:
            self._tape = (tape, m.shape, naive)
        return np.ascontiguousarray(flow.transpose(2, 0, 1))

    def backward(self, grad_field) -> list[np.ndarray]:
        """Gradients of the loss w.r.t. every parameter, given ``dL/d field``.

        Requires a preceding ``forward(..., cache=True)``; the tape is consumed.
        """
        if self._tape is None:
            raise RuntimeError("backward() called without a cached forward pass")
        tape, shape, naive = self._tape
        self._tape = None
        g = np.asarray(grad_field, dtype=self.dtype)
        if g.shape != (2,) + tuple(shape):
            raise ShapeError(f"gradient shape {g.shape} does not match field shape {(2,) + tuple(shape)}")
        uh, uw = self._upmats(*shape)
        g = g.transpose(1, 2, 0)
        g = np.tensordot(uh.T, np.matmul(uw.T, g), axes=(1, 0))
        grads = [None] * len(self.params)
        L = self.cfg.levels
        enc_grad = {}
        n_dec = len(self.cfg.dec_filters)
        k = len(tape) - 1
        for idx in range(n_dec, -1, -1):
            spec, in_shape, saved, z = tape[k]
            if spec.act:
                g = leaky_grad(z, g)
            gx, gw, gb = self._conv_backward(g, saved, k, in_shape, spec.stride, naive)
            grads[2 * k], grads[2 * k + 1] = gw, gb
            k -= 1
            g = gx
            j = idx - 1  # decoder layer that produced this conv's input
            if 0 <= j < L - 1:
                level = tape[k][0].level - 1
                up_ch = tape[k][0].cout
                skip_ch = tape[level - 1][0].cout
                enc_grad[level] = g[..., up_ch:up_ch + skip_ch]
                g = upsample2_backward(g[..., :up_ch])
        for i in range(L - 1, -1, -1):
            spec, in_shape, saved, z = tape[k]
            if spec.level in enc_grad and i < L - 1:
                g = g + enc_grad[spec.level]
            g = leaky_grad(z, g)
            gx, gw, gb = self._conv_backward(g, saved, k, in_shape, spec.stride, naive)
            grads[2 * k], grads[2 * k + 1] = gw, gb
            k -= 1
            g = gx
        return grads

    def _conv_backward(self, g, saved, k, in_shape, stride, naive):
        w = self.params[2 * k]
        if naive:
            return _conv_naive_backward(g, saved, w, stride)
        if stride == 2:
            return conv3x3_s2_backward(g, saved, w, in_shape)
        return conv3x3_backward(g, saved, w, in_shape)


def _conv_naive_backward(g, x, w, stride):
    """Loop form of the convolution adjoint (weight, bias and input gradients)."""
    h, wd, _ = x.shape
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    ho, wo, _ = g.shape
    for i in range(ho):
        for j in range(wo):
            for dy in range(3):
                for dx in range(3):
                    r, c = i * stride + dy, j * stride + dx
                    gw[dy, dx] += np.outer(xp[r, c], g[i, j])
                    gxp[r, c] += w[dy, dx] @ g[i, j]
    return gxp[1:h + 1, 1:wd + 1], gw, g.sum(axis=(0, 1))


def build(cfg: NetConfig, seed: int = 0, dtype=np.float32) -> Network:
    """Freshly initialised network.

    Hidden layers use fan-in scaled uniform (He) initialisation for the leaky
    ReLU; the flow layer starts at ``1e-5`` scale so the initial field is
    nearly the identity.  Biases start at zero.
    """
    rng = np.random.default_rng(seed)
    gain = np.sqrt(2.0 / (1.0 + LEAKY_SLOPE**2))
    params = []
    for spec in layer_plan(cfg):
        shape = (3, 3, spec.cin, spec.cout)
        if spec.act:
            bound = gain * np.sqrt(3.0 / (9 * spec.cin))
            w = rng.uniform(-bound, bound, size=shape)
        else:
            w = rng.normal(0.0, FLOW_INIT_STD, size=shape)
        params += [w.astype(dtype), np.zeros(spec.cout, dtype=dtype)]
    return Network(cfg, params, seed)


def param_count(net: Network) -> int:
    return int(sum(p.size for p in net.params))


def layer_table(net: Network) -> list[tuple]:
    """``(name, cin, cout, stride, resolution_divisor, n_params)`` per layer."""
    return [(s.name, s.cin, s.cout, s.stride, 2 ** s.level, s.n_params) for s in net.plan]


def save_checkpoint(net: Network, path) -> None:
    """Versioned binary checkpoint: magic, version, JSON header, float32 weights."""
    header = json.dumps({"name": net.cfg.name, "enc_filters": list(net.cfg.enc_filters),
                         "dec_filters": list(net.cfg.dec_filters), "seed": net.seed},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for p in net.params:
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a network checkpoint")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        meta = json.loads(fh.read(hlen).decode("utf-8"))
        cfg = NetConfig(tuple(meta["enc_filters"]), tuple(meta["dec_filters"]), meta["name"])
        params = []
        for spec in layer_plan(cfg):
            nw = 9 * spec.cin * spec.cout
            w = np.frombuffer(fh.read(4 * nw), dtype="<f4").reshape(3, 3, spec.cin, spec.cout)
            b = np.frombuffer(fh.read(4 * spec.cout), dtype="<f4")
            params += [w.astype(np.float32), b.astype(np.float32)]
    return Network(cfg, params, meta.get("seed"))
