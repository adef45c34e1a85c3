"""Miniature convolutional-recurrent sequence model with hand-written
reverse-mode gradients.

Stack: fixed per-channel input standardization, then conv blocks
(3x3 conv, stride 1, same padding -> per-channel affine -> gated linear
activation -> dropout -> average pooling), then a bidirectional gated
recurrent stage, then a linear head with clamped logits and a sigmoid.
Frequency pooling collapses the channel axis to 1 at the stack top, so the
recurrent stage sees one feature vector per (pooled) frame.

Everything runs in float64 on channels-last tensors ``(batch, time, freq,
channels)``; the backward pass is exact for a fixed set of dropout masks,
which is what the finite-difference tests pin down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import InvalidInputError
from .features import FeatureGrid
from .validation import as_float_array, check_finite


def sigmoid(x):
    """Numerically stable logistic function."""
    return expit(np.asarray(x, dtype=np.float64))


@dataclass
class PosteriorGrid:
    """frames x classes matrix of probabilities in (0, 1)."""

    data: np.ndarray
    fps: float

    def __post_init__(self):
        self.data = as_float_array(self.data, "PosteriorGrid.data", ndim=2)
        check_finite(self.data, "PosteriorGrid.data")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise InvalidInputError("PosteriorGrid entries must lie in [0, 1]")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_classes(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs.

    The default is the desk-scale setup: three conv blocks (16/32/64
    channels) whose frequency pools collapse 16 mel channels to 1 while
    pooling time by 4 overall, a single bidirectional recurrent layer of
    32 units, and 0.5 dropout.  Larger stacks (more blocks, two recurrent
    layers, 128 mel channels) are expressible through the same fields.
    """

    n_mel_in: int = 16
    conv_channels: tuple = (16, 32, 64)
    pool_time: tuple = (1, 2, 2)
    pool_freq: tuple = (4, 2, 2)
    rnn_hidden: int = 32
    rnn_layers: int = 1
    n_classes: int = 3
    dropout_rate: float = 0.5
    logit_clamp: float = 30.0
    norm_mean: tuple | None = None
    norm_std: tuple | None = None

    def __post_init__(self):
        n = len(self.conv_channels)
        if n < 1:
            raise InvalidInputError("need at least one conv block")
        if len(self.pool_time) != n or len(self.pool_freq) != n:
            raise InvalidInputError("pool_time/pool_freq must match conv_channels")
        f = self.n_mel_in
        for pf in self.pool_freq:
            if pf < 1 or f % pf != 0:
                raise InvalidInputError(
                    f"frequency pooling {self.pool_freq} does not evenly divide {self.n_mel_in}"
                )
            f //= pf
        if f != 1:
            raise InvalidInputError(
                f"frequency pooling must collapse the {self.n_mel_in} input channels to 1, got {f}"
            )
        if any(pt < 1 for pt in self.pool_time):
            raise InvalidInputError("time pool strides must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidInputError("dropout_rate must be in [0, 1)")
        if self.rnn_hidden < 1 or self.rnn_layers < 1:
            raise InvalidInputError("rnn_hidden and rnn_layers must be >= 1")
        if self.n_classes < 1:
            raise InvalidInputError("n_classes must be >= 1")
        for name in ("norm_mean", "norm_std"):
            v = getattr(self, name)
            if v is not None and len(v) != self.n_mel_in:
                raise InvalidInputError(f"{name} must have one entry per input channel")
        if self.norm_std is not None and any(s <= 0 for s in self.norm_std):
            raise InvalidInputError("norm_std entries must be positive")

    @property
    def time_pool_factor(self) -> int:
        out = 1
        for pt in self.pool_time:
            out *= pt
        return out


# ----------------------------------------------------------------------
# layer primitives (channels-last)


def _im2col(x):
    """(B,T,F,C) -> 3x3 same-padded patches (B,T,F,9C), ordered (di,dj,c)."""
    B, T, F, C = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B, T, F, 9 * C)


def conv3x3_forward(x, w, b):
    """Same-padded 3x3 conv; x (B,T,F,Ci), w (3,3,Ci,Co), b (Co,).

    Returns (y, cols) where ``cols`` is the im2col matrix the backward
    pass reuses.
    """
    cols = _im2col(x)
    co = w.shape[3]
    y = cols @ w.reshape(-1, co) + b
    return y, cols


def conv3x3_backward(cols, w, dy):
    """Gradients from the cached im2col matrix; returns (dx, dw, db)."""
    B, T, F, _ = dy.shape
    ci, co = w.shape[2], w.shape[3]
    w_mat = w.reshape(-1, co)
    dw = np.tensordot(cols, dy, axes=([0, 1, 2], [0, 1, 2])).reshape(w.shape)
    db = dy.sum(axis=(0, 1, 2))
    dcols = (dy @ w_mat.T).reshape(B, T, F, 3, 3, ci)
    dxp = np.zeros((B, T + 2, F + 2, ci))
    for di in range(3):
        for dj in range(3):
            dxp[:, di:di + T, dj:dj + F, :] += dcols[:, :, :, di, dj, :]
    return dxp[:, 1:-1, 1:-1, :], dw, db


def affine_forward(x, g, b):
    """Per-channel gain and shift (the train-friendly norm stand-in)."""
    return x * g + b


def affine_backward(x, g, dy):
    dg = (dy * x).sum(axis=tuple(range(x.ndim - 1)))
    db = dy.sum(axis=tuple(range(x.ndim - 1)))
    return dy * g, dg, db


def glu_forward(x, w, b):
    """Gated linear activation: channel-mixing linear map times sigmoid(x)."""
    gate = sigmoid(x)
    lin = x @ w + b
    return lin * gate, (gate, lin)


def glu_backward(x, w, cache, dy):
    gate, lin = cache
    dlin = dy * gate
    dgate = dy * lin
    dw = np.tensordot(x, dlin, axes=(list(range(x.ndim - 1)), list(range(x.ndim - 1))))
    db = dlin.sum(axis=tuple(range(x.ndim - 1)))
    dx = dlin @ w.T + dgate * gate * (1.0 - gate)
    return dx, dw, db


def avg_pool_forward(x, st, sf):
    B, T, F, C = x.shape
    if T % st or F % sf:
        raise InvalidInputError(f"shape ({T},{F}) not divisible by pool ({st},{sf})")
    return x.reshape(B, T // st, st, F // sf, sf, C).mean(axis=(2, 4))


def avg_pool_backward(dy, st, sf):
    scaled = dy / (st * sf)
    return np.repeat(np.repeat(scaled, st, axis=1), sf, axis=2)


def gru_forward(x, p, reverse=False):
    """One GRU direction over x (B,T,D) with zero initial state.

    ``p`` maps {wz,wr,wn (D,H), uz,ur,un (H,H), bz,br,bn (H,)}.  Returns
    the hidden sequence (B,T,H) in input time order plus the cache needed
    for the exact backward pass.
    """
    B, T, _ = x.shape
    H = p["bz"].shape[0]
    order = range(T - 1, -1, -1) if reverse else range(T)
    h = np.zeros((B, H))
    hs = np.zeros((B, T, H))
    cache = {k: np.zeros((T, B, H)) for k in ("z", "r", "n", "hn", "h_prev")}
    for t in order:
        xt = x[:, t, :]
        z = sigmoid(xt @ p["wz"] + h @ p["uz"] + p["bz"])
        r = sigmoid(xt @ p["wr"] + h @ p["ur"] + p["br"])
        hn = h @ p["un"]
        n = np.tanh(xt @ p["wn"] + r * hn + p["bn"])
        cache["z"][t], cache["r"][t], cache["n"][t] = z, r, n
        cache["hn"][t], cache["h_prev"][t] = hn, h
        h = (1.0 - z) * n + z * h
        hs[:, t, :] = h
    return hs, cache


def gru_backward(x, p, cache, dh_seq, reverse=False):
    """Backward through time for one direction; returns (dx, dparams)."""
    B, T, D = x.shape
    dx = np.zeros_like(x)
    dp = {k: np.zeros_like(v) for k, v in p.items()}
    dh_carry = np.zeros((B, p["bz"].shape[0]))
    order = range(T) if reverse else range(T - 1, -1, -1)
    for t in order:
        z, r, n = cache["z"][t], cache["r"][t], cache["n"][t]
        hn, h_prev = cache["hn"][t], cache["h_prev"][t]
        xt = x[:, t, :]
        dh = dh_seq[:, t, :] + dh_carry
        dz = dh * (h_prev - n)
        dn = dh * (1.0 - z)
        dnpre = dn * (1.0 - n * n)
        dr = dnpre * hn
        dhn = dnpre * r
        dzpre = dz * z * (1.0 - z)
        drpre = dr * r * (1.0 - r)
        dx[:, t, :] = dzpre @ p["wz"].T + drpre @ p["wr"].T + dnpre @ p["wn"].T
        dh_carry = dh * z + dzpre @ p["uz"].T + drpre @ p["ur"].T + dhn @ p["un"].T
        dp["wz"] += xt.T @ dzpre
        dp["wr"] += xt.T @ drpre
        dp["wn"] += xt.T @ dnpre
        dp["uz"] += h_prev.T @ dzpre
        dp["ur"] += h_prev.T @ drpre
        dp["un"] += h_prev.T @ dhn
        dp["bz"] += dzpre.sum(axis=0)
        dp["br"] += drpre.sum(axis=0)
        dp["bn"] += dnpre.sum(axis=0)
    return dx, dp


# ----------------------------------------------------------------------
# the composed model


@dataclass
class ForwardCache:
    """Activations a train-mode forward keeps for the backward pass."""

    x_std: np.ndarray
    blocks: list
    rnn: list
    head: tuple
    masks: list
    batch_shape: tuple


class ConvRecurrentNet:
    """Config-bound parameter layout plus forward/backward procedures.

    Parameters live in one flat float64 vector; ``layout`` names every
    slice so checkpoints, EMA updates, and the optimizer can stay
    layout-agnostic.
    """

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.layout = []
        offset = 0

        def add(name, shape):
            nonlocal offset
            size = int(np.prod(shape, dtype=np.int64)) if shape else 1
            self.layout.append((name, offset, tuple(shape)))
            offset += size

        c_in = 1
        for i, c_out in enumerate(cfg.conv_channels):
            add(f"conv{i}.w", (3, 3, c_in, c_out))
            add(f"conv{i}.b", (c_out,))
            add(f"norm{i}.g", (c_out,))
            add(f"norm{i}.b", (c_out,))
            add(f"glu{i}.w", (c_out, c_out))
            add(f"glu{i}.b", (c_out,))
            c_in = c_out
        d_in = cfg.conv_channels[-1]
        for layer in range(cfg.rnn_layers):
            for direction in ("fw", "bw"):
                for gate in ("z", "r", "n"):
                    add(f"rnn{layer}.{direction}.w{gate}", (d_in, cfg.rnn_hidden))
                    add(f"rnn{layer}.{direction}.u{gate}", (cfg.rnn_hidden, cfg.rnn_hidden))
                    add(f"rnn{layer}.{direction}.b{gate}", (cfg.rnn_hidden,))
            d_in = 2 * cfg.rnn_hidden
        add("head.w", (2 * cfg.rnn_hidden, cfg.n_classes))
        add("head.b", (cfg.n_classes,))

        self.n_params = offset
        self._index = {name: (off, shape) for name, off, shape in self.layout}

    # -- parameter plumbing ------------------------------------------------

    def view(self, params: np.ndarray, name: str) -> np.ndarray:
        off, shape = self._index[name]
        size = int(np.prod(shape, dtype=np.int64))
        return params[off:off + size].reshape(shape)

    def _gru_params(self, params, layer, direction):
        return {
            f"{kind}{gate}": self.view(params, f"rnn{layer}.{direction}.{kind}{gate}")
            for kind in ("w", "u", "b")
            for gate in ("z", "r", "n")
        }

    def init_params(self, rng_seed: int) -> np.ndarray:
        """Scaled-uniform weights, zero biases, unit norm gains."""
        rng = np.random.default_rng(rng_seed)
        params = np.zeros(self.n_params)
        for name, off, shape in self.layout:
            v = params[off:off + int(np.prod(shape, dtype=np.int64))].reshape(shape)
            leaf = name.rsplit(".", 1)[-1]
            if leaf.startswith("b"):
                continue
            if leaf == "g":
                v[...] = 1.0
                continue
            if name.startswith("conv"):
                fan_in, fan_out = 9 * shape[2], 9 * shape[3]
            else:
                fan_in, fan_out = shape[0], shape[1]
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            v[...] = rng.uniform(-lim, lim, size=shape)
        return params

    # -- forward / backward --------------------------------------------------

    def _standardize(self, x):
        if self.cfg.norm_mean is not None:
            x = x - np.asarray(self.cfg.norm_mean)
        if self.cfg.norm_std is not None:
            x = x / np.asarray(self.cfg.norm_std)
        return x

    def forward_batch(self, params, x, train=False, rng=None):
        """Posteriors for a batch (B,T,M) -> (B,T',n_classes).

        Train mode samples dropout masks from ``rng`` and returns a cache;
        eval mode is deterministic and returns ``(posteriors, None)``.
        """
        cfg = self.cfg
        x = as_float_array(x, "input batch", ndim=3)
        if x.shape[2] != cfg.n_mel_in:
            raise InvalidInputError(
                f"input has {x.shape[2]} channels, model expects {cfg.n_mel_in}"
            )
        if x.shape[1] % cfg.time_pool_factor != 0:
            raise InvalidInputError(
                f"frame count {x.shape[1]} not divisible by time pool {cfg.time_pool_factor}"
            )
        if train and rng is None:
            rng = np.random.default_rng(0)
        keep = 1.0 - cfg.dropout_rate

        def make_mask(shape):
            if not train or cfg.dropout_rate == 0.0:
                return None
            return (rng.random(shape) < keep).astype(np.float64) / keep

        x_std = self._standardize(x)
        h = x_std[:, :, :, None]
        blocks = []
        masks = []
        for i in range(len(cfg.conv_channels)):
            w = self.view(params, f"conv{i}.w")
            h, cols = conv3x3_forward(h, w, self.view(params, f"conv{i}.b"))
            aff_in = h
            h = affine_forward(aff_in, self.view(params, f"norm{i}.g"), self.view(params, f"norm{i}.b"))
            glu_in = h
            h, glu_cache = glu_forward(glu_in, self.view(params, f"glu{i}.w"), self.view(params, f"glu{i}.b"))
            mask = make_mask(h.shape)
            if mask is not None:
                h = h * mask
            masks.append(mask)
            h = avg_pool_forward(h, cfg.pool_time[i], cfg.pool_freq[i])
            blocks.append((cols, aff_in, glu_in, glu_cache) if train else None)
        seq = h[:, :, 0, :]

        rnn_caches = []
        for layer in range(cfg.rnn_layers):
            p_fw = self._gru_params(params, layer, "fw")
            p_bw = self._gru_params(params, layer, "bw")
            h_fw, c_fw = gru_forward(seq, p_fw, reverse=False)
            h_bw, c_bw = gru_forward(seq, p_bw, reverse=True)
            out = np.concatenate([h_fw, h_bw], axis=2)
            mask = make_mask(out.shape)
            if mask is not None:
                out = out * mask
            rnn_caches.append((seq, c_fw, c_bw, mask))
            seq = out

        logits_raw = seq @ self.view(params, "head.w") + self.view(params, "head.b")
        clamp = cfg.logit_clamp
        logits = np.clip(logits_raw, -clamp, clamp)
        post = sigmoid(logits)

        if not train:
            return post, None
        cache = ForwardCache(
            x_std=x_std,
            blocks=blocks,
            rnn=rnn_caches,
            head=(seq, logits_raw, post),
            masks=masks,
            batch_shape=x.shape,
        )
        return post, cache

    def forward(self, params, x: FeatureGrid, train=False, rng=None):
        """Single-clip convenience wrapper around :meth:`forward_batch`."""
        post, cache = self.forward_batch(params, x.data[None], train=train, rng=rng)
        grid = PosteriorGrid(post[0], fps=x.fps / self.cfg.time_pool_factor)
        return grid, cache

    def backward_batch(self, params, cache: ForwardCache, dpost) -> np.ndarray:
        """Exact gradient of the cached forward, composed with ``dpost``."""
        cfg = self.cfg
        dpost = as_float_array(dpost, "output gradient", ndim=3)
        seq, logits_raw, post = cache.head
        if dpost.shape != post.shape:
            raise InvalidInputError(
                f"output gradient shape {dpost.shape} does not match posteriors {post.shape}"
            )
        grads = np.zeros(self.n_params)

        def gview(name):
            return self.view(grads, name)

        dlogits = dpost * post * (1.0 - post)
        dlogits = dlogits * (np.abs(logits_raw) < cfg.logit_clamp)
        gview("head.w")[...] = np.tensordot(seq, dlogits, axes=([0, 1], [0, 1]))
        gview("head.b")[...] = dlogits.sum(axis=(0, 1))
        dseq = dlogits @ self.view(params, "head.w").T

        H = cfg.rnn_hidden
        for layer in range(cfg.rnn_layers - 1, -1, -1):
            seq_in, c_fw, c_bw, mask = cache.rnn[layer]
            if mask is not None:
                dseq = dseq * mask
            p_fw = self._gru_params(params, layer, "fw")
            p_bw = self._gru_params(params, layer, "bw")
            dx_fw, dp_fw = gru_backward(seq_in, p_fw, c_fw, dseq[:, :, :H], reverse=False)
            dx_bw, dp_bw = gru_backward(seq_in, p_bw, c_bw, dseq[:, :, H:], reverse=True)
            for gate in ("z", "r", "n"):
                for kind in ("w", "u", "b"):
                    gview(f"rnn{layer}.fw.{kind}{gate}")[...] = dp_fw[f"{kind}{gate}"]
                    gview(f"rnn{layer}.bw.{kind}{gate}")[...] = dp_bw[f"{kind}{gate}"]
            dseq = dx_fw + dx_bw

        dh = dseq[:, :, None, :]
        for i in range(len(cfg.conv_channels) - 1, -1, -1):
            cols, aff_in, glu_in, glu_cache = cache.blocks[i]
            dh = avg_pool_backward(dh, cfg.pool_time[i], cfg.pool_freq[i])
            if cache.masks[i] is not None:
                dh = dh * cache.masks[i]
            dh, dw_glu, db_glu = glu_backward(glu_in, self.view(params, f"glu{i}.w"), glu_cache, dh)
            gview(f"glu{i}.w")[...] = dw_glu
            gview(f"glu{i}.b")[...] = db_glu
            dh, dg, db_aff = affine_backward(aff_in, self.view(params, f"norm{i}.g"), dh)
            gview(f"norm{i}.g")[...] = dg
            gview(f"norm{i}.b")[...] = db_aff
            dh, dw_conv, db_conv = conv3x3_backward(cols, self.view(params, f"conv{i}.w"), dh)
            gview(f"conv{i}.w")[...] = dw_conv
            gview(f"conv{i}.b")[...] = db_conv
        return grads

    def output_frames(self, n_frames: int) -> int:
        return n_frames // self.cfg.time_pool_factor


def clip_pool(p) -> np.ndarray:
    """Per-class mean over frames; accepts a PosteriorGrid or (T,C) array."""
    data = p.data if isinstance(p, PosteriorGrid) else np.asarray(p, dtype=np.float64)
    return data.mean(axis=0)


__all__ = [
    "sigmoid",
    "PosteriorGrid",
    "ModelConfig",
    "ForwardCache",
    "ConvRecurrentNet",
    "clip_pool",
    "conv3x3_forward",
    "conv3x3_backward",
    "affine_forward",
    "affine_backward",
    "glu_forward",
    "glu_backward",
    "avg_pool_forward",
    "avg_pool_backward",
    "gru_forward",
    "gru_backward",
]
