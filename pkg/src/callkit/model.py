"""A small decoder-only autoregressive network in plain numpy.

Pre-norm GPT blocks (layernorm, causal multi-head attention, layernorm,
GELU MLP) with learned positional embeddings and an untied output head.
Forward and backward are hand-written; the heavy lifting is BLAS matmuls,
so there is no framework dependency and runs are bit-reproducible for a
fixed seed. Checkpoints are a framed binary with named float32 parameter
arrays in a fixed order.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernels import causal_softmax_bwd, causal_softmax_fwd, gelu_bwd, gelu_fwd


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    dim: int = 128
    n_layers: int = 2
    n_heads: int = 4
    context: int = 256

    def __post_init__(self):
        if self.dim % self.n_heads != 0:
            raise ValueError("dim must be divisible by n_heads")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "dim": self.dim,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "context": self.context,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _layernorm_fwd(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def _layernorm_bwd(dy, cache):
    xhat, inv, g = cache
    d = xhat.shape[-1]
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


class TinyLM:
    """Parameter store plus forward/backward for the desk-scale model."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        c = config
        scale = 0.02
        resid_scale = scale / np.sqrt(2.0 * c.n_layers)
        p: dict[str, np.ndarray] = {}
        p["tok_emb"] = rng.normal(0, scale, (c.vocab_size, c.dim))
        p["pos_emb"] = rng.normal(0, scale, (c.context, c.dim))
        for i in range(c.n_layers):
            p[f"h{i}.ln1.g"] = np.ones(c.dim)
            p[f"h{i}.ln1.b"] = np.zeros(c.dim)
            p[f"h{i}.attn.w_qkv"] = rng.normal(0, scale, (c.dim, 3 * c.dim))
            p[f"h{i}.attn.b_qkv"] = np.zeros(3 * c.dim)
            p[f"h{i}.attn.w_o"] = rng.normal(0, resid_scale, (c.dim, c.dim))
            p[f"h{i}.attn.b_o"] = np.zeros(c.dim)
            p[f"h{i}.ln2.g"] = np.ones(c.dim)
            p[f"h{i}.ln2.b"] = np.zeros(c.dim)
            p[f"h{i}.mlp.w1"] = rng.normal(0, scale, (c.dim, 4 * c.dim))
            p[f"h{i}.mlp.b1"] = np.zeros(4 * c.dim)
            p[f"h{i}.mlp.w2"] = rng.normal(0, resid_scale, (4 * c.dim, c.dim))
            p[f"h{i}.mlp.b2"] = np.zeros(c.dim)
        p["ln_f.g"] = np.ones(c.dim)
        p["ln_f.b"] = np.zeros(c.dim)
        p["head.w"] = rng.normal(0, scale, (c.dim, c.vocab_size))
        self.params = {k: v.astype(dtype) for k, v in p.items()}

    # canonical ordering for checkpoints and optimizer state
    def param_names(self) -> list[str]:
        return list(self.params.keys())

    def forward(self, ids: np.ndarray, want_cache: bool = False):
        """Logits of shape (B, T, vocab); optionally the backprop cache."""
        c = self.config
        p = self.params
        ids = np.atleast_2d(np.asarray(ids))
        B, T = ids.shape
        if T > c.context:
            raise ValueError(f"sequence length {T} exceeds context {c.context}")
        H, hd = c.n_heads, c.dim // c.n_heads
        x = p["tok_emb"][ids] + p["pos_emb"][:T]
        cache: dict = {"ids": ids, "T": T, "blocks": []}
        for i in range(c.n_layers):
            a, ln1_cache = _layernorm_fwd(x, p[f"h{i}.ln1.g"], p[f"h{i}.ln1.b"])
            qkv = a @ p[f"h{i}.attn.w_qkv"] + p[f"h{i}.attn.b_qkv"]
            q, k, v = np.split(qkv, 3, axis=-1)
            # (B, H, T, hd)
            q = q.reshape(B, T, H, hd).transpose(0, 2, 1, 3)
            k = k.reshape(B, T, H, hd).transpose(0, 2, 1, 3)
            v = v.reshape(B, T, H, hd).transpose(0, 2, 1, 3)
            scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(hd).astype(x.dtype)
            att = causal_softmax_fwd(scores)
            o = (att @ v).transpose(0, 2, 1, 3).reshape(B, T, c.dim)
            proj = o @ p[f"h{i}.attn.w_o"] + p[f"h{i}.attn.b_o"]
            x1 = x + proj
            m, ln2_cache = _layernorm_fwd(x1, p[f"h{i}.ln2.g"], p[f"h{i}.ln2.b"])
            pre = m @ p[f"h{i}.mlp.w1"] + p[f"h{i}.mlp.b1"]
            h, tanh_cache = gelu_fwd(pre)
            x = x1 + h @ p[f"h{i}.mlp.w2"] + p[f"h{i}.mlp.b2"]
            if want_cache:
                cache["blocks"].append((a, ln1_cache, q, k, v, att, o, x1, m, ln2_cache, pre, tanh_cache, h))
        xf, lnf_cache = _layernorm_fwd(x, p["ln_f.g"], p["ln_f.b"])
        logits = xf @ p["head.w"]
        if want_cache:
            cache["xf"] = xf
            cache["lnf"] = lnf_cache
            return logits, cache
        return logits

    def backward(self, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients for a batch, given d loss / d logits."""
        c = self.config
        p = self.params
        ids = cache["ids"]
        B, T = ids.shape
        H, hd = c.n_heads, c.dim // c.n_heads
        dlogits = dlogits.astype(self.dtype)
        g: dict[str, np.ndarray] = {}

        xf = cache["xf"]
        g["head.w"] = xf.reshape(-1, c.dim).T @ dlogits.reshape(-1, c.vocab_size)
        dxf = dlogits @ p["head.w"].T
        dx, g["ln_f.g"], g["ln_f.b"] = _layernorm_bwd(dxf, cache["lnf"])

        for i in reversed(range(c.n_layers)):
            a, ln1_cache, q, k, v, att, o, x1, m, ln2_cache, pre, tanh_cache, h = cache["blocks"][i]
            # mlp
            g[f"h{i}.mlp.b2"] = dx.sum(axis=(0, 1))
            g[f"h{i}.mlp.w2"] = h.reshape(-1, 4 * c.dim).T @ dx.reshape(-1, c.dim)
            dh = dx @ p[f"h{i}.mlp.w2"].T
            dpre = gelu_bwd(dh, pre, tanh_cache)
            g[f"h{i}.mlp.b1"] = dpre.sum(axis=(0, 1))
            g[f"h{i}.mlp.w1"] = m.reshape(-1, c.dim).T @ dpre.reshape(-1, 4 * c.dim)
            dm = dpre @ p[f"h{i}.mlp.w1"].T
            dx1_ln, g[f"h{i}.ln2.g"], g[f"h{i}.ln2.b"] = _layernorm_bwd(dm, ln2_cache)
            dx1 = dx + dx1_ln
            # attention projection
            g[f"h{i}.attn.b_o"] = dx1.sum(axis=(0, 1))
            g[f"h{i}.attn.w_o"] = o.reshape(-1, c.dim).T @ dx1.reshape(-1, c.dim)
            do = (dx1 @ p[f"h{i}.attn.w_o"].T).reshape(B, T, H, hd).transpose(0, 2, 1, 3)
            datt = do @ v.transpose(0, 1, 3, 2)
            dv = att.transpose(0, 1, 3, 2) @ do
            ds = causal_softmax_bwd(att, datt)
            scale = 1.0 / np.sqrt(hd)
            dq = (ds @ k) * scale
            dk = (ds.transpose(0, 1, 3, 2) @ q) * scale
            dqkv = np.concatenate(
                [
                    dq.transpose(0, 2, 1, 3).reshape(B, T, c.dim),
                    dk.transpose(0, 2, 1, 3).reshape(B, T, c.dim),
                    dv.transpose(0, 2, 1, 3).reshape(B, T, c.dim),
                ],
                axis=-1,
            )
            g[f"h{i}.attn.b_qkv"] = dqkv.sum(axis=(0, 1))
            g[f"h{i}.attn.w_qkv"] = a.reshape(-1, c.dim).T @ dqkv.reshape(-1, 3 * c.dim)
            da = dqkv @ p[f"h{i}.attn.w_qkv"].T
            dx_ln1, g[f"h{i}.ln1.g"], g[f"h{i}.ln1.b"] = _layernorm_bwd(da, ln1_cache)
            dx = dx1 + dx_ln1

        g["pos_emb"] = np.zeros_like(p["pos_emb"])
        g["pos_emb"][:T] = dx.sum(axis=0)
        g["tok_emb"] = np.zeros_like(p["tok_emb"])
        np.add.at(g["tok_emb"], ids.reshape(-1), dx.reshape(-1, c.dim))
        return {k: v.astype(self.dtype) for k, v in g.items()}


# ---------------------------------------------------------------------------
# checkpoint format: magic, version, config hash, step, config json, params
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"CKPT"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, model: TinyLM, step: int, config_hash: str = "") -> None:
    import json

    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<H", CHECKPOINT_VERSION)
    h = config_hash.encode("ascii")[:32].ljust(32, b"\0")
    buf += h
    buf += struct.pack("<Q", step)
    cfg = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    buf += struct.pack("<I", len(cfg))
    buf += cfg
    names = model.param_names()
    buf += struct.pack("<I", len(names))
    for name in names:
        nb = name.encode("utf-8")
        buf += struct.pack("<H", len(nb))
        buf += nb
        arr = np.ascontiguousarray(model.params[name], dtype=np.float32)
        buf += struct.pack("<B", arr.ndim)
        for d in arr.shape:
            buf += struct.pack("<I", d)
        buf += arr.tobytes()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path: str | Path) -> tuple[TinyLM, int, str]:
    import json

    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    off = 4
    (version,) = struct.unpack_from("<H", raw, off)
    off += 2
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    config_hash = raw[off : off + 32].rstrip(b"\0").decode("ascii")
    off += 32
    (step,) = struct.unpack_from("<Q", raw, off)
    off += 8
    (cfg_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    config = ModelConfig.from_dict(json.loads(raw[off : off + cfg_len].decode("utf-8")))
    off += cfg_len
    (n_params,) = struct.unpack_from("<I", raw, off)
    off += 4
    model = TinyLM(config, seed=0)
    for _ in range(n_params):
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(shape).copy()
        off += 4 * count
        if name not in model.params:
            raise ValueError(f"unknown parameter {name!r} in checkpoint")
        model.params[name] = arr
    return model, step, config_hash


def model_param_hash(model: TinyLM) -> str:
    h = hashlib.blake2s()
    for name in model.param_names():
        h.update(name.encode())
        h.update(np.ascontiguousarray(model.params[name], dtype=np.float32).tobytes())
    return h.hexdigest()
