"""Cross-modal refinement network: trajectory encoder, scene encoder, two-stream transformer, offset head."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ..errors import ConfigError, FormatError, NumericError, ShapeError
from . import autograd as ag
from .autograd import Tensor

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ShenetConfig:
    t_pas: int = 8
    t_fut: int = 12
    d_model: int = 32
    n_heads: int = 4
    n_layers_traj: int = 2
    n_layers_cross: int = 2
    d_ff: int = 64
    head_hidden: int = 32
    n_cls: int = 8
    h: int = 16
    w: int = 16
    dropout: float = 0.0
    pos_encoding: bool = True
    pooling: str = "mean"
    coord_scale: float = 1.0
    head_init_scale: float = 0.1

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if min(self.n_layers_traj, self.n_layers_cross, self.n_heads, self.d_ff, self.head_hidden) < 1:
            raise ConfigError("layer counts, heads and widths must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.pooling not in ("mean", "max"):
            raise ConfigError(f"unknown pooling {self.pooling!r}")
        if self.coord_scale <= 0:
            raise ConfigError("coord_scale must be positive")

    @classmethod
    def paper_scale(cls, **kw) -> "ShenetConfig":
        base = dict(t_pas=10, t_fut=50, d_model=512, n_heads=4, n_layers_traj=4, n_layers_cross=6,
                    d_ff=2048, head_hidden=512, n_cls=150, h=56, w=56)
        base.update(kw)
        return cls(**base)


def expected_param_count(cfg: ShenetConfig) -> int:
    d, f, hh = cfg.d_model, cfg.d_ff, cfg.head_hidden
    attn = 4 * (d * d + d)
    ln = 2 * d
    ffn = d * f + f + f * d + d
    traj = (2 * d + d) + cfg.n_layers_traj * (attn + ffn + 2 * ln) + (cfg.n_layers_traj * d * d + d)
    scene = cfg.h * cfg.w * d + d
    cross = cfg.n_layers_cross * 2 * (2 * attn + ffn + 3 * ln)
    head = 2 * d * hh + hh + hh * 2 * cfg.t_fut + 2 * cfg.t_fut
    return traj + scene + cross + head


class ShenetParams:
    """Named trainable tensors plus the config that fixes their shapes."""

    def __init__(self, config: ShenetConfig, tensors: dict):
        self.config = config
        self.tensors = dict(tensors)

    def __getitem__(self, name) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def values(self):
        return self.tensors.values()

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def grads(self) -> dict:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in self.tensors.items()}

    def copy(self) -> "ShenetParams":
        return ShenetParams(self.config, {k: Tensor(t.data.copy(), requires_grad=True, name=k) for k, t in self.items()})

    def state_equal(self, other: "ShenetParams") -> bool:
        return self.config == other.config and self.tensors.keys() == other.tensors.keys() and all(
            np.array_equal(t.data, other[k].data) for k, t in self.items())


# ----- initialisation -------------------------------------------------------

def _attn_shapes(prefix, d):
    out = {}
    for p in "qkvo":
        out[f"{prefix}.{p}.W"] = (d, d)
        out[f"{prefix}.{p}.b"] = (d,)
    return out


def _ln_shapes(prefix, d):
    return {f"{prefix}.g": (d,), f"{prefix}.b": (d,)}


def _ffn_shapes(prefix, d, f):
    return {f"{prefix}.ff1.W": (d, f), f"{prefix}.ff1.b": (f,), f"{prefix}.ff2.W": (f, d), f"{prefix}.ff2.b": (d,)}


def param_shapes(cfg: ShenetConfig) -> dict:
    d = cfg.d_model
    s = {"traj.embed.W": (2, d), "traj.embed.b": (d,)}
    for l in range(cfg.n_layers_traj):
        p = f"traj.sa{l}"
        s.update(_attn_shapes(f"{p}.attn", d))
        s.update(_ln_shapes(f"{p}.ln1", d))
        s.update(_ffn_shapes(p, d, cfg.d_ff))
        s.update(_ln_shapes(f"{p}.ln2", d))
    s["traj.proj.W"] = (cfg.n_layers_traj * d, d)
    s["traj.proj.b"] = (d,)
    s["scene.proj.W"] = (cfg.h * cfg.w, d)
    s["scene.proj.b"] = (d,)
    for l in range(cfg.n_layers_cross):
        for stream in ("a", "b"):
            p = f"cross{l}.{stream}"
            s.update(_attn_shapes(f"{p}.ca", d))
            s.update(_ln_shapes(f"{p}.ln_ca", d))
            s.update(_attn_shapes(f"{p}.sa", d))
            s.update(_ln_shapes(f"{p}.ln_sa", d))
            s.update(_ffn_shapes(p, d, cfg.d_ff))
            s.update(_ln_shapes(f"{p}.ln_ff", d))
    s["head.fc1.W"] = (2 * d, cfg.head_hidden)
    s["head.fc1.b"] = (cfg.head_hidden,)
    s["head.fc2.W"] = (cfg.head_hidden, 2 * cfg.t_fut)
    s["head.fc2.b"] = (2 * cfg.t_fut,)
    return s


def init_params(cfg: ShenetConfig, seed: int = 0) -> ShenetParams:
    """Glorot-uniform weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".g"):
            data = np.ones(shape)
        elif len(shape) == 1:
            data = np.zeros(shape)
        else:
            lim = math.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-lim, lim, size=shape)
            if name == "head.fc2.W":
                data *= cfg.head_init_scale
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    return ShenetParams(cfg, tensors)


def zero_params(cfg: ShenetConfig) -> ShenetParams:
    return ShenetParams(cfg, {k: Tensor(np.zeros(s), requires_grad=True, name=k) for k, s in param_shapes(cfg).items()})


# ----- building blocks ------------------------------------------------------

class Trace(list):
    """Collects ``(layer_name, attention_weights)`` pairs during a forward pass."""


def mha(P: ShenetParams, prefix: str, x_q, x_kv, n_heads: int, trace=None):
    q = ag.linear(x_q, P[f"{prefix}.q.W"], P[f"{prefix}.q.b"])
    k = ag.linear(x_kv, P[f"{prefix}.k.W"], P[f"{prefix}.k.b"])
    v = ag.linear(x_kv, P[f"{prefix}.v.W"], P[f"{prefix}.v.b"])
    heads, A = ag.attention(q, k, v, n_heads)
    if trace is not None:
        trace.append((prefix, A))
    return ag.linear(heads, P[f"{prefix}.o.W"], P[f"{prefix}.o.b"])


def ffn(P: ShenetParams, prefix: str, x):
    return ag.linear(ag.gelu(ag.linear(x, P[f"{prefix}.ff1.W"], P[f"{prefix}.ff1.b"])), P[f"{prefix}.ff2.W"], P[f"{prefix}.ff2.b"])


def add_norm(P: ShenetParams, prefix: str, x, sub, drop=None):
    if drop is not None:
        sub = drop(sub)
    return ag.layer_norm(x + sub, P[f"{prefix}.g"], P[f"{prefix}.b"])


def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def _check_finite(t: Tensor, where: str):
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite values in {where}")


def _dropper(cfg, training, rng):
    if not training or cfg.dropout <= 0:
        return None
    return lambda t: ag.dropout(t, cfg.dropout, rng)


# ----- encoders -------------------------------------------------------------

def encode_trajectory(P: ShenetParams, past, trace=None, training=False, rng=None) -> Tensor:
    """(T_pas, 2) positions -> (T_pas, d_model) tokens.

    Embed, run the self-attention stack, stack every layer's output along the
    feature axis (T_pas, N_tra * d) and project back to d.
    """
    cfg = P.config
    past = np.asarray(past.data if isinstance(past, Tensor) else past, dtype=np.float64)
    if past.ndim != 2 or past.shape[1] != 2:
        raise ShapeError(f"past must be (T, 2), got {past.shape}")
    if not np.all(np.isfinite(past)):
        raise NumericError("non-finite trajectory input")
    drop = _dropper(cfg, training, rng)
    x = ag.linear(past / cfg.coord_scale, P["traj.embed.W"], P["traj.embed.b"])
    if cfg.pos_encoding:
        x = x + sinusoidal_positions(len(past), cfg.d_model)
    layers = []
    for l in range(cfg.n_layers_traj):
        p = f"traj.sa{l}"
        x = add_norm(P, f"{p}.ln1", x, mha(P, f"{p}.attn", x, x, cfg.n_heads, trace), drop)
        x = add_norm(P, f"{p}.ln2", x, ffn(P, p, x), drop)
        layers.append(x)
    stacked = ag.concat(layers, axis=-1) if len(layers) > 1 else layers[0]
    out = ag.linear(stacked, P["traj.proj.W"], P["traj.proj.b"])
    _check_finite(out, "trajectory encoder")
    return out


def encode_scene(P: ShenetParams, raster) -> Tensor:
    """(n_cls, h, w) occupancy -> (n_cls, d_model) tokens via one shared row-wise projection."""
    cfg = P.config
    grid = np.asarray(getattr(raster, "grid", raster), dtype=np.float64)
    if grid.shape != (cfg.n_cls, cfg.h, cfg.w):
        raise ShapeError(f"raster shape {grid.shape} != ({cfg.n_cls}, {cfg.h}, {cfg.w})")
    return ag.linear(grid.reshape(cfg.n_cls, cfg.h * cfg.w), P["scene.proj.W"], P["scene.proj.b"])


def cross_modal_forward(P: ShenetParams, traj_tokens, scene_tokens, trace=None, training=False, rng=None):
    """Two streams per layer: trajectory queries scene (then SA), scene queries trajectory (then SA)."""
    cfg = P.config
    drop = _dropper(cfg, training, rng)
    a, b = ag.as_tensor(traj_tokens), ag.as_tensor(scene_tokens)
    if a.shape[-1] != cfg.d_model or b.shape[-1] != cfg.d_model:
        raise ShapeError("token widths must equal d_model")
    for l in range(cfg.n_layers_cross):
        new = []
        for stream, x, other in (("a", a, b), ("b", b, a)):
            p = f"cross{l}.{stream}"
            x = add_norm(P, f"{p}.ln_ca", x, mha(P, f"{p}.ca", x, other, cfg.n_heads, trace), drop)
            x = add_norm(P, f"{p}.ln_sa", x, mha(P, f"{p}.sa", x, x, cfg.n_heads, trace), drop)
            x = add_norm(P, f"{p}.ln_ff", x, ffn(P, p, x), drop)
            new.append(x)
        a, b = new
        if not (np.all(np.isfinite(a.data)) and np.all(np.isfinite(b.data))):
            raise NumericError(f"non-finite values after cross-modal layer {l}")
    return a, b


def offset_head(P: ShenetParams, traj_tokens, scene_tokens) -> Tensor:
    """Last trajectory token and pooled scene tokens -> (T_fut, 2) offsets."""
    cfg = P.config
    h_tra = ag.as_tensor(traj_tokens)[-1]
    pooled = ag.tmean(scene_tokens, axis=0) if cfg.pooling == "mean" else ag.tmax(scene_tokens, axis=0)
    h = ag.concat([h_tra, pooled], axis=-1).reshape(1, 2 * cfg.d_model)
    hid = ag.gelu(ag.linear(h, P["head.fc1.W"], P["head.fc1.b"]))
    out = ag.linear(hid, P["head.fc2.W"], P["head.fc2.b"])
    return out.reshape(cfg.t_fut, 2) * cfg.coord_scale


def forward_offsets(P: ShenetParams, past, raster, trace=None, training=False, rng=None) -> Tensor:
    traj = encode_trajectory(P, past, trace, training, rng)
    scene = encode_scene(P, raster)
    a, b = cross_modal_forward(P, traj, scene, trace, training, rng)
    return offset_head(P, a, b)


# ----- checkpoints ----------------------------------------------------------

def save_checkpoint(P: ShenetParams, path) -> None:
    """npz container: one array per parameter plus a JSON ``__meta__`` record."""
    meta = json.dumps({"version": CHECKPOINT_VERSION, "config": asdict(P.config)}, sort_keys=True)
    arrays = {k: t.data for k, t in P.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(meta), **arrays)


def load_checkpoint(path, config: ShenetConfig | None = None) -> ShenetParams:
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            arrays = {k: z[k] for k in z.files if k != "__meta__"}
    except (OSError, ValueError, KeyError) as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {meta.get('version')!r}")
    known = {f.name for f in fields(ShenetConfig)}
    cfg = ShenetConfig(**{k: v for k, v in meta["config"].items() if k in known})
    if config is not None and config != cfg:
        raise ConfigError(f"checkpoint config {cfg} does not match requested {config}")
    shapes = param_shapes(cfg)
    if shapes.keys() != arrays.keys() or any(arrays[k].shape != s for k, s in shapes.items()):
        raise FormatError("checkpoint tensors do not match the stored config")
    return ShenetParams(cfg, {k: Tensor(arrays[k], requires_grad=True, name=k) for k in shapes})
