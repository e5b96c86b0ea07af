"""Rule-prediction policy: hashed atom-environment fingerprints fed to a highway
network (ELU transform, sigmoid gate) with a softmax over the rule universe."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .molgraph import LabeledGraph, canonical_form

__all__ = [
    "DEFAULT_FP_SIZE",
    "NetworkPolicy",
    "PolicyConfigError",
    "PolicyWeights",
    "TrainConfig",
    "TrainingError",
    "UniformPolicy",
    "elu",
    "featurize",
    "fnv1a_64",
    "forward",
    "init_weights",
    "load_weights",
    "loss_and_grads",
    "save_weights",
    "top_k",
    "train",
    "uniform_policy",
]

log = logging.getLogger(__name__)

DEFAULT_FP_SIZE = 256
MAGIC = b"HWPN"
VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


class PolicyConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK
    return h


def vertex_token(g: LabeledGraph, v: int) -> bytes:
    """``label(edge:neighbour,...)`` with the neighbour environment sorted."""
    env = sorted((lab, g.labels[u]) for u, lab in g.neighbors(v))
    inner = ",".join(f"{e}:{n}" for e, n in env)
    return f"{g.labels[v]}({inner})".encode("ascii")


def featurize(m: LabeledGraph, size: int = DEFAULT_FP_SIZE) -> np.ndarray:
    fp = np.zeros(size, dtype=np.float32)
    for v in range(len(m)):
        fp[fnv1a_64(vertex_token(m, v)) % size] += 1.0
    return fp


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, x, np.expm1(np.minimum(x, 0)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class PolicyWeights:
    # each block: (W_h, b_h, W_t, b_t); matrices are (out, in)
    blocks: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]
    w_out: np.ndarray
    b_out: np.ndarray
    final_loss: float | None = field(default=None, compare=False)

    @property
    def fp_size(self) -> int:
        return int(self.w_out.shape[1])

    @property
    def depth(self) -> int:
        return len(self.blocks)

    @property
    def num_rules(self) -> int:
        return int(self.w_out.shape[0])

    def tensors(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for blk in self.blocks:
            out.extend(blk)
        out.extend((self.w_out, self.b_out))
        return out

    def validate(self) -> None:
        f, r = self.fp_size, self.num_rules
        for k, (wh, bh, wt, bt) in enumerate(self.blocks):
            if wh.shape != (f, f) or wt.shape != (f, f) or bh.shape != (f,) or bt.shape != (f,):
                raise PolicyConfigError(f"highway block {k} does not have width {f}")
        if self.b_out.shape != (r,):
            raise PolicyConfigError("output bias does not match output matrix")
        if not all(np.isfinite(t).all() for t in self.tensors()):
            raise PolicyConfigError("non-finite weight")

    def astype(self, dtype) -> "PolicyWeights":
        return PolicyWeights(
            [tuple(t.astype(dtype) for t in blk) for blk in self.blocks],
            self.w_out.astype(dtype),
            self.b_out.astype(dtype),
            self.final_loss,
        )


def init_weights(fp_size: int, depth: int, num_rules: int, seed: int,
                 scale: float = 0.05, gate_bias: float = -1.0) -> PolicyWeights:
    rng = np.random.default_rng(seed)

    def u(*shape: int) -> np.ndarray:
        return rng.uniform(-scale, scale, size=shape)

    blocks = []
    for _ in range(depth):
        blocks.append((u(fp_size, fp_size), u(fp_size), u(fp_size, fp_size), np.full(fp_size, gate_bias)))
    return PolicyWeights(blocks, u(num_rules, fp_size), u(num_rules))


def forward(w: PolicyWeights, f: np.ndarray) -> np.ndarray:
    """Rule probabilities for one fingerprint (1-D) or a batch (2-D, one row each)."""
    x = np.asarray(f, dtype=np.float64)
    if x.shape[-1] != w.fp_size:
        raise PolicyConfigError(f"fingerprint size {x.shape[-1]} != network input {w.fp_size}")
    for wh, bh, wt, bt in w.blocks:
        h = elu(x @ np.asarray(wh, dtype=np.float64).T + bh)
        t = _sigmoid(x @ np.asarray(wt, dtype=np.float64).T + bt)
        x = t * h + (1.0 - t) * x
    return _softmax(x @ np.asarray(w.w_out, dtype=np.float64).T + w.b_out)


def uniform_policy(num_rules: int) -> np.ndarray:
    return np.full(num_rules, 1.0 / num_rules)


def top_k(p: Sequence[float] | np.ndarray, k: int = 50) -> list[tuple[int, float]]:
    """``k`` most probable rule ids, descending, ties to the lower id."""
    p = np.asarray(p, dtype=np.float64)
    order = np.lexsort((np.arange(len(p)), -p))[:k]
    return [(int(i), float(p[i])) for i in order]


def loss_and_grads(w: PolicyWeights, x: np.ndarray, y: np.ndarray) -> tuple[float, PolicyWeights]:
    """Mean cross-entropy of labels ``y`` and its gradient with respect to every tensor."""
    x = np.asarray(x, dtype=np.float64)
    batch = x.shape[0]
    cache = []
    for wh, bh, wt, bt in w.blocks:
        ah = x @ wh.T + bh
        at = x @ wt.T + bt
        h = elu(ah)
        t = _sigmoid(at)
        cache.append((x, ah, h, t))
        x = t * h + (1.0 - t) * x
    p = _softmax(x @ w.w_out.T + w.b_out)
    rows = np.arange(batch)
    loss = float(-np.log(p[rows, y]).mean())

    dz = p.copy()
    dz[rows, y] -= 1.0
    dz /= batch
    g_wout = dz.T @ x
    g_bout = dz.sum(axis=0)
    dx = dz @ w.w_out
    g_blocks = []
    for (wh, bh, wt, bt), (xin, ah, h, t) in zip(reversed(w.blocks), reversed(cache)):
        dt = dx * (h - xin)
        dh = dx * t
        dat = dt * t * (1.0 - t)
        dah = dh * np.where(ah >= 0, 1.0, h + 1.0)
        g_blocks.append((dah.T @ xin, dah.sum(axis=0), dat.T @ xin, dat.sum(axis=0)))
        dx = dx * (1.0 - t) + dah @ wh + dat @ wt
    g_blocks.reverse()
    return loss, PolicyWeights(g_blocks, g_wout, g_bout)


def _decayed(g: PolicyWeights, w: PolicyWeights, lam: float) -> PolicyWeights:
    blocks = [(gh + lam * wh, gbh, gt + lam * wt, gbt)
              for (gh, gbh, gt, gbt), (wh, _, wt, _) in zip(g.blocks, w.blocks)]
    return PolicyWeights(blocks, g.w_out + lam * w.w_out, g.b_out)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 30
    depth: int = 2
    init_scale: float = 0.05
    gate_bias: float = -1.0
    seed: int = 0
    weight_decay: float = 0.0  # L2 on weight matrices, not biases


def train(
    features: np.ndarray,
    labels: np.ndarray,
    num_rules: int,
    cfg: TrainConfig | None = None,
) -> PolicyWeights:
    """Mini-batch SGD on mean cross-entropy; deterministic given ``cfg.seed``.

    The returned weights are float32 and carry ``final_loss`` (full training set).
    """
    cfg = cfg or TrainConfig()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty training set")
    if y.min() < 0 or y.max() >= num_rules:
        raise ValueError(f"label outside 0..{num_rules - 1}")
    rng = np.random.default_rng(cfg.seed)
    w = init_weights(x.shape[1], cfg.depth, num_rules, int(rng.integers(2**31)),
                     cfg.init_scale, cfg.gate_bias)
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(x))
        for start in range(0, len(x), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, g = loss_and_grads(w, x[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            if cfg.weight_decay:
                g = _decayed(g, w, cfg.weight_decay)
            w = PolicyWeights(
                [tuple(p - lr * d for p, d in zip(blk, gblk)) for blk, gblk in zip(w.blocks, g.blocks)],
                w.w_out - lr * g.w_out,
                w.b_out - lr * g.b_out,
            )
        log.debug("epoch %d loss %.4f", epoch, loss)
    final, _ = loss_and_grads(w, x, y)
    if not np.isfinite(final):
        raise TrainingError("non-finite final loss")
    out = w.astype(np.float32)
    out.final_loss = final
    return out


def save_weights(w: PolicyWeights, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<4I", VERSION, w.fp_size, w.depth, w.num_rules))
        for t in w.tensors():
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_weights(path: str | Path) -> PolicyWeights:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise PolicyConfigError(f"{path}: not a highway policy weight file")
    version, f, h, r = struct.unpack_from("<4I", data, 4)
    if version != VERSION:
        raise PolicyConfigError(f"{path}: unsupported version {version}")
    expected = 20 + 4 * (h * (2 * f * f + 2 * f) + r * f + r)
    if len(data) != expected:
        raise PolicyConfigError(f"{path}: expected {expected} bytes, found {len(data)}")
    off = 20

    def take(*shape: int) -> np.ndarray:
        nonlocal off
        n = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape).astype(np.float32)
        off += 4 * n
        return arr

    blocks = [(take(f, f), take(f), take(f, f), take(f)) for _ in range(h)]
    w = PolicyWeights(blocks, take(r, f), take(r))
    w.validate()
    return w


class UniformPolicy:
    def __init__(self, num_rules: int):
        self.num_rules = num_rules
        self._p = uniform_policy(num_rules)

    def probabilities(self, molecule: LabeledGraph) -> np.ndarray:
        return self._p


class NetworkPolicy:
    """Trained network with a per-molecule cache (forward is pure)."""

    def __init__(self, weights: PolicyWeights):
        weights.validate()
        self.weights = weights.astype(np.float64)
        self.num_rules = weights.num_rules
        self._cache: dict[bytes, np.ndarray] = {}

    def probabilities(self, molecule: LabeledGraph) -> np.ndarray:
        key = canonical_form(molecule)
        p = self._cache.get(key)
        if p is None:
            p = forward(self.weights, featurize(molecule, self.weights.fp_size))
            self._cache[key] = p
        return p
