"""Two-layer GCN surrogate: forward pass, losses, training, analytic gradients.

The forward model is

    Z = Abar @ relu(Abar @ X @ W0) @ W1,     Y' = softmax(Z / T) row-wise,

with Abar = D^{-1/2} (A + I) D^{-1/2}. Gradients with respect to W0, W1 and the
raw adjacency entries are computed analytically, differentiating through the
degree normalization (D depends on A). Every formula here is checked against
central finite differences in the test suite.

Checkpoint layout (version 1, little-endian):
    bytes 0..5   magic b"NWGCN\\x01"
    bytes 6..13  uint64 header length L
    next L bytes UTF-8 JSON: {"n", "in_dim", "hidden_dim", "num_classes",
                              "temperature"}
    then in_dim*hidden_dim float64 (C-order) for W0
    then hidden_dim*num_classes float64 (C-order) for W1
Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergedLoss, ShapeMismatch
from .graphs import Graph, NodeSplit, normalize_adjacency

log = logging.getLogger(__name__)

Array = np.ndarray

CHECKPOINT_MAGIC = b"NWGCN\x01"


@dataclass(frozen=True)
class ModelParams:
    """Weights of the two-layer surrogate plus its training temperature."""

    w0: Array
    w1: Array
    temperature: float = 1.0

    def __post_init__(self):
        w0 = np.asarray(self.w0, dtype=np.float64)
        w1 = np.asarray(self.w1, dtype=np.float64)
        if w0.ndim != 2 or w1.ndim != 2 or w0.shape[1] != w1.shape[0]:
            raise ShapeMismatch(f"incompatible weight shapes {w0.shape} / {w1.shape}")
        if not (np.isfinite(w0).all() and np.isfinite(w1).all()):
            raise ValueError("weights must be finite")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "w1", w1)

    @property
    def in_dim(self) -> int:
        return self.w0.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w0.shape[1]

    @property
    def num_classes(self) -> int:
        return self.w1.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    seed: int = 0
    loss_mode: str = "ce"  # ce | scel | combined
    temperature: float = 1.0
    hidden_dim: int = 16
    # hard term used inside the combined loss; the ensemble defense swaps in scel
    combined_hard: str = "ce"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.loss_mode not in ("ce", "scel", "combined"):
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")
        if self.combined_hard not in ("ce", "scel"):
            raise ValueError(f"unknown combined_hard {self.combined_hard!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


# ---------------------------------------------------------------------------
# Forward pass and losses
# ---------------------------------------------------------------------------


def softmax_rows(z: Array, temperature: float = 1.0) -> Array:
    """Row-wise softmax of z / T, numerically stable."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    zt = z / temperature
    zt = zt - zt.max(axis=1, keepdims=True)
    e = np.exp(zt)
    return e / e.sum(axis=1, keepdims=True)


def forward(
    p: ModelParams, abar: Array, x: Array | None, temperature: float = 1.0
) -> tuple[Array, Array]:
    """Logits and temperature-T confidences of the surrogate.

    x=None means identity features (structure-only learning), in which case
    W0 must be n x H.
    """
    cache = _forward_cache(p, abar, x, temperature)
    return cache["z"], cache["yp"]


def _forward_cache(
    p: ModelParams, abar: Array, x: Array | None, temperature: float
) -> dict:
    n = abar.shape[0]
    if abar.shape != (n, n):
        raise ShapeMismatch(f"abar must be square, got {abar.shape}")
    if x is None:
        if p.in_dim != n:
            raise ShapeMismatch(
                f"identity features require W0 with {n} rows, got {p.in_dim}"
            )
        u = p.w0
    else:
        if x.shape != (n, p.in_dim):
            raise ShapeMismatch(f"features {x.shape} incompatible with W0 {p.w0.shape}")
        u = x @ p.w0
    pre = abar @ u
    s = np.maximum(pre, 0.0)
    v = s @ p.w1
    z = abar @ v
    yp = softmax_rows(z, temperature)
    return {"x": x, "u": u, "pre": pre, "s": s, "v": v, "z": z, "yp": yp}


def onehot_targets(split: NodeSplit) -> Array:
    return split.onehot()


def scel_targets(split: NodeSplit) -> Array:
    """Per-node target rows: 1 on the true class, 1/|F| on every other class.

    Rows deliberately sum to 1 + (|F|-1)/|F|; no renormalization.
    """
    f = split.num_classes
    hot = split.onehot()
    return hot + (1.0 - hot) / f


def _restrict(q: Array, node_set: Array) -> Array:
    out = np.zeros_like(q)
    out[node_set] = q[node_set]
    return out


def _xent(q: Array, yp: Array, node_set: Array) -> float:
    rows = np.asarray(node_set, dtype=np.int64)
    return float(-(q[rows] * np.log(yp[rows])).sum())


def loss_ce(yp: Array, split: NodeSplit, node_set: Array) -> float:
    """Cross-entropy of the true class over node_set."""
    return _xent(onehot_targets(split), yp, node_set)


def loss_scel(yp: Array, split: NodeSplit, node_set: Array) -> float:
    """Smoothing cross-entropy: weight 1 on the true class, 1/|F| elsewhere."""
    return _xent(scel_targets(split), yp, node_set)


def loss_soft(yp_t: Array, teacher_conf: Array, node_set: Array) -> float:
    """Soft loss: cross-entropy of student temperature-T rows against teacher rows."""
    return _xent(teacher_conf, yp_t, node_set)


def loss_combined(l_soft: float, l_hard: float, temperature: float) -> float:
    """Weighted distillation objective; the two weights always sum to 1."""
    t2 = temperature * temperature
    return l_soft / (t2 + 1.0) + t2 * l_hard / (t2 + 1.0)


# ---------------------------------------------------------------------------
# Analytic gradients
# ---------------------------------------------------------------------------


def _grad_z(z: Array, temperature: float, q: Array, node_set: Array) -> tuple[float, Array]:
    """Loss value and dL/dZ for L = -sum_{l in node_set} sum_k q_lk ln softmax(z/T)_lk."""
    rows = np.asarray(node_set, dtype=np.int64)
    yp = softmax_rows(z, temperature)
    zt = z / temperature
    logyp = zt - zt.max(axis=1, keepdims=True)
    logyp = logyp - np.log(np.exp(logyp).sum(axis=1, keepdims=True))
    loss = float(-(q[rows] * logyp[rows]).sum())
    qr = _restrict(q, rows)
    rowsum = qr.sum(axis=1, keepdims=True)
    gz = (rowsum * yp - qr) / temperature
    return loss, gz


def _loss_grad_z(
    p: ModelParams,
    cache: dict,
    split: NodeSplit,
    node_set: Array,
    loss_mode: str,
    temperature: float,
    soft_labels: Array | None,
    combined_hard: str = "ce",
) -> tuple[float, Array]:
    z = cache["z"]
    if loss_mode == "ce":
        return _grad_z(z, temperature, onehot_targets(split), node_set)
    if loss_mode == "scel":
        return _grad_z(z, temperature, scel_targets(split), node_set)
    if loss_mode == "combined":
        if soft_labels is None:
            raise ValueError("combined loss requires teacher soft labels")
        t2 = temperature * temperature
        w_soft = 1.0 / (t2 + 1.0)
        w_hard = t2 / (t2 + 1.0)
        l_s, g_s = _grad_z(z, temperature, soft_labels, node_set)
        hard_q = scel_targets(split) if combined_hard == "scel" else onehot_targets(split)
        l_h, g_h = _grad_z(z, 1.0, hard_q, node_set)
        return loss_combined(l_s, l_h, temperature), w_soft * g_s + w_hard * g_h
    raise ValueError(f"unknown loss_mode {loss_mode!r}")


def _backward(
    p: ModelParams,
    cache: dict,
    gz: Array,
    abar: Array,
    want_adjacency: bool,
    norm_scale: Array | None = None,
) -> dict:
    """Backpropagate dL/dZ through the two layers.

    Returns dW0, dW1 and, when requested, dL/dAbar. norm_scale carries the
    s = d^{-1/2} vector needed later for the raw-adjacency chain rule.
    """
    x, u, pre, s_hidden, v = cache["x"], cache["u"], cache["pre"], cache["s"], cache["v"]
    dv = abar @ gz
    dw1 = s_hidden.T @ dv
    ds = dv @ p.w1.T
    dp = ds * (pre > 0.0)
    du = abar @ dp
    dw0 = du if x is None else x.T @ du
    out = {"w0": dw0, "w1": dw1}
    if want_adjacency:
        out["abar"] = gz @ v.T + dp @ u.T
    return out


def _abar_to_adjacency(dabar: Array, abar: Array, s: Array) -> Array:
    """Chain dL/dAbar through Abar(A) = diag(s) (A + I) diag(s), s = d^{-1/2}.

    Entry (p, q) of the raw gradient is dabar_pq * s_p * s_q plus a row-constant
    from the degree dependence:  -1/2 * s_p^2 * (row_p + col_p) of dabar * Abar.
    """
    h = dabar * abar
    row = h.sum(axis=1)
    col = h.sum(axis=0)
    r = -0.5 * (s * s) * (row + col)
    return dabar * np.outer(s, s) + r[:, None]


def loss_and_grads(
    p: ModelParams,
    g: Graph,
    split: NodeSplit,
    node_set: Array,
    loss_mode: str = "ce",
    temperature: float = 1.0,
    soft_labels: Array | None = None,
    combined_hard: str = "ce",
    want_adjacency: bool = False,
) -> tuple[float, dict]:
    """Loss and analytic gradients wrt W0, W1 and (optionally) adjacency entries.

    The adjacency gradient is symmetrized: G[i][j] = (dL/dA_ij + dL/dA_ji) / 2.
    """
    b = g.adjacency + np.eye(g.n)
    s = 1.0 / np.sqrt(b.sum(axis=1))
    abar = b * np.outer(s, s)
    cache = _forward_cache(p, abar, g.features, temperature)
    loss, gz = _loss_grad_z(
        p, cache, split, node_set, loss_mode, temperature, soft_labels, combined_hard
    )
    grads = _backward(p, cache, gz, abar, want_adjacency)
    if want_adjacency:
        da = _abar_to_adjacency(grads.pop("abar"), abar, s)
        grads["adjacency"] = 0.5 * (da + da.T)
    return loss, grads


def grad_adjacency(
    p: ModelParams,
    g: Graph,
    split: NodeSplit,
    node_set: Array,
    loss_mode: str = "ce",
    soft_labels: Array | None = None,
) -> Array:
    """Symmetrized gradient of the loss wrt raw adjacency entries, at T=1."""
    _, grads = loss_and_grads(
        p,
        g,
        split,
        node_set,
        loss_mode=loss_mode,
        temperature=1.0,
        soft_labels=soft_labels,
        want_adjacency=True,
    )
    return grads["adjacency"]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def glorot(rng: np.random.Generator, rows: int, cols: int) -> Array:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


@dataclass
class _Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, weights: dict[str, Array], grads: dict[str, Array]) -> dict[str, Array]:
        self.t += 1
        out = {}
        for k, w in weights.items():
            gk = grads[k]
            self.m[k] = self.beta1 * self.m.get(k, 0.0) + (1 - self.beta1) * gk
            self.v[k] = self.beta2 * self.v.get(k, 0.0) + (1 - self.beta2) * gk * gk
            mhat = self.m[k] / (1 - self.beta1**self.t)
            vhat = self.v[k] / (1 - self.beta2**self.t)
            out[k] = w - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


def train(
    g: Graph,
    split: NodeSplit,
    cfg: TrainConfig,
    soft_labels: Array | None = None,
    epoch_graph=None,
) -> ModelParams:
    """Full-batch training of the surrogate on split.train.

    Deterministic for a fixed seed. soft_labels (teacher confidences for all
    nodes) are required iff loss_mode is "combined". epoch_graph, when given,
    is called as epoch_graph(epoch, rng) -> Graph to supply a fresh training
    graph each epoch (used by the random-drop defense).
    """
    if (soft_labels is not None) != (cfg.loss_mode == "combined"):
        raise ValueError("soft_labels must be given exactly when loss_mode='combined'")

    in_dim = g.n if g.features is None else g.features.shape[1]
    rng = np.random.default_rng(cfg.seed)
    weights = {
        "w0": glorot(rng, in_dim, cfg.hidden_dim),
        "w1": glorot(rng, cfg.hidden_dim, split.num_classes),
    }
    adam = _Adam(lr=cfg.learning_rate)

    abar = None if epoch_graph is not None else normalize_adjacency(g)
    x = g.features
    train_idx = split.train

    for epoch in range(cfg.epochs):
        if epoch_graph is not None:
            g_epoch = epoch_graph(epoch, rng)
            abar = normalize_adjacency(g_epoch)
            x = g_epoch.features
        p = ModelParams(weights["w0"], weights["w1"], cfg.temperature)
        cache = _forward_cache(p, abar, x, cfg.temperature)
        loss, gz = _loss_grad_z(
            p,
            cache,
            split,
            train_idx,
            cfg.loss_mode,
            cfg.temperature,
            soft_labels,
            cfg.combined_hard,
        )
        if not np.isfinite(loss):
            raise DivergedLoss(f"loss became non-finite at epoch {epoch}")
        grads = _backward(p, cache, gz, abar, want_adjacency=False)
        grads["w0"] = grads["w0"] + cfg.weight_decay * weights["w0"]
        weights = adam.step(weights, grads)

    params = ModelParams(weights["w0"], weights["w1"], cfg.temperature)
    labels, _ = predict(params, g)
    train_acc = float((labels[split.train] == split.labels[split.train]).mean())
    val_acc = (
        float((labels[split.val] == split.labels[split.val]).mean())
        if split.val.size
        else float("nan")
    )
    log.info(
        "trained %s epochs (loss_mode=%s, T=%g): train acc %.4f, val acc %.4f",
        cfg.epochs,
        cfg.loss_mode,
        cfg.temperature,
        train_acc,
        val_acc,
    )
    return params


def predict(p: ModelParams, g: Graph) -> tuple[Array, Array]:
    """Hard labels and confidence rows at inference temperature T=1.

    Ties break toward the lowest class index.
    """
    abar = normalize_adjacency(g)
    _, yp = forward(p, abar, g.features, temperature=1.0)
    return yp.argmax(axis=1), yp


# ---------------------------------------------------------------------------
# Checkpoint I/O
# ---------------------------------------------------------------------------


def save_checkpoint(path, p: ModelParams, n: int) -> None:
    header = json.dumps(
        {
            "n": int(n),
            "in_dim": p.in_dim,
            "hidden_dim": p.hidden_dim,
            "num_classes": p.num_classes,
            "temperature": p.temperature,
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        f.write(np.ascontiguousarray(p.w0, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(p.w1, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, int]:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a model checkpoint: {path}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        meta = json.loads(f.read(hlen).decode("utf-8"))
        c, h, k = meta["in_dim"], meta["hidden_dim"], meta["num_classes"]
        w0 = np.frombuffer(f.read(c * h * 8), dtype="<f8").reshape(c, h).copy()
        w1 = np.frombuffer(f.read(h * k * 8), dtype="<f8").reshape(h, k).copy()
    return ModelParams(w0, w1, meta["temperature"]), meta["n"]


def clone_with_temperature(p: ModelParams, temperature: float) -> ModelParams:
    return replace(p, temperature=temperature)
