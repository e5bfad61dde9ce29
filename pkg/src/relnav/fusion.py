"""Reliability-aware feature graph and the GCN/GAT success predictor.

The model maps an observation to a length-T vector of per-step success
probabilities. Node ``i`` of the graph carries element ``i`` of the
concatenated feature vector; edge weights decay with feature distance,
scaled by how reliable the two nodes' sensors are.

Gradients flow through node features only: the adjacency matrix and the
reliability scalars are treated as constants of each sample.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import encoders as enc
from .core import T_DEFAULT, ImageRaster, Observation, SuccessVector, make_generator, sigmoid
from .reliability import cloud_reliability, image_reliability

log = logging.getLogger(__name__)

GCN_WIDTH = 32
GAT_WIDTH = 32
LEAKY_SLOPE = 0.2
LOSS_EPS = 1e-9


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class GraphConfig:
    lam: float = 2.0
    w_min: float = 1e-3
    invert_reliability: bool = False      # alternate Eq. 6 mode: exponent scaled by (1 - r)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 30
    lam: float = 2.0
    weight_decay: float = 1e-5
    seed: int = 0
    optimizer: str = "sgd"                # "sgd" (plain) or "adam"
    w_min: float = 1e-3
    invert_reliability: bool = False

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size <= 0 or self.epochs < 0 or self.lam <= 0:
            raise ValueError("learning rate, batch size, epochs and lambda must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def graph(self) -> GraphConfig:
        return GraphConfig(self.lam, self.w_min, self.invert_reliability)


# --------------------------------------------------------------------------
# Graph construction


def node_modalities(ranges: dict | None = None) -> np.ndarray:
    """Modality name of every node."""
    ranges = ranges or enc.index_ranges()
    n = max(b for _, b in ranges.values())
    out = np.empty(n, dtype=object)
    for m, (a, b) in ranges.items():
        out[a:b] = m
    return out


def reliability_factor(i: int, j: int, ranges: dict, r_img: float, r_point: float) -> float:
    """Pairwise reliability of an edge, symmetric in (i, j)."""
    if i == j:
        raise ValueError("reliability factor is undefined on the diagonal")
    mods = node_modalities(ranges)
    img = (mods[i] == "img") + (mods[j] == "img")
    pt = (mods[i] == "point") + (mods[j] == "point")
    if img == 1 and pt == 1:
        return 0.5 * (r_img + r_point)
    if img == 1 and pt == 0:
        return float(r_img)
    if pt == 1 and img == 0:
        return float(r_point)
    return 1.0


def reliability_matrices(ranges: dict | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coefficient masks so that ``R = A*r_img + B*r_point + C`` for every pair."""
    mods = node_modalities(ranges)
    is_img = mods == "img"
    is_pt = mods == "point"
    img = is_img[:, None].astype(int) + is_img[None, :]
    pt = is_pt[:, None].astype(int) + is_pt[None, :]
    both = (img == 1) & (pt == 1)
    only_img = (img == 1) & (pt == 0)
    only_pt = (pt == 1) & (img == 0)
    A = only_img + 0.5 * both
    B = only_pt + 0.5 * both
    C = (~(both | only_img | only_pt)).astype(np.float64)
    return A.astype(np.float64), B.astype(np.float64), C


_REL = reliability_matrices()


def build_graph(f_vec, r_img, r_point, lam: float = 2.0, invert: bool = False) -> np.ndarray:
    """Adjacency ``W_ij = exp(-lam * |f_i - f_j| * r_ij)`` with a zero diagonal.

    Works on a single vector (N,) or a batch (B, N) with per-sample scalars.
    """
    f = np.asarray(f_vec, dtype=np.float64)
    single = f.ndim == 1
    f = np.atleast_2d(f)
    r_img = np.broadcast_to(np.asarray(r_img, dtype=np.float64), (f.shape[0],))
    r_point = np.broadcast_to(np.asarray(r_point, dtype=np.float64), (f.shape[0],))
    A, B, C = _REL if f.shape[1] == _REL[0].shape[0] else reliability_matrices()
    R = A[None] * r_img[:, None, None] + B[None] * r_point[:, None, None] + C[None]
    if invert:
        R = 1.0 - R
    W = np.exp(-lam * np.abs(f[:, :, None] - f[:, None, :]) * R)
    idx = np.arange(f.shape[1])
    W[:, idx, idx] = 0.0
    return W[0] if single else W


def normalized_adjacency(W: np.ndarray) -> np.ndarray:
    """Renormalised propagation matrix D^-1/2 (W + I) D^-1/2."""
    n = W.shape[-1]
    A = W + np.eye(n)
    d = A.sum(axis=-1)
    s = 1.0 / np.sqrt(d)
    return s[..., :, None] * A * s[..., None, :]


def attention_prior(W: np.ndarray, w_min: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Neighbourhood mask (self plus edges above ``w_min``) and log-prior of GAT logits."""
    n = W.shape[-1]
    eye = np.eye(n, dtype=bool)
    mask = (W > w_min) | eye
    prior = np.where(eye, 1.0, W)
    with np.errstate(divide="ignore"):
        logp = np.where(mask, np.log(np.where(mask, prior, 1.0)), -np.inf)
    return mask, logp


# --------------------------------------------------------------------------
# Layers (single graph; batched variants below reuse the same algebra)


def gcn_layer(H: np.ndarray, W: np.ndarray, theta: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.ndim == 1:
        H = H[:, None]
    if W.shape != (H.shape[0], H.shape[0]) or theta.shape[0] != H.shape[1]:
        raise ValueError(f"shape mismatch: H {H.shape}, W {W.shape}, theta {theta.shape}")
    return np.maximum(normalized_adjacency(W) @ H @ theta, 0.0)


def leaky_relu(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def gat_attention(H, W, theta, a_src, a_dst, w_min: float = 1e-3) -> np.ndarray:
    """Row-stochastic attention matrix of the GAT layer."""
    Z = H @ theta
    e = leaky_relu((Z @ a_src)[..., :, None] + (Z @ a_dst)[..., None, :])
    _, logp = attention_prior(W, w_min)
    logits = e + logp
    logits = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(logits)
    return ex / ex.sum(axis=-1, keepdims=True)


def gat_layer(H: np.ndarray, W: np.ndarray, theta: np.ndarray, a_src: np.ndarray, a_dst: np.ndarray,
              w_min: float = 1e-3) -> np.ndarray:
    """Single-head graph attention with the edge weights as multiplicative prior.

    ``alpha_ij`` is proportional to ``W_ij * exp(LeakyReLU(a_src.z_i + a_dst.z_j))``
    over ``j`` in the masked neighbourhood, with weight 1 on the self loop.
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim == 1:
        H = H[:, None]
    n = H.shape[0]
    if W.shape != (n, n) or theta.shape[0] != H.shape[1] or a_src.shape != (theta.shape[1],) \
            or a_dst.shape != (theta.shape[1],):
        raise ValueError("shape mismatch in gat_layer")
    alpha = gat_attention(H, W, theta, a_src, a_dst, w_min)
    return elu(alpha @ (H @ theta))


# --------------------------------------------------------------------------
# Parameters


def init_gnn_params(seed: int = 0, n_nodes: int = 48, T: int = T_DEFAULT) -> dict[str, np.ndarray]:
    rng = make_generator(seed, 0x6A7)
    feat = GAT_WIDTH + GAT_WIDTH * n_nodes
    return {
        "gcn1": rng.normal(0.0, 1.0, size=(1, GCN_WIDTH)),
        "gcn2": rng.normal(0.0, math.sqrt(2.0 / GCN_WIDTH), size=(GCN_WIDTH, GCN_WIDTH)),
        "gat": rng.normal(0.0, 1.0 / math.sqrt(GCN_WIDTH), size=(GCN_WIDTH, GAT_WIDTH)),
        "att_src": rng.normal(0.0, 0.1, size=GAT_WIDTH),
        "att_dst": rng.normal(0.0, 0.1, size=GAT_WIDTH),
        "out_w": rng.normal(0.0, 1.0 / math.sqrt(feat), size=(T, feat)),
        "out_b": np.full(T, 1.0),
    }


def init_params(seed: int = 0, T: int = T_DEFAULT) -> dict[str, np.ndarray]:
    p = enc.init_encoder_params(seed, T)
    p.update(init_gnn_params(seed, sum(enc.DIMS.values()), T))
    return p


ENCODER_KEYS = tuple(enc.init_encoder_params(0).keys())
GNN_KEYS = ("gcn1", "gcn2", "gat", "att_src", "att_dst", "out_w", "out_b")


# --------------------------------------------------------------------------
# Batched model


@dataclass
class Batch:
    """Preprocessed model inputs for B samples."""

    x_img: np.ndarray
    x_point: np.ndarray
    x_traj: np.ndarray
    x_vel: np.ndarray
    r_img: np.ndarray
    r_point: np.ndarray
    labels: np.ndarray | None = None

    def __len__(self):
        return len(self.x_img)

    def take(self, idx) -> "Batch":
        return Batch(self.x_img[idx], self.x_point[idx], self.x_traj[idx], self.x_vel[idx], self.r_img[idx],
                     self.r_point[idx], None if self.labels is None else self.labels[idx])


def forward(params: dict, batch: Batch, graph: GraphConfig = GraphConfig(), W: np.ndarray | None = None):
    """Batched prediction. Returns (probabilities (B, T), cache).

    ``W`` overrides the adjacency (used by finite-difference checks that must
    hold the graph fixed while parameters move).
    """
    f, enc_cache = enc.encode_batch(params, batch.x_img, batch.x_point, batch.x_traj, batch.x_vel)
    if W is None:
        W = build_graph(f, batch.r_img, batch.r_point, graph.lam, graph.invert_reliability)
    Ahat = normalized_adjacency(W)
    B, N = f.shape

    P1 = Ahat @ f[:, :, None]                     # (B, N, 1)
    Z1 = P1 @ params["gcn1"]
    H1 = np.maximum(Z1, 0.0)
    P2 = Ahat @ H1
    Z2 = P2 @ params["gcn2"]
    H2 = np.maximum(Z2, 0.0)

    Zg = H2 @ params["gat"]
    pre = (Zg @ params["att_src"])[:, :, None] + (Zg @ params["att_dst"])[:, None, :]
    e = leaky_relu(pre)
    _, logp = attention_prior(W, graph.w_min)
    logits = e + logp
    logits = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(logits)
    alpha = ex / ex.sum(axis=-1, keepdims=True)
    O = alpha @ Zg
    H3 = elu(O)

    g = np.concatenate([H3.mean(axis=1), H3.reshape(B, -1)], axis=1)
    y = sigmoid(g @ params["out_w"].T + params["out_b"])
    cache = dict(f=f, enc=enc_cache, W=W, Ahat=Ahat, Z1=Z1, H1=H1, P2=P2, Z2=Z2, H2=H2, Zg=Zg, pre=pre,
                 alpha=alpha, O=O, H3=H3, g=g, y=y, P1=P1)
    return y, cache


def loss(pred, target, eps: float = LOSS_EPS) -> float:
    """Mean binary cross-entropy over steps (and over samples for 2D input).

    Each term's log-likelihood is capped at 0: with the ``eps`` guard a perfect
    prediction would otherwise give ``log(1 + eps) > 0`` and a negative loss.
    """
    p = np.asarray(pred.probs if isinstance(pred, SuccessVector) else pred, dtype=np.float64)
    t = np.asarray(target.probs if isinstance(target, SuccessVector) else target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch {p.shape} vs {t.shape}")
    ll = np.minimum(t * np.log(p + eps) + (1.0 - t) * np.log(1.0 - p + eps), 0.0)
    return float(-np.mean(ll))


def backward(params: dict, cache: dict, target: np.ndarray, eps: float = LOSS_EPS) -> dict[str, np.ndarray]:
    """Gradient of :func:`loss` (mean over batch and steps) w.r.t. every parameter."""
    y = cache["y"]
    B, T = y.shape
    ll = target * np.log(y + eps) + (1.0 - target) * np.log(1.0 - y + eps)
    dy = -(target / (y + eps) - (1.0 - target) / (1.0 - y + eps)) / (B * T)
    dy = np.where(ll < 0.0, dy, 0.0)                 # capped terms are flat
    dz = dy * y * (1.0 - y)
    grads = {"out_w": dz.T @ cache["g"], "out_b": dz.sum(axis=0)}
    dg = dz @ params["out_w"]
    H3 = cache["H3"]
    N, F = H3.shape[1], H3.shape[2]
    dH3 = dg[:, F:].reshape(B, N, F) + dg[:, None, :F] / N

    O = cache["O"]
    dO = dH3 * np.where(O > 0, 1.0, np.exp(np.minimum(O, 0.0)))
    alpha, Zg = cache["alpha"], cache["Zg"]
    dalpha = dO @ Zg.transpose(0, 2, 1)
    dZg = alpha.transpose(0, 2, 1) @ dO
    dlogits = alpha * (dalpha - np.sum(alpha * dalpha, axis=-1, keepdims=True))
    dpre = dlogits * np.where(cache["pre"] > 0, 1.0, LEAKY_SLOPE)
    ds = dpre.sum(axis=2)
    dt = dpre.sum(axis=1)
    grads["att_src"] = np.einsum("bi,bif->f", ds, Zg)
    grads["att_dst"] = np.einsum("bj,bjf->f", dt, Zg)
    dZg = dZg + ds[:, :, None] * params["att_src"] + dt[:, :, None] * params["att_dst"]
    H2 = cache["H2"]
    grads["gat"] = np.einsum("bnk,bnf->kf", H2, dZg)
    dH2 = dZg @ params["gat"].T

    Ahat_T = cache["Ahat"].transpose(0, 2, 1)
    dZ2 = dH2 * (cache["Z2"] > 0)
    grads["gcn2"] = np.einsum("bnk,bnf->kf", cache["P2"], dZ2)
    dH1 = Ahat_T @ (dZ2 @ params["gcn2"].T)
    dZ1 = dH1 * (cache["Z1"] > 0)
    grads["gcn1"] = np.einsum("bnk,bnf->kf", cache["P1"], dZ1)
    df = (Ahat_T @ (dZ1 @ params["gcn1"].T))[:, :, 0]
    grads.update(enc.encode_batch_backward(params, df, cache["enc"]))
    return grads


# --------------------------------------------------------------------------
# Preprocessing and inference


@dataclass(frozen=True)
class ReliabilityConfig:
    alpha_b: float = 0.5
    alpha_c: float = 0.5
    corner_norm: float = 0.005
    fast_threshold: float = 20.0
    fast_arc: int = 9
    c_max: float = 0.5
    c_min: float = 0.05
    beta_e: float = 0.1
    beta_p: float = 1.0
    neighborhood: int = 5


def observation_reliability(obs: Observation, cfg: ReliabilityConfig = ReliabilityConfig()) -> tuple[float, float]:
    ri = image_reliability(obs.image, cfg.alpha_b, cfg.alpha_c, cfg.corner_norm, cfg.fast_threshold, cfg.fast_arc)
    rp = cloud_reliability(obs.cloud, cfg.c_max, cfg.c_min, cfg.beta_e, cfg.beta_p, cfg.neighborhood)
    return ri.r_img, rp.r_point


def preprocess(observations, reliabilities=None, labels=None, T: int = T_DEFAULT,
               rel_cfg: ReliabilityConfig = ReliabilityConfig()) -> Batch:
    obs = list(observations)
    if reliabilities is None:
        reliabilities = [observation_reliability(o, rel_cfg) for o in obs]
    size = obs[0].image.height if obs else 64
    rel = np.asarray(reliabilities, dtype=np.float64).reshape(-1, 2)
    return Batch(
        x_img=np.array([enc.image_input(o.image, size) for o in obs]),
        x_point=np.array([enc.cloud_histogram(o.cloud) for o in obs]),
        x_traj=np.array([enc.image_input(o.traj_image, size, channels=1) for o in obs]),
        x_vel=np.array([enc.velocity_input(o.vel_history, T) for o in obs]),
        r_img=rel[:, 0].copy(), r_point=rel[:, 1].copy(),
        labels=None if labels is None else np.asarray(labels, dtype=np.float64),
    )


def predict(obs: Observation, encoder_params: dict, gnn_params: dict, lam: float = 2.0,
            reliability: tuple[float, float] | None = None, graph: GraphConfig | None = None) -> SuccessVector:
    """Success probability vector for one observation."""
    params = {**encoder_params, **gnn_params}
    T = params["out_b"].shape[0]
    graph = graph or GraphConfig(lam=lam)
    batch = preprocess([obs], None if reliability is None else [reliability], T=T)
    y, _ = forward(params, batch, graph)
    return SuccessVector(y[0])


class Predictor:
    """Trained model bundled with its graph settings, for use inside the planner.

    ``force_reliable`` pins r_img = r_point = 1 (the no-reliability ablation).
    """

    def __init__(self, params: dict, graph: GraphConfig = GraphConfig(),
                 rel_cfg: ReliabilityConfig = ReliabilityConfig(), force_reliable: bool = False):
        self.params = params
        self.graph = graph
        self.rel_cfg = rel_cfg
        self.force_reliable = force_reliable
        self.T = params["out_b"].shape[0]

    def reliability(self, obs: Observation) -> tuple[float, float]:
        if self.force_reliable:
            return 1.0, 1.0
        return observation_reliability(obs, self.rel_cfg)

    def predict(self, obs: Observation, reliability=None) -> SuccessVector:
        return SuccessVector(self.predict_many(obs, [obs.traj_image], reliability)[0])

    def predict_many(self, obs: Observation, traj_images: list[ImageRaster], reliability=None) -> np.ndarray:
        """Probabilities (K, T) for K candidate trajectory images sharing one observation."""
        if self.force_reliable:
            reliability = (1.0, 1.0)
        elif reliability is None:
            reliability = self.reliability(obs)
        k = len(traj_images)
        size = obs.image.height
        base = preprocess([obs], [reliability], T=self.T)
        batch = Batch(
            x_img=np.repeat(base.x_img, k, axis=0), x_point=np.repeat(base.x_point, k, axis=0),
            x_traj=np.array([enc.image_input(t, size, channels=1) for t in traj_images]),
            x_vel=np.repeat(base.x_vel, k, axis=0),
            r_img=np.full(k, reliability[0]), r_point=np.full(k, reliability[1]))
        y, _ = forward(self.params, batch, self.graph)
        return y


class ConstantPredictor:
    """Predictor stub returning the same probability at every step."""

    def __init__(self, value: float, T: int = T_DEFAULT):
        self.value = float(value)
        self.T = T
        self.force_reliable = False

    def predict(self, obs, reliability=None) -> SuccessVector:
        return SuccessVector(np.full(self.T, self.value))

    def predict_many(self, obs, traj_images, reliability=None) -> np.ndarray:
        return np.full((len(traj_images), self.T), self.value)


# --------------------------------------------------------------------------
# Training


def accuracy(pred: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """Per-step accuracy of thresholded predictions."""
    return float(np.mean((pred >= threshold) == (labels >= 0.5)))


def balanced_accuracy(pred: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """Mean of per-step recall on positive and negative entries."""
    hit = (pred >= threshold) == (labels >= 0.5)
    pos = labels >= 0.5
    recalls = [hit[m].mean() for m in (pos, ~pos) if m.any()]
    return float(np.mean(recalls))


def evaluate(params: dict, batch: Batch, graph: GraphConfig, chunk: int = 256) -> np.ndarray:
    out = []
    for s in range(0, len(batch), chunk):
        y, _ = forward(params, batch.take(slice(s, s + chunk)), graph)
        out.append(y)
    return np.concatenate(out) if out else np.zeros((0, 0))


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        cols = list(self.rows[0].keys())
        lines = [",".join(cols)]
        for r in self.rows:
            lines.append(",".join(f"{r[c]:.10g}" if isinstance(r[c], float) else str(r[c]) for c in cols))
        return "\n".join(lines) + "\n"


def train(train_set: Batch, config: TrainConfig, val_set: Batch | None = None, init: dict | None = None):
    """Mini-batch gradient descent; returns (encoder params, gnn params, log).

    The returned parameters are those of the epoch with the lowest
    validation loss (training loss when no validation set is given).
    """
    if len(train_set) == 0:
        raise ValueError("empty training set")
    if train_set.labels is None:
        raise ValueError("training set has no labels")
    lab = train_set.labels
    if lab.min() >= 0.5 or lab.max() < 0.5:
        raise ValueError("training set must contain both positive and negative labels")
    T = lab.shape[1]
    params = {k: v.copy() for k, v in (init or init_params(config.seed, T)).items()}
    graph = config.graph()
    rng = make_generator(config.seed, 0x7A1)
    log_ = TrainLog()
    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    step = 0

    def epoch_stats(p):
        tr = evaluate(p, train_set, graph)
        stats = dict(train_loss=loss(tr, lab), train_acc=accuracy(tr, lab))
        if val_set is not None and len(val_set):
            va = evaluate(p, val_set, graph)
            stats.update(val_loss=loss(va, val_set.labels), val_acc=accuracy(va, val_set.labels),
                         val_bal_acc=balanced_accuracy(va, val_set.labels))
        return stats

    stats = epoch_stats(params)
    log_.add(epoch=0, **stats)
    key = "val_loss" if "val_loss" in stats else "train_loss"
    best = (stats[key], {k: v.copy() for k, v in params.items()})
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        for s in range(0, len(order), config.batch_size):
            mb = train_set.take(order[s:s + config.batch_size])
            y, cache = forward(params, mb, graph)
            grads = backward(params, cache, mb.labels)
            step += 1
            for k in params:
                g = grads[k] + config.weight_decay * params[k]
                if config.optimizer == "adam":
                    adam_m[k] = 0.9 * adam_m[k] + 0.1 * g
                    adam_v[k] = 0.999 * adam_v[k] + 0.001 * g * g
                    mh = adam_m[k] / (1 - 0.9 ** step)
                    vh = adam_v[k] / (1 - 0.999 ** step)
                    params[k] = params[k] - config.learning_rate * mh / (np.sqrt(vh) + 1e-8)
                else:
                    params[k] = params[k] - config.learning_rate * g
        stats = epoch_stats(params)
        if not all(math.isfinite(v) for v in stats.values()):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}: {stats}")
        log_.add(epoch=epoch, **stats)
        log.info("epoch %d %s", epoch, stats)
        if stats[key] < best[0]:
            best = (stats[key], {k: v.copy() for k, v in params.items()})
    final = best[1]
    return ({k: final[k] for k in ENCODER_KEYS}, {k: final[k] for k in GNN_KEYS}, log_)


# --------------------------------------------------------------------------
# Checkpoints


CHECKPOINT_VERSION = 1


def save_checkpoint(path, encoder_params: dict, gnn_params: dict, config: dict | None = None,
                    dataset_hash: str = "") -> None:
    """JSON checkpoint: version, config echo, dataset hash and every tensor.

    Tensors are stored as ``{"shape": [...], "data": [...]}`` with floats in
    shortest round-trip form, so reloading is bit-exact.
    """
    tensors = {k: {"shape": list(v.shape), "data": np.asarray(v, dtype=np.float64).ravel().tolist()}
               for k, v in {**encoder_params, **gnn_params}.items()}
    doc = {"version": CHECKPOINT_VERSION, "config": config or {}, "dataset_hash": dataset_hash,
           "encoder_keys": list(encoder_params), "gnn_keys": list(gnn_params), "tensors": tensors}
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path) -> tuple[dict, dict, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    t = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["tensors"].items()}
    return ({k: t[k] for k in doc["encoder_keys"]}, {k: t[k] for k in doc["gnn_keys"]}, doc)


def params_digest(params: dict) -> str:
    h = hashlib.sha256()
    for k in sorted(params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(params[k], dtype=np.float64).tobytes())
    return h.hexdigest()


def train_config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
