"""Episode-level split, feature caching and the training run."""
from __future__ import annotations

import numpy as np

from ..core import make_generator
from ..fusion import (ENCODER_KEYS, GNN_KEYS, Batch, ReliabilityConfig, TrainConfig, accuracy, balanced_accuracy,
                      evaluate, preprocess, save_checkpoint, train)


def split_by_episode(samples, val_fraction: float = 0.2, seed: int = 0) -> tuple[list[int], list[int]]:
    """Sample indices for train and validation; no episode lands in both."""
    episodes = sorted({s.episode for s in samples})
    rng = make_generator(seed, 0x5B1)
    order = [episodes[i] for i in rng.permutation(len(episodes))]
    n_val = max(1, int(round(val_fraction * len(episodes)))) if len(episodes) > 1 else 0
    val_eps = set(order[:n_val])
    tr = [i for i, s in enumerate(samples) if s.episode not in val_eps]
    va = [i for i, s in enumerate(samples) if s.episode in val_eps]
    return tr, va


def samples_to_batch(samples, rel_cfg: ReliabilityConfig = ReliabilityConfig()) -> Batch:
    labels = np.array([s.label.probs for s in samples])
    T = labels.shape[1]
    return preprocess([s.observation for s in samples], labels=labels, T=T, rel_cfg=rel_cfg)


def shuffled_labels(batch: Batch, seed: int = 0) -> Batch:
    """Control set: labels permuted across samples."""
    rng = make_generator(seed, 0x5AFF)
    perm = rng.permutation(len(batch))
    return Batch(batch.x_img, batch.x_point, batch.x_traj, batch.x_vel, batch.r_img, batch.r_point,
                 batch.labels[perm])


def run_training(samples, config: TrainConfig, val_fraction: float = 0.2, rel_cfg: ReliabilityConfig =
                 ReliabilityConfig(), checkpoint_path=None, log_path=None, config_echo: dict | None = None,
                 dataset_hash: str = "", shuffle_control: bool = False, batch: Batch | None = None):
    """Split by episode, train, and optionally write checkpoint and per-epoch CSV.

    Returns (params, log, metrics) where metrics holds validation accuracy.
    """
    full = batch if batch is not None else samples_to_batch(samples, rel_cfg)
    tr_idx, va_idx = split_by_episode(samples, val_fraction, config.seed)
    tr = full.take(np.array(tr_idx))
    va = full.take(np.array(va_idx))
    if shuffle_control:
        tr = shuffled_labels(tr, config.seed)
    enc_p, gnn_p, log = train(tr, config, va)
    params = {**enc_p, **gnn_p}
    pred = evaluate(params, va, config.graph())
    metrics = {"val_accuracy": accuracy(pred, va.labels), "val_balanced_accuracy": balanced_accuracy(pred, va.labels),
               "train_samples": len(tr), "val_samples": len(va)}
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, {k: params[k] for k in ENCODER_KEYS}, {k: params[k] for k in GNN_KEYS},
                        config_echo or {}, dataset_hash)
    if log_path is not None:
        with open(log_path, "w") as fh:
            fh.write(log.to_csv())
    return params, log, metrics
