"""Training loop: cross-attribute proximity loss, exact gradients, Adam.

The loss compares, for every directed cross-attribute neighbor pair (u, v),
the Gaussian-kernel similarity of the fused embeddings against the impacting
strength p(v|u), the target node's edge weight renormalized over its
neighborhood, under a binary cross-entropy.  Because the network weights
are a global softmax of the raw co-occurrence counts, the per-neighborhood
renormalization reduces to a neighborhood softmax of the raw counts, which
is how it is computed (no underflow from tiny global weights).

Gradients for every parameter tensor come from the reverse-mode tape in
``autodiff``; optimization is plain full-batch Adam with bias correction.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .cavnet import HetNet
from .dataset import CAD
from .model import (EmbeddingTable, NecaConfig, NecaParams, compute_table,
                    forward_fused, init_params, wrap_params)


class TrainingError(Exception):
    """Non-finite loss or gradient; carries the partial history when training."""

    def __init__(self, message: str, loss_history: list[float] | None = None):
        super().__init__(message)
        self.loss_history = loss_history or []


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_epochs: int = 200
    rel_tol: float = 1e-5
    kernel_sigma: float = 1.0
    clamp_eps: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise TrainingError("adam betas must lie in (0, 1)")
        if self.kernel_sigma <= 0:
            raise TrainingError("kernel_sigma must be positive")


@dataclass
class TrainReport:
    loss_history: list[float]
    epochs_run: int
    stop_reason: str            # "max_epochs" or "converged"
    beta_inter: float
    beta_intra: float
    wall_time: float


def impacting_strength(net: HetNet, target: int, neighbor: int) -> float:
    """p(neighbor | target): target's edge weight renormalized over its neighborhood."""
    neigh = net.inter_adj[target]
    pos = np.searchsorted(neigh, neighbor)
    if pos >= len(neigh) or neigh[pos] != neighbor:
        raise TrainingError(f"node {neighbor} is not a cross-attribute neighbor of {target}")
    lookup = {}
    for i in range(len(net.inter)):
        lookup[(int(net.inter.u[i]), int(net.inter.v[i]))] = net.inter.raw[i]
    raws = np.array([lookup[(min(target, nb), max(target, nb))] for nb in neigh])
    e = np.exp(raws - raws.max())
    return float(e[pos] / e.sum())


def edge_targets(net: HetNet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(target, source, p) for every directed cross-attribute pair.

    p is the neighborhood softmax of raw counts, grouped by target.
    """
    tgt, src, eidx = net.directed_pairs("inter")
    raw = net.inter.raw[eidx]
    num = net.node_set.total
    mx = np.full(num, -np.inf)
    np.maximum.at(mx, tgt, raw)
    e = np.exp(raw - mx[tgt])
    denom = np.zeros(num)
    np.add.at(denom, tgt, e)
    return tgt, src, e / denom[tgt]


def gaussian_similarity(f_u: np.ndarray, f_v: np.ndarray, sigma: float) -> float:
    """exp(-||f_u - f_v||^2 / (2 sigma^2)), in (0, 1]."""
    d = np.asarray(f_u, dtype=np.float64) - np.asarray(f_v, dtype=np.float64)
    return float(np.exp(-(d @ d) / (2.0 * sigma * sigma)))


def _loss_var(net: HetNet, fused: ad.Var, config: TrainConfig, scale: float = 1.0) -> ad.Var:
    tgt, src, p = edge_targets(net)
    if len(tgt) == 0:
        raise TrainingError("empty cross-attribute edge set")
    diff = ad.sub(ad.gather(fused, tgt), ad.gather(fused, src))
    sq = ad.summation(ad.mul(diff, diff), axis=1)
    kernel = ad.exp(ad.mul(sq, -1.0 / (2.0 * config.kernel_sigma ** 2)))
    kernel = ad.clip(kernel, config.clamp_eps, 1.0 - config.clamp_eps)
    terms = ad.add(ad.mul(ad.log(kernel), p), ad.mul(ad.log(ad.sub(1.0, kernel)), 1.0 - p))
    return ad.mul(ad.summation(terms), -scale / len(tgt))


def neca_loss(net: HetNet, fused: np.ndarray, config: TrainConfig, scale: float = 1.0) -> float:
    """Mean binary cross-entropy between kernel similarities and impacting strengths."""
    return float(_loss_var(net, ad.Var(fused), config, scale).value)


def forward_loss(net: HetNet, params: NecaParams, model_config: NecaConfig,
                 train_config: TrainConfig, scale: float = 1.0):
    """One differentiable forward pass; returns (loss Var, forward state, param Vars)."""
    pvars = wrap_params(params)
    fw = forward_fused(net, pvars, model_config)
    return _loss_var(net, fw.fused, train_config, scale), fw, pvars


def gradients(net: HetNet, params: NecaParams, model_config: NecaConfig,
              train_config: TrainConfig, scale: float = 1.0) -> tuple[float, dict[str, np.ndarray]]:
    """Exact reverse-mode gradients of the loss for every parameter tensor."""
    loss, _, pvars = forward_loss(net, params, model_config, train_config, scale)
    if not np.isfinite(loss.value):
        raise TrainingError("loss is not finite")
    ad.backward(loss)
    grads = {}
    for name, tensor in params.named_tensors():
        g = pvars[name].grad
        if g is None:
            g = np.zeros_like(tensor)
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"gradient for tensor {name!r} is not finite")
        grads[name] = g
    return float(loss.value), grads


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: NecaParams) -> "AdamState":
        state = cls()
        for name, tensor in params.named_tensors():
            state.m[name] = np.zeros_like(tensor)
            state.v[name] = np.zeros_like(tensor)
        return state


def adam_step(params: NecaParams, grads: dict[str, np.ndarray], state: AdamState,
              config: TrainConfig, t: int) -> tuple[NecaParams, AdamState]:
    """Standard bias-corrected Adam update, in place; t counts from 1."""
    if t < 1:
        raise TrainingError("adam step index starts at 1")
    b1, b2 = config.adam_beta1, config.adam_beta2
    for name, tensor in params.named_tensors():
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / (1.0 - b1 ** t)
        v_hat = state.v[name] / (1.0 - b2 ** t)
        tensor -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
    return params, state


def train(cad: CAD, net: HetNet, model_config: NecaConfig, train_config: TrainConfig,
          log_fn=None) -> tuple[NecaParams, EmbeddingTable, TrainReport]:
    """Full-batch training until convergence or the epoch cap.

    Stops when the relative loss change drops below ``rel_tol`` (an infinite
    tolerance is met immediately after the first epoch).  ``log_fn``, when
    given, receives (epoch, loss, beta_inter, beta_intra) once per epoch.
    """
    t0 = time.perf_counter()
    params = init_params(net.node_set.total, model_config)
    state = AdamState.for_params(params)
    history: list[float] = []
    prev = None
    stop = "max_epochs"
    for epoch in range(1, train_config.max_epochs + 1):
        loss_var, fw, pvars = forward_loss(net, params, model_config, train_config)
        loss = float(loss_var.value)
        if not math.isfinite(loss):
            raise TrainingError(f"loss diverged at epoch {epoch}", history)
        history.append(loss)
        if log_fn is not None:
            log_fn(epoch, loss, float(fw.beta_inter.value), float(fw.beta_intra.value))
        ad.backward(loss_var)
        grads = {}
        for name, tensor in params.named_tensors():
            g = pvars[name].grad
            grads[name] = g if g is not None else np.zeros_like(tensor)
        adam_step(params, grads, state, train_config, epoch)
        if prev is not None:
            if abs(loss - prev) / max(abs(prev), 1e-12) < train_config.rel_tol:
                stop = "converged"
                break
        elif math.isinf(train_config.rel_tol):
            stop = "converged"
            break
        prev = loss
    table = compute_table(cad, net, params, model_config)
    report = TrainReport(
        loss_history=history,
        epochs_run=len(history),
        stop_reason=stop,
        beta_inter=table.beta_inter,
        beta_intra=table.beta_intra,
        wall_time=time.perf_counter() - t0,
    )
    return params, table, report
