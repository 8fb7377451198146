"""Autoencoder over binary solution vectors, trained with manual backprop.

The encoder is a stack of LeakyReLU blocks with optional skip
connections (identity when widths match, a learned projection
otherwise) followed by a linear bottleneck of dimension d < p.  The
decoder is deliberately a single dense sigmoid layer

    v = sigmoid(W^T h + a),   W of shape d x p,

because downstream code rewrites exactly this layer into linear rows
over (u, h).  Training minimizes the summed binary cross entropy of the
reconstruction against the input and runs Adam on gradients from an
explicit backward pass; no framework is involved, so runs are
deterministic for a fixed seed on the same BLAS.

Internally the loss is evaluated in logit form (logaddexp) so that
saturated sigmoids cannot produce infinities; the public ce_loss
mirrors the usual clamped formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .serialize import dump_json, fnum, fvec, load_json, pnum, pvec

WEIGHTS_TAG = "ae4bv-weights/1"


class TrainingFailure(RuntimeError):
    """Raised when the loss stops being finite during training."""


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    latent_dim: int
    encoder_widths: tuple = (180, 120, 40)
    leaky_slope: float = 0.01
    dropout: float = 0.2
    epochs: int = 500
    learning_rate: float = 2e-4
    batch_size: int = 64
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    skip_connections: bool = True

    def check(self):
        if self.input_dim <= 0 or self.latent_dim <= 0:
            raise ValueError("dimensions must be positive")
        if self.latent_dim >= self.input_dim:
            raise ValueError("latent_dim must stay below input_dim (bottleneck)")
        if not self.encoder_widths:
            raise ValueError("encoder_widths must be nonempty")
        if any(int(w) <= 0 for w in self.encoder_widths):
            raise ValueError("encoder widths must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size <= 0:
            raise ValueError("epochs must be >= 0 and batch_size positive")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")


@dataclass
class Block:
    """One encoder layer: weight (out, in), bias (out,), optional skip.

    skip is None (no skip), the string "identity" (widths match, add the
    input), or an (out, in) projection matrix that is itself trained.
    """

    weight: np.ndarray
    bias: np.ndarray
    skip: object = None


@dataclass
class Ae4bvParams:
    cfg: NetConfig
    blocks: tuple
    decoder_W: np.ndarray
    decoder_a: np.ndarray


@dataclass
class BinaryDataset:
    """Rows of {0,1} vectors, optionally carrying origin bookkeeping."""

    samples: np.ndarray
    thetas: tuple = None
    objectives: tuple = None

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError("samples must be a nonempty 2d array")
        if not np.all((arr == 0.0) | (arr == 1.0)):
            raise ValueError("samples must be exactly 0/1 valued")
        self.samples = arr
        for name in ("thetas", "objectives"):
            ref = getattr(self, name)
            if ref is not None and len(ref) != arr.shape[0]:
                raise ValueError(f"{name} length does not match samples")

    @property
    def p(self):
        return self.samples.shape[1]

    def __len__(self):
        return self.samples.shape[0]


# ----- parameters -------------------------------------------------------------


def _xavier(rng, out_dim, in_dim):
    r = math.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-r, r, size=(out_dim, in_dim))


def init_params(cfg: NetConfig, rng=None) -> Ae4bvParams:
    """Fresh parameters; weights uniform in +-sqrt(6/(fan_in+fan_out))."""
    cfg.check()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    dims = [cfg.input_dim] + [int(w) for w in cfg.encoder_widths] + [cfg.latent_dim]
    blocks = []
    for k in range(len(dims) - 1):
        fin, fout = dims[k], dims[k + 1]
        weight = _xavier(rng, fout, fin)
        bias = np.zeros(fout)
        last = k == len(dims) - 2
        if last or not cfg.skip_connections:
            skip = None
        elif fin == fout:
            skip = "identity"
        else:
            skip = _xavier(rng, fout, fin)
        blocks.append(Block(weight, bias, skip))
    decoder_W = _xavier(rng, cfg.latent_dim, cfg.input_dim)
    decoder_a = np.zeros(cfg.input_dim)
    return Ae4bvParams(cfg, tuple(blocks), decoder_W, decoder_a)


def param_tensors(params: Ae4bvParams) -> list:
    """All trainable arrays in a fixed order (views, not copies)."""
    out = []
    for b in params.blocks:
        out.append(b.weight)
        out.append(b.bias)
        if isinstance(b.skip, np.ndarray):
            out.append(b.skip)
    out.append(params.decoder_W)
    out.append(params.decoder_a)
    return out


# ----- forward / backward ------------------------------------------------------


def draw_masks(params: Ae4bvParams, nrow: int, rng) -> list:
    """Dropout keep masks for one batch, or None when dropout is off."""
    q = params.cfg.dropout
    if q <= 0.0:
        return None
    masks = []
    for b in params.blocks[:-1]:
        masks.append((rng.random((nrow, b.weight.shape[0])) >= q).astype(float))
    return masks


def _run_encoder(params, X, masks):
    """Forward through the blocks; returns per-block caches and H."""
    cfg = params.cfg
    slope = cfg.leaky_slope
    keep = 1.0 - cfg.dropout
    caches = []
    Z = X
    for k, b in enumerate(params.blocks[:-1]):
        pre = Z @ b.weight.T + b.bias
        act = np.where(pre >= 0.0, pre, slope * pre)
        if isinstance(b.skip, np.ndarray):
            act = act + Z @ b.skip.T
        elif b.skip == "identity":
            act = act + Z
        mask = masks[k] if masks is not None else None
        out = act * (mask / keep) if mask is not None else act
        caches.append((Z, pre, mask))
        Z = out
    last = params.blocks[-1]
    H = Z @ last.weight.T + last.bias
    caches.append((Z, None, None))
    return caches, H


def _logits(params, H):
    return H @ params.decoder_W + params.decoder_a


def forward(params: Ae4bvParams, u, mode="infer", rng=None):
    """Encode one vector and decode it; returns (h, v) with v in (0, 1).

    Dropout fires only in train mode, where an rng must be supplied;
    infer mode is deterministic.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (params.cfg.input_dim,):
        raise ValueError("input length does not match input_dim")
    if mode == "train":
        if rng is None:
            raise ValueError("train mode needs an rng for dropout")
        masks = draw_masks(params, 1, rng)
    elif mode == "infer":
        masks = None
    else:
        raise ValueError(f"unknown mode {mode!r}")
    _, H = _run_encoder(params, u[None, :], masks)
    v = expit(_logits(params, H))
    return H[0], v[0]


def binarize(v):
    """Round activations: exactly 1/2 and below goes to 0, above to 1."""
    return (np.asarray(v) > 0.5).astype(float)


def ce_loss(u, v) -> float:
    """Summed binary cross entropy with predictions clamped away from 0/1."""
    u = np.asarray(u, dtype=float)
    v = np.clip(np.asarray(v, dtype=float), 1e-12, 1.0 - 1e-12)
    return float(-(u * np.log(v) + (1.0 - u) * np.log1p(-v)).sum())


def batch_loss(params: Ae4bvParams, X, masks) -> float:
    """Mean per-sample reconstruction loss of a batch, in logit form."""
    _, H = _run_encoder(params, X, masks)
    L = _logits(params, H)
    per = np.logaddexp(0.0, L) - X * L
    return float(per.sum() / X.shape[0])


def batch_loss_grads(params: Ae4bvParams, X, masks):
    """Loss and gradients for every tensor, aligned with param_tensors."""
    cfg = params.cfg
    slope = cfg.leaky_slope
    keep = 1.0 - cfg.dropout
    nB = X.shape[0]
    caches, H = _run_encoder(params, X, masks)
    L = _logits(params, H)
    loss = float((np.logaddexp(0.0, L) - X * L).sum() / nB)

    dL = (expit(L) - X) / nB
    g_decoder_W = H.T @ dL
    g_decoder_a = dL.sum(axis=0)
    dH = dL @ params.decoder_W.T

    last = params.blocks[-1]
    Z_last = caches[-1][0]
    g_last_W = dH.T @ Z_last
    g_last_b = dH.sum(axis=0)
    dZ = dH @ last.weight
    grads_rev = [[g_last_W, g_last_b]]

    for k in range(len(params.blocks) - 2, -1, -1):
        b = params.blocks[k]
        Z_in, pre, mask = caches[k]
        dY = dZ * (mask / keep) if mask is not None else dZ
        dPre = dY * np.where(pre >= 0.0, 1.0, slope)
        gW = dPre.T @ Z_in
        gb = dPre.sum(axis=0)
        dZ = dPre @ b.weight
        entry = [gW, gb]
        if isinstance(b.skip, np.ndarray):
            entry.append(dY.T @ Z_in)
            dZ = dZ + dY @ b.skip
        elif b.skip == "identity":
            dZ = dZ + dY
        grads_rev.append(entry)

    grads = []
    for entry in reversed(grads_rev):
        grads.extend(entry)
    grads.append(g_decoder_W)
    grads.append(g_decoder_a)
    return loss, grads


# ----- training ----------------------------------------------------------------


def train(data: BinaryDataset, cfg: NetConfig):
    """Adam on the reconstruction loss; returns (params, per-epoch mean loss).

    One rng seeded by cfg.seed drives initialization, the per-epoch
    permutation and every dropout mask, in that order, which makes runs
    bit-for-bit repeatable.  epochs=0 returns the untouched initial
    parameters and an empty history.
    """
    cfg.check()
    X_all = data.samples
    if X_all.shape[1] != cfg.input_dim:
        raise ValueError("dataset width does not match cfg.input_dim")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, rng)
    tensors = param_tensors(params)
    mom = [np.zeros_like(t) for t in tensors]
    vel = [np.zeros_like(t) for t in tensors]
    b1, b2 = cfg.adam_betas
    lr, eps = cfg.learning_rate, cfg.adam_eps
    n = X_all.shape[0]
    step = 0
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            batch = X_all[perm[s : s + cfg.batch_size]]
            masks = draw_masks(params, batch.shape[0], rng)
            loss, grads = batch_loss_grads(params, batch, masks)
            if not math.isfinite(loss):
                raise TrainingFailure(f"loss stopped being finite at epoch {epoch}")
            total += loss * batch.shape[0]
            step += 1
            c1 = 1.0 - b1**step
            c2 = 1.0 - b2**step
            for i, g in enumerate(grads):
                mom[i] = b1 * mom[i] + (1.0 - b1) * g
                vel[i] = b2 * vel[i] + (1.0 - b2) * (g * g)
                tensors[i] -= lr * (mom[i] / c1) / (np.sqrt(vel[i] / c2) + eps)
        history.append(total / n)
    return params, history


def hamming_loss(params: Ae4bvParams, data: BinaryDataset) -> float:
    """Mean fraction of wrongly reconstructed bits, in infer mode."""
    X = data.samples
    if X.shape[1] != params.cfg.input_dim:
        raise ValueError("dataset width does not match the network")
    _, H = _run_encoder(params, X, None)
    recon = (_logits(params, H) > 0.0).astype(float)
    return float(np.mean(recon != X))


# ----- weights file -------------------------------------------------------------


def _fmat(M):
    return [fvec(row) for row in np.asarray(M)]


def _pmat(rows):
    return np.array([pvec(r) for r in rows], dtype=float)


def encode_weights(params: Ae4bvParams) -> dict:
    cfg = params.cfg
    blocks = []
    for b in params.blocks:
        if isinstance(b.skip, np.ndarray):
            skip = _fmat(b.skip)
        else:
            skip = b.skip  # None or "identity"
        blocks.append({"weight": _fmat(b.weight), "bias": fvec(b.bias), "skip": skip})
    return {
        "kind": WEIGHTS_TAG,
        "config": {
            "input_dim": cfg.input_dim,
            "latent_dim": cfg.latent_dim,
            "encoder_widths": list(cfg.encoder_widths),
            "leaky_slope": fnum(cfg.leaky_slope),
            "dropout": fnum(cfg.dropout),
            "epochs": cfg.epochs,
            "learning_rate": fnum(cfg.learning_rate),
            "batch_size": cfg.batch_size,
            "adam_betas": [fnum(cfg.adam_betas[0]), fnum(cfg.adam_betas[1])],
            "adam_eps": fnum(cfg.adam_eps),
            "seed": cfg.seed,
            "skip_connections": cfg.skip_connections,
        },
        "blocks": blocks,
        "decoder_w": _fmat(params.decoder_W),
        "decoder_a": fvec(params.decoder_a),
    }


def decode_weights(doc: dict) -> Ae4bvParams:
    if doc.get("kind") != WEIGHTS_TAG:
        raise ValueError("not a weights document")
    c = doc["config"]
    cfg = NetConfig(
        input_dim=int(c["input_dim"]),
        latent_dim=int(c["latent_dim"]),
        encoder_widths=tuple(int(w) for w in c["encoder_widths"]),
        leaky_slope=pnum(c["leaky_slope"]),
        dropout=pnum(c["dropout"]),
        epochs=int(c["epochs"]),
        learning_rate=pnum(c["learning_rate"]),
        batch_size=int(c["batch_size"]),
        adam_betas=(pnum(c["adam_betas"][0]), pnum(c["adam_betas"][1])),
        adam_eps=pnum(c["adam_eps"]),
        seed=int(c["seed"]),
        skip_connections=bool(c["skip_connections"]),
    )
    blocks = []
    for raw in doc["blocks"]:
        skip = raw["skip"]
        if isinstance(skip, list):
            skip = _pmat(skip)
        blocks.append(Block(_pmat(raw["weight"]), np.array(pvec(raw["bias"])), skip))
    return Ae4bvParams(cfg, tuple(blocks), _pmat(doc["decoder_w"]), np.array(pvec(doc["decoder_a"])))


def write_weights(params: Ae4bvParams, path) -> None:
    dump_json(encode_weights(params), path)


def read_weights(path) -> Ae4bvParams:
    return decode_weights(load_json(path))
