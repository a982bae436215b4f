"""Composition classifier: training, masked prediction, persistence."""
from __future__ import annotations

import itertools
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import (DimensionMismatchError, InvalidParameterError, ModelFormatError,
                      NonFiniteLossError, VersionMismatchError)
from ..mip import DiscretePlan, SystemState, fixed_origins
from ..network import LineNetwork
from ..reduction import LearningState
from . import lstm
from .dataset import Dataset

MAGIC = b"RAILMPCM"
VERSION = 1
_BLOCKS = ("W", "b", "Wo", "bo", "mu", "sd")


@dataclass(frozen=True)
class HyperParams:
    lr: float = 1e-2
    hidden: int = 32
    dropout: float = 0.0
    mask_outputs: bool = True
    lr_schedule: bool = True
    epochs: int = 60
    seed: int = 0
    batch_size: int = 32

    def __post_init__(self):
        if not self.lr > 0:
            raise InvalidParameterError("learning rate must be > 0")
        if self.hidden < 1:
            raise InvalidParameterError("hidden size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidParameterError("dropout must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidParameterError("epochs and batch_size must be >= 1")

    def tag(self) -> str:
        return (f"lr{self.lr:g}-h{self.hidden}-do{self.dropout:g}"
                f"-m{int(self.mask_outputs)}-s{int(self.lr_schedule)}")


def default_grid(epochs: int = 60, seed: int = 0) -> list[HyperParams]:
    """2 x 4 x 2 x 2 x 2 = 64 configurations."""
    return [HyperParams(lr=lr, hidden=h, dropout=do, mask_outputs=m, lr_schedule=s, epochs=epochs, seed=seed)
            for lr, h, do, m, s in itertools.product(
                (1e-2, 1e-3), (16, 32, 64, 128), (0.0, 0.2), (True, False), (True, False))]


@dataclass
class TrainMetrics:
    train_loss: float
    val_loss: float
    head_accuracy: np.ndarray
    train_accuracy: float
    history: list[float] = field(default_factory=list)
    lr_history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class ClassifierModel:
    params: dict
    hp: HyperParams
    meta: dict
    mu: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        for v in list(self.params.values()) + [self.mu, self.sd]:
            if not np.all(np.isfinite(v)):
                raise ModelFormatError("non-finite weights")

    @property
    def n_heads(self) -> int:
        return len(self.meta["origins"]) * self.meta["horizon"]

    @property
    def n_classes(self) -> int:
        return self.meta["ell_max"] - self.meta["ell_min"] + 1

    @property
    def input_dim(self) -> int:
        return self.meta["x_dim"] + self.meta["n_platforms"] * self.meta["n_segments"]

    def logits(self, features) -> np.ndarray:
        """Raw head logits, shape ``(B, heads, classes)``."""
        V = np.atleast_2d(np.asarray(features, dtype=float))
        if V.shape[1] != self.input_dim:
            raise DimensionMismatchError(f"input has {V.shape[1]} features, model expects {self.input_dim}")
        X = (to_sequence(V, self.meta) - self.mu) / self.sd
        out, _ = lstm.forward(self.params, X)
        return out.reshape(V.shape[0], self.n_heads, self.n_classes)


def to_sequence(V: np.ndarray, meta: dict) -> np.ndarray:
    """Flat learning vectors ``[x, rho(P, S)]`` to sequences ``(B, S, P + |x|)``."""
    dx, P, S = meta["x_dim"], meta["n_platforms"], meta["n_segments"]
    B = V.shape[0]
    flows = V[:, dx:].reshape(B, P, S).transpose(0, 2, 1)
    x = np.broadcast_to(V[:, None, :dx], (B, S, dx))
    return np.concatenate([flows, x], axis=2)


def _copy(params):
    return {k: v.copy() for k, v in params.items()}


def train(dataset: Dataset, hp: HyperParams) -> tuple[ClassifierModel, TrainMetrics]:
    if len(dataset.train_idx) == 0:
        raise InvalidParameterError("dataset has no training records")
    meta = dict(dataset.meta)
    expected = meta["x_dim"] + meta["n_platforms"] * meta["n_segments"]
    if dataset.dim != expected:
        raise DimensionMismatchError(f"features have {dataset.dim} columns, metadata implies {expected}")
    K = meta["ell_max"] - meta["ell_min"] + 1
    Y_all = dataset.labels - meta["ell_min"]
    if Y_all.min() < 0 or Y_all.max() >= K:
        raise InvalidParameterError("labels outside the composition range")

    seq = to_sequence(dataset.features, meta)
    tr, va = dataset.train_idx, dataset.val_idx
    mu = seq[tr].mean(axis=(0, 1))
    sd = seq[tr].std(axis=(0, 1))
    sd = np.where(sd > 1e-8, sd, 1.0)
    X_all = (seq - mu) / sd
    Xtr, Ytr = X_all[tr], Y_all[tr]

    rng = np.random.default_rng(hp.seed)
    params = lstm.init_params(X_all.shape[2], hp.hidden, Y_all.shape[1] * K, rng)
    opt = lstm.Adam(params, hp.lr)
    best, best_loss = _copy(params), np.inf
    history, lr_hist = [], []
    n = len(tr)
    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        for s in range(0, n, hp.batch_size):
            idx = order[s:s + hp.batch_size]
            mask = None
            if hp.dropout > 0:
                mask = (rng.random((len(idx), hp.hidden)) >= hp.dropout) / (1.0 - hp.dropout)
            value, grads = lstm.loss_and_grad(params, Xtr[idx], Ytr[idx], K, mask)
            if not np.isfinite(value):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}, batch {s // hp.batch_size} ({hp.tag()})")
            opt.step(params, grads)
        epoch_loss = lstm.loss(params, Xtr, Ytr, K)
        if not np.isfinite(epoch_loss):
            raise NonFiniteLossError(f"non-finite training loss after epoch {epoch} ({hp.tag()})")
        if hp.lr_schedule:
            if epoch_loss > best_loss:
                # backtrack to the best weights and retry with half the step
                params.update(_copy(best))
                opt.lr *= 0.5
                epoch_loss = best_loss
            else:
                best, best_loss = _copy(params), epoch_loss
        history.append(float(epoch_loss))
        lr_hist.append(opt.lr)

    model = ClassifierModel(_copy(params), hp, meta, mu, sd)
    train_pred = model.logits(dataset.features[tr]).argmax(axis=2)
    train_acc = float(np.mean(train_pred == Ytr))
    if len(va):
        val_loss = lstm.loss(params, X_all[va], Y_all[va], K)
        pred = model.logits(dataset.features[va]).argmax(axis=2)
        head_acc = np.mean(pred == Y_all[va], axis=0)
    else:
        val_loss = float("nan")
        head_acc = np.mean(train_pred == Ytr, axis=0)
    return model, TrainMetrics(history[-1], float(val_loss), head_acc, train_acc, history, lr_hist)


def _train_job(args):
    dataset, hp = args
    return train(dataset, hp)


def train_grid(dataset: Dataset, grid: list[HyperParams], jobs: int = 1):
    """Train every configuration; results keep the grid order."""
    if jobs <= 1:
        return [train(dataset, hp) for hp in grid]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_train_job, [(dataset, hp) for hp in grid]))


# ---------------------------------------------------------------------------
# prediction

def _as_vector(state) -> np.ndarray:
    return state.vector if isinstance(state, LearningState) else np.asarray(state, dtype=float).ravel()


def predict(model: ClassifierModel, state, mask_context: SystemState | None = None,
            network: LineNetwork | None = None) -> DiscretePlan:
    """Argmax plan; masked against depot stock when the model asks for it
    and a ``mask_context`` (with its ``network``) is supplied."""
    logits = model.logits(_as_vector(state))[0]
    origins = tuple(model.meta["origins"])
    N, lo = model.meta["horizon"], model.meta["ell_min"]
    L = logits.reshape(len(origins), N, model.n_classes)
    if model.hp.mask_outputs and mask_context is not None:
        if network is None:
            raise InvalidParameterError("masking needs the network")
        values = masked_decode(L, network, mask_context, lo, model.meta["ell_max"])
    else:
        values = L.argmax(axis=2) + lo
    return DiscretePlan(origins, values)


def masked_decode(L: np.ndarray, network: LineNetwork, state: SystemState,
                  ell_min: int, ell_max: int) -> np.ndarray:
    """Cycle-by-cycle argmax restricted to inventory-feasible compositions.

    ``L`` has shape ``(depots, horizon, classes)``.  Ties resolve to the
    smaller composition.
    """
    D, N, _ = L.shape
    if D != len(network.depots):
        raise DimensionMismatchError("logit rows do not match the depot count")
    origins = [d.origin_platform for d in network.depots]
    fixed = dict(zip(fixed_origins(network), state.fixed_compositions))
    values = np.zeros((D, N), dtype=np.int64)
    stock = list(state.inventories)
    for j in range(N):
        for m, dep in enumerate(network.depots):
            src = network.inbound_origin(dep)
            if j < dep.lag:
                ell_in = state.in_service[m][j]
            elif src in fixed:
                ell_in = fixed[src]
            else:
                ell_in = values[origins.index(src), j - dep.lag]
            avail = stock[m] + ell_in
            lo = max(ell_min, avail - dep.u_max)
            hi = min(ell_max, avail)
            row = np.full(L.shape[2], -np.inf)
            row[lo - ell_min:hi - ell_min + 1] = L[m, j, lo - ell_min:hi - ell_min + 1]
            values[m, j] = int(np.argmax(row)) + ell_min
            stock[m] = avail - values[m, j]
    return values


# ---------------------------------------------------------------------------
# persistence

def save(model: ClassifierModel, path) -> None:
    arrays = [(k, np.ascontiguousarray(model.params[k], dtype="<f8")) for k in _BLOCKS[:4]]
    arrays += [("mu", np.ascontiguousarray(model.mu, dtype="<f8")),
               ("sd", np.ascontiguousarray(model.sd, dtype="<f8"))]
    header = {"hyperparams": asdict(model.hp), "meta": model.meta,
              "blocks": [{"name": k, "shape": list(a.shape)} for k, a in arrays]}
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(hb)) + hb)
        for _, a in arrays:
            fh.write(a.tobytes())


def load(path) -> ClassifierModel:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise ModelFormatError(f"{path}: not a model file")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise VersionMismatchError(f"{path}: model version {version}, this build reads {VERSION}")
    try:
        header = json.loads(raw[16:16 + hlen])
        blocks = header["blocks"]
    except (ValueError, KeyError) as exc:
        raise ModelFormatError(f"{path}: corrupt header") from exc
    pos = 16 + hlen
    arrays = {}
    for blk in blocks:
        count = int(np.prod(blk["shape"]))
        if pos + 8 * count > len(raw):
            raise ModelFormatError(f"{path}: truncated at block {blk['name']}")
        arrays[blk["name"]] = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(blk["shape"]).copy()
        pos += 8 * count
    if pos != len(raw) or set(arrays) != set(_BLOCKS):
        raise ModelFormatError(f"{path}: unexpected layout")
    params = {k: arrays[k] for k in _BLOCKS[:4]}
    return ClassifierModel(params, HyperParams(**header["hyperparams"]), header["meta"], arrays["mu"], arrays["sd"])


def file_size(model: ClassifierModel) -> int:
    """Bytes :func:`save` would write."""
    header = {"hyperparams": asdict(model.hp), "meta": model.meta,
              "blocks": [{"name": k, "shape": list((model.params.get(k) if k in model.params
                                                   else getattr(model, k)).shape)} for k in _BLOCKS]}
    n = sum(v.size for v in model.params.values()) + model.mu.size + model.sd.size
    return 16 + len(json.dumps(header, sort_keys=True).encode()) + 8 * n
