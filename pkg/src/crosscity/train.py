"""Two-stage training: adversarial pre-training across source cities, then
fine-tuning on the target city with a private encoder and combiner.

Stage 1 visits the source domains round-robin inside every epoch. Each
optimizer step minimizes the forecasting L1 loss on the current source batch
plus the domain cross-entropy over all domains' node embeddings, routed
through gradient reversal with the scheduled factor, so the classifier
learns to tell domains apart while the encoders learn to fool it. Target
signal values are never touched in stage 1 (the series read counter proves
it); only the target graph topology and raw node features participate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import forecaster as fc
from .adversary import DomainClassifier, adaptation_factor, adversarial_loss
from .autodiff import Tensor
from .checkpoint import Checkpoint
from .config import VARIANTS, ExperimentConfig
from .data import NormalizationStats, chrono_split, make_windows, normalize
from .gin import SpatialEncoder, glorot
from .forecaster import ForecasterParams


class ProtocolError(RuntimeError):
    pass


@dataclass
class DomainData:
    """Everything known about one city: topology, raw node features, and
    (optionally) its traffic series."""
    name: str
    graph: object
    raw_features: np.ndarray
    series: object = None


@dataclass
class ReplayLog:
    steps: list = field(default_factory=list)
    target_embedding_uses_per_epoch: list = field(default_factory=list)

    def record(self, **kw):
        self.steps.append(kw)

    def write(self, path):
        with open(path, "w") as fh:
            for rec in self.steps:
                fh.write(" ".join(f"{k}={v}" for k, v in rec.items()) + "\n")


class Sgdm:
    """SGD with momentum: v = mu*v + g; p -= lr*v. State keyed by name."""

    def __init__(self, lr, momentum):
        self.lr = lr
        self.momentum = momentum
        self.velocity = {}

    def step(self, params, grads):
        for name, p in params.items():
            g = grads.get(name)
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(p.data)
            if g is not None:
                v = self.momentum * v + g
            else:
                v = self.momentum * v
            self.velocity[name] = v
            p.data = p.data - self.lr * v


def sgdm_step(params, grads, lr, momentum, state):
    """Functional single step used by tests; state maps name -> velocity."""
    for name, p in params.items():
        v = momentum * state.get(name, np.zeros_like(p.data)) + grads[name]
        state[name] = v
        p.data = p.data - lr * v
    return params


def collect_grads(params):
    return {name: (np.zeros_like(p.data) if p.grad is None else p.grad)
            for name, p in params.items()}


def clip_global_norm(grads, max_norm):
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        return {k: g * scale for k, g in grads.items()}
    return grads


# -- model assembly ---------------------------------------------------------

class PretrainModel:
    """Per-source encoders + target encoder + shared forecaster + classifier."""

    def __init__(self, config, source_names, rng):
        d = config.embed_dim
        self.source_names = list(source_names)
        self.encoders = {
            name: SpatialEncoder(d, d, config.gin_layers, rng)
            for name in source_names
        }
        self.target_encoder = SpatialEncoder(d, d, config.gin_layers, rng)
        self.forecaster = ForecasterParams(
            config.n_features, config.hidden_dim, d, config.horizon, rng)
        self.classifier = DomainClassifier(
            d, len(source_names) + 1, config.classifier_hidden, rng)

    def params(self):
        out = {}
        for name in self.source_names:
            out.update(self.encoders[name].params(f"encoder.src.{name}"))
        out.update(self.target_encoder.params("encoder.target"))
        out.update(self.forecaster.params("forecaster"))
        out.update(self.classifier.params("classifier"))
        return out


class CombinerParams:
    """Three affine maps fusing shared and private embeddings."""

    def __init__(self, dim, rng):
        def affine():
            return (Tensor(glorot(rng, dim, dim), requires_grad=True),
                    Tensor(np.zeros(dim), requires_grad=True))
        self.pre_w, self.pre_b = affine()
        self.pri_w, self.pri_b = affine()
        self.cmb_w, self.cmb_b = affine()

    def combine(self, shared, private):
        a = ad.add_rowvec(ad.matmul(shared, self.pre_w), self.pre_b)
        b = ad.add_rowvec(ad.matmul(private, self.pri_w), self.pri_b)
        return ad.add_rowvec(ad.matmul(ad.add(a, b), self.cmb_w), self.cmb_b)

    def params(self, prefix="combiner"):
        return {
            f"{prefix}.pre.w": self.pre_w, f"{prefix}.pre.b": self.pre_b,
            f"{prefix}.pri.w": self.pri_w, f"{prefix}.pri.b": self.pri_b,
            f"{prefix}.cmb.w": self.cmb_w, f"{prefix}.cmb.b": self.cmb_b,
        }


class FinetuneModel:
    """Target-side model: pre-trained encoder/forecaster plus fresh private
    encoder and combiner. Variant flags prune unused parts."""

    def __init__(self, config, rng, use_encoder=True, use_private=True):
        d = config.embed_dim
        self.use_encoder = use_encoder
        self.use_private = use_private
        self.encoder = SpatialEncoder(d, d, config.gin_layers, rng) if use_encoder else None
        self.private = (SpatialEncoder(d, d, config.gin_layers, rng)
                        if use_encoder and use_private else None)
        self.combiner = (CombinerParams(d, rng)
                         if use_encoder and use_private else None)
        self.forecaster = ForecasterParams(
            config.n_features, config.hidden_dim, d, config.horizon, rng)

    def embeddings(self, raw, graph, n_nodes):
        if not self.use_encoder:
            return Tensor(np.zeros((n_nodes, self.forecaster.embed_dim)))
        shared = self.encoder.forward(raw, graph)
        if not self.use_private:
            return shared
        private = self.private.forward(raw, graph)
        return self.combiner.combine(shared, private)

    def params(self):
        out = {}
        if self.encoder is not None:
            out.update(self.encoder.params("encoder.target"))
        if self.private is not None:
            out.update(self.private.params("encoder.private"))
        if self.combiner is not None:
            out.update(self.combiner.params("combiner"))
        out.update(self.forecaster.params("forecaster"))
        return out


def _load_params(params, tensors, prefix=None):
    for name, p in params.items():
        if prefix is not None and not name.startswith(prefix):
            continue
        if name not in tensors:
            raise KeyError(f"checkpoint missing parameter {name}")
        if tensors[name].shape != p.data.shape:
            raise ValueError(
                f"shape mismatch for {name}: {tensors[name].shape} vs {p.data.shape}")
        p.data = tensors[name].copy()


# -- stage 1 ----------------------------------------------------------------

def _batched_forecast_loss(model_forecaster, embeddings, dataset, idx):
    node_ids = dataset.node_ids[idx]
    f_v = ad.gather_rows(embeddings, node_ids)
    preds = fc.forecast(model_forecaster, dataset.inputs[idx], f_v)
    return fc.source_loss(preds, dataset.targets[idx])


def pretrain(config, sources, target, variant="full", replay_log=None):
    """Stage-1 adversarial pre-training. Returns a 'pretrained' checkpoint.

    sources: DomainData list with series; target: DomainData whose series,
    if attached, is never read here. variant 'wo_da' disables the domain
    classifier path entirely.
    """
    if not sources:
        raise ValueError("pretrain needs at least one source domain")
    if variant not in ("full", "wo_da", "wo_pri"):
        raise ValueError(f"pretrain does not apply to variant {variant!r}")
    use_da = variant != "wo_da"

    if target.series is not None:
        guard_reads = target.series.read_count

    rng = np.random.default_rng([config.seed, 0x1A17])
    batch_rng = np.random.default_rng([config.seed, 0xBA7C])
    model = PretrainModel(config, [s.name for s in sources], rng)
    params = model.params()
    opt = Sgdm(config.learning_rate, config.momentum)

    stats = {}
    train_sets = {}
    for src in sources:
        train, _, _ = chrono_split(src.series, config.split_ratios,
                                   config.history, config.horizon,
                                   config.source_train_days)
        st = NormalizationStats.fit(train, "train")
        stats[src.name] = (st.mean, st.std)
        train_sets[src.name] = make_windows(normalize(train, st),
                                            config.history, config.horizon, "train")

    total_steps = max(1, config.pretrain_epochs
                      * config.pretrain_batches_per_epoch * len(sources))
    step = 0
    for epoch in range(config.pretrain_epochs):
        target_uses = 0
        for _ in range(config.pretrain_batches_per_epoch):
            for di, src in enumerate(sources):
                factor = adaptation_factor(step / total_steps, config.eta) if use_da else 0.0
                embeddings = model.encoders[src.name].forward(src.raw_features, src.graph)
                dataset = train_sets[src.name]
                idx = batch_rng.choice(len(dataset), size=min(config.batch_size,
                                                              len(dataset)),
                                       replace=False)
                loss_src = _batched_forecast_loss(model.forecaster, embeddings,
                                                  dataset, idx)
                if use_da:
                    groups = []
                    for gj, other in enumerate(sources):
                        emb = (embeddings if other.name == src.name
                               else model.encoders[other.name].forward(
                                   other.raw_features, other.graph))
                        groups.append((emb, gj))
                    target_emb = model.target_encoder.forward(
                        target.raw_features, target.graph)
                    groups.append((target_emb, len(sources)))
                    target_uses += 1
                    loss_adv = adversarial_loss(model.classifier, groups,
                                                reversal_factor=factor)
                    loss = ad.add(loss_src, loss_adv)
                else:
                    loss_adv = None
                    loss = loss_src
                for par in params.values():
                    par.grad = None
                loss.backward()
                grads = collect_grads(params)
                if not use_da:
                    # classifier (and target encoder) receive no updates
                    for name in grads:
                        if name.startswith(("classifier.", "encoder.target")):
                            grads[name] = np.zeros_like(grads[name])
                grads = clip_global_norm(grads, config.grad_clip_norm)
                opt.step(params, grads)
                if replay_log is not None:
                    replay_log.record(
                        step=step, epoch=epoch, domain=src.name,
                        factor=round(float(factor), 6),
                        loss_src=float(loss_src.data),
                        loss_adv=(float(loss_adv.data) if loss_adv is not None else 0.0),
                        classifier_updated=int(use_da))
                step += 1
        if replay_log is not None:
            replay_log.target_embedding_uses_per_epoch.append(target_uses)

    if target.series is not None and target.series.read_count != guard_reads:
        raise ProtocolError("target-domain signals were read during pre-training")

    tensors = {name: p.data.copy() for name, p in params.items()}
    return Checkpoint("pretrained", config.config_hash(), config.seed, tensors, stats)


# -- stage 2 ----------------------------------------------------------------

def _epoch_val_mae(model, dataset, embeddings_fn, stats, batch=512):
    errs = []
    emb = embeddings_fn()
    for lo in range(0, len(dataset), batch):
        idx = np.arange(lo, min(lo + batch, len(dataset)))
        f_v = ad.gather_rows(emb, dataset.node_ids[idx])
        preds = fc.forecast(model.forecaster, dataset.inputs[idx], f_v)
        errs.append(np.abs(preds.data - dataset.targets[idx]) * stats[1])
    return float(np.concatenate([e.reshape(-1) for e in errs]).mean())


def finetune(checkpoint, target, config, variant="full", replay_log=None):
    """Stage-2 fine-tuning on the target city. Returns a 'finetuned'
    checkpoint holding the best-validation weights and target stats."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    needs_ckpt = variant in ("full", "wo_da", "wo_pri")
    if needs_ckpt:
        if checkpoint is None:
            raise ValueError(f"variant {variant!r} requires a pretrained checkpoint")
        if checkpoint.stage != "pretrained":
            raise ValueError(
                f"expected a 'pretrained' checkpoint, got {checkpoint.stage!r}")

    use_encoder = variant != "temporal_forecaster"
    use_private = variant not in ("wo_pri", "temporal_forecaster")
    init_rng = np.random.default_rng([config.seed, 0xF17E])
    model = FinetuneModel(config, init_rng, use_encoder, use_private)
    if needs_ckpt:
        _load_params(model.encoder.params("encoder.target"), checkpoint.tensors)
        _load_params(model.forecaster.params("forecaster"), checkpoint.tensors)
    params = model.params()
    opt = Sgdm(config.learning_rate, config.momentum)
    batch_rng = np.random.default_rng([config.seed, 0xF1BA])

    train, val, _ = chrono_split(target.series, config.split_ratios,
                                 config.history, config.horizon,
                                 config.target_train_days)
    st = NormalizationStats.fit(train, "train")
    stats_pair = (st.mean, st.std)
    train_set = make_windows(normalize(train, st), config.history, config.horizon)
    val_set = make_windows(normalize(val, st), config.history, config.horizon)
    n_nodes = target.graph.n_nodes

    def embeddings():
        return model.embeddings(target.raw_features, target.graph, n_nodes)

    best_val = np.inf
    best_tensors = {name: p.data.copy() for name, p in params.items()}
    patience_left = config.early_stop_patience
    for epoch in range(config.finetune_max_epochs):
        order = batch_rng.permutation(len(train_set))
        n_batches = min(config.finetune_batches_per_epoch,
                        int(np.ceil(len(train_set) / config.batch_size)))
        for b in range(n_batches):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            if idx.size == 0:
                break
            emb = embeddings()
            loss = _batched_forecast_loss(model.forecaster, emb, train_set, idx)
            for par in params.values():
                par.grad = None
            loss.backward()
            grads = clip_global_norm(collect_grads(params), config.grad_clip_norm)
            opt.step(params, grads)
            if replay_log is not None:
                replay_log.record(step=epoch * n_batches + b, epoch=epoch,
                                  domain=target.name, factor=0.0,
                                  loss_src=float(loss.data), loss_adv=0.0,
                                  classifier_updated=0)
        val_mae = _epoch_val_mae(model, val_set, embeddings, stats_pair)
        if val_mae < best_val - 1e-12:
            best_val = val_mae
            best_tensors = {name: p.data.copy() for name, p in params.items()}
            patience_left = config.early_stop_patience
        else:
            patience_left -= 1
            if patience_left <= 0:
                break

    stats = dict(checkpoint.stats) if needs_ckpt else {}
    stats[target.name] = stats_pair
    return Checkpoint("finetuned", config.config_hash(), config.seed,
                      best_tensors, stats)


def run_variant(variant, config, sources, target, replay_log=None):
    """Run the stage(s) a variant calls for; returns (pretrain_ckpt or None,
    finetuned checkpoint)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    pre = None
    if variant in ("full", "wo_da", "wo_pri"):
        pre = pretrain(config, sources, target, variant=variant,
                       replay_log=replay_log)
    fin = finetune(pre, target, config, variant=variant, replay_log=replay_log)
    return pre, fin
