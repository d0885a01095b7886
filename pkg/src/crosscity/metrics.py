"""Forecast metrics, the historical-average baseline, variant comparison,
embedding export, and the domain-confusion probe.

All metrics run on the raw (denormalized) vph scale. MAPE averages only
over samples whose ground truth exceeds a threshold (default 1 vph); the
included count is carried in the report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import forecaster as fc
from . import autodiff as ad
from .data import NormalizationStats, chrono_split, denormalize_values, \
    make_windows, normalize


class MetricError(ValueError):
    pass


def mae(y, y_hat):
    y, y_hat = np.asarray(y, float).reshape(-1), np.asarray(y_hat, float).reshape(-1)
    if y.size == 0 or y.size != y_hat.size:
        raise MetricError(f"mae: bad lengths {y.size} vs {y_hat.size}")
    return float(np.abs(y - y_hat).mean())


def rmse(y, y_hat):
    y, y_hat = np.asarray(y, float).reshape(-1), np.asarray(y_hat, float).reshape(-1)
    if y.size == 0 or y.size != y_hat.size:
        raise MetricError(f"rmse: bad lengths {y.size} vs {y_hat.size}")
    return float(np.sqrt(((y - y_hat) ** 2).mean()))


def mape(y, y_hat, threshold=1.0, return_count=False):
    """Fractional MAPE over indices with |y| > threshold."""
    y, y_hat = np.asarray(y, float).reshape(-1), np.asarray(y_hat, float).reshape(-1)
    if y.size == 0 or y.size != y_hat.size:
        raise MetricError(f"mape: bad lengths {y.size} vs {y_hat.size}")
    keep = np.abs(y) > threshold
    if not keep.any():
        raise MetricError("mape: every sample fell below the inclusion threshold")
    value = float((np.abs(y[keep] - y_hat[keep]) / np.abs(y[keep])).mean())
    if return_count:
        return value, int(keep.sum())
    return value


def ha_forecast(history, horizon=1):
    """Historical average: mean of the input window at every horizon step."""
    history = np.asarray(history, float).reshape(-1)
    if history.size == 0:
        raise MetricError("ha_forecast: empty history")
    return np.full(horizon, history.mean())


@dataclass
class MetricReport:
    variant: str
    horizon: int
    mae: float
    rmse: float
    mape: float
    n_samples: int
    mape_included: int
    seed: int
    config_hash: str
    domain: str = ""
    mape_threshold: float = 1.0

    def to_kv(self):
        lines = []
        for key in ("variant", "domain", "horizon", "mae", "rmse", "mape",
                    "n_samples", "mape_included", "mape_threshold", "seed",
                    "config_hash"):
            lines.append(f"{key}={getattr(self, key)!r}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_kv())

    @classmethod
    def read(cls, path):
        kv = {}
        with open(path) as fh:
            for line in fh:
                key, _, val = line.strip().partition("=")
                kv[key] = eval(val, {}, {})  # values written via repr above
        return cls(**kv)


def _model_predictions(model, dataset, target):
    emb = model.embeddings(target.raw_features, target.graph, target.graph.n_nodes)
    preds = []
    for lo in range(0, len(dataset), 512):
        idx = np.arange(lo, min(lo + 512, len(dataset)))
        f_v = ad.gather_rows(emb, dataset.node_ids[idx])
        preds.append(fc.forecast(model.forecaster, dataset.inputs[idx], f_v).data)
    return np.concatenate(preds, axis=0)


def evaluate(checkpoint, config, target, horizons=(3, 6, 12), variant="model",
             mape_threshold=1.0):
    """Metric reports on the target test split, one per horizon.

    Predictions come from the finetuned model in the checkpoint, are cut to
    each requested horizon's first steps, and denormalized with the stored
    target stats before scoring.
    """
    from .train import FinetuneModel, _load_params  # circular at module level

    if checkpoint.stage != "finetuned":
        raise ValueError(f"evaluate expects a finetuned checkpoint, got "
                         f"{checkpoint.stage!r}")
    for h in horizons:
        if h > config.horizon:
            raise ValueError(f"horizon {h} exceeds trained horizon {config.horizon}")
    use_encoder = any(k.startswith("encoder.target") for k in checkpoint.tensors)
    use_private = any(k.startswith("encoder.private") for k in checkpoint.tensors)
    rng = np.random.default_rng(0)
    model = FinetuneModel(config, rng, use_encoder, use_private)
    _load_params(model.params(), checkpoint.tensors)

    mean, std = checkpoint.stats[target.name]
    st = NormalizationStats(mean, std)
    _, _, test = chrono_split(target.series, config.split_ratios,
                              config.history, config.horizon,
                              config.target_train_days)
    test_set = make_windows(normalize(test, st), config.history, config.horizon)
    preds = denormalize_values(_model_predictions(model, test_set, target), st)
    truth = denormalize_values(test_set.targets, st)

    reports = []
    for h in horizons:
        y, y_hat = truth[:, :h, :], preds[:, :h, :]
        mp, included = mape(y, y_hat, mape_threshold, return_count=True)
        reports.append(MetricReport(
            variant=variant, horizon=h, mae=mae(y, y_hat), rmse=rmse(y, y_hat),
            mape=mp, n_samples=y.size, mape_included=included,
            seed=config.seed, config_hash=config.config_hash(),
            domain=target.name, mape_threshold=mape_threshold))
    return reports


def evaluate_ha(config, target, horizons=(3, 6, 12), mape_threshold=1.0):
    """Historical-average baseline on the identical test windows."""
    _, _, test = chrono_split(target.series, config.split_ratios,
                              config.history, config.horizon,
                              config.target_train_days)
    test_set = make_windows(test, config.history, config.horizon)
    means = test_set.inputs.mean(axis=1, keepdims=True)  # (B, 1, N_f)
    preds = np.repeat(means, config.horizon, axis=1)
    reports = []
    for h in horizons:
        y, y_hat = test_set.targets[:, :h, :], preds[:, :h, :]
        mp, included = mape(y, y_hat, mape_threshold, return_count=True)
        reports.append(MetricReport(
            variant="ha", horizon=h, mae=mae(y, y_hat), rmse=rmse(y, y_hat),
            mape=mp, n_samples=y.size, mape_included=included,
            seed=config.seed, config_hash=config.config_hash(),
            domain=target.name, mape_threshold=mape_threshold))
    return reports


def compare_variants(reports, reference):
    """Percentage improvement of every report over the named reference at
    the same horizon. Returns rows of dicts ready for CSV."""
    domains = {r.domain for r in reports}
    if len(domains) > 1:
        raise MetricError(f"reports span multiple datasets: {sorted(domains)}")
    refs = {r.horizon: r for r in reports if r.variant == reference}
    if not refs:
        raise MetricError(f"reference variant {reference!r} not among reports")
    rows = []
    for rep in sorted(reports, key=lambda r: (r.horizon, r.variant)):
        ref = refs.get(rep.horizon)
        if ref is None:
            continue
        row = {"variant": rep.variant, "horizon": rep.horizon,
               "mae": rep.mae, "rmse": rep.rmse, "mape": rep.mape}
        for metric in ("mae", "rmse", "mape"):
            ref_v = getattr(ref, metric)
            row[f"impv_pct_{metric}"] = (
                100.0 * (ref_v - getattr(rep, metric)) / ref_v if ref_v else 0.0)
        rows.append(row)
    return rows


def write_comparison_csv(rows, path):
    cols = ["variant", "horizon", "mae", "rmse", "mape",
            "impv_pct_mae", "impv_pct_rmse", "impv_pct_mape"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(str(row[c]) for c in cols) + "\n")


def export_embeddings(checkpoint, config, domains, path):
    """CSV rows (domain, node, kind in {raw, shared}) for external
    projection tools. 'raw' rows are the node2vec features verbatim;
    'shared' rows come from each domain's stage-1 encoder."""
    from .train import PretrainModel, _load_params

    names = [d.name for d in domains[:-1]]
    rng = np.random.default_rng(0)
    model = PretrainModel(config, names, rng)
    _load_params(model.params(), checkpoint.tensors)
    with open(path, "w") as fh:
        dim = config.embed_dim
        fh.write("domain,node,kind," + ",".join(f"f{i}" for i in range(dim)) + "\n")
        for i, dom in enumerate(domains):
            if i < len(names):
                enc = model.encoders[dom.name]
            else:
                enc = model.target_encoder
            shared = enc.forward(dom.raw_features, dom.graph).data
            for v in range(dom.graph.n_nodes):
                fh.write(f"{dom.name},{v},raw,"
                         + ",".join(repr(float(x)) for x in dom.raw_features[v]) + "\n")
            for v in range(dom.graph.n_nodes):
                fh.write(f"{dom.name},{v},shared,"
                         + ",".join(repr(float(x)) for x in shared[v]) + "\n")


def stage1_embeddings(checkpoint, config, domains):
    """Shared embeddings per domain from a pretrained checkpoint."""
    from .train import PretrainModel, _load_params

    names = [d.name for d in domains[:-1]]
    model = PretrainModel(config, names, np.random.default_rng(0))
    _load_params(model.params(), checkpoint.tensors)
    out = []
    for i, dom in enumerate(domains):
        enc = model.encoders[dom.name] if i < len(names) else model.target_encoder
        out.append(enc.forward(dom.raw_features, dom.graph).data)
    return out


def domain_confusion_probe(embeddings_by_domain, seed=0, train_frac=0.7,
                           epochs=300, lr=0.5):
    """Test accuracy of a fresh softmax-regression probe predicting the
    domain of frozen embeddings. Lower accuracy = better mixing."""
    xs, ys = [], []
    for label, emb in enumerate(embeddings_by_domain):
        xs.append(np.asarray(emb))
        ys.append(np.full(emb.shape[0], label))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    x = (x - x.mean(axis=0)) / (x.std(axis=0) + 1e-9)
    rng = np.random.default_rng([seed, 0x9B0E])
    order = rng.permutation(len(x))
    cut = int(train_frac * len(x))
    tr, te = order[:cut], order[cut:]
    n_classes = len(embeddings_by_domain)
    w = np.zeros((x.shape[1], n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y[tr]]
    for _ in range(epochs):
        logits = x[tr] @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / len(tr)
        w -= lr * (x[tr].T @ g)
        b -= lr * g.sum(axis=0)
    pred = (x[te] @ w + b).argmax(axis=1)
    return float((pred == y[te]).mean())
