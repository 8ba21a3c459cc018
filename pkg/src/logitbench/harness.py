"""Experiment orchestration: declarative JSON configs, the loss x score x
OOD-set benchmark grid, the tau sweep with a Gaussian-noise validation set,
calibration runs, and deterministic CSV emission.

Every run is a pure function of (config, seed): derived RNG seeds are
hashed from (seed, purpose-tag), row ordering is canonical, and floats are
printed with 17 significant digits, so repeated runs are byte identical.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import (LabeledDataset, OodDataset, corrupt_labels, gen_blobs,
                   gen_ood, load_delimited, split)
from .errors import AllSeedsDiverged, ConfigError, DataError, DivergedError
from .losses import LOGIT_NORM, LossConfig, logitnorm_values
from .metrics import (CalibrationReport, DetectionReport, detection_report,
                      ece, fit_temperature)
from .model import MlpModel, forward, init_model, save_checkpoint
from .optimizer import EpochTelemetry, OptimConfig, telemetry_csv, train
from .scores import (ScoreConfig, ScoredExample, score_batch, write_scores)
from .tensor import Matrix2D, row_l2_norm, rowwise_softmax


# --------------------------------------------------------------------------
# Config dataclasses and strict JSON parsing
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DataConfig:
    kind: str = "blobs"
    k: int = 10
    d: int = 16
    n_train_per_class: int = 500
    n_test_per_class: int = 200
    cluster_spread: float = 1.0
    cluster_radius: float = 3.0
    label_noise: float = 0.0
    val_fraction: float = 0.0
    train_path: str = ""
    test_path: str = ""

    def __post_init__(self):
        if self.kind not in ("blobs", "file"):
            raise ConfigError(f"unknown data kind {self.kind!r}")
        if self.kind == "blobs" and (self.k < 2 or self.d < 2):
            raise ConfigError(f"need k >= 2 and d >= 2, got k={self.k}, d={self.d}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if not 0.0 <= self.label_noise < 1.0:
            raise ConfigError(f"label_noise must be in [0, 1), got {self.label_noise}")


@dataclass(frozen=True)
class OodSetConfig:
    kind: str
    m: int = 2000
    params: dict = field(default_factory=dict)

    @property
    def tag(self) -> str:
        return self.kind


@dataclass(frozen=True)
class MetricsConfig:
    tpr_target: float = 0.95
    ece_bins: int = 15

    def __post_init__(self):
        if not 0.0 < self.tpr_target < 1.0:
            raise ConfigError(f"tpr_target must be in (0, 1), got {self.tpr_target}")
        if self.ece_bins < 1:
            raise ConfigError(f"ece_bins must be >= 1, got {self.ece_bins}")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig
    layer_dims: tuple[int, ...]
    losses: tuple[LossConfig, ...]
    optim: OptimConfig
    scores: tuple[ScoreConfig, ...]
    ood_panel: tuple[OodSetConfig, ...]
    validation_ood: OodSetConfig
    metrics: MetricsConfig
    seeds: tuple[int, ...]
    output_dir: str = "out"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.data.kind == "blobs":
            if self.layer_dims[0] != self.data.d or self.layer_dims[-1] != self.data.k:
                raise ConfigError(
                    f"layer_dims {self.layer_dims} inconsistent with data "
                    f"(d={self.data.d}, k={self.data.k})")


def _strict(cls, payload: dict, context: str):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - fields
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    return payload


def config_from_dict(raw: dict) -> ExperimentConfig:
    allowed = {"data", "layer_dims", "losses", "optim", "scores",
               "ood_panel", "validation_ood", "metrics", "seeds", "output_dir"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    missing = {"layer_dims", "seeds"} - set(raw)
    if missing:
        raise ConfigError(f"config: missing keys {sorted(missing)}")

    def loss_cfg(d: dict) -> LossConfig:
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return LossConfig(**_strict(LossConfig, d, "losses"))

    def ood_cfg(d: dict) -> OodSetConfig:
        return OodSetConfig(**_strict(OodSetConfig, dict(d), "ood_panel"))

    optim_raw = dict(raw.get("optim", {}))
    if "lr_drops" in optim_raw:
        optim_raw["lr_drops"] = tuple((int(e), float(f)) for e, f in optim_raw["lr_drops"])
    return ExperimentConfig(
        data=DataConfig(**_strict(DataConfig, dict(raw.get("data", {})), "data")),
        layer_dims=tuple(int(d) for d in raw["layer_dims"]),
        losses=tuple(loss_cfg(d) for d in raw.get("losses", [{"kind": "cross_entropy"}])),
        optim=OptimConfig(**_strict(OptimConfig, optim_raw, "optim")),
        scores=tuple(ScoreConfig(**_strict(ScoreConfig, dict(d), "scores"))
                     for d in raw.get("scores", [{"kind": "msp"}])),
        ood_panel=tuple(ood_cfg(d) for d in raw.get("ood_panel", [])),
        validation_ood=ood_cfg(raw.get("validation_ood",
                                       {"kind": "gaussian_noise", "params": {"std": 1.0}})),
        metrics=MetricsConfig(**_strict(MetricsConfig, dict(raw.get("metrics", {})), "metrics")),
        seeds=tuple(int(s) for s in raw["seeds"]),
        output_dir=str(raw.get("output_dir", "out")),
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw)


def config_hash(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def desk_config(seeds: Sequence[int] = (0, 1, 2, 3, 4), epochs: int = 200,
                output_dir: str = "out") -> ExperimentConfig:
    """The pinned desk benchmark: 10-class blobs in d=16, four OOD sets,
    three losses, four scores.

    The geometry is tuned so the training dynamics mirror the large-scale
    regime: overlapping clusters plus a 10% label-flip fraction give the
    cross-entropy model a slow memorization phase (growing logit norms,
    inflated confidence everywhere), while the normalized loss stays
    contained.  The OOD sets sit at roughly half the ID feature scale, the
    way unfamiliar inputs excite a trained net more weakly than its own
    training distribution.
    """
    # Mean ID input norm is sqrt(radius^2 + d*spread^2) ~ 5.32 and the ID
    # per-coordinate std is sqrt(spread^2 + radius^2/d) ~ 1.33; the OOD
    # parameters below target half those scales.
    return config_from_dict({
        "data": {"kind": "blobs", "k": 10, "d": 16, "n_train_per_class": 500,
                 "n_test_per_class": 200, "cluster_spread": 1.0,
                 "cluster_radius": 3.5, "label_noise": 0.10,
                 "val_fraction": 0.1},
        "layer_dims": [16, 64, 64, 10],
        "losses": [{"kind": "cross_entropy"},
                   {"kind": "logit_norm", "tau": 0.12},
                   {"kind": "logit_penalty", "lam": 0.05}],
        "optim": {"lr0": 0.1, "momentum": 0.9, "weight_decay": 2e-4,
                  "epochs": epochs, "batch_size": 128,
                  "lr_drops": [[int(epochs * 0.4), 0.1], [int(epochs * 0.7), 0.1]]},
        # Energy uses a sharpened temperature: models trained with the
        # normalized loss emit small logits, and T < 1 restores contrast
        # between their ID and OOD free energies.
        "scores": [{"kind": "msp"}, {"kind": "odin"},
                   {"kind": "energy", "energy_T": 0.25}, {"kind": "gradnorm"}],
        "ood_panel": [
            {"kind": "uniform_box", "m": 2000, "params": {"half_width": 1.15}},
            {"kind": "gaussian_noise", "m": 2000, "params": {"std": 0.66}},
            {"kind": "ring", "m": 2000, "params": {"radius": 2.66, "jitter": 1.0}},
            {"kind": "shifted_blobs", "m": 2000,
             "params": {"k": 10, "cluster_radius": 1.75, "cluster_spread": 1.0,
                        "shift": 2.45}},
        ],
        "validation_ood": {"kind": "gaussian_noise", "m": 2000, "params": {"std": 0.66}},
        "metrics": {"tpr_target": 0.95, "ece_bins": 15},
        "seeds": list(seeds),
        "output_dir": output_dir,
    })


# --------------------------------------------------------------------------
# Deterministic seed derivation and dataset realization
# --------------------------------------------------------------------------

def derive_seed(seed: int, tag: str) -> int:
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


@dataclass
class SeedData:
    train: LabeledDataset
    test: LabeledDataset
    val: Optional[LabeledDataset]
    ood_sets: list[tuple[str, OodDataset]]
    validation_ood: OodDataset


def realize_data(cfg: ExperimentConfig, seed: int) -> SeedData:
    dc = cfg.data
    if dc.kind == "blobs":
        n_total = dc.n_train_per_class + dc.n_test_per_class
        full = gen_blobs(dc.k, dc.d, n_total, dc.cluster_spread,
                         dc.cluster_radius, derive_seed(seed, "data"))
        f_train = dc.n_train_per_class / n_total
        train_ds, test_ds = split(full, (f_train, 1.0 - f_train),
                                  derive_seed(seed, "split"))
    else:
        train_ds = load_delimited(dc.train_path, has_label=True, k=dc.k or None)
        test_ds = load_delimited(dc.test_path, has_label=True, k=train_ds.k)
    val_ds = None
    if dc.val_fraction > 0.0:
        train_ds, val_ds = split(train_ds, (1.0 - dc.val_fraction, dc.val_fraction),
                                 derive_seed(seed, "valsplit"))
    if dc.label_noise > 0.0:
        train_ds = corrupt_labels(train_ds, dc.label_noise,
                                  derive_seed(seed, "labelnoise"))
    d = train_ds.dim
    ood_sets = [(oc.tag, gen_ood(oc.kind, d, oc.m, oc.params,
                                 derive_seed(seed, f"ood:{i}:{oc.kind}")))
                for i, oc in enumerate(cfg.ood_panel)]
    voc = cfg.validation_ood
    validation_ood = gen_ood(voc.kind, d, voc.m, voc.params,
                             derive_seed(seed, "validation_ood"))
    return SeedData(train_ds, test_ds, val_ds, ood_sets, validation_ood)


# --------------------------------------------------------------------------
# Benchmark grid
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SeedRow:
    loss_name: str
    score_name: str
    ood_dataset_tag: str
    seed: int
    fpr95: float
    auroc: float
    aupr: float
    id_accuracy: float


@dataclass(frozen=True)
class BenchmarkRow:
    loss_name: str
    score_name: str
    ood_dataset_tag: str
    fpr95_mean: float
    fpr95_std: float
    auroc_mean: float
    auroc_std: float
    aupr_mean: float
    aupr_std: float
    id_accuracy_mean: float
    id_accuracy_std: float
    seeds_used: tuple[int, ...]


@dataclass
class ExperimentResult:
    rows: list[BenchmarkRow]
    seed_rows: list[SeedRow]
    telemetry: dict[tuple[str, int], list[EpochTelemetry]]
    models: dict[tuple[str, int], MlpModel]
    final_norms: dict[tuple[str, int], dict[str, float]]
    warnings: list[str]
    hash: str


def _scored(id_scores: np.ndarray, ood_scores: np.ndarray) -> list[ScoredExample]:
    return ([ScoredExample(float(s), "ID") for s in id_scores]
            + [ScoredExample(float(s), "OOD") for s in ood_scores])


def _write(path, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None,
                   keep_models: bool = False, quiet: bool = True) -> ExperimentResult:
    """Train / score / evaluate the full loss x score x OOD-set grid over all
    seeds, writing every artifact under out_dir. Diverged seeds are recorded
    and excluded; if every run diverges, AllSeedsDiverged is raised."""
    out = out_dir if out_dir is not None else cfg.output_dir
    os.makedirs(out, exist_ok=True)
    chash = config_hash(cfg)
    _write(os.path.join(out, "config.json"),
           json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
    _write(os.path.join(out, "config.hash"), chash + "\n")

    seed_rows: list[SeedRow] = []
    telemetry: dict[tuple[str, int], list[EpochTelemetry]] = {}
    models: dict[tuple[str, int], MlpModel] = {}
    final_norms: dict[tuple[str, int], dict[str, float]] = {}
    warnings: list[str] = []

    for seed in cfg.seeds:
        bundle = realize_data(cfg, seed)
        probe = bundle.validation_ood
        for loss_cfg in cfg.losses:
            lname = loss_cfg.name
            model0 = init_model(cfg.layer_dims, derive_seed(seed, "init"))
            optim = dataclasses.replace(cfg.optim, seed=derive_seed(seed, "sgd"))
            try:
                model, history = train(model0, bundle.train, loss_cfg, optim,
                                        probe_ood=probe)
            except DivergedError as exc:
                warnings.append(f"loss={lname} seed={seed}: diverged ({exc})")
                continue
            telemetry[(lname, seed)] = history
            if keep_models:
                models[(lname, seed)] = model
            _write(os.path.join(out, f"telemetry_{lname}_{seed}.csv"),
                   telemetry_csv(history))
            save_checkpoint(model, os.path.join(out, f"checkpoint_{lname}_{seed}.txt"),
                            chash)

            test_logits = forward(model, bundle.test.features)
            id_acc = float((np.argmax(test_logits.data, axis=1)
                            == bundle.test.labels).mean())
            norms = {"ID": float(row_l2_norm(test_logits).mean())}
            for tag, ood_ds in bundle.ood_sets:
                norms[tag] = float(row_l2_norm(forward(model, ood_ds.features)).mean())
            final_norms[(lname, seed)] = norms

            for score_cfg in cfg.scores:
                sname = score_cfg.name
                id_scores = score_batch(model, bundle.test.features, score_cfg)
                for tag, ood_ds in bundle.ood_sets:
                    ood_scores = score_batch(model, ood_ds.features, score_cfg)
                    scored = _scored(id_scores, ood_scores)
                    write_scores(os.path.join(
                        out, f"scores_{lname}_{sname}_{tag}_{seed}.txt"), scored)
                    report = detection_report(scored, cfg.metrics.tpr_target)
                    seed_rows.append(SeedRow(lname, sname, tag, seed,
                                             report.fpr_at_95_tpr, report.auroc,
                                             report.aupr, id_acc))
                if not quiet:
                    print(f"[seed {seed}] {lname}/{sname} done")

    if not telemetry:
        raise AllSeedsDiverged("; ".join(warnings))

    rows = aggregate_rows(cfg, seed_rows)
    _write(os.path.join(out, "bench.csv"), bench_csv(rows))
    _write(os.path.join(out, "bench_per_seed.csv"), seed_rows_csv(seed_rows))
    if warnings:
        _write(os.path.join(out, "warnings.txt"), "\n".join(warnings) + "\n")
    return ExperimentResult(rows, seed_rows, telemetry, models, final_norms,
                            warnings, chash)


def aggregate_rows(cfg: ExperimentConfig, seed_rows: list[SeedRow]) -> list[BenchmarkRow]:
    rows = []
    for loss_cfg in cfg.losses:
        for score_cfg in cfg.scores:
            for ood_cfg in cfg.ood_panel:
                group = [r for r in seed_rows
                         if r.loss_name == loss_cfg.name
                         and r.score_name == score_cfg.name
                         and r.ood_dataset_tag == ood_cfg.tag]
                if not group:
                    continue
                def stat(attr):
                    vals = np.array([getattr(r, attr) for r in group])
                    return float(vals.mean()), float(vals.std())
                fpr_m, fpr_s = stat("fpr95")
                roc_m, roc_s = stat("auroc")
                pr_m, pr_s = stat("aupr")
                acc_m, acc_s = stat("id_accuracy")
                rows.append(BenchmarkRow(
                    loss_cfg.name, score_cfg.name, ood_cfg.tag,
                    fpr_m, fpr_s, roc_m, roc_s, pr_m, pr_s, acc_m, acc_s,
                    tuple(sorted(r.seed for r in group))))
    return rows


def bench_csv(rows: list[BenchmarkRow]) -> str:
    header = ("loss_name,score_name,ood_dataset_tag,fpr95_mean,fpr95_std,"
              "auroc_mean,auroc_std,aupr_mean,aupr_std,"
              "id_accuracy_mean,id_accuracy_std,seeds_used")
    lines = [header]
    for r in rows:
        seeds = ";".join(str(s) for s in r.seeds_used)
        lines.append(f"{r.loss_name},{r.score_name},{r.ood_dataset_tag},"
                     f"{r.fpr95_mean:.17g},{r.fpr95_std:.17g},"
                     f"{r.auroc_mean:.17g},{r.auroc_std:.17g},"
                     f"{r.aupr_mean:.17g},{r.aupr_std:.17g},"
                     f"{r.id_accuracy_mean:.17g},{r.id_accuracy_std:.17g},{seeds}")
    return "\n".join(lines) + "\n"


def seed_rows_csv(rows: list[SeedRow]) -> str:
    lines = ["loss_name,score_name,ood_dataset_tag,seed,fpr95,auroc,aupr,id_accuracy"]
    for r in rows:
        lines.append(f"{r.loss_name},{r.score_name},{r.ood_dataset_tag},{r.seed},"
                     f"{r.fpr95:.17g},{r.auroc:.17g},{r.aupr:.17g},{r.id_accuracy:.17g}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Tau sweep
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TauSweepRow:
    tau: float
    val_fpr95_mean: float
    final_train_loss_mean: float


def sweep_tau(cfg: ExperimentConfig, tau_grid: Sequence[float],
              out_dir: Optional[str] = None) -> tuple[list[TauSweepRow], float]:
    """Train one logit-norm model per (tau, seed), evaluate MSP FPR95 against
    the Gaussian-noise validation OOD set, and select the tau minimizing the
    mean validation FPR95 (ties break to the smaller tau)."""
    if not tau_grid:
        raise ConfigError("tau grid must be nonempty")
    if any(t <= 0 for t in tau_grid):
        raise ConfigError(f"tau values must be positive, got {list(tau_grid)}")
    msp = ScoreConfig(kind="msp")
    rows = []
    for tau in sorted(tau_grid):
        fprs, losses = [], []
        for seed in cfg.seeds:
            bundle = realize_data(cfg, seed)
            model0 = init_model(cfg.layer_dims, derive_seed(seed, "init"))
            optim = dataclasses.replace(cfg.optim, seed=derive_seed(seed, "sgd"))
            loss_cfg = LossConfig(kind=LOGIT_NORM, tau=tau)
            try:
                model, history = train(model0, bundle.train, loss_cfg, optim)
            except DivergedError:
                continue
            id_scores = score_batch(model, bundle.test.features, msp)
            ood_scores = score_batch(model, bundle.validation_ood.features, msp)
            fprs.append(detection_report(_scored(id_scores, ood_scores),
                                         cfg.metrics.tpr_target).fpr_at_95_tpr)
            losses.append(history[-1].train_loss)
        if not fprs:
            continue
        rows.append(TauSweepRow(tau, float(np.mean(fprs)), float(np.mean(losses))))
    if not rows:
        raise AllSeedsDiverged("every tau/seed run diverged")
    best = min(rows, key=lambda r: (r.val_fpr95_mean, r.tau))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        lines = ["tau,val_fpr95_mean,final_train_loss_mean,selected"]
        for r in rows:
            sel = "1" if r.tau == best.tau else "0"
            lines.append(f"{r.tau:.17g},{r.val_fpr95_mean:.17g},"
                         f"{r.final_train_loss_mean:.17g},{sel}")
        _write(os.path.join(out_dir, "sweep_tau.csv"), "\n".join(lines) + "\n")
    return rows, best.tau


# --------------------------------------------------------------------------
# Histogram and calibration reports
# --------------------------------------------------------------------------

def emit_histogram_data(scored: Sequence[ScoredExample], bins: int
                        ) -> list[tuple[float, float, int, int]]:
    """Equal-width histogram over [min score, max score]; counts conserve."""
    if bins < 2:
        raise ConfigError(f"bins must be >= 2, got {bins}")
    if not scored:
        raise DataError("empty score dump")
    values = np.array([ex.score for ex in scored])
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    id_vals = np.array([ex.score for ex in scored if ex.origin == "ID"])
    ood_vals = np.array([ex.score for ex in scored if ex.origin == "OOD"])
    id_counts, _ = np.histogram(id_vals, bins=edges)
    ood_counts, _ = np.histogram(ood_vals, bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(id_counts[i]), int(ood_counts[i]))
            for i in range(bins)]


def histogram_csv(rows: list[tuple[float, float, int, int]]) -> str:
    lines = ["bin_left,bin_right,id_count,ood_count"]
    for left, right, idc, oodc in rows:
        lines.append(f"{left:.17g},{right:.17g},{idc},{oodc}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CalibrationRow:
    loss_name: str
    fitted_T: float
    pre: CalibrationReport
    post: CalibrationReport


def run_calibration(cfg: ExperimentConfig, out_dir: Optional[str] = None
                    ) -> list[CalibrationRow]:
    """Per loss: fit the temperature on held-out validation logits, then
    report test ECE before and after scaling. Uses the first seed."""
    if cfg.data.val_fraction <= 0.0:
        raise ConfigError("run_calibration requires data.val_fraction > 0")
    seed = cfg.seeds[0]
    bundle = realize_data(cfg, seed)
    assert bundle.val is not None
    rows = []
    for loss_cfg in cfg.losses:
        model0 = init_model(cfg.layer_dims, derive_seed(seed, "init"))
        optim = dataclasses.replace(cfg.optim, seed=derive_seed(seed, "sgd"))
        model, _ = train(model0, bundle.train, loss_cfg, optim)
        val_logits = forward(model, bundle.val.features)
        fitted = fit_temperature(val_logits.data, bundle.val.labels)
        test_logits = forward(model, bundle.test.features).data
        preds = np.argmax(test_logits, axis=1)
        correct = preds == bundle.test.labels
        conf_pre = rowwise_softmax(test_logits).max(axis=1)
        conf_post = rowwise_softmax(test_logits / fitted).max(axis=1)
        pre = ece(conf_pre, correct, cfg.metrics.ece_bins)
        post = dataclasses.replace(ece(conf_post, correct, cfg.metrics.ece_bins),
                                   fitted_T=fitted)
        rows.append(CalibrationRow(loss_cfg.name, fitted, pre, post))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        lines = ["loss_name,fitted_T,ece_pre_ts,ece_post_ts"]
        for r in rows:
            lines.append(f"{r.loss_name},{r.fitted_T:.17g},"
                         f"{r.pre.ece:.17g},{r.post.ece:.17g}")
        _write(os.path.join(out_dir, "calibration.csv"), "\n".join(lines) + "\n")
    return rows
