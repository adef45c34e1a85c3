"""Semi-supervised training loops.

Seven variants over the same miniature model: two supervised baselines,
teacher-consistency training (``mt``), interpolation consistency
(``ict``), self-referenced pseudo-label training (``srst``, plus a
noise-augmented ``srst-aug``), and the dual-model cross-referenced loop
(``crst``) where each model learns from pseudo labels produced by the
*other* model's teacher on its own data view.

One step is a transaction: teacher snapshots are read first, both
students update from those snapshots, teachers EMA-update last, and the
step counter advances once.  Everything is driven by named substreams of
a single seed, so a (dataset, config, seed) triple fully determines the
run, including the history file bytes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .errors import ConfigError, DataError, FormatError, InvalidInputError, TrainingDivergenceError
from .losses import (
    BatchLayout,
    LossBreakdown,
    loss_crst,
    loss_ict,
    loss_mt,
    loss_srst,
    loss_supervised,
)
from .events import EventInterval
from .network import ConvRecurrentNet, ModelConfig, clip_pool
from .optim import OptState, adam_step, ema_update
from .perturb import sample_frame_delay
from .postprocess import global_postproc
from .pseudolabel import pseudo_label_batch
from .reliability import RampSchedule, ramp_weight, reliability_strong, reliability_weak
from .scenes import StrongLabelGrid, downsample_label_grid, events_from_label_grid
from .evaluation import macro_f_score

VARIANTS = ("supervised-strong", "supervised-sw", "mt", "ict", "srst", "srst-aug", "crst")
_VARIANT_ALIASES = {
    "supervised-strong+weak": "supervised-sw",
    "srst+aug": "srst-aug",
}
PERTURBATIONS = ("noise30db", "mixup", "frameshift")

CHECKPOINT_MAGIC = b"SEDLAB01"


def canonical_variant(name: str) -> str:
    name = name.strip().lower()
    name = _VARIANT_ALIASES.get(name, name)
    if name not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
    return name


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults are the desk-scale setup."""

    variant: str = "crst"
    epochs: int = 30
    steps_per_epoch: int | None = None  # default: one pass over the strong split
    batch_strong: int = 6
    batch_weak: int = 6
    batch_unlabeled: int = 12
    lr: float = 0.001
    ema_decay: float = 0.999
    ema_rampup: bool = True
    ramp_peak: float = 3.0
    consistency_peak: float = 2.0
    perturbation: str = "noise30db"
    snr_db: float = 30.0
    shift_sigma: float = 40.0
    pseudo_view: str = "own"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", canonical_variant(self.variant))
        if self.perturbation not in PERTURBATIONS:
            raise ConfigError(
                f"unknown perturbation {self.perturbation!r}; choose from {', '.join(PERTURBATIONS)}"
            )
        if self.pseudo_view not in ("own", "consumer"):
            raise ConfigError("pseudo_view must be 'own' or 'consumer'")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if min(self.batch_strong, self.batch_weak, self.batch_unlabeled) < 0:
            raise ConfigError("batch parts must be non-negative")
        if self.batch_strong + self.batch_weak + self.batch_unlabeled < 1:
            raise ConfigError("batch must contain at least one clip")
        if not 0 < self.lr <= 0.001:
            raise ConfigError("learning rate must be in (0, 0.001] (capped Adam)")
        if not 0 <= self.ema_decay < 1:
            raise ConfigError("ema_decay must be in [0, 1)")

    def composition(self) -> tuple[int, int, int]:
        """Effective (strong, weak, unlabeled) clips per batch for the variant."""
        if self.variant == "supervised-strong":
            return (self.batch_strong, 0, 0)
        if self.variant == "supervised-sw":
            return (self.batch_strong, self.batch_weak, 0)
        return (self.batch_strong, self.batch_weak, self.batch_unlabeled)


@dataclass
class ModelState:
    student: np.ndarray
    teacher: np.ndarray | None
    opt: OptState


@dataclass
class TrainState:
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    models: list
    step: int
    total_steps: int
    best_snapshot: dict | None = None


@dataclass
class TrainHistory:
    """One record per training step; epoch-final steps also carry the
    validation scores. ``epochs`` summarizes per-epoch validation."""

    records: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    best: dict | None = None


class SubsetSampler:
    """Without-replacement draws that reshuffle when a pass is exhausted."""

    def __init__(self, n_items: int, rng: np.random.Generator):
        self.n_items = n_items
        self.rng = rng
        self.queue: list[int] = []

    def draw(self, k: int) -> list[int]:
        if k == 0:
            return []
        if self.n_items == 0:
            raise DataError("cannot sample from an empty subset")
        out = []
        while len(out) < k:
            if not self.queue:
                self.queue = list(self.rng.permutation(self.n_items))
            out.append(int(self.queue.pop()))
        return out


@dataclass
class Batch:
    x: np.ndarray
    y_strong: np.ndarray
    y_weak: np.ndarray
    layout: BatchLayout
    indices: dict


def make_batch(arrays: dict, composition: tuple[int, int, int], samplers: dict) -> Batch:
    """Draw one [strong | weak | unlabeled] batch from the stacked arrays."""
    ks, kw, ku = composition
    idx_s = samplers["strong"].draw(ks)
    idx_w = samplers["weak"].draw(kw)
    idx_u = samplers["unlabeled"].draw(ku)
    t, m = arrays["shape"]
    parts = []
    for idx, key in ((idx_s, "strong_x"), (idx_w, "weak_x"), (idx_u, "unlab_x")):
        parts.append(arrays[key][idx] if idx else np.zeros((0, t, m)))
    return Batch(
        x=np.concatenate(parts, axis=0),
        y_strong=arrays["strong_y"][idx_s] if idx_s else np.zeros((0,) + arrays["strong_y"].shape[1:]),
        y_weak=arrays["weak_y"][idx_w] if idx_w else np.zeros((0,) + arrays["weak_y"].shape[1:]),
        layout=BatchLayout(ks, kw, ku),
        indices={"strong": idx_s, "weak": idx_w, "unlabeled": idx_u},
    )


# ----------------------------------------------------------------------
# dataset staging


def _stack_features(clips, want_labels: bool):
    xs = [c[1].data for c in clips]
    x = np.stack(xs) if xs else None
    if not want_labels:
        return x, None
    ys = [c[2] for c in clips]
    return x, ys


def stage_dataset(ds: Dataset, model_cfg: ModelConfig, augment_snr: float | None = None,
                  augment_seed: int = 0) -> dict:
    """Stack clips into contiguous arrays and pool strong labels to the
    model's output rate.  ``augment_snr`` doubles the training splits with
    noisy copies (labels reused), which is the ``srst-aug`` recipe."""
    if not ds.strong:
        raise DataError("dataset has no strong split")
    fps = ds.strong[0][1].fps
    t, m = ds.strong[0][1].data.shape
    factor = model_cfg.time_pool_factor

    def pooled(y: StrongLabelGrid) -> np.ndarray:
        return downsample_label_grid(y, factor).data

    strong_x = np.stack([c[1].data for c in ds.strong])
    strong_y = np.stack([pooled(c[2]) for c in ds.strong])
    weak_x = (
        np.stack([c[1].data for c in ds.weak]) if ds.weak else np.zeros((0, t, m))
    )
    weak_y = (
        np.stack([c[2].data for c in ds.weak]) if ds.weak else np.zeros((0, ds.n_classes))
    )
    unlab_x = (
        np.stack([c[1].data for c in ds.unlabeled]) if ds.unlabeled else np.zeros((0, t, m))
    )

    if augment_snr is not None:
        rng = np.random.default_rng(augment_seed)

        def noisy(batch):
            if batch.shape[0] == 0:
                return batch
            power = np.mean(batch**2, axis=(1, 2), keepdims=True)
            sigma = np.sqrt(power / 10.0 ** (augment_snr / 10.0))
            return batch + sigma * rng.standard_normal(batch.shape)

        strong_x = np.concatenate([strong_x, noisy(strong_x)])
        strong_y = np.concatenate([strong_y, strong_y])
        weak_x = np.concatenate([weak_x, noisy(weak_x)])
        weak_y = np.concatenate([weak_y, weak_y])
        unlab_x = np.concatenate([unlab_x, noisy(unlab_x)])

    val_x = np.stack([c[1].data for c in ds.validation]) if ds.validation else np.zeros((0, t, m))
    val_refs = {
        c[0]: events_from_label_grid(c[2], fps) for c in ds.validation
    }
    return {
        "shape": (t, m),
        "fps": fps,
        "n_classes": ds.n_classes,
        "strong_x": strong_x,
        "strong_y": strong_y,
        "weak_x": weak_x,
        "weak_y": weak_y,
        "unlab_x": unlab_x,
        "val_x": val_x,
        "val_ids": [c[0] for c in ds.validation],
        "val_refs": val_refs,
    }


def feature_standardization(arrays: dict) -> tuple[tuple, tuple]:
    """Per-channel mean/std over every training input (all three splits)."""
    stacks = [arrays[k] for k in ("strong_x", "weak_x", "unlab_x") if arrays[k].shape[0]]
    allx = np.concatenate(stacks, axis=0)
    mean = allx.mean(axis=(0, 1))
    std = np.maximum(allx.std(axis=(0, 1)), 1e-6)
    return tuple(float(v) for v in mean), tuple(float(v) for v in std)


# ----------------------------------------------------------------------
# perturbed views


def perturb_batch(x: np.ndarray, cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    """The alternative data view used by teachers and by model II."""
    if x.shape[0] == 0:
        return x.copy()
    if cfg.perturbation == "noise30db":
        power = np.mean(x**2, axis=(1, 2), keepdims=True)
        if np.any(power == 0):
            raise InvalidInputError("cannot add scaled noise to an all-zero clip")
        sigma = np.sqrt(power / 10.0 ** (cfg.snr_db / 10.0))
        return x + sigma * rng.standard_normal(x.shape)
    if cfg.perturbation == "mixup":
        lam = rng.uniform()
        perm = rng.permutation(x.shape[0])
        return lam * x + (1.0 - lam) * x[perm]
    delays = [sample_frame_delay(rng, x.shape[1], cfg.shift_sigma) for _ in range(x.shape[0])]
    return np.stack([np.roll(x[i], delays[i], axis=0) for i in range(x.shape[0])])


# ----------------------------------------------------------------------
# inference helpers


def predict_posterior_batch(net: ConvRecurrentNet, params: np.ndarray, x: np.ndarray,
                            chunk: int = 64) -> np.ndarray:
    outs = []
    for i in range(0, x.shape[0], chunk):
        post, _ = net.forward_batch(params, x[i:i + chunk], train=False)
        outs.append(post)
    if not outs:
        t_out = x.shape[1] // net.cfg.time_pool_factor
        return np.zeros((0, t_out, net.cfg.n_classes))
    return np.concatenate(outs, axis=0)


def validation_macro_f(net: ConvRecurrentNet, params: np.ndarray, arrays: dict) -> float:
    """Macro f-score on the validation split with global post-processing."""
    if arrays["val_x"].shape[0] == 0:
        return 0.0
    posts = predict_posterior_batch(net, params, arrays["val_x"])
    fps_out = arrays["fps"] / net.cfg.time_pool_factor
    detected = {
        clip_id: global_postproc(posts[i], fps_out)
        for i, clip_id in enumerate(arrays["val_ids"])
    }
    refs = {
        clip_id: [EventInterval(c, on, off) for c, on, off in evs]
        for clip_id, evs in arrays["val_refs"].items()
    }
    return macro_f_score(detected, refs, arrays["n_classes"])


# ----------------------------------------------------------------------
# per-variant steps


def _finite_or_raise(bd: LossBreakdown, step: int, side: str = ""):
    if not np.isfinite(bd.total):
        raise TrainingDivergenceError(
            f"non-finite loss at step {step}{' (' + side + ')' if side else ''}",
            snapshot={"step": step, "loss": bd.to_dict()},
        )


def _effective_decay(cfg: TrainConfig, completed_steps: int) -> float:
    # Early steps average aggressively so the teacher leaves its random init.
    if not cfg.ema_rampup:
        return cfg.ema_decay
    return min(cfg.ema_decay, 1.0 - 1.0 / (completed_steps + 1.0))


def _update_model(net, model: ModelState, cache, dpred, params, cfg, completed_steps):
    grads = net.backward_batch(params, cache, dpred)
    model.student, model.opt = adam_step(model.student, grads, model.opt, lr=cfg.lr)
    if model.teacher is not None:
        model.teacher = ema_update(model.teacher, model.student, _effective_decay(cfg, completed_steps))


def train_step(state: TrainState, batch: Batch, nets: list, rngs: dict) -> list[LossBreakdown]:
    cfg = state.train_cfg
    t = state.step
    sched_omega = RampSchedule(max(state.total_steps, 1), cfg.ramp_peak)
    sched_delta = RampSchedule(max(state.total_steps, 1), cfg.consistency_peak)
    variant = cfg.variant
    net = nets[0]

    if variant in ("supervised-strong", "supervised-sw"):
        model = state.models[0]
        pred, cache = net.forward_batch(model.student, batch.x, train=True, rng=rngs["dropout0"])
        bd, dpred = loss_supervised(
            pred,
            batch.y_strong if batch.layout.n_strong else None,
            batch.y_weak if batch.layout.n_weak else None,
            batch.layout,
        )
        _finite_or_raise(bd, t)
        _update_model(net, model, cache, dpred, model.student, cfg, t + 1)
        return [bd]

    if variant == "mt":
        model = state.models[0]
        x_teacher = perturb_batch(batch.x, cfg, rngs["perturb"])
        teacher_pred = predict_posterior_batch(net, model.teacher, x_teacher)
        pred, cache = net.forward_batch(model.student, batch.x, train=True, rng=rngs["dropout0"])
        delta = ramp_weight(t, sched_delta)
        bd, dpred = loss_mt(pred, teacher_pred, batch.y_strong, batch.y_weak, batch.layout, delta)
        _finite_or_raise(bd, t)
        _update_model(net, model, cache, dpred, model.student, cfg, t + 1)
        return [bd]

    if variant == "ict":
        model = state.models[0]
        lam = float(rngs["mix"].uniform())
        u = batch.x[batch.layout.unlabeled]
        perm = rngs["mix"].permutation(u.shape[0])
        mixed = lam * u + (1.0 - lam) * u[perm]
        x_student = np.concatenate([batch.x[: batch.layout.unlabeled.start], mixed], axis=0)
        teacher_both = predict_posterior_batch(net, model.teacher, np.concatenate([u, u[perm]]))
        teacher_a, teacher_b = teacher_both[: u.shape[0]], teacher_both[u.shape[0]:]
        pred, cache = net.forward_batch(model.student, x_student, train=True, rng=rngs["dropout0"])
        delta = ramp_weight(t, sched_delta)
        bd, dpred = loss_ict(
            pred, teacher_a, teacher_b, lam, batch.y_strong, batch.y_weak, batch.layout, delta
        )
        _finite_or_raise(bd, t)
        _update_model(net, model, cache, dpred, model.student, cfg, t + 1)
        return [bd]

    if variant in ("srst", "srst-aug"):
        model = state.models[0]
        teacher_post = predict_posterior_batch(net, model.teacher, batch.x)
        pseudo = pseudo_label_batch(teacher_post)
        omega = ramp_weight(t, sched_omega)
        pred, cache = net.forward_batch(model.student, batch.x, train=True, rng=rngs["dropout0"])
        bd, dpred = loss_srst(pred, pseudo, batch.y_strong, batch.y_weak, batch.layout, omega)
        _finite_or_raise(bd, t)
        _update_model(net, model, cache, dpred, model.student, cfg, t + 1)
        return [bd]

    # crst: model I trains on the original view, model II on the perturbed one.
    model1, model2 = state.models
    net2 = nets[1]
    x_orig = batch.x
    x_pert = perturb_batch(batch.x, cfg, rngs["perturb"])
    if cfg.pseudo_view == "own":
        view1, view2 = x_orig, x_pert
    else:
        view1, view2 = x_pert, x_orig
    omega = ramp_weight(t, sched_omega)

    def teacher_outputs(net_i, model_i, view):
        post = predict_posterior_batch(net_i, model_i.teacher, view)
        pseudo = pseudo_label_batch(post)
        sl_s, sl_w = batch.layout.strong, batch.layout.weak
        gamma_s = reliability_strong(
            list(pseudo[sl_s]), list(batch.y_strong), omega
        )
        gamma_w = reliability_weak(
            [clip_pool(p) for p in pseudo[sl_w]], list(batch.y_weak), omega
        )
        return pseudo, gamma_s, gamma_w

    pseudo1, gamma1_s, gamma1_w = teacher_outputs(net, model1, view1)
    pseudo2, gamma2_s, gamma2_w = teacher_outputs(net2, model2, view2)

    pred1, cache1 = net.forward_batch(model1.student, x_orig, train=True, rng=rngs["dropout0"])
    bd1, dpred1 = loss_crst(
        pred1, pseudo2, batch.y_strong, batch.y_weak, batch.layout, gamma2_s, gamma2_w, side="I"
    )
    _finite_or_raise(bd1, t, "model I")
    pred2, cache2 = net2.forward_batch(model2.student, x_pert, train=True, rng=rngs["dropout1"])
    bd2, dpred2 = loss_crst(
        pred2, pseudo1, batch.y_strong, batch.y_weak, batch.layout, gamma1_s, gamma1_w, side="II"
    )
    _finite_or_raise(bd2, t, "model II")

    _update_model(net, model1, cache1, dpred1, model1.student, cfg, t + 1)
    _update_model(net2, model2, cache2, dpred2, model2.student, cfg, t + 1)
    return [bd1, bd2]


# ----------------------------------------------------------------------
# the training loop


def _validate_needs(ds_sizes: dict, cfg: TrainConfig):
    ks, kw, ku = cfg.composition()
    if ks > 0 and ds_sizes["strong"] == 0:
        raise ConfigError(f"variant {cfg.variant} needs a strong split")
    if kw > 0 and ds_sizes["weak"] == 0:
        raise ConfigError(f"variant {cfg.variant} needs a weak split")
    if ku > 0 and ds_sizes["unlabeled"] == 0:
        raise ConfigError(f"variant {cfg.variant} needs an unlabeled split")
    if cfg.variant == "ict" and ku < 2:
        raise ConfigError("ict needs at least two unlabeled clips per batch")


def default_steps_per_epoch(n_strong: int, cfg: TrainConfig) -> int:
    if cfg.steps_per_epoch is not None:
        if cfg.steps_per_epoch < 1:
            raise ConfigError("steps_per_epoch must be >= 1")
        return cfg.steps_per_epoch
    ks = cfg.composition()[0]
    if ks > 0:
        return max(1, math.ceil(n_strong / ks))
    return 1


def train(ds: Dataset, model_cfg: ModelConfig, train_cfg: TrainConfig):
    """Run the configured variant; returns (TrainState, TrainHistory).

    After every epoch the validation split is scored with global
    post-processing and the best (model, epoch) student is kept; the
    returned history carries per-step loss parts and per-epoch scores.
    """
    _validate_needs(ds.split_sizes(), train_cfg)
    n_models = 2 if train_cfg.variant == "crst" else 1
    has_teacher = train_cfg.variant not in ("supervised-strong", "supervised-sw")

    root = np.random.SeedSequence(train_cfg.seed)
    children = root.spawn(10)
    # 0-1: model inits, 2-4: subset samplers, 5-6: dropout, 7: perturb,
    # 8: mix draws, 9: dataset augmentation noise.
    init_seeds = children[0:2]
    samp_seeds = children[2:5]
    rngs = {
        "dropout0": np.random.default_rng(children[5]),
        "dropout1": np.random.default_rng(children[6]),
        "perturb": np.random.default_rng(children[7]),
        "mix": np.random.default_rng(children[8]),
    }

    augment = train_cfg.snr_db if train_cfg.variant == "srst-aug" else None
    arrays = stage_dataset(
        ds, model_cfg, augment_snr=augment,
        augment_seed=int(children[9].generate_state(1)[0]),
    )
    mean, std = feature_standardization(arrays)
    model_cfg = dataclasses.replace(model_cfg, norm_mean=mean, norm_std=std)
    if model_cfg.n_classes != ds.n_classes:
        raise ConfigError(
            f"model has {model_cfg.n_classes} classes but dataset has {ds.n_classes}"
        )

    nets = [ConvRecurrentNet(model_cfg) for _ in range(n_models)]
    models = []
    for i in range(n_models):
        student = nets[i].init_params(int(init_seeds[i].generate_state(1)[0]))
        teacher = student.copy() if has_teacher else None
        models.append(ModelState(student=student, teacher=teacher,
                                 opt=OptState.zeros(nets[i].n_params, lr_cap=0.001)))

    steps_per_epoch = default_steps_per_epoch(len(arrays["strong_x"]), train_cfg)
    total_steps = train_cfg.epochs * steps_per_epoch
    state = TrainState(model_cfg, train_cfg, models, step=0, total_steps=total_steps)
    history = TrainHistory()

    samplers = {
        name: SubsetSampler(arrays[key].shape[0], np.random.default_rng(seed))
        for (name, key), seed in zip(
            (("strong", "strong_x"), ("weak", "weak_x"), ("unlabeled", "unlab_x")),
            samp_seeds,
        )
    }

    best = None
    sched_omega = RampSchedule(max(total_steps, 1), train_cfg.ramp_peak)
    for epoch in range(train_cfg.epochs):
        for _ in range(steps_per_epoch):
            batch = make_batch(arrays, train_cfg.composition(), samplers)
            breakdowns = train_step(state, batch, nets, rngs)
            history.records.append({
                "step": state.step,
                "epoch": epoch,
                "omega": ramp_weight(state.step, sched_omega),
                "losses": [bd.to_dict() for bd in breakdowns],
            })
            state.step += 1

        scores = [validation_macro_f(nets[i], models[i].student, arrays) for i in range(n_models)]
        for i, f in enumerate(scores):
            if best is None or f > best["macro_f"]:
                best = {
                    "epoch": epoch,
                    "model_index": i,
                    "macro_f": f,
                    "student": models[i].student.copy(),
                    "teacher": models[i].teacher.copy() if models[i].teacher is not None else None,
                }
        epoch_summary = {"epoch": epoch, "val_macro_f": scores, "best_macro_f": best["macro_f"]}
        history.epochs.append(epoch_summary)
        # history stays one record per step; the epoch's last step carries
        # the validation summary.
        history.records[-1].update(epoch_summary)

    history.best = None if best is None else {
        "epoch": best["epoch"],
        "model_index": best["model_index"],
        "macro_f": best["macro_f"],
    }
    state.best_snapshot = best
    return state, history


# ----------------------------------------------------------------------
# checkpoints


def _config_hash(model_cfg: ModelConfig, train_cfg: TrainConfig) -> str:
    blob = json.dumps(
        {"model": dataclasses.asdict(model_cfg), "train": dataclasses.asdict(train_cfg)},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()


def save_checkpoint(state: TrainState, path, best: dict | None = None) -> None:
    """Header JSON (configs, layout, vector names) + raw float64 vectors."""
    net = ConvRecurrentNet(state.model_cfg)
    vectors = []
    names = []
    extras = {"opt_steps": [], "lr_caps": []}
    for i, model in enumerate(state.models):
        pairs = [("student", model.student), ("adam_m", model.opt.m), ("adam_v", model.opt.v)]
        if model.teacher is not None:
            pairs.insert(1, ("teacher", model.teacher))
        for name, vec in pairs:
            names.append(f"model{i}.{name}")
            vectors.append(np.asarray(vec, dtype="<f8"))
        extras["opt_steps"].append(model.opt.step)
        extras["lr_caps"].append(model.opt.lr_cap)

    best_entry = None
    snapshot = best if best is not None else getattr(state, "best_snapshot", None)
    if snapshot is not None:
        best_entry = {
            "epoch": snapshot["epoch"],
            "model_index": snapshot["model_index"],
            "macro_f": snapshot["macro_f"],
        }
        names.append("best.student")
        vectors.append(np.asarray(snapshot["student"], dtype="<f8"))
        if snapshot.get("teacher") is not None:
            names.append("best.teacher")
            vectors.append(np.asarray(snapshot["teacher"], dtype="<f8"))

    header = {
        "format": 1,
        "variant": state.train_cfg.variant,
        "step": state.step,
        "total_steps": state.total_steps,
        "param_count": net.n_params,
        "config_hash": _config_hash(state.model_cfg, state.train_cfg),
        "model_config": dataclasses.asdict(state.model_cfg),
        "train_config": dataclasses.asdict(state.train_cfg),
        "layout": [[name, off, list(shape)] for name, off, shape in net.layout],
        "vectors": names,
        "best": best_entry,
        **extras,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for vec in vectors:
            if vec.shape != (net.n_params,):
                raise InvalidInputError("checkpoint vector length does not match the layout")
            fh.write(vec.tobytes())


@dataclass
class Checkpoint:
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    variant: str
    step: int
    total_steps: int
    models: list
    best: dict | None
    vectors: dict

    def best_params(self) -> np.ndarray:
        """The parameters post-processing should use: the best student."""
        if "best.student" in self.vectors:
            return self.vectors["best.student"]
        return self.models[0].student


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < len(CHECKPOINT_MAGIC) + 4 or raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    (blob_len,) = struct.unpack_from("<I", raw, len(CHECKPOINT_MAGIC))
    start = len(CHECKPOINT_MAGIC) + 4
    try:
        header = json.loads(raw[start:start + blob_len])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: corrupt header: {exc}") from exc
    model_cfg = ModelConfig(**{
        k: tuple(v) if isinstance(v, list) else v
        for k, v in header["model_config"].items()
    })
    train_cfg = TrainConfig(**header["train_config"])
    net = ConvRecurrentNet(model_cfg)
    n = net.n_params
    names = header["vectors"]
    body = raw[start + blob_len:]
    if len(body) != 8 * n * len(names):
        raise FormatError(
            f"{path}: expected {8 * n * len(names)} bytes of vectors, found {len(body)}"
        )
    vectors = {}
    for i, name in enumerate(names):
        vectors[name] = np.frombuffer(body, dtype="<f8", count=n, offset=8 * n * i).copy()

    models = []
    i = 0
    while f"model{i}.student" in vectors:
        opt = OptState(
            m=vectors[f"model{i}.adam_m"],
            v=vectors[f"model{i}.adam_v"],
            step=header["opt_steps"][i],
            lr_cap=header["lr_caps"][i],
        )
        models.append(ModelState(
            student=vectors[f"model{i}.student"],
            teacher=vectors.get(f"model{i}.teacher"),
            opt=opt,
        ))
        i += 1
    return Checkpoint(
        model_cfg=model_cfg,
        train_cfg=train_cfg,
        variant=header["variant"],
        step=header["step"],
        total_steps=header["total_steps"],
        models=models,
        best=header.get("best"),
        vectors=vectors,
    )


def load_for_variant(path, variant: str) -> Checkpoint:
    ckpt = load_checkpoint(path)
    want = canonical_variant(variant)
    if ckpt.variant != want:
        raise ConfigError(
            f"checkpoint was trained as {ckpt.variant!r}, not {want!r} (variant mismatch)"
        )
    return ckpt


__all__ = [
    "VARIANTS",
    "PERTURBATIONS",
    "canonical_variant",
    "TrainConfig",
    "ModelState",
    "TrainState",
    "TrainHistory",
    "SubsetSampler",
    "Batch",
    "make_batch",
    "stage_dataset",
    "feature_standardization",
    "perturb_batch",
    "predict_posterior_batch",
    "validation_macro_f",
    "train_step",
    "train",
    "default_steps_per_epoch",
    "save_checkpoint",
    "Checkpoint",
    "load_checkpoint",
    "load_for_variant",
]
