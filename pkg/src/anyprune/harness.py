"""Megabatch training loops and the run-variant dispatcher.

One run walks the stream in order. Depending on the variant, the mask is
refined before training (app_default, app_noreplay_snip, anytime_osp at the
first megabatch only), after training (app_final), or mid-training after a
warmup (app_warmup). After each megabatch the best validation checkpoint is
evaluated on the held-out test set and carried into the next megabatch.

Every random draw is keyed by (purpose, config seed, megabatch, epoch), so an
identical config reproduces an identical MetricsLog.
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import config_hash, run_id
from .datasets import Dataset, gen_blobs, gen_spirals, load_csv, load_idx, split_test
from .errors import DataError, FormatError, ModelSpecError
from .metrics import error_count, generalization_gap
from .models import build_model, convnet_spec, count_params, mlp_spec
from .optim import OptimState, sgd_momentum_step
from .pruning import (
    SparsityMask,
    apply_mask,
    keep_count,
    layer_pruned_fraction,
    make_delta_schedule,
    prune_global,
    selection_scores,
)
from .rng import STREAM_SHUFFLE, rng_from
from .stream import build_stream, draw_pi, replay_view

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    megabatch: int
    epoch: int
    lr: float
    global_iter: int
    train_correct: int
    train_total: int
    train_loss: float
    val_correct: int
    val_total: int
    val_loss: float
    kept_count: int

    @property
    def train_acc(self):
        return self.train_correct / self.train_total

    @property
    def val_acc(self):
        return self.val_correct / self.val_total


@dataclass
class MegabatchRecord:
    megabatch: int
    best_epoch: int
    test_errors: int
    test_total: int
    gen_gap_pp: float
    kept_count: int
    pi_size: int | None
    layer_pruned: list
    predictions: np.ndarray


@dataclass
class RunEvent:
    megabatch: int
    seq: int
    kind: str
    detail: dict


@dataclass
class MetricsLog:
    config: object
    config_hash: str
    run_id: str
    prunable_total: int
    class_count: int
    layer_names: list
    test_labels: np.ndarray
    epochs: list = field(default_factory=list)
    megabatches: list = field(default_factory=list)
    events: list = field(default_factory=list)
    wall_clock_seconds: float = 0.0


def lr_at(config, t, epoch):
    """Learning rate for (megabatch t, epoch) under the configured regime.

    The multistep shape decays by lr_gamma at floor(0.5k) and floor(0.75k);
    multistep_m1_only applies it to the first megabatch and then holds
    post_m1_lr, while cyclic_every_mt restarts the shape at every megabatch.
    """
    if not 1 <= epoch <= config.epochs:
        raise IndexError(f"epoch {epoch} outside 1..{config.epochs}")
    if config.lr_mode == "multistep_m1_only" and t >= 2:
        return config.post_m1_lr
    m1 = math.floor(0.5 * config.epochs)
    m2 = math.floor(0.75 * config.epochs)
    if epoch >= m2:
        return config.lr0 * config.lr_gamma * config.lr_gamma
    if epoch >= m1:
        return config.lr0 * config.lr_gamma
    return config.lr0


def evaluate(model, x, y, chunk=2048):
    """Exact counts plus mean loss on a labelled set, deterministically."""
    n = x.shape[0]
    correct = 0
    loss_sum = 0.0
    for start in range(0, n, chunk):
        xb, yb = x[start : start + chunk], y[start : start + chunk]
        logits = model.forward(xb)
        loss = T.softmax_cross_entropy(logits, yb)
        correct += int((np.argmax(logits.data, axis=1) == yb).sum())
        loss_sum += float(loss.data) * xb.shape[0]
    return correct, n, loss_sum / n


def _run_epoch(model, mask, view, config, t, epoch, optim, global_iter, observer):
    order = rng_from(STREAM_SHUFFLE, config.seed_shuffle, t, epoch).permutation(view.train_idx)
    optim.lr = lr_at(config, t, epoch)
    params = model.params()
    correct = 0
    loss_sum = 0.0
    for start in range(0, order.size, config.minibatch):
        xb, yb = view.train_xy(order[start : start + config.minibatch])
        tape = T.Tape()
        logits = model.forward(xb, tape)
        loss = T.softmax_cross_entropy(logits, yb, tape)
        tape.backward(loss)
        grads = {
            name: np.zeros(p.shape) if p.grad is None else p.grad
            for name, p in params.items()
        }
        sgd_momentum_step(params, grads, optim, mask)
        correct += int((np.argmax(logits.data, axis=1) == yb).sum())
        loss_sum += float(loss.data) * yb.size
        global_iter += 1
        if observer is not None and hasattr(observer, "on_step"):
            observer.on_step(t, epoch, model, optim, mask)
    val_correct, val_total, val_loss = evaluate(model, *view.val_xy())
    rec = EpochRecord(
        megabatch=t,
        epoch=epoch,
        lr=optim.lr,
        global_iter=global_iter,
        train_correct=correct,
        train_total=int(order.size),
        train_loss=loss_sum / order.size,
        val_correct=val_correct,
        val_total=val_total,
        val_loss=val_loss,
        kept_count=mask.kept_count if mask is not None else count_params(model.registry, True),
    )
    return rec, global_iter


def train_megabatch(
    model, mask, view, config, t,
    optim=None, epochs=None, global_iter=0, observer=None,
):
    """Train the view for the given epochs, tracking the best val checkpoint.

    Returns (best_snapshot, best_record, epoch_records, global_iter); the best
    snapshot is the parameter copy from the epoch with the highest validation
    accuracy (ties favor the earlier epoch), or None when no epochs ran. The
    model is left at its *running* (last-step) parameters; callers decide when
    to restore the checkpoint.
    """
    epoch_list = list(range(1, config.epochs + 1)) if epochs is None else list(epochs)
    if epoch_list and view.train_idx.size == 0:
        raise DataError("megabatch training view has no training samples")
    if optim is None:
        optim = OptimState(model.params(), config.lr0, config.momentum, config.weight_decay)
    records = []
    best_snap = None
    best_rec = None
    for epoch in epoch_list:
        rec, global_iter = _run_epoch(
            model, mask, view, config, t, epoch, optim, global_iter, observer
        )
        records.append(rec)
        if best_rec is None or rec.val_correct > best_rec.val_correct:
            best_rec = rec
            best_snap = model.snapshot()
    return best_snap, best_rec, records, global_iter


def dataset_for_config(config):
    if config.dataset == "synthetic_blobs":
        return gen_blobs(
            config.blob_classes, config.blob_per_class, config.blob_dim,
            config.blob_noise, config.seed_partition, config.test_per_class,
        )
    if config.dataset == "synthetic_spirals":
        return gen_spirals(
            config.spiral_classes, config.spiral_per_class, config.spiral_noise,
            config.seed_partition, config.test_per_class,
        )
    if config.dataset == "idx":
        x, y, shape = load_idx(config.idx_train_images, config.idx_train_labels)
        xt, yt, shape_t = load_idx(config.idx_test_images, config.idx_test_labels)
        if shape != shape_t:
            raise FormatError(f"train images are {shape}, test images are {shape_t}")
        classes = int(max(y.max(), yt.max())) + 1
        return Dataset(x, y, xt, yt, input_shape=shape, class_count=classes)
    x, y = load_csv(config.csv_path, config.csv_label_column)
    x, y, xt, yt = split_test(x, y, config.test_fraction, config.seed_partition)
    classes = int(max(y.max(), yt.max())) + 1
    return Dataset(x, y, xt, yt, input_shape=(x.shape[1],), class_count=classes)


def model_spec_for_config(config, dataset):
    if config.model == "mlp":
        d = int(np.prod(dataset.input_shape))
        return mlp_spec(d, config.mlp_hidden, dataset.class_count)
    if len(dataset.input_shape) != 3:
        raise ModelSpecError(
            f"convnet needs image-shaped inputs, dataset provides {dataset.input_shape}"
        )
    return convnet_spec(
        dataset.input_shape, config.conv_channels, config.conv_kernel,
        config.conv_stride, config.conv_padding, config.head_hidden,
        dataset.class_count,
    )


def run(config, observer=None):
    """Execute one configured run over the whole stream; returns the MetricsLog."""
    started = time.perf_counter()
    dataset = dataset_for_config(config)
    stream = build_stream(
        dataset, config.megabatches, config.val_fraction,
        config.per_class_cap, config.seed_partition,
    )
    model = build_model(model_spec_for_config(config, dataset), config.seed_init)
    total_prunable = count_params(model.registry, prunable_only=True)
    pruned_run = config.variant != "baseline"
    mask = SparsityMask.full(model) if pruned_run else None
    deltas = None
    if pruned_run and config.variant != "anytime_osp":
        deltas = make_delta_schedule(config.tau, config.megabatches).values

    log = MetricsLog(
        config=config,
        config_hash=config_hash(config),
        run_id=run_id(config),
        prunable_total=total_prunable,
        class_count=dataset.class_count,
        layer_names=[e.name for e in model.registry.prunable()],
        test_labels=dataset.y_test.copy(),
    )
    global_iter = 0

    for t in range(1, config.megabatches + 1):
        if observer is not None and hasattr(observer, "on_megabatch_start"):
            observer.on_megabatch_start(t, model, mask)
        view = replay_view(stream, t, config.replay)
        optim = OptimState(model.params(), config.lr0, config.momentum, config.weight_decay)
        seq = 0
        pi_size = None

        def log_event(kind, **detail):
            nonlocal seq
            log.events.append(RunEvent(megabatch=t, seq=seq, kind=kind, detail=detail))
            seq += 1

        def prune_step(delta):
            nonlocal mask, pi_size
            keep = keep_count(delta, total_prunable)
            if config.pruner in ("snip", "grasp"):
                source = replay_view(stream, t, "none") if config.variant == "app_noreplay_snip" else view
                pi_idx = draw_pi(source, config.pi_fraction, (config.seed_pruning, t))
                pi_size = int(pi_idx.size)
                scores = selection_scores(
                    config.pruner, model, mask, dataset.x[pi_idx], dataset.y[pi_idx]
                )
            else:
                scores = selection_scores(
                    config.pruner, model, mask, seed=(config.seed_pruning, t)
                )
            new_mask = prune_global(mask, scores, keep)
            if observer is not None and hasattr(observer, "on_prune"):
                observer.on_prune(t, mask, new_mask)
            kept_before = mask.kept_count
            mask = new_mask
            apply_mask(model, mask)
            for name, m in mask.arrays.items():
                optim.velocity[name] *= m
            log_event(
                "prune", delta=float(delta), keep=keep,
                kept_before=kept_before, kept_after=mask.kept_count, pi_size=pi_size,
            )

        def train_span(first, last):
            nonlocal global_iter
            span = range(first, last + 1)
            snap, rec, records, global_iter = train_megabatch(
                model, mask, view, config, t,
                optim=optim, epochs=span, global_iter=global_iter, observer=observer,
            )
            log.epochs.extend(records)
            if records:
                log_event("train", first_epoch=first, last_epoch=last)
            return snap, rec, records

        if config.variant == "anytime_osp":
            if t == 1:
                prune_step(config.tau)
            best_snap, best_rec, _ = train_span(1, config.epochs)
        elif config.variant in ("app_default", "app_noreplay_snip"):
            prune_step(deltas[t - 1])
            best_snap, best_rec, _ = train_span(1, config.epochs)
        elif config.variant == "app_warmup":
            w = config.warmup_epochs
            if config.epochs <= w:
                w = math.ceil(config.epochs / 2)
                logger.warning(
                    "warmup_epochs %d >= epochs %d; pruning after epoch %d instead",
                    config.warmup_epochs, config.epochs, w,
                )
            _, warm_rec, _ = train_span(1, w)
            prune_step(deltas[t - 1])
            best_snap, best_rec, _ = train_span(w + 1, config.epochs)
            if best_snap is None:
                # degenerate k <= 1: no post-prune epochs to pick from
                best_snap, best_rec = model.snapshot(), warm_rec
        elif config.variant == "app_final":
            best_snap, best_rec, _ = train_span(1, config.epochs)
            model.restore(best_snap)
            prune_step(deltas[t - 1])
            best_snap = model.snapshot()
        else:  # baseline
            best_snap, best_rec, _ = train_span(1, config.epochs)

        model.restore(best_snap)

        preds = model.predict(dataset.x_test)
        errors = error_count(preds, dataset.y_test)
        gap = generalization_gap(best_rec.train_acc, best_rec.val_acc)
        if mask is not None:
            layers = layer_pruned_fraction(mask, model.registry)
            kept = mask.kept_count
        else:
            layers = [(e.name, 0.0) for e in model.registry.prunable()] + [("global", 0.0)]
            kept = total_prunable
        log.megabatches.append(
            MegabatchRecord(
                megabatch=t,
                best_epoch=best_rec.epoch,
                test_errors=errors,
                test_total=int(dataset.y_test.size),
                gen_gap_pp=gap,
                kept_count=kept,
                pi_size=pi_size,
                layer_pruned=layers,
                predictions=preds,
            )
        )
        log_event("eval", test_errors=errors)
        if observer is not None and hasattr(observer, "on_megabatch_end"):
            observer.on_megabatch_end(t, model, mask)

    log.wall_clock_seconds = time.perf_counter() - started
    return log
