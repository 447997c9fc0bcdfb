"""Variant mechanics: event order, pi sizes, carryover, and mask trajectories."""

import numpy as np
import pytest

from anyprune.config import parse_config
from anyprune.harness import run, train_megabatch
from anyprune.models import build_model, mlp_spec
from anyprune.pruning import keep_count, make_delta_schedule
from anyprune.rng import round_half_up
from anyprune.stream import build_stream, replay_view


def _cfg(**overrides):
    base = {
        "variant": "app_default",
        "pruner": "snip",
        "tau": "3.0",
        "megabatches": "3",
        "dataset": "synthetic_blobs",
        "blob_classes": "3",
        "blob_per_class": "60",
        "blob_dim": "8",
        "epochs": "2",
        "mlp_hidden": "12",
        "lr_mode": "cyclic_every_mt",
    }
    base.update({k: str(v) for k, v in overrides.items()})
    if base.get("variant") == "baseline":
        for key in ("pruner", "tau"):
            base.pop(key, None)
    text = "\n".join(f"{k} = {v}" for k, v in base.items())
    return parse_config(text)


def _event_kinds(log, t):
    return [e.kind for e in log.events if e.megabatch == t]


def _prune_events(log):
    return [e for e in log.events if e.kind == "prune"]


class TestVariantEventOrder:
    def test_app_default_prunes_before_training(self):
        log = run(_cfg())
        for t in (1, 2, 3):
            assert _event_kinds(log, t) == ["prune", "train", "eval"]

    def test_app_final_prunes_after_training(self):
        log = run(_cfg(variant="app_final"))
        for t in (1, 2, 3):
            assert _event_kinds(log, t) == ["train", "prune", "eval"]

    def test_app_warmup_prunes_after_exactly_warmup_epochs(self):
        log = run(_cfg(variant="app_warmup", epochs=22, warmup_epochs=20))
        for t in (1, 2, 3):
            events = [e for e in log.events if e.megabatch == t]
            assert [e.kind for e in events] == ["train", "prune", "train", "eval"]
            assert events[0].detail == {"first_epoch": 1, "last_epoch": 20}
            assert events[2].detail == {"first_epoch": 21, "last_epoch": 22}

    def test_warmup_short_run_prunes_at_half(self):
        log = run(_cfg(variant="app_warmup", epochs=4, warmup_epochs=20))
        events = [e for e in log.events if e.megabatch == 1]
        assert events[0].detail == {"first_epoch": 1, "last_epoch": 2}

    def test_baseline_never_prunes(self):
        log = run(_cfg(variant="baseline"))
        assert _prune_events(log) == []
        assert all(r.kept_count == log.prunable_total for r in log.epochs)
        assert all(r.kept_count == log.prunable_total for r in log.megabatches)

    def test_osp_prunes_once_at_start(self):
        log = run(_cfg(variant="anytime_osp"))
        prunes = _prune_events(log)
        assert len(prunes) == 1 and prunes[0].megabatch == 1
        want = keep_count(3.0, log.prunable_total)
        assert all(r.kept_count == want for r in log.megabatches)

    def test_osp_mask_bit_identical_across_megabatches(self):
        class MaskTrace:
            def __init__(self):
                self.per_megabatch = []

            def on_megabatch_end(self, t, model, mask):
                self.per_megabatch.append({k: v.copy() for k, v in mask.arrays.items()})

        trace = MaskTrace()
        run(_cfg(variant="anytime_osp"), observer=trace)
        first = trace.per_megabatch[0]
        for later in trace.per_megabatch[1:]:
            for name, arr in first.items():
                np.testing.assert_array_equal(later[name], arr)


class TestPiSizes:
    def test_noreplay_snip_draws_from_current_megabatch(self):
        log = run(_cfg(variant="app_noreplay_snip"))
        # train split per megabatch: 60 samples -> 54 train; pi = round(0.2*54)
        sizes = [e.detail["pi_size"] for e in _prune_events(log)]
        assert sizes == [round_half_up(0.2 * 54)] * 3

    def test_default_pi_grows_with_replay(self):
        log = run(_cfg())
        sizes = [e.detail["pi_size"] for e in _prune_events(log)]
        assert sizes == [round_half_up(0.2 * 54 * t) for t in (1, 2, 3)]

    def test_noreplay_snip_still_trains_on_replay_view(self):
        log = run(_cfg(variant="app_noreplay_snip"))
        by_mb = {r.megabatch: r.train_total for r in log.epochs}
        assert by_mb == {1: 54, 2: 108, 3: 162}

    def test_data_free_pruners_skip_pi(self):
        log = run(_cfg(pruner="magnitude"))
        assert all(e.detail["pi_size"] is None for e in _prune_events(log))


class TestSparsityTrajectory:
    def test_app_kept_counts_follow_schedule(self):
        log = run(_cfg())
        deltas = make_delta_schedule(3.0, 3).values
        want = [keep_count(d, log.prunable_total) for d in deltas]
        assert [r.kept_count for r in log.megabatches] == want
        assert all(a >= b for a, b in zip(want, want[1:]))

    def test_app_final_mask_lags_during_training(self):
        log = run(_cfg(variant="app_final"))
        deltas = make_delta_schedule(3.0, 3).values
        want = [keep_count(d, log.prunable_total) for d in deltas]
        # megabatch t trains under the previous mask, then prunes at the end
        for rec in log.epochs:
            expected = log.prunable_total if rec.megabatch == 1 else want[rec.megabatch - 2]
            assert rec.kept_count == expected
        assert [r.kept_count for r in log.megabatches] == want

    def test_warmup_epoch_records_switch_mid_megabatch(self):
        log = run(_cfg(variant="app_warmup", epochs=6, warmup_epochs=2))
        deltas = make_delta_schedule(3.0, 3).values
        want = [keep_count(d, log.prunable_total) for d in deltas]
        for rec in log.epochs:
            before = log.prunable_total if rec.megabatch == 1 else want[rec.megabatch - 2]
            assert rec.kept_count == (before if rec.epoch <= 2 else want[rec.megabatch - 1])


class _CarryoverObserver:
    def __init__(self):
        self.start = {}
        self.end = {}
        self.epoch_end = {}

    def on_megabatch_start(self, t, model, mask):
        self.start[t] = model.snapshot()

    def on_megabatch_end(self, t, model, mask):
        self.end[t] = model.snapshot()

    def on_step(self, t, epoch, model, optim, mask):
        self.epoch_end[(t, epoch)] = model.snapshot()


class TestCheckpointCarryover:
    def test_best_checkpoint_enters_next_megabatch(self):
        obs = _CarryoverObserver()
        log = run(_cfg(epochs=3), observer=obs)
        for t in (1, 2):
            for name, arr in obs.end[t].items():
                np.testing.assert_array_equal(obs.start[t + 1][name], arr)

    def test_megabatch_end_params_equal_best_epoch_params(self):
        obs = _CarryoverObserver()
        log = run(_cfg(variant="baseline", epochs=3), observer=obs)
        for rec in log.megabatches:
            best = obs.epoch_end[(rec.megabatch, rec.best_epoch)]
            for name, arr in obs.end[rec.megabatch].items():
                np.testing.assert_array_equal(best[name], arr)

    def test_best_epoch_is_earliest_argmax(self):
        log = run(_cfg(variant="baseline", epochs=4))
        for rec in log.megabatches:
            epochs = [r for r in log.epochs if r.megabatch == rec.megabatch]
            best_val = max(r.val_correct for r in epochs)
            first_best = min(r.epoch for r in epochs if r.val_correct == best_val)
            assert rec.best_epoch == first_best


class TestTrainMegabatch:
    def test_zero_epochs_is_noop(self):
        cfg = _cfg()
        from anyprune.harness import dataset_for_config

        dataset = dataset_for_config(cfg)
        stream = build_stream(dataset, cfg.megabatches, cfg.val_fraction, None, cfg.seed_partition)
        model = build_model(mlp_spec(8, (12,), 3), seed=cfg.seed_init)
        before = model.snapshot()
        snap, rec, records, gi = train_megabatch(
            model, None, replay_view(stream, 1, "full"), cfg, 1, epochs=range(0),
        )
        assert snap is None and rec is None and records == [] and gi == 0
        for name, arr in before.items():
            np.testing.assert_array_equal(model.registry[name].tensor.data, arr)


class TestGlobalIter:
    def test_counts_accumulate_across_stream(self):
        log = run(_cfg(minibatch=10))
        last = 0
        for rec in log.epochs:
            steps = -(-rec.train_total // 10)  # ceil division
            assert rec.global_iter == last + steps
            last = rec.global_iter


class TestOtherSourcesAndPruners:
    def test_spiral_dataset_run_completes(self):
        cfg = parse_config(
            """
            variant = app_default
            pruner = magnitude
            tau = 2.0
            megabatches = 2
            dataset = synthetic_spirals
            spiral_per_class = 50
            epochs = 2
            mlp_hidden = 16
            """
        )
        log = run(cfg)
        assert len(log.megabatches) == 2

    def test_convnet_run_on_idx_digits(self, tmp_path):
        from anyprune.datasets import gen_digits, write_idx

        x, y, shape = gen_digits(per_class=20, seed=3, side=8)
        write_idx(x, y, tmp_path / "ti", tmp_path / "tl", shape)
        xt, yt, _ = gen_digits(per_class=4, seed=4, side=8)
        write_idx(xt, yt, tmp_path / "si", tmp_path / "sl", shape)
        cfg = parse_config(
            f"""
            variant = app_default
            pruner = snip
            tau = 2.0
            megabatches = 2
            dataset = idx
            idx_train_images = {tmp_path / 'ti'}
            idx_train_labels = {tmp_path / 'tl'}
            idx_test_images = {tmp_path / 'si'}
            idx_test_labels = {tmp_path / 'sl'}
            epochs = 2
            model = convnet
            conv_channels = 4,8
            minibatch = 16
            """
        )
        log = run(cfg)
        assert log.layer_names == ["conv0_w", "conv1_w", "fc0_w"]
        assert len(log.megabatches) == 2

    @pytest.mark.parametrize("pruner", ["random", "grasp"])
    def test_remaining_pruners_complete(self, pruner):
        log = run(_cfg(pruner=pruner, epochs=1))
        assert [r.kept_count for r in log.megabatches] == [
            keep_count(d, log.prunable_total)
            for d in make_delta_schedule(3.0, 3).values
        ]


class TestDegenerateEquivalence:
    def test_single_megabatch_app_equals_osp(self):
        a = run(_cfg(megabatches=1, epochs=3))
        b = run(_cfg(variant="anytime_osp", megabatches=1, epochs=3))
        assert [r.test_errors for r in a.megabatches] == [r.test_errors for r in b.megabatches]
        assert [r.kept_count for r in a.megabatches] == [r.kept_count for r in b.megabatches]
        ea = [(r.epoch, r.train_correct, r.val_correct, r.train_loss) for r in a.epochs]
        eb = [(r.epoch, r.train_correct, r.val_correct, r.train_loss) for r in b.epochs]
        assert ea == eb
        np.testing.assert_array_equal(a.megabatches[0].predictions, b.megabatches[0].predictions)
