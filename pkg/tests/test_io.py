"""Config parsing, dataset ingestion, serialization, and the CLI surface."""

import json
import pathlib
import struct

import numpy as np
import pytest

from anyprune.cli import main
from anyprune.config import config_hash, parse_config, resolved_text
from anyprune.datasets import (
    gen_blobs,
    gen_digits,
    gen_spirals,
    load_csv,
    load_idx,
    write_idx,
)
from anyprune.errors import ConfigError, FormatError
from anyprune.harness import run
from anyprune.metrics import summarize
from anyprune.models import build_model, mlp_spec
from anyprune.optim import OptimState, sgd_momentum_step
from anyprune.reporting import (
    CURVES_COLUMNS,
    read_summary_json,
    summary_dict,
    write_run_dir,
    write_summary_json,
)

MINIMAL = """
variant = app_default
pruner = snip
tau = 4.5
megabatches = 8
dataset = synthetic_blobs
"""


class TestParseConfig:
    def test_minimal_fills_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.replay == "full"
        assert cfg.epochs == 30
        assert cfg.warmup_epochs == 20
        assert cfg.lr0 == 0.1 and cfg.lr_gamma == 0.1 and cfg.post_m1_lr == 0.001
        assert cfg.momentum == 0.9 and cfg.weight_decay == 0.0
        assert cfg.minibatch == 32 and cfg.pi_fraction == 0.2 and cfg.val_fraction == 0.1
        assert cfg.mlp_hidden == (256, 128)
        assert cfg.blob_classes == 5 and cfg.test_per_class == 40
        assert cfg.seed == cfg.seed_partition == cfg.seed_init == 0

    def test_no_replay_combinations_accepted(self):
        cfg = parse_config(MINIMAL + "replay = none\n")
        assert cfg.replay == "none"
        cfg = parse_config(
            "variant = app_noreplay_snip\ntau = 2\nmegabatches = 2\n"
            "dataset = synthetic_blobs\nreplay = none\n"
        )
        assert cfg.variant == "app_noreplay_snip" and cfg.pruner == "snip"

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(MINIMAL.replace("app_default", "app_sometimes"))

    def test_tau_below_one_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(MINIMAL.replace("4.5", "0.5"))

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config(MINIMAL + "fancy_option = 3\n")
        assert "fancy_option" in str(err.value)

    def test_inapplicable_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("variant = baseline\nmegabatches = 2\ndataset = synthetic_blobs\ntau = 2\n")
        with pytest.raises(ConfigError):
            parse_config(MINIMAL + "spiral_noise = 0.5\n")

    def test_missing_required_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("variant = app_default\npruner = snip\ntau = 2\ndataset = synthetic_blobs\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(MINIMAL + "tau = 4.5\n")

    def test_noreplay_snip_pins_pruner(self):
        with pytest.raises(ConfigError):
            parse_config(
                "variant = app_noreplay_snip\npruner = magnitude\ntau = 2\n"
                "megabatches = 2\ndataset = synthetic_blobs\n"
            )

    def test_echo_round_trips(self):
        cfg = parse_config(MINIMAL + "epochs = 7\nseed = 5\nseed_pruning = 9\n")
        again = parse_config(resolved_text(cfg))
        assert again == cfg
        assert config_hash(again) == config_hash(cfg)

    def test_colon_separator_accepted(self):
        cfg = parse_config("variant: baseline\nmegabatches: 2\ndataset: synthetic_blobs\n")
        assert cfg.variant == "baseline"

    def test_seed_override_preserves_explicit_subseeds(self):
        cfg = parse_config(MINIMAL + "seed_pruning = 9\n", seed_override=4)
        assert cfg.seed == 4
        assert cfg.seed_partition == 4
        assert cfg.seed_pruning == 9

    def test_file_source(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text(MINIMAL)
        assert parse_config(p).tau == 4.5
        assert parse_config(str(p)).tau == 4.5


class TestIdx:
    def test_hand_crafted_pair(self, tmp_path):
        images = tmp_path / "imgs.idx"
        labels = tmp_path / "lbls.idx"
        pixels = bytes([0, 64, 128, 255, 10, 20, 30, 40])
        images.write_bytes(struct.pack(">iiii", 0x00000803, 2, 2, 2) + pixels)
        labels.write_bytes(struct.pack(">ii", 0x00000801, 2) + bytes([3, 7]))
        x, y, shape = load_idx(images, labels)
        assert shape == (1, 2, 2)
        assert x.shape == (2, 4)
        assert x[0, 3] == 1.0  # byte 255 scales to exactly 1.0
        np.testing.assert_allclose(x[0], np.array([0, 64, 128, 255]) / 255.0)
        np.testing.assert_array_equal(y, [3, 7])

    def test_wrong_magic_rejected(self, tmp_path):
        images = tmp_path / "imgs.idx"
        labels = tmp_path / "lbls.idx"
        images.write_bytes(struct.pack(">iiii", 0x00000803, 1, 1, 1) + b"\x00")
        labels.write_bytes(struct.pack(">ii", 0x00000803, 1) + b"\x00")
        with pytest.raises(FormatError):
            load_idx(images, labels)

    def test_truncated_rejected(self, tmp_path):
        images = tmp_path / "imgs.idx"
        labels = tmp_path / "lbls.idx"
        images.write_bytes(struct.pack(">iiii", 0x00000803, 2, 2, 2) + b"\x00" * 5)
        labels.write_bytes(struct.pack(">ii", 0x00000801, 2) + b"\x00\x00")
        with pytest.raises(FormatError):
            load_idx(images, labels)

    def test_count_mismatch_rejected(self, tmp_path):
        images = tmp_path / "imgs.idx"
        labels = tmp_path / "lbls.idx"
        images.write_bytes(struct.pack(">iiii", 0x00000803, 1, 1, 1) + b"\x00")
        labels.write_bytes(struct.pack(">ii", 0x00000801, 2) + b"\x00\x00")
        with pytest.raises(FormatError):
            load_idx(images, labels)

    def test_round_trip(self, tmp_path):
        x, y, shape = gen_digits(per_class=3, seed=0, side=8)
        ip, lp = tmp_path / "a.idx", tmp_path / "b.idx"
        write_idx(x, y, ip, lp, shape)
        x2, y2, shape2 = load_idx(ip, lp)
        assert shape2 == shape
        np.testing.assert_array_equal(y2, y)
        # loaded pixels are k/255; writing re-rounds to the same bytes
        write_idx(x2, y2, tmp_path / "c.idx", tmp_path / "d.idx", shape)
        x3, y3, _ = load_idx(tmp_path / "c.idx", tmp_path / "d.idx")
        np.testing.assert_array_equal(x3, x2)
        np.testing.assert_array_equal(y3, y2)


class TestSynthetic:
    def test_blobs_deterministic(self):
        a = gen_blobs(2, 50, 2, 0.1, seed=0)
        b = gen_blobs(2, 50, 2, 0.1, seed=0)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.x_test, b.x_test)

    def test_blobs_linearly_separable_via_probe(self):
        ds = gen_blobs(2, 50, 2, 0.1, seed=0)
        model = build_model(mlp_spec(2, (), 2), seed=0)
        state = OptimState(model.params(), lr=0.5, momentum=0.9)
        params = model.params()
        for _ in range(200):
            _, grads = model.loss_and_grads(ds.x, ds.y)
            sgd_momentum_step(params, grads, state)
        acc = float((model.predict(ds.x) == ds.y).mean())
        assert acc >= 0.99

    def test_spirals_shapes_and_determinism(self):
        a = gen_spirals(3, 40, 0.05, seed=2)
        assert a.x.shape == (120, 2)
        assert a.class_count == 3
        b = gen_spirals(3, 40, 0.05, seed=2)
        np.testing.assert_array_equal(a.x, b.x)


class TestCsv:
    def test_parse_and_errors(self, tmp_path):
        p = tmp_path / "data.csv"
        p.write_text("f1,f2,label\n1.0,2.0,0\n3.5,4.0,1\n")
        x, y = load_csv(p, "label")
        np.testing.assert_allclose(x, [[1.0, 2.0], [3.5, 4.0]])
        np.testing.assert_array_equal(y, [0, 1])
        p.write_text("f1,f2,label\n1.0,2.0,abc\n")
        with pytest.raises(FormatError):
            load_csv(p, "label")
        p.write_text("f1,f2,label\n1.0,xyz,1\n")
        with pytest.raises(FormatError):
            load_csv(p, "label")
        p.write_text("f1,f2,label\n1.0,2.0,0\n")
        with pytest.raises(FormatError):
            load_csv(p, "other")


SMALL_RUN = """
variant = app_default
pruner = snip
tau = 2.0
megabatches = 2
dataset = synthetic_blobs
blob_classes = 3
blob_per_class = 40
blob_dim = 6
epochs = 3
mlp_hidden = 8
"""


@pytest.fixture(scope="module")
def small_run_dir(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("run")
    cfg = parse_config(SMALL_RUN)
    log = run(cfg)
    write_run_dir(log, outdir)
    return outdir, log


class TestReporting:
    def test_curves_golden_header_and_row_count(self, small_run_dir):
        outdir, log = small_run_dir
        lines = (outdir / "curves.csv").read_text().splitlines()
        assert lines[0] == ",".join(CURVES_COLUMNS)
        assert len(lines) == 1 + 2 * 3  # 2 megabatches x 3 epochs

    def test_megabatch_header_includes_layer_columns(self, small_run_dir):
        outdir, log = small_run_dir
        header = (outdir / "megabatches.csv").read_text().splitlines()[0]
        assert header == "megabatch,test_errors,test_acc,gen_gap,pruned_fc0_w,pruned_fc1_w"

    def test_summary_round_trip(self, small_run_dir, tmp_path):
        _, log = small_run_dir
        summary = summarize(log)
        path = tmp_path / "s.json"
        write_summary_json(summary, path)
        assert read_summary_json(path) == summary_dict(summary)

    def test_reserialization_is_byte_identical(self, small_run_dir, tmp_path):
        outdir, log = small_run_dir
        again = tmp_path / "again"
        write_run_dir(log, again)
        for name in ("curves.csv", "megabatches.csv", "predictions.csv", "summary.json",
                     "config.resolved", "events.csv", "gen_gap.svg", "cer.svg",
                     "layer_pruned.svg"):
            assert (outdir / name).read_bytes() == (again / name).read_bytes(), name

    def test_rerun_from_echo_reproduces_summary(self, small_run_dir, tmp_path):
        outdir, _ = small_run_dir
        cfg = parse_config(pathlib.Path(outdir / "config.resolved"))
        log = run(cfg)
        again = tmp_path / "echo"
        write_run_dir(log, again)
        assert (outdir / "summary.json").read_bytes() == (again / "summary.json").read_bytes()
        assert (outdir / "curves.csv").read_bytes() == (again / "curves.csv").read_bytes()

    def test_meta_carries_identity(self, small_run_dir):
        outdir, log = small_run_dir
        meta = json.loads((outdir / "meta.json").read_text())
        assert meta["run_id"] == log.run_id
        assert meta["config_hash"] == log.config_hash
        assert meta["variant"] == "app_default"


class TestCli:
    def test_run_subcommand(self, tmp_path):
        cfg_path = tmp_path / "a.cfg"
        cfg_path.write_text(SMALL_RUN)
        out = tmp_path / "out"
        assert main(["run", str(cfg_path), "--out", str(out)]) == 0
        for name in ("summary.json", "curves.csv", "megabatches.csv", "gen_gap.svg"):
            assert (out / name).exists()

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("variant = nope\nmegabatches = 2\ndataset = synthetic_blobs\n")
        assert main(["run", str(bad)]) == 1

    def test_runtime_error_exit_code(self, tmp_path):
        cfg = tmp_path / "missing.cfg"
        cfg.write_text(
            "variant = baseline\nmegabatches = 2\ndataset = idx\n"
            "idx_train_images = /nonexistent/a\nidx_train_labels = /nonexistent/b\n"
            "idx_test_images = /nonexistent/c\nidx_test_labels = /nonexistent/d\n"
        )
        assert main(["run", str(cfg)]) == 2

    def test_sweep_and_plot(self, tmp_path):
        cfg_dir = tmp_path / "cfgs"
        cfg_dir.mkdir()
        (cfg_dir / "one.cfg").write_text(SMALL_RUN)
        (cfg_dir / "two.cfg").write_text(SMALL_RUN.replace("app_default", "baseline").replace("pruner = snip\n", "").replace("tau = 2.0\n", ""))
        out = tmp_path / "sweep_out"
        assert main(["sweep", str(cfg_dir), "--out", str(out)]) == 0
        assert (out / "one" / "summary.json").exists()
        assert (out / "two" / "summary.json").exists()
        before = (out / "one" / "cer.svg").read_bytes()
        (out / "one" / "cer.svg").unlink()
        assert main(["plot", str(out / "one")]) == 0
        assert (out / "one" / "cer.svg").read_bytes() == before

    def test_sweep_parallel(self, tmp_path):
        cfg_dir = tmp_path / "cfgs"
        cfg_dir.mkdir()
        (cfg_dir / "s1.cfg").write_text(SMALL_RUN)
        (cfg_dir / "s2.cfg").write_text(SMALL_RUN.replace("seed = 0", "").rstrip() + "\nseed = 3\n")
        out = tmp_path / "par_out"
        assert main(["sweep", str(cfg_dir), "--out", str(out), "--parallel", "2"]) == 0
        assert (out / "s1" / "summary.json").exists()
        assert (out / "s2" / "summary.json").exists()
