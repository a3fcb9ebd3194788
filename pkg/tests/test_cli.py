import csv
import json
import math
import struct

import numpy as np
import pytest

from spbp import cli
from spbp.complexity import count_multadds
from spbp.imaging import bicubic_resize, from_tensor, load_png, save_png, to_tensor, write_manifest
from spbp.network import NetworkConfig, build_network
from spbp.weights import WeightFileError, decode, encode, load_weights, save_weights

TINY = {"f": 4, "G": 1}


@pytest.fixture
def dataset(tmp_path):
    r = np.random.default_rng(21)
    names = []
    for i in range(2):
        save_png(r.integers(0, 256, (24, 24, 3), dtype=np.uint8), tmp_path / f"hr{i}.png")
        names.append(f"hr{i}.png")
    write_manifest(tmp_path / "train.txt", names, scale=2)
    return tmp_path


def write_config(dirpath, **overrides):
    cfg = {
        "model": TINY,
        "train": {"epochs": 3, "batch_size": 4, "crops_per_image": 3, "crop_size": 6,
                  "lr0": 1e-3, "decay_every": 2, "seed": 4},
        "manifest": "train.txt",
        "out_dir": "run",
    }
    cfg.update(overrides)
    path = dirpath / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestWeightFile:
    def test_round_trip_byte_identical(self, tmp_path):
        net = build_network(NetworkConfig(f=4, G=2), seed=1)
        save_weights(net, tmp_path / "a.spbp")
        back = load_weights(tmp_path / "a.spbp")
        save_weights(back, tmp_path / "b.spbp")
        assert (tmp_path / "a.spbp").read_bytes() == (tmp_path / "b.spbp").read_bytes()
        assert back.cfg == net.cfg
        assert all(np.array_equal(back.params[k], net.params[k]) for k in net.params)

    def test_layout(self):
        net = build_network(NetworkConfig(f=4, G=1), seed=0)
        data = encode(net)
        magic, version, head_len = struct.unpack_from("<4sIQ", data)
        assert magic == b"SPBP" and version == 1
        header = json.loads(data[16:16 + head_len])
        assert header["dtype"] == "f32"
        assert [t["name"] for t in header["tensors"]] == list(net.params)
        n = sum(math.prod(t["shape"]) for t in header["tensors"])
        assert len(data) == 16 + head_len + 4 * n
        first = net.params[header["tensors"][0]["name"]].ravel()[0]
        assert struct.unpack_from("<f", data, 16 + head_len)[0] == first

    def test_corruption(self):
        data = encode(build_network(NetworkConfig(f=4, G=1)))
        for bad in (b"XXXX" + data[4:], data[:4] + struct.pack("<I", 2) + data[8:], data[:-4], data[:10]):
            with pytest.raises(WeightFileError):
                decode(bad)

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_weights(tmp_path / "none.spbp")


class TestAnalyze:
    def test_matches_library(self, capsys, tmp_path):
        assert cli.main(["analyze", "--preset", "M", "--out", str(tmp_path / "m.csv")]) == 0
        out = capsys.readouterr().out.strip()
        assert out == count_multadds(NetworkConfig.preset("M"), 1280, 720).summary()
        assert (tmp_path / "m.csv").read_text() == count_multadds(NetworkConfig.preset("M")).to_csv()

    def test_explicit_dims(self, capsys):
        assert cli.main(["analyze", "--f", "8", "--G", "2", "--hr", "64x32"]) == 0
        last = capsys.readouterr().out.strip().splitlines()[-1]
        assert last == count_multadds(NetworkConfig(f=8, G=2), 64, 32).summary()

    def test_invalid(self, capsys):
        assert cli.main(["analyze", "--preset", "S", "--hr", "1279x720"]) == 1
        assert cli.main(["analyze", "--f", "8"]) == 1
        assert "error" in capsys.readouterr().err


class TestSr:
    def test_output_size_and_bypass(self, tmp_path):
        lr = np.random.default_rng(2).integers(0, 256, (9, 7, 3), dtype=np.uint8)
        save_png(lr, tmp_path / "in.png")
        save_weights(build_network(NetworkConfig(f=4, G=1)).zero_(), tmp_path / "zero.spbp")
        rc = cli.main(["sr", "--weights", str(tmp_path / "zero.spbp"),
                       "--in", str(tmp_path / "in.png"), "--out", str(tmp_path / "out.png")])
        assert rc == 0
        out = load_png(tmp_path / "out.png")
        assert out.shape == (18, 14, 3)
        assert np.array_equal(out, from_tensor(np.clip(bicubic_resize(to_tensor(lr), 2), 0, 1)))

    def test_identity_ensemble_equals_plain(self, tmp_path):
        lr = np.random.default_rng(3).integers(0, 256, (8, 8, 3), dtype=np.uint8)
        save_png(lr, tmp_path / "in.png")
        save_weights(build_network(NetworkConfig(f=4, G=2), seed=5), tmp_path / "w.spbp")
        base = ["sr", "--weights", str(tmp_path / "w.spbp"), "--in", str(tmp_path / "in.png")]
        cli.main(base + ["--out", str(tmp_path / "plain.png")])
        cli.main(base + ["--out", str(tmp_path / "ens.png"), "--ensemble", "--ensemble-set", "identity"])
        assert (tmp_path / "plain.png").read_bytes() == (tmp_path / "ens.png").read_bytes()

    def test_bad_weights(self, tmp_path, capsys):
        (tmp_path / "w.spbp").write_bytes(b"nope")
        save_png(np.zeros((4, 4, 3), np.uint8), tmp_path / "in.png")
        rc = cli.main(["sr", "--weights", str(tmp_path / "w.spbp"), "--in", str(tmp_path / "in.png"),
                       "--out", str(tmp_path / "o.png")])
        assert rc == 1 and not (tmp_path / "o.png").exists()


class TestEval:
    def test_csv_and_mean_row(self, dataset):
        save_weights(build_network(NetworkConfig(f=4, G=1)).zero_(), dataset / "zero.spbp")
        rc = cli.main(["eval", "--weights", str(dataset / "zero.spbp"),
                       "--manifest", str(dataset / "train.txt"), "--out", str(dataset / "e.csv")])
        assert rc == 0
        rows = list(csv.DictReader((dataset / "e.csv").open()))
        assert [r["image"] for r in rows] == ["hr0", "hr1", "mean"]
        body = rows[:2]
        assert float(rows[2]["psnr_db"]) == pytest.approx(sum(float(r["psnr_db"]) for r in body) / 2, abs=1e-12)
        assert float(rows[2]["ssim"]) == pytest.approx(sum(float(r["ssim"]) for r in body) / 2, abs=1e-12)

    def test_hr_against_itself(self, tmp_path):
        from spbp.metrics import score
        hr = np.random.default_rng(6).integers(0, 256, (16, 16, 3), dtype=np.uint8)
        q = score(hr, hr)
        cli.write_eval_csv([("a", q.psnr_db, q.ssim)], tmp_path / "e.csv")
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines == ["image,psnr_db,ssim", "a,inf,1.0", "mean,inf,1.0"]


class TestTrain:
    def test_outputs_and_rerun_identical(self, dataset):
        cfg = write_config(dataset)
        assert cli.main(["train", "--config", str(cfg)]) == 0
        run = dataset / "run"
        first = {p.name: p.read_bytes() for p in run.iterdir()}
        assert set(first) == {"loss.csv", "weights.spbp", "epoch_0002.spbp"}
        rows = list(csv.DictReader(io_lines(first["loss.csv"])))
        assert len(rows) == 3
        assert [float(r["lr"]) for r in rows] == [1e-3, 1e-3, 5e-4]
        assert cli.main(["train", "--config", str(cfg)]) == 0
        assert {p.name: p.read_bytes() for p in run.iterdir()} == first

    def test_seed_flag_changes_weights(self, dataset):
        cfg = write_config(dataset, train={"epochs": 1, "crop_size": 6, "crops_per_image": 1})
        cli.main(["train", "--config", str(cfg), "--seed", "1"])
        a = (dataset / "run" / "weights.spbp").read_bytes()
        cli.main(["train", "--config", str(cfg), "--seed", "2"])
        assert (dataset / "run" / "weights.spbp").read_bytes() != a

    @pytest.mark.parametrize("overrides", [
        {"model": {"f": 0, "G": 1}},
        {"train": {"lr0": -1}},
        {"train": {"bogus": 1}},
        {"train": {"crop_size": 50}},
        {"manifest": "missing.txt"},
        {"model": {"preset": "S", "s": 3}},
        {"extra": 1},
    ])
    def test_invalid_config_writes_nothing(self, dataset, overrides, capsys):
        cfg = write_config(dataset, **overrides)
        assert cli.main(["train", "--config", str(cfg)]) == 1
        assert not (dataset / "run").exists()
        assert "error" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path):
        (tmp_path / "c.json").write_text("{not json")
        assert cli.main(["train", "--config", str(tmp_path / "c.json")]) == 1


def io_lines(data: bytes):
    return data.decode().splitlines()
