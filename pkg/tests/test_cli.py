import json
from pathlib import Path

import numpy as np
import pytest

from degnerf import cli
from degnerf.config import RunConfig, from_dict, load_config
from degnerf.field.grid import load_field
from degnerf.scene_io import ValidationError, load_image, load_scene

COMMANDS = ["gen-toy", "degrade", "make-triplets", "restore", "train", "render", "eval",
            "viz-quadtree", "pipeline", "ablate"]

SMALL = {
    "toy": {"width": 32, "height": 32, "n_train": 4, "n_test": 2, "field_resolution": 32,
            "n_samples": 64, "aa": 1},
    "train": {"resolution": [12, 12, 12], "coarse_epochs": 1, "fine_epochs": 1,
              "n_samples": 24, "batch_rays": 1024},
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL))
    return path


@pytest.mark.parametrize("command", COMMANDS)
def test_help(command, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    assert "--out" in text and "--seed" in text


def test_guidance_off_quadtree_on_rejected(tmp_path, capsys):
    code = cli.main(["pipeline", "--out", str(tmp_path / "o"), "--guidance", "off",
                     "--quadtree", "on"])
    assert code == 2
    assert "quadtree" in capsys.readouterr().err


def test_missing_scene_reports_stage(tmp_path, capsys):
    code = cli.main(["pipeline", "--out", str(tmp_path / "o"), "--scene",
                     str(tmp_path / "none.json")])
    assert code == 1
    assert "stage 'load'" in capsys.readouterr().err


def test_pipeline_artifacts(tmp_path, small_config):
    out = tmp_path / "run"
    code = cli.main(["pipeline", "--scene", "toy", "--seed", "1", "--strategy", "identity",
                     "--config", str(small_config), "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    for key in ("theta", "field", "report", "config", "degraded", "restored", "tree_state"):
        assert key in summary["artifacts"]
    for path in summary["artifacts"].values():
        assert Path(path).exists(), path
    report = json.loads((out / "report.json").read_text())
    assert len(report["psnr"]) == 2
    assert summary["rays_used"] == report["rays_used"] > 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["seed"] == 1 and cfg["train"]["seed"] == 1
    assert "_sources" in cfg
    field_ = load_field(out / "field.bin")
    assert field_.resolution == (12, 12, 12)


def test_stage_commands(tmp_path):
    toy = tmp_path / "toy"
    assert cli.main(["gen-toy", "--out", str(toy), "--size", "24", "--views", "3",
                     "--test-views", "1", "--field-res", "24"]) == 0
    scene = toy / "transforms_train.json"
    assert load_scene(scene).width == 24

    assert cli.main(["degrade", "--scene", str(scene), "--seed", "3",
                     "--out", str(tmp_path / "deg")]) == 0
    theta = json.loads((tmp_path / "deg" / "theta.json").read_text())
    assert theta["seed"] == 3

    assert cli.main(["degrade", "--scene", str(scene), "--seed", "3", "--target-w", "16",
                     "--target-h", "12", "--out", str(tmp_path / "small")]) == 0
    small = load_scene(tmp_path / "small" / "transforms.json")
    assert (small.width, small.height) == (16, 12)

    assert cli.main(["make-triplets", "--clip", str(scene), "--seed", "0", "--count", "2",
                     "--out", str(tmp_path / "trip")]) == 0
    assert len((tmp_path / "trip" / "triplets.jsonl").read_text().splitlines()) == 2

    assert cli.main(["restore", "--scene", str(tmp_path / "deg" / "transforms.json"),
                     "--k", "1", "--out", str(tmp_path / "res")]) == 0
    a = load_scene(tmp_path / "res" / "transforms.json")
    b = load_scene(tmp_path / "deg" / "transforms.json")
    assert all(np.array_equal(x, y) for x, y in zip(a.images, b.images))

    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"train": {"resolution": [8, 8, 8], "coarse_epochs": 1,
                                         "fine_epochs": 1, "n_samples": 16}}))
    fld = tmp_path / "fit" / "field.bin"
    assert cli.main(["train", "--scene", str(scene), "--config", str(cfg), "--seed", "2",
                     "--out", str(fld)]) == 0
    assert (fld.parent / "train_log.jsonl").exists()
    assert (fld.parent / "tree_state.json").exists()

    png = tmp_path / "r.png"
    assert cli.main(["render", "--field", str(fld), "--pose", "0", "--scene", str(scene),
                     "--samples", "16", "--out", str(png)]) == 0
    assert load_image(png).shape == (24, 24, 3)

    pose = tmp_path / "pose.json"
    meta = json.loads(scene.read_text())
    pose.write_text(json.dumps({"width": 10, "height": 8,
                                "camera_angle_x": meta["camera_angle_x"],
                                "transform_matrix": meta["frames"][0]["transform_matrix"]}))
    assert cli.main(["render", "--field", str(fld), "--pose", str(pose), "--samples", "8",
                     "--bg", "white", "--out", str(tmp_path / "p.png")]) == 0
    assert load_image(tmp_path / "p.png").shape == (8, 10, 3)

    rep = tmp_path / "report.json"
    assert cli.main(["eval", "--field", str(fld), "--scene", str(toy / "transforms_test.json"),
                     "--samples", "16", "--out", str(rep)]) == 0
    assert len(json.loads(rep.read_text())["psnr"]) == 1

    viz = tmp_path / "viz"
    assert cli.main(["viz-quadtree", "--scene", str(scene), "--tree-state",
                     str(fld.parent / "tree_state.json"), "--out", str(viz)]) == 0
    assert len(list(viz.glob("quadtree_*.png"))) == 3


def test_render_bad_pose_index(tmp_path, capsys):
    toy = tmp_path / "toy"
    cli.main(["gen-toy", "--out", str(toy), "--size", "8", "--views", "2", "--test-views", "0",
              "--field-res", "8"])
    from degnerf.field.grid import VoxelField, save_field

    save_field(VoxelField.create((4, 4, 4), np.array([[-1.0] * 3, [1.0] * 3])), tmp_path / "f.bin")
    code = cli.main(["render", "--field", str(tmp_path / "f.bin"), "--pose", "5", "--scene",
                     str(toy / "transforms_train.json"), "--out", str(tmp_path / "x.png")])
    assert code == 2


def test_ablate_table(tmp_path, small_config):
    out = tmp_path / "abl"
    assert cli.main(["ablate", "--scene", "toy", "--seed", "0", "--config", str(small_config),
                     "--out", str(out)]) == 0
    table = json.loads((out / "ablation.json").read_text())
    assert table["columns"] == ["guidance", "quadtree", "psnr", "ssim", "rays", "seconds"]
    rows = table["rows"]
    assert len(rows) == 4
    assert all(set(r) == set(table["columns"]) and None not in r.values() for r in rows)
    by = {(r["guidance"], r["quadtree"]): r for r in rows}
    assert by[(True, True)]["rays"] < by[(True, False)]["rays"]
    assert by[(False, True)]["rays"] < by[(False, False)]["rays"]
    assert json.loads(json.dumps(table)) == table


# ---------------------------------------------------------------- config


def test_config_layering(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 4, "train": {"fine_epochs": 7},
                                "guidance": {"sigma": 0.5}}))
    cfg = load_config(path, {"seed": 9, "quadtree.mu": 0.5, "restore.k": None})
    assert cfg.seed == 9
    assert cfg.train.fine_epochs == 7 and cfg.train.coarse_epochs == 1
    assert cfg.guidance.sigma == 0.5
    assert cfg.quadtree.mu == 0.5
    assert cfg.restore.k == 3


def test_config_errors(tmp_path):
    with pytest.raises(ValidationError):
        from_dict({"bogus": 1})
    with pytest.raises(ValidationError):
        from_dict({"train": {"bogus": 1}})
    with pytest.raises(ValidationError):
        from_dict({"train": 3})
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.json")
    cfg = RunConfig(guidance_enabled=False)
    with pytest.raises(ValidationError):
        cfg.validate()


def test_config_roundtrip():
    cfg = RunConfig()
    back = from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back.to_dict() == cfg.to_dict()
