import csv
import io
import json
import shutil

import numpy as np
import pytest

from selfusion.cli import collect_views, emit_views, main, write_phantom_dataset
from selfusion.fusion import FusionParams, confidence_map, self_fuse
from selfusion.metrics import evaluate_dataset
from selfusion.phantom import PhantomSpec, VoterNoiseModel
from selfusion.volume import BinaryMask, Volume, read_volume, write_volume
from selfusion.xform import apply, enumerate_views, view_transform

SMALL = PhantomSpec(dims=(20, 22, 24), lesion_count=2, lesion_radius_range=(2.0, 3.0))


@pytest.fixture(scope="module")
def phantom_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("phantom")
    write_phantom_dataset(out, SMALL, VoterNoiseModel(fp_blob_count=2), scans=3)
    return out


def test_emit_views_layout(tmp_path):
    rng = np.random.default_rng(0)
    vol = Volume(rng.standard_normal((4, 5, 6)).astype(np.float32), (1.0, 1.5, 2.0))
    write_volume(vol, tmp_path / "in.nii.gz")
    assert main(["emit-views", str(tmp_path / "in.nii.gz"), "--out-dir", str(tmp_path / "o")]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["schema"] == "selfusion.views/1"
    assert manifest["convention"] == "selfusion-xform/1:none-flip"
    assert [e["key"] for e in manifest["entries"]] == [str(k) for k in enumerate_views()]
    assert len(list((tmp_path / "o" / "views").iterdir())) == 24
    ident = read_volume(tmp_path / "o" / "views" / "axial_0_none.nii.gz")
    assert ident == vol
    turned = read_volume(tmp_path / "o" / "views" / "sagittal_90_flip.nii.gz")
    assert turned == apply(view_transform("sagittal:90:flip"), vol)


def _write_masks(out, manifest, masks):
    for e, m in zip(manifest["entries"], masks):
        write_volume(apply(view_transform(e["key"]), m), out / e["mask"])


def test_emit_collect_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    write_volume(Volume(np.zeros((5, 6, 7), dtype=np.float32)), tmp_path / "in.mvol")
    manifest = emit_views(tmp_path / "in.mvol", tmp_path / "o", "mvol")
    masks = [BinaryMask((rng.random((5, 6, 7)) < 0.3).astype(np.uint8)) for _ in range(24)]
    _write_masks(tmp_path / "o", manifest, masks)
    got = collect_views(tmp_path / "o" / "manifest.json")
    assert all(a == b for a, b in zip(got, masks))


def test_missing_view_exit_code(tmp_path, capsys):
    write_volume(Volume(np.zeros((3, 4, 5), dtype=np.float32)), tmp_path / "in.mvol")
    manifest = emit_views(tmp_path / "in.mvol", tmp_path / "o", "mvol")
    _write_masks(tmp_path / "o", manifest, [BinaryMask(np.zeros((3, 4, 5), dtype=np.uint8))] * 24)
    (tmp_path / "o" / "masks" / "coronal_270_flip.mvol").unlink()
    code = main(["fuse", "--manifest", str(tmp_path / "o" / "manifest.json"),
                 "--out-mask", str(tmp_path / "f.mvol")])
    assert code == 4
    assert "coronal:270:flip" in capsys.readouterr().err


def test_mask_shape_mismatch_exit_code(tmp_path, capsys):
    write_volume(Volume(np.zeros((3, 4, 5), dtype=np.float32)), tmp_path / "in.mvol")
    manifest = emit_views(tmp_path / "in.mvol", tmp_path / "o", "mvol")
    _write_masks(tmp_path / "o", manifest, [BinaryMask(np.zeros((3, 4, 5), dtype=np.uint8))] * 24)
    write_volume(BinaryMask(np.zeros((3, 3, 3), dtype=np.uint8)), tmp_path / "o" / "masks" / "axial_90_none.mvol")
    code = main(["fuse", "--manifest", str(tmp_path / "o" / "manifest.json"),
                 "--out-mask", str(tmp_path / "f.mvol")])
    assert code == 3
    assert "axial:90:none" in capsys.readouterr().err


def test_wrong_manifest_version(tmp_path):
    write_volume(Volume(np.zeros((2, 2, 2), dtype=np.float32)), tmp_path / "in.mvol")
    emit_views(tmp_path / "in.mvol", tmp_path / "o", "mvol")
    path = tmp_path / "o" / "manifest.json"
    doc = json.loads(path.read_text())
    doc["convention"] = "selfusion-xform/0:none-flip"
    path.write_text(json.dumps(doc))
    assert main(["fuse", "--manifest", str(path), "--out-mask", str(tmp_path / "f.mvol")]) == 3


def test_fuse_matches_library(phantom_dir, tmp_path):
    manifest = phantom_dir / "scan000" / "manifest.json"
    out = tmp_path / "fused.nii.gz"
    assert main(["fuse", "--manifest", str(manifest), "--out-mask", str(out),
                 "--out-confidence", str(tmp_path / "conf.nii.gz"), "--tau1", "16", "--tau2", "6"]) == 0
    ref, conf = self_fuse(collect_views(manifest), FusionParams(16, 6))
    assert read_volume(out, as_mask=True) == ref
    assert np.array_equal(read_volume(tmp_path / "conf.nii.gz").array, conf.array)
    # the cached confidence map fuses to the same mask
    out2 = tmp_path / "fused2.mvol"
    assert main(["fuse", "--confidence", str(phantom_dir / "scan000" / "confidence.mvol"),
                 "--out-mask", str(out2), "--tau1", "16", "--tau2", "6"]) == 0
    assert read_volume(out2, as_mask=True) == ref


def test_fuse_bad_thresholds(phantom_dir, tmp_path):
    code = main(["fuse", "--confidence", str(phantom_dir / "scan000" / "confidence.mvol"),
                 "--out-mask", str(tmp_path / "x.mvol"), "--tau1", "5", "--tau2", "9"])
    assert code == 2


def test_fuse_unreadable_input(tmp_path):
    (tmp_path / "bad.mvol").write_bytes(b"garbage")
    code = main(["fuse", "--confidence", str(tmp_path / "bad.mvol"), "--out-mask", str(tmp_path / "x.mvol")])
    assert code == 3
    assert main(["fuse", "--confidence", str(tmp_path / "none.mvol"), "--out-mask", str(tmp_path / "x.mvol")]) == 3


def test_metrics_single_scan(tmp_path, capsys):
    g = np.zeros((6, 6, 6), dtype=np.uint8)
    g[1:3, 1:3, 1:3] = 1
    write_volume(BinaryMask(g), tmp_path / "g.mvol")
    assert main(["metrics", "--pred", str(tmp_path / "g.mvol"), "--gt", str(tmp_path / "g.mvol")]) == 0
    doc = json.loads(capsys.readouterr().out)
    scan = doc["scans"][0]
    assert (scan["dsc"], scan["ppv"], scan["tpr"], scan["ltpr"], scan["lfpr"]) == (1.0, 1.0, 1.0, 1.0, 0.0)
    assert doc["dataset"]["vc"] is None

    p = np.zeros_like(g)
    p[4:6, 4:6, 4:6] = 1
    write_volume(BinaryMask(p), tmp_path / "p.mvol")
    assert main(["metrics", "--pred", str(tmp_path / "p.mvol"), "--gt", str(tmp_path / "g.mvol"),
                 "--output-format", "csv"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[1][1:6] == ["0.0", "0.0", "0.0", "0.0", "1.0"]


def test_metrics_dataset_matches_library(phantom_dir, tmp_path, capsys):
    scans = []
    pairs = []
    for i in range(3):
        sid = f"scan{i:03d}"
        fused, _ = self_fuse(collect_views(phantom_dir / sid / "manifest.json"), FusionParams())
        write_volume(fused, tmp_path / f"{sid}_pred.mvol")
        shutil.copy(phantom_dir / sid / "gt.mvol", tmp_path / f"{sid}_gt.mvol")
        scans.append({"id": sid, "pred": f"{sid}_pred.mvol", "gt": f"{sid}_gt.mvol"})
        pairs.append((fused, read_volume(phantom_dir / sid / "gt.mvol", as_mask=True)))
    (tmp_path / "ds.json").write_text(json.dumps({"schema": "selfusion.dataset/1", "scans": scans}))
    assert main(["metrics", "--dataset", str(tmp_path / "ds.json"), "--out", str(tmp_path / "r.json")]) == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    ref = evaluate_dataset(pairs, scan_ids=[s["id"] for s in scans])
    assert doc == json.loads(ref.to_json())


def test_metrics_bad_weights(tmp_path):
    write_volume(BinaryMask(np.ones((2, 2, 2), dtype=np.uint8)), tmp_path / "g.mvol")
    args = ["metrics", "--pred", str(tmp_path / "g.mvol"), "--gt", str(tmp_path / "g.mvol")]
    assert main(args + ["--weights", '{"w_dsc": 0.9}']) == 2
    assert main(args + ["--weights", "not json"]) == 2


def test_metrics_shape_mismatch(tmp_path):
    write_volume(BinaryMask(np.ones((2, 2, 2), dtype=np.uint8)), tmp_path / "a.mvol")
    write_volume(BinaryMask(np.ones((2, 2, 3), dtype=np.uint8)), tmp_path / "b.mvol")
    assert main(["metrics", "--pred", str(tmp_path / "a.mvol"), "--gt", str(tmp_path / "b.mvol")]) == 3


def test_sweep_cell_equals_metrics(phantom_dir, tmp_path, capsys):
    assert main(["sweep", "--dataset", str(phantom_dir / "dataset.json"),
                 "--tau1", "18", "--tau2", "8"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 1
    pairs = []
    for i in range(3):
        d = phantom_dir / f"scan{i:03d}"
        fused, _ = self_fuse(collect_views(d / "manifest.json"), FusionParams(18, 8))
        pairs.append((fused, read_volume(d / "gt.mvol", as_mask=True)))
    summary = evaluate_dataset(pairs).summary()
    for k, v in summary.items():
        assert float(rows[0][k]) == v


def test_sweep_from_views_with_cache(phantom_dir, tmp_path):
    doc = json.loads((phantom_dir / "dataset.json").read_text())
    for s in doc["scans"]:
        del s["confidence"]
    ds = phantom_dir / "views_only.json"
    ds.write_text(json.dumps(doc))
    args = ["sweep", "--dataset", str(ds), "--tau1", "10:12", "--tau2", "0:2",
            "--cache-dir", str(tmp_path / "cache")]
    assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert len(list((tmp_path / "cache").iterdir())) == 3
    assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
    assert main(["sweep", "--dataset", str(phantom_dir / "dataset.json"), "--tau1", "10:12",
                 "--tau2", "0:2", "--out", str(tmp_path / "c.csv")]) == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()
    assert len(a.splitlines()) == 1 + 9


def test_sweep_full_grid_deterministic(phantom_dir, tmp_path):
    ds = str(phantom_dir / "dataset.json")
    assert main(["sweep", "--dataset", ds, "--out", str(tmp_path / "a.csv")]) == 0
    assert main(["sweep", "--dataset", ds, "--jobs", "2", "--out", str(tmp_path / "b.csv")]) == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    assert len(a.decode().splitlines()) == 301


def test_sweep_empty_dataset(tmp_path):
    (tmp_path / "ds.json").write_text(json.dumps({"schema": "selfusion.dataset/1", "scans": []}))
    assert main(["sweep", "--dataset", str(tmp_path / "ds.json")]) == 2


def test_sweep_wrong_schema(tmp_path):
    (tmp_path / "ds.json").write_text(json.dumps({"schema": "other", "scans": []}))
    assert main(["sweep", "--dataset", str(tmp_path / "ds.json")]) == 3


def test_phantom_command(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"dims": [16, 16, 16], "lesion_count": 1,
                                "lesion_radius_range": [2, 3], "noise": {"fp_blob_count": 1}}))
    assert main(["phantom", "--out-dir", str(tmp_path / "p"), "--spec", str(spec),
                 "--seed", "4", "--scans", "2"]) == 0
    doc = json.loads((tmp_path / "p" / "dataset.json").read_text())
    assert [s["id"] for s in doc["scans"]] == ["scan000", "scan001"]
    conf = read_volume(tmp_path / "p" / "scan001" / "confidence.mvol")
    views = collect_views(tmp_path / "p" / "scan001" / "manifest.json")
    assert np.array_equal(conf.array, confidence_map(views).array)


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fuse", "--out-mask", "x.mvol"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 2
    assert main(["metrics", "--pred", "a.mvol"]) == 2
