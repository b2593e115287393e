import json

import numpy as np
import pytest

import meshseg.experiment as experiment
from meshseg.experiment import cached_features, load_labeled_meshes, run_experiment
from meshseg.formats import load_manifest, parse_experiment_config, save_labels
from meshseg.synth import make_toy_dataset


@pytest.fixture(scope="module")
def toy_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("toyset")
    return make_toy_dataset(root, n_meshes=6, subdivisions=1, seed=0)


def _config(manifest_path, out_dir, **overrides):
    doc = {
        "dataset": str(manifest_path),
        "protocol": {"kind": "kfold", "k": 3, "replicates": 2},
        "model": {"kind": "cnn", "branches": 2},
        "train": {"epochs": 3, "batch_size": 64},
        "lambda": 1.0,
        "omega": 1.0,
        "seed": 11,
        "output_dir": str(out_dir),
    }
    doc.update(overrides)
    return parse_experiment_config(doc)


# ------------------------------------------------------------ data loading

def test_load_labeled_meshes_sorted_and_validated(toy_manifest):
    manifest = load_manifest(toy_manifest)
    meshes = load_labeled_meshes(manifest)
    assert [lm.mesh_id for lm in meshes] == sorted(lm.mesh_id for lm in meshes)
    assert all(len(lm.labels) == lm.mesh.n_faces for lm in meshes)


def test_load_labeled_meshes_rejects_out_of_vocabulary(toy_manifest, tmp_path):
    manifest = load_manifest(toy_manifest)
    mesh_id, mesh_path, labels_path = manifest.entries[0]
    bad_labels = tmp_path / "bad.seg"
    save_labels(bad_labels, np.full(320, 7))
    patched = manifest.__class__(
        name=manifest.name, classes=manifest.classes, root=manifest.root,
        entries=((mesh_id, mesh_path, bad_labels),))
    with pytest.raises(ValueError, match=f"{mesh_id!r}.*vocabulary"):
        load_labeled_meshes(patched)


def test_load_labeled_meshes_names_failing_mesh(toy_manifest, tmp_path):
    manifest = load_manifest(toy_manifest)
    mesh_id, _, labels_path = manifest.entries[0]
    patched = manifest.__class__(
        name=manifest.name, classes=manifest.classes, root=manifest.root,
        entries=((mesh_id, tmp_path / "missing.off", labels_path),))
    with pytest.raises(RuntimeError, match=f"loading mesh {mesh_id!r}"):
        load_labeled_meshes(patched)


# ------------------------------------------------------------ feature cache

def test_cached_features_computes_once(toy_manifest, tmp_path, monkeypatch):
    manifest = load_manifest(toy_manifest)
    lm = load_labeled_meshes(manifest)[0]
    mesh_path = dict((e[0], e[1]) for e in manifest.entries)[lm.mesh_id]
    calls = []
    real = experiment.compute_features

    def counting(mesh, channels, params):
        calls.append(1)
        return real(mesh, channels, params)

    monkeypatch.setattr(experiment, "compute_features", counting)
    cache_dir = tmp_path / "cache"
    first = cached_features(lm.mesh, mesh_path, cache_dir)
    assert len(calls) == 1
    again = cached_features(lm.mesh, mesh_path, cache_dir)
    assert len(calls) == 1  # served from the cache file
    assert np.array_equal(first.values, again.values)
    assert first.channel_names == again.channel_names


def test_cached_features_recomputes_on_stale_or_garbage(toy_manifest, tmp_path,
                                                        monkeypatch):
    manifest = load_manifest(toy_manifest)
    lm = load_labeled_meshes(manifest)[0]
    mesh_path = dict((e[0], e[1]) for e in manifest.entries)[lm.mesh_id]
    calls = []
    real = experiment.compute_features

    def counting(mesh, channels, params):
        calls.append(1)
        return real(mesh, channels, params)

    monkeypatch.setattr(experiment, "compute_features", counting)
    cache_dir = tmp_path / "cache"
    cached_features(lm.mesh, mesh_path, cache_dir)
    cache_file = cache_dir / (mesh_path.stem + ".feat")
    assert cache_file.exists()

    cache_file.write_bytes(b"garbage, not a cache at all")
    cached_features(lm.mesh, mesh_path, cache_dir)
    assert len(calls) == 2  # unreadable cache is silently rebuilt

    # a cache keyed to different settings is also rejected
    cached_features(lm.mesh, mesh_path, cache_dir, channels=("agd", "sdf"))
    assert len(calls) == 3


# -------------------------------------------------------------- experiment

@pytest.fixture(scope="module")
def toy_report(toy_manifest, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = _config(toy_manifest, out)
    report = run_experiment(cfg, threads=1)
    return cfg, out, report


def test_report_structure(toy_report):
    cfg, out, report = toy_report
    assert report["format"] == "meshseg-report"
    assert report["version"] == 1
    assert report["dataset"]["n_meshes"] == 6
    # 3 folds of 2 test meshes, 2 replicates each
    assert report["summary"]["n_records"] == 12
    assert len(report["records"]) == 12
    for record in report["records"]:
        for key in ("mesh_id", "split", "replicate", "seed", "n_faces",
                    "accuracy_pre", "accuracy_post", "final_losses",
                    "refine_moves"):
            assert key in record
        assert 0.0 <= record["accuracy_pre"] <= 1.0
        assert 0.0 <= record["accuracy_post"] <= 1.0
        assert record["refine_moves"] >= 0
    assert len(report["summary"]["replicate_means_post"]) == 2
    assert set(report["summary"]["per_mesh_post"]) == {
        lm_id for split in report["splits"] for lm_id in split["test"]}


def test_every_mesh_tested_once_per_replicate(toy_report):
    _, _, report = toy_report
    counts = {}
    for record in report["records"]:
        counts[(record["mesh_id"], record["replicate"])] = counts.get(
            (record["mesh_id"], record["replicate"]), 0) + 1
    assert all(v == 1 for v in counts.values())
    assert len(counts) == 12


def test_no_test_mesh_in_its_training_fold(toy_report):
    _, _, report = toy_report
    split_train = {i: set(s["train"]) for i, s in enumerate(report["splits"])}
    for record in report["records"]:
        assert record["mesh_id"] not in split_train[record["split"]]
    for s in report["splits"]:
        assert not set(s["train"]) & set(s["test"])


def test_artifacts_on_disk(toy_report):
    _, out, report = toy_report
    assert (out / "report.json").exists()
    on_disk = json.loads((out / "report.json").read_text())
    assert on_disk == report
    probs = sorted(p.name for p in (out / "probs").iterdir())
    labels = sorted(p.name for p in (out / "labels").iterdir())
    assert len(probs) == 12 and len(labels) == 12
    assert probs[0].endswith(".prob") and labels[0].endswith(".seg")
    cache = list((out / "cache").glob("*.feat"))
    assert len(cache) == 6


def test_rerun_is_byte_identical(toy_report):
    cfg, out, _ = toy_report
    before = (out / "report.json").read_bytes()
    run_experiment(cfg, threads=1)
    assert (out / "report.json").read_bytes() == before


def test_threads_do_not_change_the_report(toy_manifest, tmp_path):
    cfg1 = _config(toy_manifest, tmp_path / "a")
    cfg2 = _config(toy_manifest, tmp_path / "b", output_dir=str(tmp_path / "b"))
    r1 = run_experiment(cfg1, threads=1)
    r2 = run_experiment(cfg2, threads=3)
    r1["config"]["output_dir"] = r2["config"]["output_dir"] = ""
    assert r1 == r2


def test_pca_baseline_runs_leave_one_out(toy_manifest, tmp_path):
    cfg = _config(
        toy_manifest, tmp_path / "pca",
        protocol={"kind": "loo", "replicates": 1},
        model={"kind": "pca-nn"},
        train={"epochs": 2, "batch_size": 64})
    report = run_experiment(cfg, threads=1)
    assert report["summary"]["n_records"] == 6  # one per held-out mesh
    assert report["config"]["model"]["kind"] == "pca-nn"
