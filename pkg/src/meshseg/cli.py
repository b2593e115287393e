"""Command-line surface binding the pipeline stages together.

Every subcommand prints exactly one JSON summary line on stdout and exits
0 on success. Failures print a JSON error line on stderr and exit with a
small category code:

    2  usage (argparse)
    3  invalid input (bad mesh, bad config, bad artifact contents)
    4  missing file
    5  numerical failure (solver divergence, non-finite values)
    1  anything else
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from meshseg.evaluate import accuracy
from meshseg.experiment import cached_features, run_experiment
from meshseg.features import (
    DEFAULT_CHANNELS,
    FeatureParams,
    NormalizationStats,
    compute_features,
    multiscale,
)
from meshseg.formats import (
    FormatError,
    content_hash,
    export_colored_ply,
    load_checkpoint,
    load_experiment_config,
    load_feature_cache,
    load_labels,
    load_manifest,
    load_probabilities,
    save_checkpoint,
    save_feature_cache,
    save_labels,
    save_probabilities,
)
from meshseg.graphcut import GraphCutProblem, alpha_expansion
from meshseg.mesh import MeshError, build_dual_graph, load_mesh_path, save_off
from meshseg.neural.gradcheck import NETWORK_TOL, full_gradcheck
from meshseg.neural.models import build_model
from meshseg.numerics import SolverError
from meshseg.smoothing import taubin_smooth

THREADS_ENV = "MESHSEG_THREADS"


def _emit(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True))


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV, "")
    return max(1, int(env)) if env.isdigit() and env != "0" else 1


def _model_scales(model) -> int:
    return model.net.n_branches if model.kind == "cnn" else 1


def _stats_from_file(path) -> NormalizationStats:
    names, rows, _ = load_feature_cache(path)
    if rows.shape[0] != 2:
        raise FormatError(f"{path}: expected mean/scale rows, got {rows.shape[0]}")
    return NormalizationStats(mean=rows[0], scale=rows[1])


def _save_stats(path, channel_names, stats: NormalizationStats) -> None:
    save_feature_cache(path, channel_names, np.vstack([stats.mean, stats.scale]),
                       source_hash="normalization-stats")


def cmd_features(args) -> dict:
    mesh = load_mesh_path(args.mesh)
    params = FeatureParams()
    fm = compute_features(mesh, DEFAULT_CHANNELS, params)
    key = content_hash(Path(args.mesh).read_bytes(),
                       "\n".join(DEFAULT_CHANNELS), repr(params))
    save_feature_cache(args.output, fm.channel_names, fm.values, key)
    return {"command": "features", "mesh": str(args.mesh),
            "output": str(args.output), "n_faces": mesh.n_faces,
            "channels": list(fm.channel_names),
            "sdf_fallback_faces": len(fm.diagnostics.get("sdf_fallback_faces", ()))}


def cmd_smooth(args) -> dict:
    mesh = load_mesh_path(args.mesh)
    seq = taubin_smooth(mesh, iterations=args.iterations,
                        lambda_shrink=args.lam, mu_inflate=args.mu)
    smoothed = seq.levels[-1]
    save_off(smoothed, args.output)
    return {"command": "smooth", "mesh": str(args.mesh),
            "output": str(args.output), "iterations": args.iterations,
            "volume_before": mesh.enclosed_volume(),
            "volume_after": smoothed.enclosed_volume()}


def _dataset_training_arrays(cfg):
    """Features, multi-scale stacks, and stacked labels for the whole
    manifest; normalization fit on everything (no held-out split here)."""
    from meshseg.experiment import load_labeled_meshes
    from meshseg.features import fit_stats

    manifest = load_manifest(cfg.dataset)
    meshes = load_labeled_meshes(manifest)
    scales = cfg.branches if cfg.model_kind == "cnn" else 1
    raw = {}
    for lm in meshes:
        entry = {e[0]: e for e in manifest.entries}[lm.mesh_id]
        fm = cached_features(lm.mesh, entry[1], Path(cfg.output_dir) / "cache")
        graph = build_dual_graph(lm.mesh)
        raw[lm.mesh_id] = (fm, multiscale(fm.values, graph, scales,
                                          fm.channel_names).values)
    stats = fit_stats(np.vstack([raw[lm.mesh_id][0].values for lm in meshes]))
    x = np.concatenate([(raw[lm.mesh_id][1] - stats.mean) / stats.scale
                        for lm in meshes], axis=0)
    y = np.concatenate([lm.labels for lm in meshes])
    return manifest, meshes, stats, x, y


def cmd_train(args) -> dict:
    cfg = load_experiment_config(args.config)
    manifest, meshes, stats, x, y = _dataset_training_arrays(cfg)
    model = build_model(cfg.model_kind, cfg.branches, len(DEFAULT_CHANNELS),
                        len(manifest.classes), cfg.seed, cfg.train)
    curves = model.fit(model.prepare_inputs(x), y)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, model, DEFAULT_CHANNELS)
    stats_path = out.with_suffix(out.suffix + ".stats")
    _save_stats(stats_path, DEFAULT_CHANNELS, stats)
    return {"command": "train", "config": str(args.config), "seed": cfg.seed,
            "checkpoint": str(out), "stats": str(stats_path),
            "n_meshes": len(meshes), "n_faces": int(len(y)),
            "final_losses": {k: v[-1] for k, v in curves.items()}}


def cmd_segment(args) -> dict:
    model, channel_names = load_checkpoint(args.checkpoint)
    stats = _stats_from_file(args.stats)
    mesh = load_mesh_path(args.mesh)
    fm = compute_features(mesh, channel_names)
    graph = build_dual_graph(mesh)
    msf = multiscale(fm.values, graph, _model_scales(model), channel_names)
    x = (msf.values - stats.mean) / stats.scale
    probs = model.predict_proba(model.prepare_inputs(x))
    save_probabilities(args.output, probs)
    summary = {"command": "segment", "mesh": str(args.mesh),
               "checkpoint": str(args.checkpoint), "seed": int(model.seed),
               "output": str(args.output), "n_faces": mesh.n_faces,
               "n_classes": int(probs.shape[1])}
    if args.labels_out:
        save_labels(args.labels_out, probs.argmax(axis=1))
        summary["labels_out"] = str(args.labels_out)
    return summary


def cmd_refine(args) -> dict:
    mesh = load_mesh_path(args.mesh)
    probs = load_probabilities(args.probs)
    names, values, _ = load_feature_cache(args.features)
    if "agd" not in names:
        raise FormatError(f"{args.features}: no 'agd' channel for the "
                          "feature-distance term")
    graph = build_dual_graph(mesh)
    problem = GraphCutProblem(graph=graph, probabilities=probs,
                              feature=values[:, names.index("agd")],
                              lam=args.lam, omega=args.omega)
    result = alpha_expansion(problem)
    save_labels(args.output, result.labels)
    return {"command": "refine", "mesh": str(args.mesh),
            "output": str(args.output),
            "initial_energy": result.initial_energy,
            "final_energy": result.final_energy,
            "accepted_moves": len(result.energy_trace) - 1}


def cmd_eval(args) -> dict:
    mesh = load_mesh_path(args.mesh)
    pred = load_labels(args.pred)
    truth = load_labels(args.truth)
    acc = accuracy(pred, truth, mesh.face_areas)
    return {"command": "eval", "mesh": str(args.mesh),
            "accuracy": acc, "n_faces": mesh.n_faces}


def cmd_run(args) -> dict:
    cfg = load_experiment_config(args.config)
    log = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    report = run_experiment(cfg, threads=_threads(args), log=log)
    return {"command": "run", "config": str(args.config), "seed": cfg.seed,
            "report": str(Path(cfg.output_dir) / "report.json"),
            "n_records": report["summary"]["n_records"],
            "mean_accuracy_pre": report["summary"]["mean_accuracy_pre"],
            "mean_accuracy_post": report["summary"]["mean_accuracy_post"]}


def cmd_export_colored(args) -> dict:
    mesh = load_mesh_path(args.mesh)
    labels = load_labels(args.labels)
    export_colored_ply(mesh, labels, args.output)
    return {"command": "export-colored", "mesh": str(args.mesh),
            "labels": str(args.labels), "output": str(args.output),
            "n_faces": mesh.n_faces, "n_labels": int(labels.max()) + 1 if len(labels) else 0}


def cmd_gradcheck(args) -> dict:
    report = full_gradcheck(args.seed)
    verdict = "PASS" if report.passed and report.max_rel_error <= NETWORK_TOL else "FAIL"
    return {"command": "gradcheck", "seed": args.seed,
            "max_rel_error": report.max_rel_error,
            "tolerance": NETWORK_TOL, "verdict": verdict,
            "checks": len(report.entries),
            "_exit_nonzero": verdict != "PASS"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="meshseg",
        description="Per-face mesh segmentation: curvature/geodesic/diameter "
                    "features, multi-branch 1D conv nets, graph-cut refinement.")
    sub = p.add_subparsers(dest="command", required=True)

    def add_threads(sp):
        sp.add_argument("--threads", type=int, default=0,
                        help=f"worker count (default: ${THREADS_ENV} or 1)")

    sp = sub.add_parser("features", help="compute the per-face feature matrix")
    sp.add_argument("mesh")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("smooth", help="volume-preserving mesh smoothing")
    sp.add_argument("mesh")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--iterations", type=int, default=5)
    sp.add_argument("--lambda", dest="lam", type=float, default=0.5)
    sp.add_argument("--mu", type=float, default=-0.53)
    sp.set_defaults(func=cmd_smooth)

    sp = sub.add_parser("train", help="train on every mesh in the dataset")
    sp.add_argument("--config", required=True)
    sp.add_argument("-o", "--output", required=True, help="checkpoint path")
    add_threads(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("segment", help="per-face class probabilities for one mesh")
    sp.add_argument("mesh")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--stats", required=True,
                    help="normalization stats written next to the checkpoint")
    sp.add_argument("-o", "--output", required=True, help="probability grid path")
    sp.add_argument("--labels-out", default="")
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("refine", help="graph-cut cleanup of stored probabilities")
    sp.add_argument("mesh")
    sp.add_argument("--probs", required=True)
    sp.add_argument("--features", required=True,
                    help="feature cache holding the 'agd' channel")
    sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
    sp.add_argument("--omega", type=float, default=1.0)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_refine)

    sp = sub.add_parser("eval", help="area-weighted accuracy of a labeling")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--truth", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("run", help="full protocol: features, splits, training, "
                                    "refinement, report")
    sp.add_argument("--config", required=True)
    sp.add_argument("--verbose", action="store_true")
    add_threads(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("export-colored", help="write a color-per-label PLY")
    sp.add_argument("output")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--labels", required=True)
    sp.set_defaults(func=cmd_export_colored)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every "
                                          "layer and the assembled network")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gradcheck)
    return p


_CATEGORIES = (
    (FileNotFoundError, 4, "missing-file"),
    ((MeshError, FormatError, ValueError, KeyError, json.JSONDecodeError), 3,
     "invalid-input"),
    ((SolverError, FloatingPointError), 5, "numeric"),
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = args.func(args)
    except Exception as exc:  # map to category codes, keep the message
        for types, code, category in _CATEGORIES:
            if isinstance(exc, types):
                break
        else:
            code, category = 1, "internal"
        print(json.dumps({"status": "error", "category": category,
                          "message": str(exc)}, sort_keys=True),
              file=sys.stderr)
        return code
    fail = summary.pop("_exit_nonzero", False)
    summary["status"] = "ok" if not fail else "failed"
    _emit(summary)
    return 0 if not fail else 1


if __name__ == "__main__":
    sys.exit(main())
