"""Artifact file formats: feature caches, probability grids, model
checkpoints, label files, fixed splits, colored PLY export, dataset
manifests, and the experiment config.

Binary artifacts open with an 8-byte magic and a version; readers reject
mismatches with a message naming the file and the expected format. Text
formats defined by outside conventions (.seg labels, train:/test: split
lists, OFF/OBJ/PLY) stay as their consumers expect.
"""
from __future__ import annotations

import hashlib
import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from meshseg.mesh import Mesh
from meshseg.neural.models import model_from_descriptor
from meshseg.neural.training import TrainConfig

FORMAT_VERSION = 1
FEATURE_MAGIC = b"MSEGFEAT"
PROB_MAGIC = b"MSEGPROB"
CKPT_MAGIC = b"MSEGCKPT"


class FormatError(ValueError):
    """Malformed or mismatched artifact file."""


def content_hash(*parts) -> str:
    """Stable hex digest over byte/str parts; used to key feature caches
    to their source mesh and extraction settings."""
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        if isinstance(part, str):
            part = part.encode()
        h.update(part)
        h.update(b"\x1f")
    return h.hexdigest()


class _Reader:
    def __init__(self, blob: bytes, where: str):
        self.blob = blob
        self.pos = 0
        self.where = where

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(f"{self.where}: truncated file")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def check_magic(self, magic: bytes, version: int, kind: str) -> None:
        got = self.take(len(magic))
        if got != magic:
            raise FormatError(
                f"{self.where}: not a {kind} file (magic {got!r}, expected {magic!r})")
        ver = self.u32()
        if ver != version:
            raise FormatError(
                f"{self.where}: {kind} version {ver} unsupported (expected {version}); "
                "regenerate the file")


def _pack_text(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _pack_floats(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


# ---------------------------------------------------------------------------
# feature cache


def save_feature_cache(path, channel_names, values: np.ndarray,
                       source_hash: str = "") -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != len(channel_names):
        raise ValueError("values must be (faces, channels) matching the names")
    blob = [FEATURE_MAGIC, struct.pack("<I", FORMAT_VERSION),
            _pack_text("\n".join(channel_names)),
            struct.pack("<Q", len(values)),
            _pack_text(source_hash),
            _pack_floats(values)]
    Path(path).write_bytes(b"".join(blob))


def load_feature_cache(path):
    """Returns (channel names, values, source hash)."""
    r = _Reader(Path(path).read_bytes(), str(path))
    r.check_magic(FEATURE_MAGIC, FORMAT_VERSION, "feature cache")
    names_text = r.text()
    names = tuple(names_text.split("\n")) if names_text else ()
    faces = r.u64()
    source_hash = r.text()
    data = r.take(8 * faces * len(names))
    values = np.frombuffer(data, dtype="<f8").reshape(faces, len(names)).copy()
    return names, values, source_hash


# ---------------------------------------------------------------------------
# probability grid


def save_probabilities(path, probs: np.ndarray) -> None:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError("probabilities must be (faces, classes)")
    blob = [PROB_MAGIC, struct.pack("<I", FORMAT_VERSION),
            struct.pack("<Q", len(probs)),
            struct.pack("<I", probs.shape[1]),
            _pack_floats(probs)]
    Path(path).write_bytes(b"".join(blob))


def load_probabilities(path) -> np.ndarray:
    r = _Reader(Path(path).read_bytes(), str(path))
    r.check_magic(PROB_MAGIC, FORMAT_VERSION, "probability")
    faces = r.u64()
    classes = r.u32()
    data = r.take(8 * faces * classes)
    return np.frombuffer(data, dtype="<f8").reshape(faces, classes).copy()


# ---------------------------------------------------------------------------
# model checkpoint


def save_checkpoint(path, model, channel_names) -> None:
    """Architecture descriptor, seed, channel names, then every state
    tensor (parameters, batch-norm stats, PCA bases) in declaration order."""
    slots = model.state_slots()
    blob = [CKPT_MAGIC, struct.pack("<I", FORMAT_VERSION),
            _pack_text(model.describe()),
            struct.pack("<Q", int(model.seed)),
            _pack_text("\n".join(channel_names)),
            struct.pack("<I", len(slots))]
    for name, get, _ in slots:
        arr = np.asarray(get(), dtype=np.float64)
        blob.append(_pack_text(name))
        blob.append(struct.pack("<I", arr.ndim))
        blob.extend(struct.pack("<Q", d) for d in arr.shape)
        blob.append(_pack_floats(arr))
    Path(path).write_bytes(b"".join(blob))


def load_checkpoint(path):
    """Returns (model, channel names); the model is rebuilt from its
    descriptor and filled with the stored tensors."""
    r = _Reader(Path(path).read_bytes(), str(path))
    r.check_magic(CKPT_MAGIC, FORMAT_VERSION, "checkpoint")
    descriptor = r.text()
    seed = r.u64()
    channel_names = tuple(r.text().split("\n"))
    model = model_from_descriptor(descriptor, seed)
    slots = model.state_slots()
    n = r.u32()
    if n != len(slots):
        raise FormatError(
            f"{path}: checkpoint has {n} tensors, architecture needs {len(slots)}")
    for name, _, put in slots:
        stored = r.text()
        if stored != name:
            raise FormatError(f"{path}: tensor {stored!r} where {name!r} expected")
        ndim = r.u32()
        shape = tuple(r.u64() for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).copy()
        put(arr)
    return model, channel_names


# ---------------------------------------------------------------------------
# labels (.seg): one integer per line, line i = face i


def save_labels(path, labels) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def load_labels(path) -> np.ndarray:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        try:
            out.append(int(s))
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: not an integer label: {s!r}") from None
    return np.array(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# fixed split file: `train:` / `test:` sections listing mesh ids


def parse_fixed_split(text: str, where: str = "<split>"):
    sections: dict[str, list] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if s.endswith(":"):
            name = s[:-1].strip()
            if name not in ("train", "test"):
                raise FormatError(f"{where}: line {lineno}: unknown section {name!r}")
            if name in sections:
                raise FormatError(f"{where}: line {lineno}: duplicate section {name!r}")
            sections[name] = []
            current = name
        elif current is None:
            raise FormatError(f"{where}: line {lineno}: mesh id before any section")
        else:
            sections[current].append(s)
    for name in ("train", "test"):
        if not sections.get(name):
            raise FormatError(f"{where}: missing or empty {name}: section")
    return sections["train"], sections["test"]


def load_fixed_split(path):
    return parse_fixed_split(Path(path).read_text(), where=str(path))


# ---------------------------------------------------------------------------
# colored PLY export

# 22 visually distinct colors; label index i maps to PALETTE[i % 22]
PALETTE = np.array([
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
    (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
    (255, 255, 255), (0, 0, 0),
], dtype=np.uint8)


def export_colored_ply(mesh: Mesh, labels, target) -> None:
    """ASCII PLY with one RGB color per face, deterministic by label index.

    Labels at or beyond the palette size wrap around (with a warning)."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != mesh.n_faces:
        raise ValueError(f"{len(labels)} labels for {mesh.n_faces} faces")
    if len(labels) and labels.max() >= len(PALETTE):
        warnings.warn(
            f"label {int(labels.max())} exceeds the {len(PALETTE)}-color palette; "
            "colors will repeat", stacklevel=2)
    colors = PALETTE[labels % len(PALETTE)]
    lines = [
        "ply", "format ascii 1.0",
        f"element vertex {mesh.n_vertices}",
        "property float x", "property float y", "property float z",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        "property uchar red", "property uchar green", "property uchar blue",
        "end_header",
    ]
    for v in mesh.vertices:
        lines.append(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for f, c in zip(mesh.faces, colors):
        lines.append(f"3 {f[0]} {f[1]} {f[2]} {c[0]} {c[1]} {c[2]}")
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        Path(target).write_text(text)


# ---------------------------------------------------------------------------
# dataset manifest


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    classes: tuple
    root: Path
    entries: tuple  # of (mesh id, mesh path, labels path)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: manifest must be a JSON object")
    allowed = {"name", "classes", "meshes", "format", "version"}
    unknown = set(doc) - allowed
    if unknown:
        raise FormatError(f"{path}: unknown manifest keys {sorted(unknown)}")
    for key in ("name", "classes", "meshes"):
        if key not in doc:
            raise FormatError(f"{path}: manifest missing {key!r}")
    classes = doc["classes"]
    if (not isinstance(classes, list) or not classes
            or not all(isinstance(c, str) for c in classes)):
        raise FormatError(f"{path}: classes must be a nonempty list of names")
    entries = []
    seen = set()
    for i, rec in enumerate(doc["meshes"]):
        if not isinstance(rec, dict) or set(rec) != {"id", "mesh", "labels"}:
            raise FormatError(f"{path}: meshes[{i}] needs exactly id/mesh/labels")
        if rec["id"] in seen:
            raise FormatError(f"{path}: duplicate mesh id {rec['id']!r}")
        seen.add(rec["id"])
        entries.append((rec["id"], path.parent / rec["mesh"],
                        path.parent / rec["labels"]))
    return DatasetManifest(name=doc["name"], classes=tuple(classes),
                           root=path.parent, entries=tuple(entries))


# ---------------------------------------------------------------------------
# experiment config (strict JSON)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    protocol: str = "kfold"  # loo | kfold | fixed
    k: int = 5
    fixed_split_file: str | None = None
    replicates: int = 3
    model_kind: str = "cnn"  # cnn | pca-nn | ae-nn
    branches: int = 3
    train: TrainConfig = TrainConfig()
    lam: float = 1.0
    omega: float = 1.0
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if self.protocol not in ("loo", "kfold", "fixed"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.protocol == "fixed" and not self.fixed_split_file:
            raise ValueError("fixed protocol requires a split file")
        if self.model_kind not in ("cnn", "pca-nn", "ae-nn"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if not 1 <= self.branches <= 4:
            raise ValueError("branches must be in 1..4")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


_TRAIN_KEYS = ("epochs", "lr_start", "lr_end", "momentum", "batch_size")


def _check_keys(doc: dict, allowed, where: str) -> None:
    unknown = set(doc) - set(allowed)
    if unknown:
        raise FormatError(f"{where}: unknown keys {sorted(unknown)}")


def parse_experiment_config(doc: dict, where: str = "<config>") -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: config must be a JSON object")
    _check_keys(doc, ("dataset", "protocol", "model", "train", "lambda",
                      "omega", "seed", "output_dir"), where)
    if "dataset" not in doc:
        raise FormatError(f"{where}: missing 'dataset'")
    proto = doc.get("protocol", {"kind": "kfold"})
    _check_keys(proto, ("kind", "k", "file", "replicates"), f"{where}.protocol")
    model = doc.get("model", {"kind": "cnn"})
    _check_keys(model, ("kind", "branches"), f"{where}.model")
    train_doc = doc.get("train", {})
    _check_keys(train_doc, _TRAIN_KEYS, f"{where}.train")
    train = TrainConfig(**{k: train_doc[k] for k in _TRAIN_KEYS if k in train_doc})
    try:
        return ExperimentConfig(
            dataset=doc["dataset"],
            protocol=proto.get("kind", "kfold"),
            k=int(proto.get("k", 5)),
            fixed_split_file=proto.get("file"),
            replicates=int(proto.get("replicates", 3)),
            model_kind=model.get("kind", "cnn"),
            branches=int(model.get("branches", 3)),
            train=train,
            lam=float(doc.get("lambda", 1.0)),
            omega=float(doc.get("omega", 1.0)),
            seed=int(doc.get("seed", 0)),
            output_dir=doc.get("output_dir", "out"),
        )
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from None


def experiment_config_to_dict(cfg: ExperimentConfig) -> dict:
    """Canonical full-form dict; parse(to_dict(cfg)) == cfg."""
    proto: dict = {"kind": cfg.protocol, "replicates": cfg.replicates}
    if cfg.protocol == "kfold":
        proto["k"] = cfg.k
    if cfg.protocol == "fixed":
        proto["file"] = cfg.fixed_split_file
    return {
        "dataset": cfg.dataset,
        "protocol": proto,
        "model": {"kind": cfg.model_kind, "branches": cfg.branches},
        "train": {k: getattr(cfg.train, k) for k in _TRAIN_KEYS},
        "lambda": cfg.lam,
        "omega": cfg.omega,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
    }


def load_experiment_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from None
    return parse_experiment_config(doc, where=str(path))


def dump_json(doc: dict) -> str:
    """Canonical JSON for reports and manifests: sorted keys, stable
    float formatting, trailing newline."""
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
