"""Self-contained on-disk formats for models and ensembles.

A ``.ccnn`` model file is::

    magic "CCNN" | version uint32 LE | metadata length uint32 LE |
    metadata (UTF-8 JSON: alphabet chars in index order, label names in
    index order, the full model config, the training seed) |
    tensor block: every tensor in canonical order as little-endian
    float32, row-major, no per-tensor header (shapes follow from the config)

Writes go through a temp file plus atomic rename and are byte-deterministic
for identical inputs. An ensemble is a directory of member files plus a
``manifest.json`` naming them, the shared alphabet/label hash, and the
vote rule.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .corpus import Alphabet, LabelSet
from .ensemble import Ensemble
from .model import ModelConfig, ModelParams

MAGIC = b"CCNN"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
VOTE_RULE = "plurality;tie:summed-probability,lowest-index"


class ModelFormatError(ValueError):
    """A model or ensemble file is malformed or of an unsupported version."""


def tensor_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Declared (name, shape) layout of the tensor block, in file order."""
    d = config.embed_dim
    shapes = [("embedding", (config.alphabet_size, d))]
    for i, (w, n) in enumerate(config.filter_spec):
        shapes.append((f"conv{i}_w{w}.weight", (w, d, n)))
        shapes.append((f"conv{i}_w{w}.bias", (n,)))
    if config.fc_dim > 0:
        shapes.append(("fc.weight", (config.f_total, config.fc_dim)))
        shapes.append(("fc.bias", (config.fc_dim,)))
    shapes.append(("out.weight", (config.hidden_dim, config.num_classes)))
    shapes.append(("out.bias", (config.num_classes,)))
    return shapes


def _metadata_bytes(config: ModelConfig, alphabet: Alphabet, labels: LabelSet, seed: int) -> bytes:
    meta = {
        "alphabet": "".join(alphabet.chars),
        "labels": list(labels.names),
        "config": {
            "alphabet_size": config.alphabet_size,
            "num_classes": config.num_classes,
            "max_len": config.max_len,
            "embed_dim": config.embed_dim,
            "filter_spec": [[w, n] for w, n in config.filter_spec],
            "fc_dim": config.fc_dim,
            "dropout_embed": config.dropout_embed,
            "dropout_fc": config.dropout_fc,
        },
        "seed": seed,
    }
    return json.dumps(meta, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(
    params: ModelParams,
    config: ModelConfig,
    alphabet: Alphabet,
    labels: LabelSet,
    path,
    seed: int = 0,
) -> None:
    """Write a model file atomically. Raises on shape inconsistencies."""
    if alphabet.size != config.alphabet_size:
        raise ValueError("alphabet size does not match the model config")
    if labels.size != config.num_classes:
        raise ValueError("label count does not match the model config")
    meta = _metadata_bytes(config, alphabet, labels, seed)
    parts = [MAGIC, np.uint32(FORMAT_VERSION).tobytes(), np.uint32(len(meta)).tobytes(), meta]
    declared = tensor_shapes(config)
    actual = params.tensors()
    for (name, shape), (_, tensor) in zip(declared, actual):
        if tensor.shape != shape:
            raise ValueError(f"tensor {name} has shape {tensor.shape}, expected {shape}")
        parts.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    try:
        _atomic_write(path, b"".join(parts))
    except OSError as exc:
        raise OSError(f"cannot write model file {path}: {exc}") from exc


def load_model(path) -> tuple[ModelParams, ModelConfig, Alphabet, LabelSet]:
    """Read and validate a model file written by ``save_model``."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read model file {path}: {exc}") from exc
    if blob[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    if len(blob) < 12:
        raise ModelFormatError(f"{path}: truncated header")
    version = int(np.frombuffer(blob[4:8], dtype="<u4")[0])
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version} (expected {FORMAT_VERSION})")
    meta_len = int(np.frombuffer(blob[8:12], dtype="<u4")[0])
    if len(blob) < 12 + meta_len:
        raise ModelFormatError(f"{path}: truncated metadata block")
    try:
        meta = json.loads(blob[12 : 12 + meta_len].decode("utf-8"))
        config = ModelConfig(
            alphabet_size=meta["config"]["alphabet_size"],
            num_classes=meta["config"]["num_classes"],
            max_len=meta["config"]["max_len"],
            embed_dim=meta["config"]["embed_dim"],
            filter_spec=tuple((w, n) for w, n in meta["config"]["filter_spec"]),
            fc_dim=meta["config"]["fc_dim"],
            dropout_embed=meta["config"]["dropout_embed"],
            dropout_fc=meta["config"]["dropout_fc"],
        )
        alphabet = Alphabet(meta["alphabet"])
        labels = LabelSet(meta["labels"])
    except (KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: invalid metadata block ({exc})") from exc
    if alphabet.size != config.alphabet_size or labels.size != config.num_classes:
        raise ModelFormatError(f"{path}: metadata inconsistent with config shapes")

    offset = 12 + meta_len
    tensors = {}
    for name, shape in tensor_shapes(config):
        nbytes = int(np.prod(shape)) * 4
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ModelFormatError(f"{path}: truncated tensor block at {name}")
        tensors[name] = np.frombuffer(chunk, dtype="<f4").astype(np.float32).reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise ModelFormatError(f"{path}: {len(blob) - offset} trailing bytes after the tensor block")

    conv_weights, conv_biases = [], []
    for i, (w, _) in enumerate(config.filter_spec):
        conv_weights.append(tensors[f"conv{i}_w{w}.weight"])
        conv_biases.append(tensors[f"conv{i}_w{w}.bias"])
    params = ModelParams(
        embedding=tensors["embedding"],
        conv_weights=conv_weights,
        conv_biases=conv_biases,
        out_weight=tensors["out.weight"],
        out_bias=tensors["out.bias"],
        fc_weight=tensors.get("fc.weight"),
        fc_bias=tensors.get("fc.bias"),
    )
    return params, config, alphabet, labels


def _alphabet_labels_hash(alphabet: Alphabet, labels: LabelSet) -> str:
    payload = json.dumps(
        {"alphabet": "".join(alphabet.chars), "labels": list(labels.names)},
        ensure_ascii=False,
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def save_ensemble(ensemble: Ensemble, directory) -> None:
    """Write member files ``member_000.ccnn`` ... and the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    member_names = []
    for i, (params, config) in enumerate(ensemble.members):
        name = f"member_{i:03d}.ccnn"
        seed = ensemble.member_seeds[i] if i < len(ensemble.member_seeds) else 0
        save_model(params, config, ensemble.alphabet, ensemble.labels, directory / name, seed=seed)
        member_names.append(name)
    manifest = {
        "format": "ccnn-ensemble",
        "version": FORMAT_VERSION,
        "members": member_names,
        "member_seeds": list(ensemble.member_seeds),
        "alphabet_labels_sha256": _alphabet_labels_hash(ensemble.alphabet, ensemble.labels),
        "vote_rule": VOTE_RULE,
    }
    payload = json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2).encode("utf-8")
    _atomic_write(directory / MANIFEST_NAME, payload + b"\n")


def load_ensemble(directory) -> Ensemble:
    """Read an ensemble directory, checking members against the manifest."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"cannot read ensemble manifest {manifest_path}: {exc}") from exc
    except ValueError as exc:
        raise ModelFormatError(f"{manifest_path}: invalid manifest ({exc})") from exc
    if manifest.get("format") != "ccnn-ensemble":
        raise ModelFormatError(f"{manifest_path}: not an ensemble manifest")
    if manifest.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"{manifest_path}: unsupported manifest version {manifest.get('version')}")

    members = []
    alphabet = labels = None
    for name in manifest["members"]:
        params, config, member_alphabet, member_labels = load_model(directory / name)
        if alphabet is None:
            alphabet, labels = member_alphabet, member_labels
        elif member_alphabet != alphabet or member_labels != labels:
            raise ModelFormatError(f"{directory / name}: alphabet or labels differ from other members")
        members.append((params, config))
    if alphabet is None:
        raise ModelFormatError(f"{manifest_path}: manifest lists no members")
    if manifest.get("alphabet_labels_sha256") != _alphabet_labels_hash(alphabet, labels):
        raise ModelFormatError(f"{manifest_path}: alphabet/label hash mismatch")
    return Ensemble(
        members=members,
        alphabet=alphabet,
        labels=labels,
        member_seeds=[int(s) for s in manifest.get("member_seeds", [])],
    )
