"""Byte-stable on-disk container for datasets.

Layout of a ``.otib`` file::

    bytes 0-3    magic b"OTIB"
    bytes 4-7    format version, little-endian uint32
    bytes 8-15   header length, little-endian uint64
    header       UTF-8 JSON with sorted keys; declares kind, domain,
                 spec digest, per-array name/dtype/shape, payload sha256
    payload      the arrays' raw C-order bytes, concatenated in header order

Two writes of identical content produce identical bytes, so file digests
are stable across runs.  Truth labels and instance pairings live in a
separate sidecar file of the same format, letting model-facing loaders
expose only the (x, y) records.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .splits import EvalSet, SplitSpec, TrainSet

MAGIC = b"OTIB"
FORMAT_VERSION = 1

MODEL_VIEW = "model"
FULL_VIEW = "full"


class DatasetFormatError(RuntimeError):
    """Unreadable, corrupt, or version-incompatible dataset file."""


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def digest_of(payload) -> str:
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


def write_container(path: Path, header: dict, arrays: dict[str, np.ndarray]) -> str:
    """Write a container; returns the sha256 of the full file bytes."""
    path = Path(path)
    blobs, specs = [], []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        blobs.append(arr.tobytes())
        specs.append({"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape)})
    payload = b"".join(blobs)
    header = dict(header)
    header["format_version"] = FORMAT_VERSION
    header["arrays"] = specs
    header["payload_sha256"] = hashlib.sha256(payload).hexdigest()
    head = canonical_json(header).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(FORMAT_VERSION.to_bytes(4, "little"))
        fh.write(len(head).to_bytes(8, "little"))
        fh.write(head)
        fh.write(payload)
    return file_digest(path)


def read_container(path: Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DatasetFormatError(f"cannot read {path}: {exc}") from exc
    if raw[:4] != MAGIC:
        raise DatasetFormatError(f"{path} is not a dataset container (bad magic)")
    version = int.from_bytes(raw[4:8], "little")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(
            f"{path} has format version {version}, expected {FORMAT_VERSION}"
        )
    head_len = int.from_bytes(raw[8:16], "little")
    try:
        header = json.loads(raw[16 : 16 + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"{path} header is corrupt: {exc}") from exc
    payload = raw[16 + head_len :]
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise DatasetFormatError(f"{path} payload does not match its recorded digest")
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for spec in header["arrays"]:
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise DatasetFormatError(f"{path} payload truncated at array {spec['name']}")
        arrays[spec["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        offset += nbytes
    return header, arrays


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".truth" + path.suffix)


def write_dataset(path, dataset: TrainSet | EvalSet, spec: SplitSpec, meta: dict | None = None) -> dict:
    """Write a dataset plus its truth sidecar; returns both file digests."""
    path = Path(path)
    kind = "train" if isinstance(dataset, TrainSet) else "eval"
    spec_digest = digest_of(spec.to_dict())
    header = {
        "kind": kind,
        "domain": dataset.domain,
        "spec_digest": spec_digest,
        "meta": meta or {},
    }
    if kind == "train":
        model_arrays = {"x": dataset.xs, "y": dataset.ys}
    else:
        model_arrays = {
            "x_support": dataset.xs,
            "y_support": dataset.ys,
            "x_query": dataset.xq,
            "y_query": dataset.yq,
        }
    main_digest = write_container(path, header, model_arrays)
    side_header = {
        "kind": kind + "_truth",
        "domain": dataset.domain,
        "spec_digest": spec_digest,
        "class_table": [list(c) for c in dataset.class_table],
        "split_spec": spec.to_dict(),
    }
    side_digest = write_container(
        _sidecar_path(path), side_header, {"truth_idx": dataset.truth_idx}
    )
    return {"data": main_digest, "truth": side_digest}


def read_dataset(path, view: str = FULL_VIEW):
    """Load a dataset.

    ``view="model"`` returns (header, arrays) with only the observation
    records; ``view="full"`` reconstructs the TrainSet/EvalSet including the
    hidden truth labels from the sidecar.
    """
    path = Path(path)
    header, arrays = read_container(path)
    if view == MODEL_VIEW:
        return header, arrays
    if view != FULL_VIEW:
        raise ValueError(f"unknown view {view!r}")
    side_header, side_arrays = read_container(_sidecar_path(path))
    if side_header["spec_digest"] != header["spec_digest"]:
        raise DatasetFormatError(f"{path}: sidecar does not match dataset spec digest")
    class_table = [tuple(c) for c in side_header["class_table"]]
    truth_idx = side_arrays["truth_idx"]
    spec = SplitSpec.from_dict(side_header["split_spec"])
    if header["kind"] == "train":
        ds = TrainSet(
            domain=header["domain"],
            xs=arrays["x"],
            ys=arrays["y"],
            truth_idx=truth_idx,
            class_table=class_table,
        )
    else:
        ds = EvalSet(
            domain=header["domain"],
            xs=arrays["x_support"],
            ys=arrays["y_support"],
            xq=arrays["x_query"],
            yq=arrays["y_query"],
            truth_idx=truth_idx,
            class_table=class_table,
        )
    return ds, spec, header
