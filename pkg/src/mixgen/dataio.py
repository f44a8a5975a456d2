"""Dataset IO: manifests, pair expansion, remote fetch, image decode, shards, tensors.

External formats owned by this module:

  Manifest   UTF-8 JSONL, one object per line with exactly the fields
             {"id": str, "image": str, "captions": [str, ...]} where image is a
             filesystem path or an http(s) URL and captions is non-empty.

  Shard      a directory with images/NNNNNNNN.png files plus a data.jsonl
             sidecar; each line is {"id", "image", "text", "lambda",
             "variant", "sources"} in that key order. Pass-through pairs carry
             null lambda/variant/sources.

  Tensor     binary, little-endian: magic b"MXTN", version byte (1), dtype
             byte (0 = float32), rank byte, rank x u64 dims, then row-major
             float32 payload.
"""
from __future__ import annotations

import concurrent.futures
import json
import logging
import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import requests
from PIL import Image, UnidentifiedImageError

from .embedding import FeatureMatrix
from .errors import (
    BadMagic,
    DecodeError,
    DestinationUnwritable,
    DuplicateId,
    LengthMismatch,
    MalformedLine,
    UnsupportedDtype,
    UnsupportedFormat,
)
from .types import AugmentedPair, ImageRef, ImageTensor, ImageTextPair, normalize_text

log = logging.getLogger(__name__)

TENSOR_MAGIC = b"MXTN"
TENSOR_VERSION = 1
DTYPE_FLOAT32 = 0


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    image: str
    captions: tuple[str, ...]


@dataclass(frozen=True)
class SourceStats:
    num_images: int
    num_texts: int


@dataclass(frozen=True)
class DatasetStats:
    """Image count, expanded pair count, and a per-source rollup."""

    num_images: int
    num_texts: int
    per_source: Mapping[str, SourceStats] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "num_images": self.num_images,
            "num_texts": self.num_texts,
            "per_source": {
                name: {"num_images": s.num_images, "num_texts": s.num_texts}
                for name, s in self.per_source.items()
            },
        }


@dataclass(frozen=True)
class FetchReport:
    succeeded: int
    failed: int
    failed_ids: tuple[str, ...]

    @property
    def accessible_fraction(self) -> float:
        total = self.succeeded + self.failed
        return self.succeeded / total if total else 1.0

    def to_json(self) -> dict:
        return {
            "succeeded": self.succeeded,
            "failed": self.failed,
            "failed_ids": list(self.failed_ids),
            "accessible_fraction": self.accessible_fraction,
        }


# --- Manifests ----------------------------------------------------------------

def parse_manifest(source: Union[str, Path, Iterable[str]]) -> list[ManifestRecord]:
    """Parse line-delimited JSON records, validating schema and id uniqueness."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return parse_manifest(list(fh))

    records: list[ManifestRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(lineno, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise MalformedLine(lineno, "record must be a JSON object")
        rid = obj.get("id")
        image = obj.get("image")
        captions = obj.get("captions")
        if not isinstance(rid, str) or not rid:
            raise MalformedLine(lineno, "field 'id' must be a non-empty string")
        if not isinstance(image, str) or not image:
            raise MalformedLine(lineno, "field 'image' must be a non-empty string")
        if (
            not isinstance(captions, list)
            or len(captions) == 0
            or not all(isinstance(c, str) for c in captions)
        ):
            raise MalformedLine(lineno, "field 'captions' must be a non-empty list of strings")
        if rid in seen:
            raise DuplicateId(f"id {rid!r} appears more than once")
        seen.add(rid)
        records.append(ManifestRecord(id=rid, image=image, captions=tuple(captions)))
    return records


def write_manifest(records: Sequence[ManifestRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {"id": r.id, "image": r.image, "captions": list(r.captions)},
                    ensure_ascii=False,
                )
                + "\n"
            )


def expand_pairs(records: Sequence[ManifestRecord]) -> list[ImageTextPair]:
    """One pair per (image, caption); pair id is ``<record id>#<caption index>``."""
    pairs: list[ImageTextPair] = []
    for r in records:
        for idx, caption in enumerate(r.captions):
            pairs.append(
                ImageTextPair(
                    id=f"{r.id}#{idx}",
                    image=ImageRef(r.image),
                    text=normalize_text(caption),
                )
            )
    return pairs


def compute_stats(
    records: Union[Sequence[ManifestRecord], Mapping[str, Sequence[ManifestRecord]]],
) -> DatasetStats:
    """Image count = record count; text count = total captions; per-source rollup."""
    if not isinstance(records, Mapping):
        records = {"all": records}
    per_source = {
        name: SourceStats(len(recs), sum(len(r.captions) for r in recs))
        for name, recs in records.items()
    }
    return DatasetStats(
        num_images=sum(s.num_images for s in per_source.values()),
        num_texts=sum(s.num_texts for s in per_source.values()),
        per_source=per_source,
    )


# --- Remote fetch ---------------------------------------------------------------

def _is_url(source: str) -> bool:
    return source.startswith("http://") or source.startswith("https://")

def _fetch_one(record: ManifestRecord, dest: Path, retries: int, timeout: float) -> Optional[str]:
    """Returns the local image path on success, None on failure."""
    if not _is_url(record.image):
        return record.image if os.path.exists(record.image) else None
    suffix = Path(record.image.split("?", 1)[0]).suffix.lower()
    if suffix not in (".png", ".jpg", ".jpeg"):
        suffix = ".img"
    target = dest / f"{record.id}{suffix}"
    for attempt in range(1 + retries):
        try:
            resp = requests.get(record.image, timeout=timeout)
            resp.raise_for_status()
            target.write_bytes(resp.content)
            return str(target)
        except Exception as exc:  # noqa: BLE001 - any failure is retried, never fatal
            log.debug("fetch attempt %d for %s failed: %s", attempt + 1, record.id, exc)
            if attempt < retries:
                time.sleep(0.05 * (attempt + 1))
    return None


def fetch_remote(
    records: Sequence[ManifestRecord],
    dest: Union[str, Path],
    parallelism: int = 16,
    retries: int = 2,
    timeout: float = 10.0,
) -> FetchReport:
    """Download every URL record into ``dest``, tolerating dead links.

    Local-path records are only checked for existence; no bytes move. A
    filtered manifest of the successes is written to ``dest/manifest.jsonl``
    with image fields pointing at local files.
    """
    dest = Path(dest)
    try:
        dest.mkdir(parents=True, exist_ok=True)
        probe = dest / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise DestinationUnwritable(f"cannot write to {dest}: {exc}") from exc

    results: list[Optional[str]] = [None] * len(records)
    if records:
        with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
            futures = {
                pool.submit(_fetch_one, r, dest, retries, timeout): i
                for i, r in enumerate(records)
            }
            for fut in concurrent.futures.as_completed(futures):
                results[futures[fut]] = fut.result()

    kept: list[ManifestRecord] = []
    failed_ids: list[str] = []
    for record, local in zip(records, results):
        if local is None:
            failed_ids.append(record.id)
        else:
            kept.append(ManifestRecord(record.id, local, record.captions))
    write_manifest(kept, dest / "manifest.jsonl")
    return FetchReport(
        succeeded=len(kept), failed=len(failed_ids), failed_ids=tuple(failed_ids)
    )


# --- Image decode ----------------------------------------------------------------

def load_image(source: Union[str, Path], target_h: int, target_w: int) -> ImageTensor:
    """Decode a PNG/JPEG, force 3 channels, bilinear-resize, normalize to [0, 1]."""
    path = str(source)
    try:
        with Image.open(path) as img:
            if img.format not in ("PNG", "JPEG"):
                raise UnsupportedFormat(f"{path}: format {img.format} is not PNG or JPEG")
            img = img.convert("RGB")
            if img.size != (target_w, target_h):
                img = img.resize((target_w, target_h), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / np.float32(255.0)
    except UnsupportedFormat:
        raise
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    return ImageTensor(arr)


def resolve_image(pair: ImageTextPair, target_h: int, target_w: int) -> ImageTextPair:
    """Materialize a lazy image reference; already-decoded pairs pass through."""
    if isinstance(pair.image, ImageTensor):
        return pair
    tensor = load_image(pair.image.source, target_h, target_w)
    return ImageTextPair(id=pair.id, image=tensor, text=pair.text)


# --- Shard output -----------------------------------------------------------------

def quantize_image(img: ImageTensor) -> np.ndarray:
    """8-bit quantization round(v * 255), round-half-up."""
    return np.floor(img.data * 255.0 + 0.5).clip(0, 255).astype(np.uint8)


ShardEntry = Union[ImageTextPair, AugmentedPair]


class ShardWriter:
    """Appends pairs to a shard directory; calls must be serialized per shard."""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.images_dir = self.out_dir / "images"
        self.images_dir.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.out_dir / "data.jsonl"
        self._fh = open(self.manifest_path, "w", encoding="utf-8")
        self._count = 0

    def append(self, entry: ShardEntry) -> None:
        if isinstance(entry, AugmentedPair):
            pair, lam, variant, sources = (
                entry.pair,
                entry.lambda_used,
                entry.variant_used.value,
                list(entry.sources),
            )
        else:
            pair, lam, variant, sources = entry, None, None, None
        if not isinstance(pair.image, ImageTensor):
            raise TypeError(f"pair {pair.id!r} has no materialized image")
        rel = f"images/{self._count:08d}.png"
        Image.fromarray(quantize_image(pair.image), mode="RGB").save(self.out_dir / rel)
        line = {
            "id": pair.id,
            "image": rel,
            "text": pair.text.raw,
            "lambda": lam,
            "variant": variant,
            "sources": sources,
        }
        self._fh.write(json.dumps(line, ensure_ascii=False) + "\n")
        self._count += 1

    def close(self) -> Path:
        self._fh.close()
        return self.manifest_path

    def __enter__(self) -> "ShardWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_shard(entries: Sequence[ShardEntry], out_dir: Union[str, Path]) -> Path:
    """Write one complete shard; returns the sidecar manifest path."""
    with ShardWriter(out_dir) as writer:
        for entry in entries:
            writer.append(entry)
    return writer.manifest_path


# --- Tensor files -------------------------------------------------------------------

def write_tensor(m: FeatureMatrix, path: Union[str, Path]) -> None:
    dims = m.data.shape
    header = TENSOR_MAGIC + struct.pack(
        "<BBB", TENSOR_VERSION, DTYPE_FLOAT32, len(dims)
    ) + struct.pack(f"<{len(dims)}Q", *dims)
    payload = np.ascontiguousarray(m.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_tensor(path: Union[str, Path]) -> FeatureMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 7 or blob[:4] != TENSOR_MAGIC:
        raise BadMagic(f"{path}: not a tensor file")
    version, dtype, rank = struct.unpack_from("<BBB", blob, 4)
    if version != TENSOR_VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")
    if dtype != DTYPE_FLOAT32:
        raise UnsupportedDtype(f"{path}: dtype code {dtype} is not float32")
    offset = 7
    if len(blob) < offset + 8 * rank:
        raise LengthMismatch(f"{path}: truncated dims header")
    dims = struct.unpack_from(f"<{rank}Q", blob, offset)
    offset += 8 * rank
    if rank != 2:
        raise LengthMismatch(f"{path}: feature matrices are rank-2, file has rank {rank}")
    expected = int(np.prod(dims)) * 4
    if len(blob) - offset != expected:
        raise LengthMismatch(
            f"{path}: payload is {len(blob) - offset} bytes, dims {dims} need {expected}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=offset).reshape(dims)
    return FeatureMatrix(np.ascontiguousarray(data, dtype=np.float32))
