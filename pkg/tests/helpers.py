from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from mixgen.types import ImageTensor, ImageTextPair, normalize_text


def image_of(value: float, h: int = 4, w: int = 4) -> ImageTensor:
    return ImageTensor.from_array(np.full((h, w, 3), value, dtype=np.float32))


def random_image(rng, h: int, w: int) -> ImageTensor:
    return ImageTensor(rng.random((h, w, 3), dtype=np.float32))


def pair_of(pid: str, value: float, text: str, h: int = 4, w: int = 4) -> ImageTextPair:
    return ImageTextPair(id=pid, image=image_of(value, h, w), text=normalize_text(text))


def save_png(path: Path, arr_u8: np.ndarray) -> None:
    Image.fromarray(arr_u8, mode="RGB").save(path)


def make_manifest(
    tmp_path: Path,
    n_records: int,
    captions_per_record: int = 1,
    image_size: int = 8,
    name: str = "manifest.jsonl",
    seed: int = 7,
) -> Path:
    """A synthetic manifest with distinct PNG images on disk."""
    rng = np.random.default_rng(seed)
    img_dir = tmp_path / "imgs"
    img_dir.mkdir(exist_ok=True)
    lines = []
    for i in range(n_records):
        arr = rng.integers(0, 256, size=(image_size, image_size, 3), dtype=np.uint8)
        img_path = img_dir / f"{i:05d}.png"
        save_png(img_path, arr)
        lines.append({
            "id": f"rec{i:05d}",
            "image": str(img_path),
            "captions": [f"caption {i} variant {j} of a scene" for j in range(captions_per_record)],
        })
    path = tmp_path / name
    path.write_text("\n".join(json.dumps(l) for l in lines) + "\n", encoding="utf-8")
    return path
