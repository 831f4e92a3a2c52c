"""Images, CSV tables and run manifests.

PGM files are binary P5: the ASCII header ``"P5\\n<w> <h>\\n255\\n"`` followed
by ``w * h`` bytes in row-major order, top row first (the row at y = ymax).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_VERSION = 1
SIG_DIGITS = 9


# images -----------------------------------------------------------------------------------
def pixel_centers(width: int, height: int, viewport) -> np.ndarray:
    """Complex pixel centres, shape (height, width), row 0 at the top."""
    xmin, xmax, ymin, ymax = viewport
    dx = (xmax - xmin) / width
    dy = (ymax - ymin) / height
    x = xmin + (np.arange(width) + 0.5) * dx
    y = ymax - (np.arange(height) + 0.5) * dy
    return x[None, :] + 1j * y[:, None]


def hit_counts(points: np.ndarray, width: int, height: int, viewport) -> np.ndarray:
    xmin, xmax, ymin, ymax = viewport
    pts = points[np.isfinite(points)]
    col = np.floor((pts.real - xmin) / (xmax - xmin) * width).astype(np.int64)
    row = np.floor((ymax - pts.imag) / (ymax - ymin) * height).astype(np.int64)
    keep = (col >= 0) & (col < width) & (row >= 0) & (row < height)
    counts = np.zeros(height * width, dtype=np.int64)
    np.add.at(counts, row[keep] * width + col[keep], 1)
    return counts.reshape(height, width)


def log_scale(counts: np.ndarray) -> np.ndarray:
    """Hit counts to bytes, 255 * log(1 + c) / log(1 + max c)."""
    top = counts.max()
    if top == 0:
        return np.zeros(counts.shape, dtype=np.uint8)
    v = np.log1p(counts.astype(float)) / np.log1p(float(top))
    return np.clip(np.rint(255 * v), 0, 255).astype(np.uint8)


def to_bytes(values: np.ndarray) -> np.ndarray:
    """Values in [0, 1] to bytes, 0 black and 1 white."""
    return np.clip(np.rint(255 * np.asarray(values, dtype=float)), 0, 255).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> Path:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w = image.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, dims, maxval, body = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError("not an 8-bit binary PGM")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(body, dtype=np.uint8, count=w * h).reshape(h, w)


def write_png(path, image: np.ndarray) -> Path | None:
    """PNG copy of a grayscale image when Pillow is installed."""
    try:
        from PIL import Image
    except ImportError:
        return None
    path = Path(path)
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8), mode="L").save(path, optimize=False)
    return path


# CSV --------------------------------------------------------------------------------------
def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.{SIG_DIGITS}g}"
    return str(x)


def write_csv(path, columns: list[str], rows: list[list], kind: str) -> Path:
    buf = io.StringIO()
    buf.write(f"# semithermo {kind} table, format version {CSV_VERSION}\r\n")
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")
    return path


def read_csv(path) -> tuple[str, list[dict[str, str]]]:
    text = Path(path).read_text(encoding="utf-8")
    header, body = text.split("\n", 1)
    return header.strip(), list(csv.DictReader(io.StringIO(body, newline="")))


# manifest ---------------------------------------------------------------------------------
def quantity(value, estimator: str, uncertainty=None, kind: str | None = None, **size) -> dict:
    """A reported number with its estimator and uncertainty proxy."""
    out = {"value": value, "estimator": estimator, "uncertainty": uncertainty, "uncertainty_kind": kind}
    out.update(size)
    return out


@dataclass
class RunManifest:
    command: str
    version: str
    config: dict
    results: dict = field(default_factory=dict)
    files: list[str] = field(default_factory=list)
    status: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "version": self.version,
            "config": self.config,
            "results": self.results,
            "files": self.files,
            "status": self.status,
            "timestamps": self.timestamps,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> RunManifest:
        return cls(**json.loads(text))

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(self.dumps(), encoding="utf-8")
        return path
