"""Corpus ingestion, embedding interchange, and synthetic writer generation.

A Database groups samples by writer in manifest order and keeps an index of
every digit occurrence by label for pseudo-forgery pooling. The synthetic
generator renders digits from hand-authored polyline skeletons with per-writer
style (slant, stroke width, control-point offsets) and per-sample noise, so
desk-scale corpora with controllable separability can be produced without any
external data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    DuplicateSampleError,
    MissingImageError,
    ParseError,
)
from .imageproc import as_binary, read_gray, write_pgm
from .matching import DIGIT_SHAPE, DIGITS_PER_SAMPLE, Embedding, Sample

__all__ = [
    "Database",
    "build_database",
    "load_manifest",
    "save_database",
    "database_equal",
    "EmbeddingRecord",
    "read_embeddings",
    "write_embeddings",
    "StyleVariance",
    "SynthConfig",
    "synthesize_writers",
]

MANIFEST_HEADER = ["writer_id", "sample_id", "digit_index", "digit_label", "image_path"]


@dataclass
class Database:
    """All samples grouped by writer, plus a digit-label index for forgeries."""

    writers: dict[str, list[Sample]]
    digit_index: dict[int, list[tuple[str, str, int]]]

    def writer_ids(self) -> list[str]:
        return list(self.writers.keys())

    def samples_of(self, writer_id: str) -> list[Sample]:
        return self.writers[writer_id]

    def get(self, writer_id: str, sample_id: str) -> Sample:
        for s in self.writers[writer_id]:
            if s.sample_id == sample_id:
                return s
        raise KeyError((writer_id, sample_id))

    def all_samples(self):
        for samples in self.writers.values():
            yield from samples

    @property
    def n_samples(self) -> int:
        return sum(len(s) for s in self.writers.values())


def build_database(samples: list[Sample]) -> Database:
    writers: dict[str, list[Sample]] = {}
    digit_index: dict[int, list[tuple[str, str, int]]] = {d: [] for d in range(10)}
    for s in samples:
        writers.setdefault(s.writer_id, []).append(s)
        for pos, label in enumerate(s.digit_labels):
            digit_index[label].append((s.writer_id, s.sample_id, pos))
    return Database(writers, digit_index)


# ---------------------------------------------------------------------------
# Manifest I/O


def load_manifest(path: str | Path) -> Database:
    """Load a digit-image corpus described by a manifest CSV.

    The manifest has a `writer_id,sample_id,digit_index,digit_label,image_path`
    header and six rows per sample; image paths are relative to the manifest.
    Sample order within a writer follows first appearance in the file.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"manifest not found: {path}")
    base = path.parent
    pending: dict[tuple[str, str], dict[int, tuple[int, np.ndarray]]] = {}
    order: list[tuple[str, str]] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty manifest") from None
        if [h.strip() for h in header] != MANIFEST_HEADER:
            raise ParseError(f"{path}: bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ParseError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            writer_id, sample_id, digit_index, digit_label, image_path = [c.strip() for c in row]
            try:
                pos = int(digit_index)
                label = int(digit_label)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer digit index or label") from None
            if not 0 <= pos < DIGITS_PER_SAMPLE:
                raise ParseError(f"{path}:{lineno}: digit_index {pos} out of range 0..5")
            if not 0 <= label <= 9:
                raise ParseError(f"{path}:{lineno}: digit_label {label} out of range 0..9")
            img_file = base / image_path
            if not img_file.exists():
                raise MissingImageError(f"{path}:{lineno}: missing image {img_file}")
            img = read_gray(img_file)
            if img.shape != DIGIT_SHAPE:
                raise DimensionError(
                    f"{path}:{lineno}: image is {img.shape}, expected {DIGIT_SHAPE}"
                )
            key = (writer_id, sample_id)
            if key not in pending:
                pending[key] = {}
                order.append(key)
            if pos in pending[key]:
                raise DuplicateSampleError(
                    f"{path}:{lineno}: duplicate digit {pos} for sample {key}"
                )
            pending[key][pos] = (label, img)
    samples = []
    for key in order:
        digits = pending[key]
        if sorted(digits) != list(range(DIGITS_PER_SAMPLE)):
            raise ParseError(f"{path}: sample {key} does not have digit positions 0..5")
        samples.append(
            Sample(
                writer_id=key[0],
                sample_id=key[1],
                digits=tuple(digits[i][1] for i in range(DIGITS_PER_SAMPLE)),
                digit_labels=tuple(digits[i][0] for i in range(DIGITS_PER_SAMPLE)),
            )
        )
    return build_database(samples)


def save_database(db: Database, out_dir: str | Path) -> Path:
    """Write all digit images as PGM plus a manifest CSV; returns the manifest path."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for sample in db.all_samples():
            for pos in range(DIGITS_PER_SAMPLE):
                rel = f"images/{sample.writer_id}_{sample.sample_id}_{pos}.pgm"
                write_pgm(out_dir / rel, sample.digits[pos])
                writer.writerow(
                    [sample.writer_id, sample.sample_id, pos, sample.digit_labels[pos], rel]
                )
    return manifest


def database_equal(a: Database, b: Database) -> bool:
    """Structural equality with digit images compared as binarized ink masks."""
    if list(a.writers) != list(b.writers):
        return False
    for w in a.writers:
        sa, sb = a.writers[w], b.writers[w]
        if len(sa) != len(sb):
            return False
        for x, y in zip(sa, sb):
            if x.sample_id != y.sample_id or x.digit_labels != y.digit_labels:
                return False
            for dx, dy in zip(x.digits, y.digits):
                if not np.array_equal(as_binary(dx), as_binary(dy)):
                    return False
    return a.digit_index == b.digit_index


# ---------------------------------------------------------------------------
# Embedding interchange


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    sample_id: str
    writer_id: str
    vector: np.ndarray

    def as_embedding(self) -> Embedding:
        return Embedding(self.sample_id, self.vector)


def write_embeddings(path: str | Path, records: list[EmbeddingRecord]) -> None:
    """Write embeddings as CSV: sample_id,writer_id,dim,v0,...,v{dim-1}."""
    if not records:
        raise ValueError("write_embeddings: no records")
    dim = len(records[0].vector)
    for r in records:
        if len(r.vector) != dim:
            raise DimensionError("embedding records differ in dimension")
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["sample_id", "writer_id", "dim"] + [f"v{i}" for i in range(dim)])
        for r in records:
            writer.writerow([r.sample_id, r.writer_id, dim] + [f"{v:.9g}" for v in r.vector])


def read_embeddings(path: str | Path) -> list[EmbeddingRecord]:
    """Read the embedding CSV written by write_embeddings (or the deep trainer)."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"embedding file not found: {path}")
    records = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty embedding file") from None
        if len(header) < 4 or header[:3] != ["sample_id", "writer_id", "dim"]:
            raise ParseError(f"{path}: bad embedding header")
        dim = len(header) - 3
        if header[3:] != [f"v{i}" for i in range(dim)]:
            raise ParseError(f"{path}: bad embedding header columns")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + dim:
                raise DimensionError(f"{path}:{lineno}: expected {dim} values")
            try:
                row_dim = int(row[2])
                vec = np.array([float(v) for v in row[3:]], dtype=np.float64)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: malformed number") from None
            if row_dim != dim:
                raise DimensionError(
                    f"{path}:{lineno}: row declares dim {row_dim}, header has {dim}"
                )
            records.append(EmbeddingRecord(row[0], row[1], vec))
    if not records:
        raise ParseError(f"{path}: no embedding records")
    return records


# ---------------------------------------------------------------------------
# Synthetic corpus generation

# Polyline skeletons per digit class in a unit box (x right, y down). Each
# digit is a tuple of strokes; multi-stroke digits keep pen lifts.
_SKELETONS: dict[int, tuple[tuple[tuple[float, float], ...], ...]] = {
    0: (
        (
            (0.50, 0.06), (0.76, 0.18), (0.84, 0.50), (0.76, 0.82),
            (0.50, 0.94), (0.24, 0.82), (0.16, 0.50), (0.24, 0.18), (0.50, 0.06),
        ),
    ),
    1: (((0.30, 0.26), (0.56, 0.06), (0.56, 0.94)),),
    2: (
        (
            (0.20, 0.26), (0.34, 0.08), (0.62, 0.06), (0.78, 0.20),
            (0.74, 0.42), (0.50, 0.62), (0.26, 0.80), (0.18, 0.94), (0.82, 0.94),
        ),
    ),
    3: (
        (
            (0.22, 0.14), (0.50, 0.06), (0.74, 0.18), (0.72, 0.38), (0.48, 0.48),
            (0.74, 0.60), (0.78, 0.80), (0.52, 0.94), (0.22, 0.86),
        ),
    ),
    4: (((0.66, 0.94), (0.66, 0.06), (0.18, 0.64), (0.84, 0.64)),),
    5: (
        (
            (0.78, 0.06), (0.26, 0.06), (0.22, 0.46), (0.52, 0.40),
            (0.78, 0.52), (0.80, 0.76), (0.56, 0.94), (0.24, 0.88),
        ),
    ),
    6: (
        (
            (0.72, 0.08), (0.44, 0.28), (0.26, 0.56), (0.28, 0.80), (0.50, 0.94),
            (0.72, 0.82), (0.72, 0.60), (0.50, 0.50), (0.28, 0.62),
        ),
    ),
    7: (((0.18, 0.06), (0.82, 0.06), (0.44, 0.94)), ((0.32, 0.50), (0.66, 0.50))),
    8: (
        (
            (0.50, 0.06), (0.72, 0.16), (0.72, 0.34), (0.50, 0.46),
            (0.28, 0.34), (0.28, 0.16), (0.50, 0.06),
        ),
        (
            (0.50, 0.46), (0.76, 0.60), (0.76, 0.82), (0.50, 0.94),
            (0.24, 0.82), (0.24, 0.60), (0.50, 0.46),
        ),
    ),
    9: (
        (
            (0.28, 0.92), (0.56, 0.72), (0.74, 0.44), (0.72, 0.20), (0.50, 0.06),
            (0.28, 0.18), (0.28, 0.40), (0.50, 0.50), (0.72, 0.38),
        ),
    ),
}

_BASE_STROKE_WIDTH = 2.2
_MARGIN_X = 3.5
_MARGIN_Y = 3.5


@dataclass(frozen=True)
class StyleVariance:
    """Across-writer spread of the style parameters, in natural units."""

    slant_deg: float = 6.0
    stroke_width: float = 0.5
    jitter: float = 0.9  # pixels, on skeleton control points


@dataclass(frozen=True)
class SynthConfig:
    writer_count: int = 50
    samples_per_writer: int = 12
    style_variance: StyleVariance = field(default_factory=StyleVariance)
    within_writer_noise: float = 0.3  # pixels, per-sample control point noise
    samples_skew: float = 0.0  # lognormal sigma on per-writer sample counts
    seed: int = 0

    def __post_init__(self):
        sv = self.style_variance
        if self.writer_count < 2:
            raise ConfigError("writer_count must be >= 2")
        if self.samples_per_writer < 1:
            raise ConfigError("samples_per_writer must be >= 1")
        if min(sv.slant_deg, sv.stroke_width, sv.jitter) < 0:
            raise ConfigError("style variances must be >= 0")
        if self.within_writer_noise < 0 or self.samples_skew < 0:
            raise ConfigError("noise and skew must be >= 0")

    def to_dict(self) -> dict:
        return {
            "writer_count": self.writer_count,
            "samples_per_writer": self.samples_per_writer,
            "style_variance": {
                "slant_deg": self.style_variance.slant_deg,
                "stroke_width": self.style_variance.stroke_width,
                "jitter": self.style_variance.jitter,
            },
            "within_writer_noise": self.within_writer_noise,
            "samples_skew": self.samples_skew,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthConfig":
        sv = obj.get("style_variance", {})
        return cls(
            writer_count=obj.get("writer_count", 50),
            samples_per_writer=obj.get("samples_per_writer", 12),
            style_variance=StyleVariance(
                slant_deg=sv.get("slant_deg", 6.0),
                stroke_width=sv.get("stroke_width", 0.5),
                jitter=sv.get("jitter", 0.9),
            ),
            within_writer_noise=obj.get("within_writer_noise", 0.3),
            samples_skew=obj.get("samples_skew", 0.0),
            seed=obj.get("seed", 0),
        )


def _render_digit(label: int, offsets: np.ndarray, noise: np.ndarray, slant_rad: float,
                  stroke_width: float) -> np.ndarray:
    """Rasterize one digit as a boolean ink mask of DIGIT_SHAPE."""
    h, w = DIGIT_SHAPE
    strokes = _SKELETONS[label]
    ys, xs = np.mgrid[0:h, 0:w]
    px = xs.astype(np.float64)
    py = ys.astype(np.float64)
    ink = np.zeros(DIGIT_SHAPE, dtype=bool)
    radius = stroke_width / 2.0
    shear = math.tan(slant_rad)
    y_mid = (h - 1) / 2.0
    i = 0
    for stroke in strokes:
        pts = []
        for (nx, ny) in stroke:
            x = _MARGIN_X + nx * (w - 1 - 2 * _MARGIN_X) + offsets[i, 0] + noise[i, 0]
            y = _MARGIN_Y + ny * (h - 1 - 2 * _MARGIN_Y) + offsets[i, 1] + noise[i, 1]
            x += shear * (y_mid - y)
            pts.append((min(max(x, 1.0), w - 2.0), min(max(y, 1.0), h - 2.0)))
            i += 1
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            vx, vy = x1 - x0, y1 - y0
            seg2 = vx * vx + vy * vy
            if seg2 == 0:
                dist2 = (px - x0) ** 2 + (py - y0) ** 2
            else:
                t = np.clip(((px - x0) * vx + (py - y0) * vy) / seg2, 0.0, 1.0)
                dist2 = (px - (x0 + t * vx)) ** 2 + (py - (y0 + t * vy)) ** 2
            ink |= dist2 <= radius * radius
    return ink


def _skeleton_point_count(label: int) -> int:
    return sum(len(stroke) for stroke in _SKELETONS[label])


def synthesize_writers(cfg: SynthConfig) -> Database:
    """Generate a deterministic synthetic corpus of handwritten DoB digits.

    Every writer gets a fixed six-digit date string (yymmdd with mm 01..12 and
    dd 01..28) and a personal style: slant, stroke width, and control-point
    offsets per digit class, all scaled by the configured style variance.
    Samples add within-writer control-point noise on top. With all variances
    at zero, every rendering of a digit class is pixel-identical.
    """
    rng = np.random.default_rng(cfg.seed)
    sv = cfg.style_variance
    samples = []
    for widx in range(cfg.writer_count):
        writer_id = f"w{widx:03d}"
        slant = math.radians(rng.standard_normal() * sv.slant_deg)
        width = float(np.clip(_BASE_STROKE_WIDTH + rng.standard_normal() * sv.stroke_width,
                              1.3, 5.0))
        offsets = {
            c: rng.standard_normal((_skeleton_point_count(c), 2)) * sv.jitter
            for c in range(10)
        }
        yy = int(rng.integers(0, 100))
        mm = int(rng.integers(1, 13))
        dd = int(rng.integers(1, 29))
        labels = tuple(int(ch) for ch in f"{yy:02d}{mm:02d}{dd:02d}")
        skew_z = rng.standard_normal()
        if cfg.samples_skew > 0:
            count = max(2, round(cfg.samples_per_writer * math.exp(cfg.samples_skew * skew_z)))
        else:
            count = cfg.samples_per_writer
        for sidx in range(count):
            digits = []
            for label in labels:
                noise = rng.standard_normal((_skeleton_point_count(label), 2))
                noise = noise * cfg.within_writer_noise
                digits.append(_render_digit(label, offsets[label], noise, slant, width))
            samples.append(
                Sample(
                    writer_id=writer_id,
                    sample_id=f"s{sidx:03d}",
                    digits=tuple(digits),
                    digit_labels=labels,
                )
            )
    return build_database(samples)
