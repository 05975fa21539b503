"""Contour-directional PDF features and their chi-square comparison.

Four feature kinds are computed per digit: the distribution of local contour
fragment orientations (f1), the joint distribution of the two leg orientations
at a hinge point (f2), and the joint orientation distribution at the ink ends
of background run-lengths along the horizontal (f3h) or vertical (f3v) axis.
Histograms are normalized to probability distribution functions.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import KindMismatchError, NoInkError, NoRunsError
from .imageproc import ContourSet

__all__ = [
    "FeatureKind",
    "ExtractionConfig",
    "FeaturePdf",
    "direction_pdf",
    "hinge_pdf",
    "cooccurrence_pdf",
    "chi2_distance",
    "average_pdfs",
]


class FeatureKind(str, Enum):
    DIRECTION = "f1"
    HINGE = "f2"
    COOC_H = "f3h"
    COOC_V = "f3v"

    def __str__(self) -> str:  # pragma: no cover
        return self.value


@dataclass(frozen=True)
class ExtractionConfig:
    """Quantization and span parameters shared by all feature extractors.

    direction_bins quantizes undirected orientations over [0, 180); hinge legs
    use twice as many bins over the full circle before the ordered-pair
    reduction. Components smaller than min_component_size contribute nothing.
    """

    direction_bins: int = 12
    fragment_length: int = 5
    hinge_leg_length: int = 5
    min_component_size: int = 3

    def __post_init__(self):
        if self.direction_bins < 2:
            raise ValueError("direction_bins must be >= 2")
        if self.fragment_length < 1 or self.hinge_leg_length < 1:
            raise ValueError("fragment and hinge leg lengths must be >= 1")

    def bin_count(self, kind: FeatureKind) -> int:
        n = self.direction_bins
        if kind is FeatureKind.DIRECTION:
            return n
        if kind is FeatureKind.HINGE:
            m = 2 * n
            return m * (m + 1) // 2
        return n * n

    @property
    def config_hash(self) -> str:
        payload = json.dumps(
            {
                "direction_bins": self.direction_bins,
                "fragment_length": self.fragment_length,
                "hinge_leg_length": self.hinge_leg_length,
                "min_component_size": self.min_component_size,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def to_dict(self) -> dict:
        return {
            "direction_bins": self.direction_bins,
            "fragment_length": self.fragment_length,
            "hinge_leg_length": self.hinge_leg_length,
            "min_component_size": self.min_component_size,
        }


@dataclass(frozen=True, eq=False)
class FeaturePdf:
    """Normalized histogram over quantized orientations for one feature kind."""

    kind: FeatureKind
    bins: np.ndarray
    config_hash: str

    def __post_init__(self):
        object.__setattr__(self, "bins", np.array(self.bins, dtype=np.float64))
        self.bins.setflags(write=False)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "config_hash": self.config_hash,
            "bins": self.bins.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeaturePdf":
        return cls(FeatureKind(obj["kind"]), np.array(obj["bins"]), obj["config_hash"])


def _fold_180(dx: int, dy: int) -> float:
    """Undirected orientation of (dx, dy) in degrees, folded into [0, 180)."""
    return math.degrees(math.atan2(dy, dx)) % 180.0


def _full_360(dx: int, dy: int) -> float:
    return math.degrees(math.atan2(dy, dx)) % 360.0


def _usable(contour, cfg: ExtractionConfig, span: int) -> bool:
    return contour.component_size >= cfg.min_component_size and len(contour.points) >= span + 1


def direction_pdf(contours: ContourSet, cfg: ExtractionConfig) -> FeaturePdf:
    """Distribution of local contour fragment orientations (f1).

    Every contour position contributes the orientation of the fragment from
    point i to point i + fragment_length (cyclic), folded into [0, 180).
    """
    n = cfg.direction_bins
    width = 180.0 / n
    counts = np.zeros(n)
    for contour in contours:
        if not _usable(contour, cfg, cfg.fragment_length):
            continue
        pts = contour.points
        length = len(pts)
        for i in range(length):
            x0, y0 = pts[i]
            x1, y1 = pts[(i + cfg.fragment_length) % length]
            dx, dy = x1 - x0, y1 - y0
            if dx == 0 and dy == 0:
                continue
            b = min(int(_fold_180(dx, dy) // width), n - 1)
            counts[b] += 1
    total = counts.sum()
    if total == 0:
        raise NoInkError("no contour long enough for a direction fragment")
    return FeaturePdf(FeatureKind.DIRECTION, counts / total, cfg.config_hash)


def _pair_index(lo: int, hi: int, m: int) -> int:
    """Index of the ordered pair (lo <= hi) in the flattened upper triangle."""
    return lo * m - lo * (lo - 1) // 2 + (hi - lo)


def hinge_pdf(contours: ContourSet, cfg: ExtractionConfig) -> FeaturePdf:
    """Joint distribution of the two leg orientations at a hinge (f2).

    At every contour position two legs run to the points hinge_leg_length
    steps forward and backward along the walk. Their full-circle orientations
    are quantized to 2 x direction_bins levels and counted as an ordered pair
    with the smaller quantized angle first.
    """
    m = 2 * cfg.direction_bins
    width = 360.0 / m
    counts = np.zeros(m * (m + 1) // 2)
    leg = cfg.hinge_leg_length
    for contour in contours:
        if not _usable(contour, cfg, 2 * leg):
            continue
        pts = contour.points
        length = len(pts)
        for i in range(length):
            x0, y0 = pts[i]
            xf, yf = pts[(i + leg) % length]
            xb, yb = pts[(i - leg) % length]
            df = (xf - x0, yf - y0)
            db = (xb - x0, yb - y0)
            if df == (0, 0) or db == (0, 0):
                continue
            qf = min(int(_full_360(*df) // width), m - 1)
            qb = min(int(_full_360(*db) // width), m - 1)
            lo, hi = (qf, qb) if qf <= qb else (qb, qf)
            counts[_pair_index(lo, hi, m)] += 1
    total = counts.sum()
    if total == 0:
        raise NoInkError("no contour long enough for hinge legs")
    return FeaturePdf(FeatureKind.HINGE, counts / total, cfg.config_hash)


def _fragment_orientation_bins(contours: ContourSet, cfg: ExtractionConfig) -> dict:
    """Quantized f1 orientation per contour pixel, first walk occurrence wins."""
    n = cfg.direction_bins
    width = 180.0 / n
    orient: dict[tuple[int, int], int] = {}
    for contour in contours:
        if not _usable(contour, cfg, cfg.fragment_length):
            continue
        pts = contour.points
        length = len(pts)
        for i in range(length):
            p = pts[i]
            if p in orient:
                continue
            x1, y1 = pts[(i + cfg.fragment_length) % length]
            dx, dy = x1 - p[0], y1 - p[1]
            if dx == 0 and dy == 0:
                continue
            orient[p] = min(int(_fold_180(dx, dy) // width), n - 1)
    return orient


def cooccurrence_pdf(
    img: np.ndarray, contours: ContourSet, axis: str, cfg: ExtractionConfig
) -> FeaturePdf:
    """Joint orientations at the ink ends of background runs (f3h / f3v).

    Scans maximal background runs along the given axis; a run counts when both
    of its ends abut ink pixels that carry a contour orientation. The pair is
    ordered with the left (horizontal) or top (vertical) end first.
    """
    if axis not in ("horizontal", "vertical"):
        raise ValueError("axis must be 'horizontal' or 'vertical'")
    mask = np.asarray(img)
    if mask.dtype != bool:
        raise ValueError("cooccurrence_pdf expects a boolean ink mask")
    if not mask.any():
        raise NoInkError("image contains no ink")
    kind = FeatureKind.COOC_H if axis == "horizontal" else FeatureKind.COOC_V
    n = cfg.direction_bins
    orient = _fragment_orientation_bins(contours, cfg)
    counts = np.zeros(n * n)
    lines = mask if axis == "horizontal" else mask.T
    for li in range(lines.shape[0]):
        row = lines[li]
        j = 0
        length = len(row)
        while j < length:
            if row[j]:
                j += 1
                continue
            run_start = j
            while j < length and not row[j]:
                j += 1
            if run_start == 0 or j == length:
                continue  # run touches the border; only ink-bounded runs count
            if axis == "horizontal":
                e1, e2 = (run_start - 1, li), (j, li)
            else:
                e1, e2 = (li, run_start - 1), (li, j)
            b1, b2 = orient.get(e1), orient.get(e2)
            if b1 is None or b2 is None:
                continue
            counts[b1 * n + b2] += 1
    total = counts.sum()
    if total == 0:
        raise NoRunsError("no background run bounded by contour ink on both ends")
    return FeaturePdf(kind, counts / total, cfg.config_hash)


def chi2_distance(p: FeaturePdf, q: FeaturePdf) -> float:
    """Chi-square distance between two PDFs, skipping bins where both are 0."""
    if p.kind != q.kind or len(p.bins) != len(q.bins):
        raise KindMismatchError(f"cannot compare {p.kind.value} with {q.kind.value}")
    s = p.bins + q.bins
    nz = s > 0
    d = p.bins[nz] - q.bins[nz]
    return float(np.sum(d * d / s[nz]))


def average_pdfs(pdfs: list[FeaturePdf]) -> FeaturePdf:
    """Element-wise arithmetic mean of PDFs of one kind."""
    if not pdfs:
        raise ValueError("average_pdfs: empty list")
    first = pdfs[0]
    for p in pdfs[1:]:
        if p.kind != first.kind or len(p.bins) != len(first.bins):
            raise KindMismatchError("cannot average PDFs of different kinds")
    mean = np.mean([p.bins for p in pdfs], axis=0)
    return FeaturePdf(first.kind, mean, first.config_hash)
