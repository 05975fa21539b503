"""Enrolment templates and sample-to-template distances.

Handcrafted features are compared digit by digit (six chi-square distances
averaged) or pooled (digit PDFs averaged first, one distance). Distances over
several feature kinds are fused by averaging, with f3h and f3v first combined
into a single f3 value. Deep 512-d embeddings are compared with the Euclidean
distance against a mean-vector template.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllDegenerateError,
    ConfigMismatchError,
    DegenerateSampleError,
    DimensionMismatchError,
    NoInkError,
    NoRunsError,
)
from .features import ExtractionConfig, FeatureKind, FeaturePdf, average_pdfs, chi2_distance
from .imageproc import as_binary, trace_contours
from . import features as _f

__all__ = [
    "DIGITS_PER_SAMPLE",
    "DIGIT_SHAPE",
    "Sample",
    "FeatureSet",
    "Template",
    "Embedding",
    "extract_sample_features",
    "build_template",
    "distance_digitwise",
    "distance_pooled",
    "embedding_distance",
    "build_embedding_template",
    "ChiSquareMatcher",
    "EuclideanMatcher",
]

DIGITS_PER_SAMPLE = 6
DIGIT_SHAPE = (35, 27)  # rows, cols


@dataclass(frozen=True, eq=False)
class Sample:
    """Six ordered digit images written by one writer in one sitting.

    digits are (35, 27) arrays, either uint8 grayscale or boolean ink masks.
    digit_sources is optional provenance used by pseudo-forgeries: one
    (writer_id, sample_id, position) triple per digit.
    """

    writer_id: str
    sample_id: str
    digits: tuple
    digit_labels: tuple
    digit_sources: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "digits", tuple(self.digits))
        object.__setattr__(self, "digit_labels", tuple(int(x) for x in self.digit_labels))
        if len(self.digits) != DIGITS_PER_SAMPLE or len(self.digit_labels) != DIGITS_PER_SAMPLE:
            raise ValueError("a sample holds exactly 6 digit images and 6 labels")
        for d in self.digits:
            if d.shape != DIGIT_SHAPE:
                raise ValueError(f"digit image must be {DIGIT_SHAPE}, got {d.shape}")
        for lab in self.digit_labels:
            if not 0 <= lab <= 9:
                raise ValueError(f"digit label out of range: {lab}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.writer_id, self.sample_id)


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Per-position feature PDFs of one sample.

    positions[i] maps each extracted FeatureKind to its PDF, or is None when
    position i is degenerate (no usable ink for at least one requested kind).
    """

    sample_id: str
    writer_id: str
    config_hash: str
    kinds: tuple
    positions: tuple

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "writer_id": self.writer_id,
            "config_hash": self.config_hash,
            "kinds": [k.value for k in self.kinds],
            "positions": [
                None if pos is None else {k.value: pos[k].bins.tolist() for k in self.kinds}
                for pos in self.positions
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureSet":
        kinds = tuple(FeatureKind(k) for k in obj["kinds"])
        positions = tuple(
            None
            if pos is None
            else {k: FeaturePdf(k, np.array(pos[k.value]), obj["config_hash"]) for k in kinds}
            for pos in obj["positions"]
        )
        return cls(obj["sample_id"], obj["writer_id"], obj["config_hash"], kinds, positions)


@dataclass(frozen=True, eq=False)
class Template:
    """Digit-wise averaged enrolment PDFs of one writer."""

    writer_id: str
    config_hash: str
    kinds: tuple
    positions: tuple
    enrolment_size: int
    member_sample_ids: tuple

    def to_json(self) -> dict:
        return {
            "writer_id": self.writer_id,
            "config_hash": self.config_hash,
            "kinds": [k.value for k in self.kinds],
            "enrolment_size": self.enrolment_size,
            "member_sample_ids": list(self.member_sample_ids),
            "positions": [
                None if pos is None else {k.value: pos[k].bins.tolist() for k in self.kinds}
                for pos in self.positions
            ],
        }


@dataclass(frozen=True, eq=False)
class Embedding:
    """Fixed-length deep feature vector for a sample or writer template."""

    owner_id: str
    vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vector", np.array(self.vector, dtype=np.float64))
        if self.vector.ndim != 1:
            raise ValueError("embedding vector must be one-dimensional")
        self.vector.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.vector)


def extract_sample_features(
    sample: Sample, cfg: ExtractionConfig, kinds: set[FeatureKind] | tuple | list
) -> FeatureSet:
    """Binarize, trace, and extract the requested feature kinds per digit.

    A position becomes degenerate (None) when any requested kind finds no
    usable ink there; a sample with all six positions degenerate raises
    DegenerateSampleError.
    """
    kinds = tuple(sorted(set(kinds), key=lambda k: k.value))
    positions = []
    for digit in sample.digits:
        mask = as_binary(digit)
        contours = trace_contours(mask)
        pdfs: dict[FeatureKind, FeaturePdf] | None = {}
        for kind in kinds:
            try:
                if kind is FeatureKind.DIRECTION:
                    pdfs[kind] = _f.direction_pdf(contours, cfg)
                elif kind is FeatureKind.HINGE:
                    pdfs[kind] = _f.hinge_pdf(contours, cfg)
                elif kind is FeatureKind.COOC_H:
                    pdfs[kind] = _f.cooccurrence_pdf(mask, contours, "horizontal", cfg)
                else:
                    pdfs[kind] = _f.cooccurrence_pdf(mask, contours, "vertical", cfg)
            except (NoInkError, NoRunsError):
                pdfs = None
                break
        positions.append(pdfs)
    if all(pos is None for pos in positions):
        raise DegenerateSampleError(f"sample {sample.sample_id}: no position has usable ink")
    return FeatureSet(
        sample_id=sample.sample_id,
        writer_id=sample.writer_id,
        config_hash=cfg.config_hash,
        kinds=kinds,
        positions=tuple(positions),
    )


def _check_compatible(sets: list[FeatureSet]):
    first = sets[0]
    for s in sets[1:]:
        if s.config_hash != first.config_hash or s.kinds != first.kinds:
            raise ConfigMismatchError("feature sets differ in config or kinds")


def build_template(sets: list[FeatureSet], writer_id: str) -> Template:
    """Average member feature sets digit-wise into an enrolment template.

    A template position averages over the members where that position is not
    degenerate; it stays degenerate only when no member has it.
    """
    if not sets:
        raise ValueError("build_template: empty enrolment list")
    _check_compatible(sets)
    first = sets[0]
    positions = []
    for i in range(DIGITS_PER_SAMPLE):
        member_pdfs = [s.positions[i] for s in sets if s.positions[i] is not None]
        if not member_pdfs:
            positions.append(None)
            continue
        positions.append(
            {k: average_pdfs([pos[k] for pos in member_pdfs]) for k in first.kinds}
        )
    return Template(
        writer_id=writer_id,
        config_hash=first.config_hash,
        kinds=first.kinds,
        positions=tuple(positions),
        enrolment_size=len(sets),
        member_sample_ids=tuple(s.sample_id for s in sets),
    )


def _fuse_kind_distances(per_kind: dict[FeatureKind, float]) -> float:
    """Mean over kinds, with f3h and f3v first averaged into a single f3."""
    values = []
    f3 = [per_kind[k] for k in (FeatureKind.COOC_H, FeatureKind.COOC_V) if k in per_kind]
    for kind in (FeatureKind.DIRECTION, FeatureKind.HINGE):
        if kind in per_kind:
            values.append(per_kind[kind])
    if f3:
        values.append(sum(f3) / len(f3))
    return sum(values) / len(values)


def _select_kinds(template: Template, probe: FeatureSet, kinds) -> tuple:
    if template.config_hash != probe.config_hash:
        raise ConfigMismatchError("template and probe use different extraction configs")
    kinds = tuple(sorted(set(kinds), key=lambda k: k.value))
    for k in kinds:
        if k not in template.kinds or k not in probe.kinds:
            raise ConfigMismatchError(f"kind {k.value} missing from template or probe")
    return kinds


def distance_digitwise(template: Template, probe: FeatureSet, kinds) -> float:
    """Mean over digits of per-digit chi-square distances, fused over kinds.

    Positions degenerate on either side are left out of the positional mean;
    at least one position must survive.
    """
    kinds = _select_kinds(template, probe, kinds)
    live = [
        i
        for i in range(DIGITS_PER_SAMPLE)
        if template.positions[i] is not None and probe.positions[i] is not None
    ]
    if not live:
        raise AllDegenerateError("no digit position is usable on both sides")
    per_kind = {}
    for k in kinds:
        per_kind[k] = float(
            np.mean([chi2_distance(template.positions[i][k], probe.positions[i][k]) for i in live])
        )
    return _fuse_kind_distances(per_kind)


def distance_pooled(template: Template, probe: FeatureSet, kinds) -> float:
    """Chi-square between digit-averaged PDFs, fused over kinds."""
    kinds = _select_kinds(template, probe, kinds)
    t_live = [p for p in template.positions if p is not None]
    p_live = [p for p in probe.positions if p is not None]
    if not t_live or not p_live:
        raise AllDegenerateError("one side has no usable digit position")
    per_kind = {}
    for k in kinds:
        t_pool = average_pdfs([pos[k] for pos in t_live])
        p_pool = average_pdfs([pos[k] for pos in p_live])
        per_kind[k] = chi2_distance(t_pool, p_pool)
    return _fuse_kind_distances(per_kind)


def embedding_distance(a: Embedding, b: Embedding) -> float:
    """Euclidean distance between two embeddings of equal dimension."""
    if a.dim != b.dim:
        raise DimensionMismatchError(f"embedding dimensions differ: {a.dim} vs {b.dim}")
    return float(np.linalg.norm(a.vector - b.vector))


def build_embedding_template(vectors: list[Embedding], owner_id: str) -> Embedding:
    """Element-wise mean of enrolment embeddings."""
    if not vectors:
        raise ValueError("build_embedding_template: empty enrolment list")
    dim = vectors[0].dim
    for v in vectors[1:]:
        if v.dim != dim:
            raise DimensionMismatchError("enrolment embeddings differ in dimension")
    return Embedding(owner_id, np.mean([v.vector for v in vectors], axis=0))


class ChiSquareMatcher:
    """Handcrafted-feature matcher: template building plus either distance mode."""

    def __init__(self, kinds, mode: str = "digitwise"):
        if mode not in ("digitwise", "pooled"):
            raise ValueError("mode must be 'digitwise' or 'pooled'")
        self.kinds = tuple(sorted(set(kinds), key=lambda k: k.value))
        self.mode = mode

    @property
    def tag(self) -> str:
        names = []
        plain = [k.value for k in self.kinds if k in (FeatureKind.DIRECTION, FeatureKind.HINGE)]
        names.extend(plain)
        if FeatureKind.COOC_H in self.kinds or FeatureKind.COOC_V in self.kinds:
            names.append("f3")
        return "+".join(names)

    def build(self, feature_sets: list[FeatureSet], writer_id: str) -> Template:
        return build_template(feature_sets, writer_id)

    def distance(self, template: Template, probe: FeatureSet) -> float:
        if self.mode == "digitwise":
            return distance_digitwise(template, probe, self.kinds)
        return distance_pooled(template, probe, self.kinds)

    def gallery(self, templates: list[Template]) -> "_ChiSquareGallery":
        return _ChiSquareGallery(templates, self.kinds, self.mode)


class _ChiSquareGallery:
    """Stacked template PDFs for vectorized probe-against-all distances.

    Falls back to per-template evaluation whenever any involved position is
    degenerate, which keeps the value bit-identical to the scalar path.
    """

    def __init__(self, templates, kinds, mode):
        self.templates = templates
        self.kinds = kinds
        self.mode = mode
        self.writer_ids = [t.writer_id for t in templates]
        self._complete = all(
            pos is not None for t in templates for pos in t.positions
        )
        self._stacks = {}
        if self._complete and templates:
            for k in kinds:
                self._stacks[k] = np.stack(
                    [[t.positions[i][k].bins for i in range(DIGITS_PER_SAMPLE)] for t in templates]
                )  # (n_templates, 6, bins)

    def distances(self, probe: FeatureSet) -> np.ndarray:
        if not self._complete or any(pos is None for pos in probe.positions):
            matcher = ChiSquareMatcher(self.kinds, self.mode)
            return np.array([matcher.distance(t, probe) for t in self.templates])
        per_kind = {}
        for k in self.kinds:
            stack = self._stacks[k]  # (W, 6, B)
            if self.mode == "digitwise":
                pv = np.stack([probe.positions[i][k].bins for i in range(DIGITS_PER_SAMPLE)])
                per_kind[k] = _chi2_rows(stack, pv[np.newaxis, :, :]).mean(axis=1)
            else:
                t_pool = stack.mean(axis=1)  # (W, B)
                pv = np.mean(
                    [probe.positions[i][k].bins for i in range(DIGITS_PER_SAMPLE)], axis=0
                )
                per_kind[k] = _chi2_rows(t_pool, pv[np.newaxis, :])
        fused = []
        f3 = [per_kind[k] for k in (FeatureKind.COOC_H, FeatureKind.COOC_V) if k in per_kind]
        for kind in (FeatureKind.DIRECTION, FeatureKind.HINGE):
            if kind in per_kind:
                fused.append(per_kind[kind])
        if f3:
            fused.append(sum(f3) / len(f3))
        return np.mean(fused, axis=0)


def _chi2_rows(t: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Chi-square along the last axis with zero-sum bins skipped."""
    s = t + p
    d = t - p
    num = d * d
    out = np.divide(num, s, out=np.zeros_like(num), where=s > 0)
    return out.sum(axis=-1)


class EuclideanMatcher:
    """Deep-embedding matcher: mean-vector template, Euclidean distance."""

    tag = "embedding"
    mode = "embedding"

    def build(self, embeddings: list[Embedding], writer_id: str) -> Embedding:
        return build_embedding_template(embeddings, writer_id)

    def distance(self, template: Embedding, probe: Embedding) -> float:
        return embedding_distance(template, probe)

    def gallery(self, templates: list[Embedding]) -> "_EmbeddingGallery":
        return _EmbeddingGallery(templates)


class _EmbeddingGallery:
    def __init__(self, templates):
        self.templates = templates
        self.writer_ids = [t.owner_id for t in templates]
        self._matrix = np.stack([t.vector for t in templates]) if templates else None

    def distances(self, probe: Embedding) -> np.ndarray:
        if probe.dim != self._matrix.shape[1]:
            raise DimensionMismatchError("probe embedding dimension differs from gallery")
        return np.linalg.norm(self._matrix - probe.vector, axis=1)
