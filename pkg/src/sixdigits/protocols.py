"""Identification and verification evaluation protocols.

Identification enrols N randomly chosen samples per writer and ranks every
remaining sample against all writer templates (CMC / Top-M). Verification
enrols blocks of N consecutive samples in manifest order, scores the remaining
samples as genuine attempts, and scores one pseudo-forgery per test attempt as
an impostor; the operating point is summarized by the equal error rate.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyScoresError,
    InsufficientPoolError,
    MissingFeaturesError,
    NoEligibleWritersError,
)
from .features import ExtractionConfig
from .matching import DIGITS_PER_SAMPLE, Embedding, FeatureSet, Sample, extract_sample_features

__all__ = [
    "IdentificationSplit",
    "RankList",
    "CmcCurve",
    "VerificationSplit",
    "VerificationBlock",
    "ScoreSet",
    "HandcraftedStore",
    "EmbeddingStoreView",
    "split_identification",
    "run_identification",
    "cmc_curve",
    "split_verification",
    "make_pseudo_forgery",
    "run_verification",
    "compute_eer",
]


# ---------------------------------------------------------------------------
# Feature stores


class HandcraftedStore:
    """Lazily extracts and memoizes handcrafted FeatureSets for database samples."""

    def __init__(self, db, cfg: ExtractionConfig, kinds, cache=None):
        self.db = db
        self.cfg = cfg
        self.kinds = tuple(sorted(set(kinds), key=lambda k: k.value))
        self._memo: dict[tuple[str, str], FeatureSet] = {}
        self._cache = cache  # optional FeatureCache from the cli module

    def get(self, writer_id: str, sample_id: str) -> FeatureSet:
        key = (writer_id, sample_id)
        if key not in self._memo:
            if self._cache is not None:
                cached = self._cache.load(writer_id, sample_id, self.cfg, self.kinds)
                if cached is not None:
                    self._memo[key] = cached
                    return cached
            try:
                sample = self.db.get(writer_id, sample_id)
            except KeyError:
                raise MissingFeaturesError(f"no sample {key} in database") from None
            fs = extract_sample_features(sample, self.cfg, self.kinds)
            if self._cache is not None:
                self._cache.store(fs)
            self._memo[key] = fs
        return self._memo[key]

    def extract(self, sample: Sample) -> FeatureSet:
        return extract_sample_features(sample, self.cfg, self.kinds)


class EmbeddingStoreView:
    """Feature store over externally supplied embedding records."""

    def __init__(self, records):
        self._by_key = {(r.writer_id, r.sample_id): r.as_embedding() for r in records}

    def get(self, writer_id: str, sample_id: str) -> Embedding:
        try:
            return self._by_key[(writer_id, sample_id)]
        except KeyError:
            raise MissingFeaturesError(
                f"no embedding for ({writer_id}, {sample_id})"
            ) from None


# ---------------------------------------------------------------------------
# Identification


@dataclass(frozen=True)
class IdentificationSplit:
    n: int
    seed: int
    gallery: dict  # writer_id -> list of sample_ids, length n each
    probes: tuple  # (sample_id, true_writer_id)


@dataclass(frozen=True)
class RankList:
    probe_sample_id: str
    true_writer_id: str
    identities: tuple
    distances: tuple

    def rank_of_truth(self) -> int:
        """1-based rank of the true writer, or 0 when absent from the gallery."""
        try:
            return self.identities.index(self.true_writer_id) + 1
        except ValueError:
            return 0


@dataclass(frozen=True)
class CmcCurve:
    top_m: tuple  # top_m[m-1] = P(true identity within first m)


def split_identification(db, n: int, seed: int) -> IdentificationSplit:
    """Enrol n seeded-random samples per writer; the rest become probes.

    Writers with fewer than n+1 samples are excluded so every gallery template
    is built from exactly n samples and at least one probe remains.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    gallery = {}
    probes = []
    for w in db.writer_ids():
        samples = db.samples_of(w)
        if len(samples) < n + 1:
            continue
        chosen = sorted(rng.permutation(len(samples))[:n].tolist())
        chosen_set = set(chosen)
        gallery[w] = [samples[i].sample_id for i in chosen]
        probes.extend(
            (samples[i].sample_id, w) for i in range(len(samples)) if i not in chosen_set
        )
    if not gallery:
        raise NoEligibleWritersError(f"no writer has at least {n + 1} samples")
    return IdentificationSplit(n=n, seed=seed, gallery=gallery, probes=tuple(probes))


def run_identification(split: IdentificationSplit, store, matcher, workers: int = 1):
    """Rank every probe against all writer templates; ties break on writer id."""
    templates = [
        matcher.build([store.get(w, sid) for sid in sids], w)
        for w, sids in split.gallery.items()
    ]
    gallery = matcher.gallery(templates)
    writer_ids = gallery.writer_ids

    def evaluate(probe):
        sample_id, true_writer = probe
        d = gallery.distances(store.get(true_writer, sample_id))
        order = sorted(range(len(writer_ids)), key=lambda i: (d[i], writer_ids[i]))
        return RankList(
            probe_sample_id=sample_id,
            true_writer_id=true_writer,
            identities=tuple(writer_ids[i] for i in order),
            distances=tuple(float(d[i]) for i in order),
        )

    if workers <= 1:
        return [evaluate(p) for p in split.probes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(evaluate, split.probes))


def cmc_curve(rank_lists, m_max: int) -> CmcCurve:
    """Cumulative match characteristic: fraction of probes correct by rank m."""
    if not rank_lists:
        raise ValueError("cmc_curve: no rank lists")
    ranks = np.array([rl.rank_of_truth() for rl in rank_lists])
    top = [float(np.mean((ranks >= 1) & (ranks <= m))) for m in range(1, m_max + 1)]
    return CmcCurve(tuple(top))


# ---------------------------------------------------------------------------
# Verification


@dataclass(frozen=True)
class VerificationBlock:
    writer_id: str
    enrol_ids: tuple
    test_ids: tuple


@dataclass(frozen=True)
class VerificationSplit:
    n: int
    blocks: tuple


@dataclass(frozen=True)
class ScoreSet:
    genuine: tuple
    impostor: tuple
    n: int
    feature_tag: str


def split_verification(db, n: int) -> VerificationSplit:
    """Blocks of n consecutive enrolment samples in manifest order.

    Block k of a writer enrols samples [k*n, (k+1)*n) and tests every sample
    after the enrolment window; blocks are emitted while the test set is
    non-empty. Writers with fewer than n+1 samples are excluded.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    blocks = []
    for w in db.writer_ids():
        ids = [s.sample_id for s in db.samples_of(w)]
        k = 0
        while (k + 1) * n < len(ids):
            blocks.append(
                VerificationBlock(
                    writer_id=w,
                    enrol_ids=tuple(ids[k * n : (k + 1) * n]),
                    test_ids=tuple(ids[(k + 1) * n :]),
                )
            )
            k += 1
    if not blocks:
        raise NoEligibleWritersError(f"no writer has at least {n + 1} samples")
    return VerificationSplit(n=n, blocks=tuple(blocks))


def make_pseudo_forgery(target: Sample, pool, seed) -> Sample:
    """Recompose the target's digit string from other writers' digit images.

    Each of the six digits is drawn uniformly (seeded) from pool entries with
    the same label written by a different writer. The result keeps the
    target's labels and claimed identity; digit_sources records provenance.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    digits = []
    sources = []
    for label in target.digit_labels:
        candidates = [e for e in pool.digit_index[label] if e[0] != target.writer_id]
        if not candidates:
            raise InsufficientPoolError(
                f"no digit '{label}' available from writers other than {target.writer_id}"
            )
        w, sid, pos = candidates[int(rng.integers(len(candidates)))]
        digits.append(pool.get(w, sid).digits[pos])
        sources.append((w, sid, pos))
    return Sample(
        writer_id=target.writer_id,
        sample_id=f"{target.sample_id}#forgery",
        digits=tuple(digits),
        digit_labels=target.digit_labels,
        digit_sources=tuple(sources),
    )


def run_verification(
    split: VerificationSplit,
    store,
    matcher,
    db,
    seed: int,
    workers: int = 1,
    impostor_mode: str = "forgery",
) -> ScoreSet:
    """Genuine scores per block/test pair plus one impostor attempt each.

    Impostors are pseudo-forgeries scored against the block template. With
    impostor_mode="zero-effort" (used for externally supplied embeddings,
    which cannot be recomposed digit-wise), a seeded random sample of another
    writer stands in for the forgery.
    """
    if impostor_mode not in ("forgery", "zero-effort"):
        raise ValueError("impostor_mode must be 'forgery' or 'zero-effort'")
    rng = np.random.default_rng(seed)
    templates = [
        matcher.build([store.get(b.writer_id, sid) for sid in b.enrol_ids], b.writer_id)
        for b in split.blocks
    ]

    # Impostor probes are generated serially so the run is deterministic for a
    # given seed regardless of worker count.
    impostor_probes = []
    if impostor_mode == "forgery":
        for block in split.blocks:
            for sid in block.test_ids:
                forgery = make_pseudo_forgery(db.get(block.writer_id, sid), db, rng)
                impostor_probes.append(store.extract(forgery))
    else:
        all_keys = [(w, s.sample_id) for w in db.writer_ids() for s in db.samples_of(w)]
        for block in split.blocks:
            others = [k for k in all_keys if k[0] != block.writer_id]
            if not others:
                raise InsufficientPoolError("zero-effort impostors need another writer")
            for _ in block.test_ids:
                w, sid = others[int(rng.integers(len(others)))]
                impostor_probes.append(store.get(w, sid))

    tasks = []
    idx = 0
    for block, template in zip(split.blocks, templates):
        for sid in block.test_ids:
            tasks.append((template, store.get(block.writer_id, sid), impostor_probes[idx]))
            idx += 1

    def evaluate(task):
        template, genuine_probe, impostor_probe = task
        return (
            matcher.distance(template, genuine_probe),
            matcher.distance(template, impostor_probe),
        )

    if workers <= 1:
        results = [evaluate(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, tasks))

    return ScoreSet(
        genuine=tuple(r[0] for r in results),
        impostor=tuple(r[1] for r in results),
        n=split.n,
        feature_tag=matcher.tag,
    )


# ---------------------------------------------------------------------------
# Equal error rate


def compute_eer(scores: ScoreSet) -> tuple[float, float]:
    """EER from a threshold sweep over all score values.

    A probe is accepted when its distance is <= t. FAR(t) is the impostor
    fraction accepted and FRR(t) the genuine fraction rejected. The EER is
    (FAR+FRR)/2 at the sweep point minimizing |FAR-FRR|, refined by linear
    interpolation where FAR and FRR cross between adjacent sweep points; ties
    resolve to the smaller threshold.
    """
    if not scores.genuine or not scores.impostor:
        raise EmptyScoresError("both genuine and impostor scores are required")
    gen = np.sort(np.asarray(scores.genuine, dtype=np.float64))
    imp = np.sort(np.asarray(scores.impostor, dtype=np.float64))
    ts = np.unique(np.concatenate([gen, imp]))
    far = np.searchsorted(imp, ts, side="right") / len(imp)
    frr = 1.0 - np.searchsorted(gen, ts, side="right") / len(gen)
    diff = far - frr
    candidates = [
        (abs(float(diff[i])), float(ts[i]), (float(far[i]) + float(frr[i])) / 2.0)
        for i in range(len(ts))
    ]
    for i in range(len(ts) - 1):
        if diff[i] != 0 and diff[i + 1] != 0 and (diff[i] < 0) != (diff[i + 1] < 0):
            denom = float(diff[i + 1] - diff[i])
            s = float(-diff[i]) / denom
            t_cross = float(ts[i] + s * (ts[i + 1] - ts[i]))
            eer = float(far[i] + s * (far[i + 1] - far[i]))
            candidates.append((0.0, t_cross, eer))
    best = min(candidates, key=lambda c: (c[0], c[1]))
    return best[2], best[1]
