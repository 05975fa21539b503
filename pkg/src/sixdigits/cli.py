"""Command-line entry point: corpus synthesis, extraction, protocol runs.

Subcommands mirror the experimental axes: `synth` renders a corpus, `extract`
fills the feature cache, `identify` and `verify` run one protocol, `sweep`
drives both across an enrolment range, and `report` merges JSON reports into
one summary CSV. Reports embed the resolved configuration and contain no
timestamps, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .dataset import SynthConfig, load_manifest, read_embeddings, save_database, synthesize_writers
from .errors import SixDigitsError
from .features import ExtractionConfig, FeatureKind
from .matching import ChiSquareMatcher, EuclideanMatcher, FeatureSet
from .protocols import (
    EmbeddingStoreView,
    HandcraftedStore,
    cmc_curve,
    compute_eer,
    run_identification,
    run_verification,
    split_identification,
    split_verification,
)

_NOTES = {"verification_test_window": "all samples after the enrolment window"}


class FeatureCache:
    """Disk cache of FeatureSets keyed by (sample, extraction config hash)."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def _path(self, writer_id: str, sample_id: str, cfg: ExtractionConfig) -> Path:
        return self.root / cfg.config_hash / f"{writer_id}__{sample_id}.json"

    def load(self, writer_id, sample_id, cfg, kinds) -> FeatureSet | None:
        path = self._path(writer_id, sample_id, cfg)
        if not path.exists():
            return None
        fs = FeatureSet.from_json(json.loads(path.read_text()))
        if not set(kinds) <= set(fs.kinds):
            return None
        return _restrict(fs, kinds)

    def store(self, fs: FeatureSet) -> None:
        path = self.root / fs.config_hash / f"{fs.writer_id}__{fs.sample_id}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(fs.to_json(), sort_keys=True))


def _restrict(fs: FeatureSet, kinds) -> FeatureSet:
    kinds = tuple(sorted(set(kinds), key=lambda k: k.value))
    if kinds == fs.kinds:
        return fs
    return FeatureSet(
        sample_id=fs.sample_id,
        writer_id=fs.writer_id,
        config_hash=fs.config_hash,
        kinds=kinds,
        positions=tuple(
            None if pos is None else {k: pos[k] for k in kinds} for pos in fs.positions
        ),
    )


def _parse_features(text: str) -> tuple:
    kinds = set()
    for name in text.split(","):
        name = name.strip().lower()
        if name == "f1":
            kinds.add(FeatureKind.DIRECTION)
        elif name == "f2":
            kinds.add(FeatureKind.HINGE)
        elif name == "f3":
            kinds.add(FeatureKind.COOC_H)
            kinds.add(FeatureKind.COOC_V)
        elif name == "f3h":
            kinds.add(FeatureKind.COOC_H)
        elif name == "f3v":
            kinds.add(FeatureKind.COOC_V)
        else:
            raise SixDigitsError(f"unknown feature '{name}' (use f1,f2,f3,f3h,f3v)")
    return tuple(sorted(kinds, key=lambda k: k.value))


def _parse_enrol(args) -> list[int]:
    if args.enrol_range:
        lo, _, hi = args.enrol_range.partition("..")
        try:
            lo, hi = int(lo), int(hi)
        except ValueError:
            raise SixDigitsError(f"bad --enrol-range '{args.enrol_range}', expected A..B")
        if lo < 1 or hi < lo:
            raise SixDigitsError("enrolment range must satisfy 1 <= A <= B")
        return list(range(lo, hi + 1))
    return [args.enrol]


def _parse_seeds(args) -> list[int]:
    if args.seeds:
        return [int(s) for s in args.seeds.split(",")]
    return [args.seed]


def _load_db(args):
    if args.manifest and args.synth:
        raise SixDigitsError("give exactly one data source: --manifest or --synth")
    if args.manifest:
        return load_manifest(args.manifest), {"manifest": str(args.manifest)}
    if args.synth:
        cfg = SynthConfig.from_dict(json.loads(Path(args.synth).read_text()))
        return synthesize_writers(cfg), {"synth": cfg.to_dict()}
    if getattr(args, "embeddings", None):
        records = read_embeddings(args.embeddings)
        return _EmbeddingShimDb(records), {"embeddings_structure": str(args.embeddings)}
    raise SixDigitsError("no data source: give --manifest, --synth, or --embeddings")


class _ShimSample:
    __slots__ = ("sample_id",)

    def __init__(self, sample_id):
        self.sample_id = sample_id


class _EmbeddingShimDb:
    """Split structure derived from an embedding CSV when no images are given."""

    def __init__(self, records):
        self.writers: dict[str, list[_ShimSample]] = {}
        for r in records:
            self.writers.setdefault(r.writer_id, []).append(_ShimSample(r.sample_id))

    def writer_ids(self):
        return list(self.writers.keys())

    def samples_of(self, writer_id):
        return self.writers[writer_id]


def _make_store_and_matcher(args, db, extraction_cfg):
    if args.embeddings:
        records = read_embeddings(args.embeddings)
        return EmbeddingStoreView(records), EuclideanMatcher(), "zero-effort"
    kinds = _parse_features(args.features)
    cache = FeatureCache(Path(args.out) / "cache") if args.cache else None
    store = HandcraftedStore(db, extraction_cfg, kinds, cache=cache)
    return store, ChiSquareMatcher(kinds, mode=args.mode), "forgery"


def _run_config_dict(args, command: str) -> dict:
    keys = ("manifest", "synth", "features", "mode", "enrol", "enrol_range",
            "seed", "seeds", "embeddings", "out", "workers")
    resolved = {k: getattr(args, k, None) for k in keys}
    resolved["command"] = command
    return resolved


def _write_report(out_dir: Path, name: str, payload: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def cmd_synth(args) -> int:
    cfg = SynthConfig.from_dict(json.loads(Path(args.synth).read_text()))
    if args.seed is not None:
        cfg = SynthConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    db = synthesize_writers(cfg)
    manifest = save_database(db, args.out)
    print(f"wrote {db.n_samples} samples for {len(db.writers)} writers to {manifest}")
    return 0


def cmd_extract(args) -> int:
    db, _ = _load_db(args)
    cfg = ExtractionConfig()
    kinds = _parse_features(args.features)
    cache = FeatureCache(Path(args.out) / "cache")
    store = HandcraftedStore(db, cfg, kinds, cache=cache)
    count = 0
    for w in db.writer_ids():
        for s in db.samples_of(w):
            store.get(w, s.sample_id)
            count += 1
    print(f"extracted {count} feature sets (config {cfg.config_hash}) into {cache.root}")
    return 0


def cmd_identify(args) -> int:
    db, source = _load_db(args)
    extraction_cfg = ExtractionConfig()
    store, matcher, _ = _make_store_and_matcher(args, db, extraction_cfg)
    out_dir = Path(args.out)
    for n in _parse_enrol(args):
        for seed in _parse_seeds(args):
            split = split_identification(db, n, seed)
            rank_lists = run_identification(split, store, matcher, workers=args.workers)
            curve = cmc_curve(rank_lists, m_max=len(split.gallery))
            payload = {
                "protocol": "identification",
                "n": n,
                "seed": seed,
                "feature_tag": matcher.tag,
                "mode": matcher.mode,
                "cmc": list(curve.top_m),
                "counts": {"writers": len(split.gallery), "probes": len(split.probes)},
                "source": source,
                "run_config": _run_config_dict(args, "identify"),
                "extraction_config": extraction_cfg.to_dict(),
                "notes": _NOTES,
            }
            path = _write_report(
                out_dir, f"identify_{matcher.tag}_{matcher.mode}_N{n}_seed{seed}.json", payload
            )
            print(f"{path} top1={curve.top_m[0]:.4f}")
    return 0


def cmd_verify(args) -> int:
    db, source = _load_db(args)
    extraction_cfg = ExtractionConfig()
    store, matcher, impostor_mode = _make_store_and_matcher(args, db, extraction_cfg)
    out_dir = Path(args.out)
    for n in _parse_enrol(args):
        for seed in _parse_seeds(args):
            split = split_verification(db, n)
            scores = run_verification(
                split, store, matcher, db, seed,
                workers=args.workers, impostor_mode=impostor_mode,
            )
            eer, threshold = compute_eer(scores)
            payload = {
                "protocol": "verification",
                "n": n,
                "seed": seed,
                "feature_tag": matcher.tag,
                "mode": matcher.mode,
                "eer": eer,
                "threshold": threshold,
                "impostor_mode": impostor_mode,
                "counts": {
                    "blocks": len(split.blocks),
                    "genuine": len(scores.genuine),
                    "impostor": len(scores.impostor),
                },
                "source": source,
                "run_config": _run_config_dict(args, "verify"),
                "extraction_config": extraction_cfg.to_dict(),
                "notes": _NOTES,
            }
            stem = f"verify_{matcher.tag}_{matcher.mode}_N{n}_seed{seed}"
            path = _write_report(out_dir, stem + ".json", payload)
            with open(out_dir / (stem + "_scores.csv"), "w", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(["kind", "distance"])
                for d in scores.genuine:
                    writer.writerow(["genuine", f"{d:.17g}"])
                for d in scores.impostor:
                    writer.writerow(["impostor", f"{d:.17g}"])
            print(f"{path} eer={eer:.4f}")
    return 0


def cmd_sweep(args) -> int:
    rc = cmd_identify(args)
    if rc:
        return rc
    rc = cmd_verify(args)
    if rc:
        return rc
    return cmd_report(args)


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    rows = []
    for path in sorted(out_dir.glob("*.json")):
        obj = json.loads(path.read_text())
        if "protocol" not in obj:
            continue
        cmc = obj.get("cmc") or []
        rows.append(
            {
                "protocol": obj["protocol"],
                "feature_tag": obj.get("feature_tag", ""),
                "mode": obj.get("mode", ""),
                "n": obj.get("n"),
                "seed": obj.get("seed"),
                "top1": cmc[0] if cmc else "",
                "top5": cmc[4] if len(cmc) >= 5 else "",
                "top10": cmc[9] if len(cmc) >= 10 else "",
                "eer": obj.get("eer", ""),
                "threshold": obj.get("threshold", ""),
            }
        )
    if not rows:
        raise SixDigitsError(f"no report JSON files found in {out_dir}")
    summary = out_dir / "summary.csv"
    with open(summary, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {summary} ({len(rows)} runs)")
    return 0


def _add_common(p, with_features=True):
    p.add_argument("--manifest", help="manifest CSV of a labeled digit corpus")
    p.add_argument("--synth", help="JSON synthesis config (in-memory corpus)")
    if with_features:
        p.add_argument("--features", default="f1,f2", help="comma list: f1,f2,f3,f3h,f3v")
        p.add_argument("--mode", default="digitwise", choices=["digitwise", "pooled"])
        p.add_argument("--embeddings", help="embedding CSV; switches to Euclidean matching")
    p.add_argument("--enrol", type=int, default=1, help="enrolment samples per writer")
    p.add_argument("--enrol-range", dest="enrol_range", help="sweep range A..B")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", help="comma list of seeds")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--cache", action="store_true", help="cache extracted features under OUT")
    p.add_argument("--out", required=True, help="output directory for reports")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sixdigits",
        description="Writer identification and verification from six handwritten digits",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic corpus to disk")
    p.add_argument("--synth", required=True, help="JSON synthesis config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract features into the cache")
    p.add_argument("--manifest")
    p.add_argument("--synth")
    p.add_argument("--features", default="f1,f2")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract, embeddings=None)

    p = sub.add_parser("identify", help="run the identification protocol")
    _add_common(p)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("verify", help="run the verification protocol")
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="identification + verification over an N range")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="merge report JSONs into summary.csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SixDigitsError as e:
        print(f"error: {type(e).__module__}.{type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
