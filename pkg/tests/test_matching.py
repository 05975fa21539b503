import numpy as np
import pytest

import oracles
from synthdata import blobby_raster, make_sample
from sixdigits import (
    AllDegenerateError,
    ChiSquareMatcher,
    ConfigMismatchError,
    DegenerateSampleError,
    DimensionMismatchError,
    Embedding,
    EuclideanMatcher,
    ExtractionConfig,
    FeatureKind,
    FeatureSet,
    Sample,
    build_embedding_template,
    build_template,
    chi2_distance,
    cooccurrence_pdf,
    direction_pdf,
    distance_digitwise,
    distance_pooled,
    embedding_distance,
    extract_sample_features,
    hinge_pdf,
    trace_contours,
)

CFG = ExtractionConfig()
F12 = (FeatureKind.DIRECTION, FeatureKind.HINGE)
ALL_KINDS = tuple(FeatureKind)


class TestExtractSampleFeatures:
    def test_structure(self):
        rng = np.random.default_rng(0)
        fs = extract_sample_features(make_sample(rng), CFG, F12)
        assert len(fs.positions) == 6
        for pos in fs.positions:
            assert pos is not None
            assert set(pos) == set(F12)
            for pdf in pos.values():
                assert pdf.bins.sum() == pytest.approx(1.0, abs=1e-9)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        sample = make_sample(rng)
        a = extract_sample_features(sample, CFG, ALL_KINDS)
        b = extract_sample_features(sample, CFG, ALL_KINDS)
        for pa, pb in zip(a.positions, b.positions):
            assert (pa is None) == (pb is None)
            if pa is not None:
                for k in ALL_KINDS:
                    assert np.array_equal(pa[k].bins, pb[k].bins)

    def test_positions_match_per_digit_extraction(self):
        rng = np.random.default_rng(2)
        sample = make_sample(rng, rich=True)
        fs = extract_sample_features(sample, CFG, ALL_KINDS)
        for digit, pos in zip(sample.digits, fs.positions):
            contours = trace_contours(digit)
            assert np.array_equal(pos[FeatureKind.DIRECTION].bins, direction_pdf(contours, CFG).bins)
            assert np.array_equal(pos[FeatureKind.HINGE].bins, hinge_pdf(contours, CFG).bins)
            assert np.array_equal(
                pos[FeatureKind.COOC_H].bins, cooccurrence_pdf(digit, contours, "horizontal", CFG).bins
            )
            assert np.array_equal(
                pos[FeatureKind.COOC_V].bins, cooccurrence_pdf(digit, contours, "vertical", CFG).bins
            )

    def test_blank_position_is_degenerate(self):
        rng = np.random.default_rng(3)
        digits = [blobby_raster(rng) for _ in range(5)]
        digits.append(np.zeros((35, 27), dtype=bool))
        sample = Sample("w", "s", tuple(digits), (1, 2, 3, 4, 5, 6))
        fs = extract_sample_features(sample, CFG, F12)
        assert fs.positions[5] is None
        assert all(p is not None for p in fs.positions[:5])

    def test_all_blank_sample_raises(self):
        blank = np.zeros((35, 27), dtype=bool)
        sample = Sample("w", "s", (blank,) * 6, (0,) * 6)
        with pytest.raises(DegenerateSampleError):
            extract_sample_features(sample, CFG, F12)

    def test_gray_input_is_binarized(self):
        rng = np.random.default_rng(4)
        sample = make_sample(rng)
        gray = tuple(np.where(d, 0, 255).astype(np.uint8) for d in sample.digits)
        gray_sample = Sample("w", "s", gray, sample.digit_labels)
        a = extract_sample_features(sample, CFG, F12)
        b = extract_sample_features(gray_sample, CFG, F12)
        for pa, pb in zip(a.positions, b.positions):
            for k in F12:
                assert np.array_equal(pa[k].bins, pb[k].bins)

    def test_feature_set_json_roundtrip(self):
        rng = np.random.default_rng(5)
        fs = extract_sample_features(make_sample(rng), CFG, F12)
        back = FeatureSet.from_json(fs.to_json())
        assert back.kinds == fs.kinds
        for pa, pb in zip(fs.positions, back.positions):
            for k in F12:
                assert np.array_equal(pa[k].bins, pb[k].bins)


class TestBuildTemplate:
    def test_single_set_identity(self):
        rng = np.random.default_rng(6)
        fs = extract_sample_features(make_sample(rng), CFG, F12)
        t = build_template([fs], "w")
        assert t.enrolment_size == 1
        for pos_t, pos_f in zip(t.positions, fs.positions):
            for k in F12:
                assert np.array_equal(pos_t[k].bins, pos_f[k].bins)

    def test_two_sets_mean(self):
        rng = np.random.default_rng(7)
        a = extract_sample_features(make_sample(rng, sample_id="a"), CFG, F12)
        b = extract_sample_features(make_sample(rng, sample_id="b"), CFG, F12)
        t = build_template([a, b], "w")
        for i in range(6):
            for k in F12:
                want = (a.positions[i][k].bins + b.positions[i][k].bins) / 2
                assert np.allclose(t.positions[i][k].bins, want, atol=1e-15)

    def test_config_mismatch(self):
        rng = np.random.default_rng(8)
        a = extract_sample_features(make_sample(rng), CFG, F12)
        other = ExtractionConfig(direction_bins=16)
        b = extract_sample_features(make_sample(rng), other, F12)
        with pytest.raises(ConfigMismatchError):
            build_template([a, b], "w")

    def test_empty_list(self):
        with pytest.raises(ValueError):
            build_template([], "w")


class TestDistances:
    def _pair(self, seed=9):
        rng = np.random.default_rng(seed)
        enrol = make_sample(rng, sample_id="enrol", rich=True)
        probe = make_sample(rng, sample_id="probe", rich=True)
        fs_e = extract_sample_features(enrol, CFG, ALL_KINDS)
        fs_p = extract_sample_features(probe, CFG, ALL_KINDS)
        return build_template([fs_e], "w"), fs_e, fs_p

    def test_self_distance_zero(self):
        template, fs_e, _ = self._pair()
        assert distance_digitwise(template, fs_e, F12) == 0.0
        assert distance_pooled(template, fs_e, F12) == 0.0

    def test_digitwise_matches_recomputation(self):
        template, _, fs_p = self._pair()
        got = distance_digitwise(template, fs_p, F12)
        per_kind = []
        for k in F12:
            vals = [
                oracles.chi2(template.positions[i][k].bins.tolist(), fs_p.positions[i][k].bins.tolist())
                for i in range(6)
            ]
            per_kind.append(sum(vals) / 6)
        assert got == pytest.approx(sum(per_kind) / 2, abs=1e-12)

    def test_pooled_matches_recomputation(self):
        template, _, fs_p = self._pair()
        got = distance_pooled(template, fs_p, F12)
        per_kind = []
        for k in F12:
            t_pool = np.mean([template.positions[i][k].bins for i in range(6)], axis=0)
            p_pool = np.mean([fs_p.positions[i][k].bins for i in range(6)], axis=0)
            per_kind.append(oracles.chi2(t_pool.tolist(), p_pool.tolist()))
        assert got == pytest.approx(sum(per_kind) / 2, abs=1e-12)

    def test_single_kind_single_digit_equals_chi2(self):
        rng = np.random.default_rng(10)
        fs = extract_sample_features(make_sample(rng), CFG, (FeatureKind.DIRECTION,))
        probe = extract_sample_features(make_sample(rng, sample_id="p"), CFG, (FeatureKind.DIRECTION,))
        template = build_template([fs], "w")
        # restrict both sides to one live position
        one_t = FeatureSet("t", "w", fs.config_hash, fs.kinds,
                           (fs.positions[0],) + (None,) * 5)
        one_p = FeatureSet("p", "w", probe.config_hash, probe.kinds,
                           (probe.positions[0],) + (None,) * 5)
        t = build_template([one_t], "w")
        got = distance_digitwise(t, one_p, (FeatureKind.DIRECTION,))
        want = chi2_distance(fs.positions[0][FeatureKind.DIRECTION],
                             probe.positions[0][FeatureKind.DIRECTION])
        assert got == want

    def test_fusion_linearity_exact(self):
        template, _, fs_p = self._pair(seed=11)
        d1 = distance_digitwise(template, fs_p, (FeatureKind.DIRECTION,))
        d2 = distance_digitwise(template, fs_p, (FeatureKind.HINGE,))
        both = distance_digitwise(template, fs_p, F12)
        assert both == (d1 + d2) / 2

    def test_f3_fuses_before_kind_mean(self):
        template, _, fs_p = self._pair(seed=12)
        d1 = distance_digitwise(template, fs_p, (FeatureKind.DIRECTION,))
        d3h = distance_digitwise(template, fs_p, (FeatureKind.COOC_H,))
        d3v = distance_digitwise(template, fs_p, (FeatureKind.COOC_V,))
        fused = distance_digitwise(
            template, fs_p, (FeatureKind.DIRECTION, FeatureKind.COOC_H, FeatureKind.COOC_V)
        )
        assert fused == pytest.approx((d1 + (d3h + d3v) / 2) / 2, abs=1e-15)

    def test_permuted_digits_pooled_zero_digitwise_positive(self):
        rng = np.random.default_rng(13)
        digits = tuple(blobby_raster(rng) for _ in range(6))
        a = Sample("w", "a", digits, (1, 2, 3, 4, 5, 6))
        perm = (1, 2, 3, 4, 5, 0)
        b = Sample("w", "b", tuple(digits[i] for i in perm), tuple((1, 2, 3, 4, 5, 6)[i] for i in perm))
        fa = extract_sample_features(a, CFG, F12)
        fb = extract_sample_features(b, CFG, F12)
        t = build_template([fa], "w")
        assert distance_pooled(t, fb, F12) == pytest.approx(0.0, abs=1e-12)
        assert distance_digitwise(t, fb, F12) > 0.0

    def test_degenerate_positions_skipped(self):
        rng = np.random.default_rng(14)
        digits = [blobby_raster(rng) for _ in range(5)] + [np.zeros((35, 27), dtype=bool)]
        a = Sample("w", "a", tuple(digits), (1, 2, 3, 4, 5, 6))
        fa = extract_sample_features(a, CFG, F12)
        t = build_template([fa], "w")
        assert distance_digitwise(t, fa, F12) == 0.0  # mean over 5 live positions

    def test_all_degenerate_raises(self):
        rng = np.random.default_rng(15)
        fa = extract_sample_features(make_sample(rng), CFG, F12)
        t = build_template([fa], "w")
        dead = FeatureSet("p", "w", fa.config_hash, fa.kinds, (None,) * 6)
        with pytest.raises(AllDegenerateError):
            distance_digitwise(t, dead, F12)
        with pytest.raises(AllDegenerateError):
            distance_pooled(t, dead, F12)

    def test_config_mismatch(self):
        rng = np.random.default_rng(16)
        fa = extract_sample_features(make_sample(rng), CFG, F12)
        other = extract_sample_features(make_sample(rng), ExtractionConfig(direction_bins=16), F12)
        t = build_template([fa], "w")
        with pytest.raises(ConfigMismatchError):
            distance_digitwise(t, other, F12)


class TestEmbeddings:
    def test_identity(self):
        v = Embedding("a", np.arange(512, dtype=float))
        assert embedding_distance(v, v) == 0.0

    def test_three_four_five(self):
        a = np.zeros(512)
        b = np.zeros(512)
        b[10], b[20] = 3.0, 4.0
        assert embedding_distance(Embedding("a", a), Embedding("b", b)) == 5.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            embedding_distance(Embedding("a", np.zeros(512)), Embedding("b", np.zeros(256)))

    def test_template_mean(self):
        v = np.arange(8, dtype=float)
        t = build_embedding_template([Embedding("a", v), Embedding("b", -v)], "w")
        assert np.array_equal(t.vector, np.zeros(8))
        single = build_embedding_template([Embedding("a", v)], "w")
        assert np.array_equal(single.vector, v)

    def test_template_mean_commutes_with_permutation(self):
        rng = np.random.default_rng(17)
        vs = [rng.random(16) for _ in range(4)]
        perm = rng.permutation(16)
        t = build_embedding_template([Embedding(str(i), v) for i, v in enumerate(vs)], "w")
        tp = build_embedding_template([Embedding(str(i), v[perm]) for i, v in enumerate(vs)], "w")
        assert np.allclose(tp.vector, t.vector[perm])

    def test_template_errors(self):
        with pytest.raises(ValueError):
            build_embedding_template([], "w")
        with pytest.raises(DimensionMismatchError):
            build_embedding_template([Embedding("a", np.zeros(4)), Embedding("b", np.zeros(5))], "w")


class TestGalleryFastPath:
    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(18)
        matcher = ChiSquareMatcher(ALL_KINDS, mode="digitwise")
        templates = []
        for w in range(5):
            fs = [
                extract_sample_features(make_sample(rng, writer_id=f"w{w}", sample_id=f"s{i}", rich=True), CFG, ALL_KINDS)
                for i in range(2)
            ]
            templates.append(matcher.build(fs, f"w{w}"))
        probe = extract_sample_features(make_sample(rng, sample_id="probe", rich=True), CFG, ALL_KINDS)
        gallery = matcher.gallery(templates)
        fast = gallery.distances(probe)
        slow = [matcher.distance(t, probe) for t in templates]
        assert np.allclose(fast, slow, atol=1e-12)

    def test_pooled_mode_matches_scalar(self):
        rng = np.random.default_rng(19)
        matcher = ChiSquareMatcher(F12, mode="pooled")
        templates = [
            matcher.build(
                [extract_sample_features(make_sample(rng, writer_id=f"w{w}"), CFG, F12)], f"w{w}"
            )
            for w in range(4)
        ]
        probe = extract_sample_features(make_sample(rng, sample_id="p"), CFG, F12)
        fast = matcher.gallery(templates).distances(probe)
        slow = [matcher.distance(t, probe) for t in templates]
        assert np.allclose(fast, slow, atol=1e-12)

    def test_euclidean_gallery(self):
        rng = np.random.default_rng(20)
        matcher = EuclideanMatcher()
        templates = [Embedding(f"w{i}", rng.random(512)) for i in range(6)]
        probe = Embedding("p", rng.random(512))
        fast = matcher.gallery(templates).distances(probe)
        slow = [matcher.distance(t, probe) for t in templates]
        assert np.allclose(fast, slow, atol=1e-12)
