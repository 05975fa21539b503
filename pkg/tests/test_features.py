import numpy as np
import pytest

import oracles
from synthdata import bar_raster, blobby_raster
from sixdigits import (
    ExtractionConfig,
    FeatureKind,
    FeaturePdf,
    KindMismatchError,
    NoInkError,
    NoRunsError,
    average_pdfs,
    chi2_distance,
    cooccurrence_pdf,
    direction_pdf,
    hinge_pdf,
    trace_contours,
)

CFG = ExtractionConfig()


def extract(mask, kind):
    contours = trace_contours(mask)
    if kind is FeatureKind.DIRECTION:
        return direction_pdf(contours, CFG)
    if kind is FeatureKind.HINGE:
        return hinge_pdf(contours, CFG)
    axis = "horizontal" if kind is FeatureKind.COOC_H else "vertical"
    return cooccurrence_pdf(mask, contours, axis, CFG)


class TestBinCounts:
    def test_defaults(self):
        assert CFG.bin_count(FeatureKind.DIRECTION) == 12
        assert CFG.bin_count(FeatureKind.HINGE) == 12 * 25  # n(2n+1)
        assert CFG.bin_count(FeatureKind.COOC_H) == 144
        assert CFG.bin_count(FeatureKind.COOC_V) == 144

    def test_config_hash_changes_with_params(self):
        assert CFG.config_hash != ExtractionConfig(direction_bins=16).config_hash

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ExtractionConfig(direction_bins=1)
        with pytest.raises(ValueError):
            ExtractionConfig(fragment_length=0)


class TestDirectionPdf:
    def test_horizontal_bar_mass_at_zero_degrees(self):
        pdf = extract(bar_raster(horizontal=True), FeatureKind.DIRECTION)
        assert pdf.bins[0] >= 0.6
        assert pdf.bins.sum() == pytest.approx(1.0, abs=1e-9)

    def test_rotated_bar_mass_at_ninety_degrees(self):
        mask = np.rot90(bar_raster(horizontal=True))
        pdf = direction_pdf(trace_contours(np.ascontiguousarray(mask)), CFG)
        assert pdf.bins[6] >= 0.6  # bin containing 90 degrees

    def test_rotation_permutes_bins(self):
        mask = bar_raster(horizontal=True, thickness=4, length=18)
        pdf = extract(mask, FeatureKind.DIRECTION)
        rot = direction_pdf(trace_contours(np.ascontiguousarray(np.rot90(mask))), CFG)
        assert np.allclose(rot.bins, np.roll(pdf.bins, 6), atol=1e-12)

    def test_translation_invariance(self):
        base = np.zeros((35, 27), dtype=bool)
        base[5:9, 4:18] = True
        moved = np.roll(base, shift=(3, 5), axis=(0, 1))
        p0 = extract(base, FeatureKind.DIRECTION)
        p1 = extract(moved, FeatureKind.DIRECTION)
        assert np.array_equal(p0.bins, p1.bins)

    def test_blank_raises_no_ink(self):
        with pytest.raises(NoInkError):
            extract(np.zeros((35, 27), dtype=bool), FeatureKind.DIRECTION)

    def test_speck_only_raises_no_ink(self):
        mask = np.zeros((35, 27), dtype=bool)
        mask[4, 4] = mask[10, 10] = True  # below min_component_size
        with pytest.raises(NoInkError):
            extract(mask, FeatureKind.DIRECTION)


class TestHingePdf:
    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        pdf = extract(blobby_raster(rng), FeatureKind.HINGE)
        assert pdf.bins.sum() == pytest.approx(1.0, abs=1e-9)
        assert (pdf.bins >= 0).all()

    def test_horizontal_bar_pairs_horizontal_legs(self):
        pdf = extract(bar_raster(horizontal=True), FeatureKind.HINGE)
        m = 24
        horiz = {0, 12}  # quantized 0 and 180 degrees
        mass = sum(
            pdf.bins[lo * m - lo * (lo - 1) // 2 + (hi - lo)]
            for lo in horiz
            for hi in horiz
            if hi >= lo
        )
        assert mass >= 0.5

    def test_l_shape_pairs_horizontal_with_vertical(self):
        mask = np.zeros((35, 27), dtype=bool)
        mask[5:25, 4:7] = True   # vertical stroke
        mask[22:25, 4:22] = True  # horizontal stroke
        pdf = extract(mask, FeatureKind.HINGE)
        m = 24
        horiz, vert = {0, 12}, {6, 18}
        mass = 0.0
        for a in horiz:
            for b in vert:
                lo, hi = min(a, b), max(a, b)
                mass += pdf.bins[lo * m - lo * (lo - 1) // 2 + (hi - lo)]
        assert mass > 0.0


class TestCooccurrencePdf:
    def test_parallel_vertical_bars_horizontal_runs(self):
        mask = np.zeros((35, 27), dtype=bool)
        mask[5:30, 5:8] = True
        mask[5:30, 18:21] = True
        pdf = extract(mask, FeatureKind.COOC_H)
        assert pdf.bins.sum() == pytest.approx(1.0, abs=1e-9)
        assert pdf.bins[6 * 12 + 6] >= 0.6  # (vertical, vertical) pair

    def test_empty_image_is_no_ink(self):
        with pytest.raises(NoInkError):
            extract(np.zeros((35, 27), dtype=bool), FeatureKind.COOC_H)

    def test_solid_rectangle_spanning_axis_has_no_runs(self):
        mask = np.zeros((35, 27), dtype=bool)
        mask[10:20, :] = True  # spans the full width: no ink-bounded runs
        with pytest.raises(NoRunsError):
            extract(mask, FeatureKind.COOC_H)


class TestChi2:
    def _pdf(self, bins):
        return FeaturePdf(FeatureKind.DIRECTION, np.asarray(bins, dtype=float), "cfg")

    def test_identity(self):
        rng = np.random.default_rng(1)
        p = rng.random(12)
        p /= p.sum()
        assert chi2_distance(self._pdf(p), self._pdf(p)) == 0.0

    def test_hand_worked_value(self):
        p = self._pdf([0.5, 0.5])
        q = self._pdf([1.0, 0.0])
        assert chi2_distance(p, q) == pytest.approx(2 / 3, abs=1e-15)

    def test_symmetry_and_nonnegativity(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a = rng.random(12)
            b = rng.random(12)
            a /= a.sum()
            b /= b.sum()
            d_ab = chi2_distance(self._pdf(a), self._pdf(b))
            d_ba = chi2_distance(self._pdf(b), self._pdf(a))
            assert d_ab == pytest.approx(d_ba, abs=1e-15)
            assert d_ab >= 0

    def test_zero_bins_skipped(self):
        p = self._pdf([0.5, 0.5, 0.0])
        q = self._pdf([0.5, 0.5, 0.0])
        assert chi2_distance(p, q) == 0.0

    def test_kind_mismatch(self):
        p = self._pdf([1.0])
        q = FeaturePdf(FeatureKind.HINGE, np.array([1.0]), "cfg")
        with pytest.raises(KindMismatchError):
            chi2_distance(p, q)
        with pytest.raises(KindMismatchError):
            chi2_distance(self._pdf([1.0]), self._pdf([0.5, 0.5]))

    def test_matches_direct_formula_on_random_pairs(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a = rng.random(25)
            b = rng.random(25)
            a[rng.random(25) < 0.2] = 0.0
            b[rng.random(25) < 0.2] = 0.0
            a /= a.sum()
            b /= b.sum()
            got = chi2_distance(self._pdf(a), self._pdf(b))
            assert got == pytest.approx(oracles.chi2(a.tolist(), b.tolist()), abs=1e-12)


class TestAveragePdfs:
    def _pdf(self, bins):
        return FeaturePdf(FeatureKind.DIRECTION, np.asarray(bins, dtype=float), "cfg")

    def test_mean_of_copies_is_identity(self):
        p = self._pdf([0.25, 0.75])
        out = average_pdfs([p, p, p])
        assert np.allclose(out.bins, p.bins)

    def test_mean_of_two(self):
        out = average_pdfs([self._pdf([1.0, 0.0]), self._pdf([0.0, 1.0])])
        assert np.allclose(out.bins, [0.5, 0.5])

    def test_output_sums_to_one(self):
        rng = np.random.default_rng(4)
        pdfs = []
        for _ in range(5):
            b = rng.random(12)
            pdfs.append(self._pdf(b / b.sum()))
        assert average_pdfs(pdfs).bins.sum() == pytest.approx(1.0, abs=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            average_pdfs([])
        with pytest.raises(KindMismatchError):
            average_pdfs([self._pdf([1.0]), FeaturePdf(FeatureKind.HINGE, np.array([1.0]), "c")])


class TestOracleEquivalence:
    """Bin-for-bin agreement with the independent loop implementation."""

    def test_all_kinds_on_random_rasters(self):
        rng = np.random.default_rng(1234)
        checked = 0
        for _ in range(20):
            mask = blobby_raster(rng)
            listed = mask.tolist()
            for kind, oracle_fn in (
                (FeatureKind.DIRECTION, lambda m: oracles.direction_hist(m)),
                (FeatureKind.HINGE, lambda m: oracles.hinge_hist(m)),
                (FeatureKind.COOC_H, lambda m: oracles.cooccurrence_hist(m, "horizontal")),
                (FeatureKind.COOC_V, lambda m: oracles.cooccurrence_hist(m, "vertical")),
            ):
                try:
                    want = oracle_fn(listed)
                except oracles.Degenerate:
                    with pytest.raises((NoInkError, NoRunsError)):
                        extract(mask, kind)
                    continue
                got = extract(mask, kind)
                assert np.allclose(got.bins, want, atol=1e-12)
                checked += 1
        assert checked >= 40

    def test_pdf_json_roundtrip(self):
        rng = np.random.default_rng(5)
        pdf = extract(blobby_raster(rng), FeatureKind.HINGE)
        back = FeaturePdf.from_json(pdf.to_json())
        assert back.kind == pdf.kind
        assert back.config_hash == pdf.config_hash
        assert np.array_equal(back.bins, pdf.bins)
