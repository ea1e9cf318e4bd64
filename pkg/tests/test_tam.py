import numpy as np
import pytest
from scipy.stats import chisquare

from shad3s.tam import (
    DEFAULT_FAMILIES, TamError, build_default_catalog, crop, crop_window,
    load_catalog, save_family, synthesize_tam, validate_tam,
)


@pytest.fixture(scope="module")
def family():
    return synthesize_tam(1, "parallel", size=512, angle=45.0)


class TestSynthesize:
    def test_nesting_zero_violations(self, family):
        report = validate_tam(family.tones)
        assert report.accepted
        assert all(v == 0.0 for v in report.violation_fractions)

    def test_coverage_strictly_decreasing(self, family):
        report = validate_tam(family.tones)
        assert report.coverages[0] > report.coverages[-1]
        assert all(a > b for a, b in zip(report.coverages, report.coverages[1:]))

    def test_deterministic(self):
        a = synthesize_tam(3, "cross", size=256)
        b = synthesize_tam(3, "cross", size=256)
        for ta, tb in zip(a.tones, b.tones):
            assert np.array_equal(ta, tb)

    @pytest.mark.parametrize("angle", [0.0, 45.0, 110.0])
    def test_parallel_orientation(self, angle):
        # structure-tensor orientation: edge gradients run perpendicular to
        # the strokes, so dominant gradient angle - 90 == stroke angle
        from scipy.ndimage import gaussian_filter
        tam = synthesize_tam(2, "parallel", size=512, angle=angle)
        tone = gaussian_filter(tam.tones[0], 2.0)
        gy, gx = np.gradient(tone)
        gy = -gy  # image rows grow downward
        jxx, jyy, jxy = (gx * gx).sum(), (gy * gy).sum(), (gx * gy).sum()
        grad_theta = 0.5 * np.degrees(np.arctan2(2 * jxy, jxx - jyy))
        dominant = (grad_theta + 90.0) % 180.0
        diff = abs(dominant - angle % 180.0)
        assert min(diff, 180.0 - diff) <= 5.0

    def test_unknown_style(self):
        with pytest.raises(TamError):
            synthesize_tam(1, "sketchy")


class TestCrop:
    def test_deterministic(self, family):
        a = crop(family, 9, 128)
        b = crop(family, 9, 128)
        for ca, cb in zip(a, b):
            assert np.array_equal(ca, cb)

    def test_preserves_nesting(self, family):
        crops = crop(family, 5, 128)
        assert validate_tam(crops).accepted or \
            all(v <= 0.005 for v in validate_tam(crops).violation_fractions)

    def test_too_large(self, family):
        with pytest.raises(TamError):
            crop(family, 0, 4096)

    def test_window_uniform(self, family):
        # Monte-Carlo chi-square over a coarse grid of window positions
        res = family.resolution
        n_pos = res - 128 + 1
        bins = np.zeros((4, 4))
        n = 4000
        for seed in range(n):
            top, left = crop_window(family, seed, 128)
            assert 0 <= top <= n_pos - 1 and 0 <= left <= n_pos - 1
            bins[min(top * 4 // n_pos, 3), min(left * 4 // n_pos, 3)] += 1
        _, p = chisquare(bins.ravel())
        assert p > 1e-3


class TestValidate:
    def test_reversed_order_rejected(self, family):
        assert not validate_tam(family.tones[::-1]).accepted

    def test_mismatched_sizes(self, family):
        bad = [family.tones[0][:100, :100]] + family.tones[1:]
        with pytest.raises(TamError):
            validate_tam(bad)

    def test_one_percent_violations_rejected(self, family):
        # flip 1% of pixels in the lightest tone to ink absent from darker
        tones = [t.copy() for t in family.tones]
        clean = np.flatnonzero((tones[2] >= 0.5).ravel() & (tones[3] >= 0.5).ravel())
        rng = np.random.default_rng(0)
        n_flip = int(0.01 * tones[3].size)
        idx = rng.choice(clean, size=n_flip, replace=False)
        flat = tones[3].ravel()
        flat[idx] = 0.0
        tones[3] = flat.reshape(tones[3].shape)
        report = validate_tam(tones)
        assert not report.accepted
        assert report.violation_fractions[2] >= 0.005


class TestCatalog:
    def test_round_trip(self, family, tmp_path):
        save_family(family, tmp_path)
        cat = load_catalog(tmp_path)
        assert family.id in cat
        loaded = cat[family.id]
        for a, b in zip(family.tones, loaded.tones):
            # PNG round-trip is 8-bit exact for synthesized (binary-ish) tones
            assert np.abs(a - b).max() <= 1 / 255 + 1e-9

    def test_default_catalog_has_six_families(self, tmp_path):
        cat = build_default_catalog(tmp_path, size=256)
        assert len(cat) == 6
        assert set(cat) == {fid for fid, *_ in DEFAULT_FAMILIES}
        for fam in cat.values():
            assert validate_tam(fam.tones).accepted
