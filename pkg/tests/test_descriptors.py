import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from conftest import random_gray, random_rgb
from melanoma_ensemble.descriptors import (
    DIMS,
    BsifConfig,
    FilterBank,
    LpqParams,
    LtpConfig,
    NeighborhoodConfig,
    build_variants,
    default_bank,
    enumerate_variant_grids,
    extract_bsif,
    extract_clbp,
    extract_col,
    extract_hog,
    extract_lpq,
    extract_ltp,
    extract_mor,
    extract_riclbp,
    load_filter_bank,
    sample_circular,
    save_filter_bank,
)
from melanoma_ensemble.descriptors.lbp import ric_classes, riu2_mapping, uniform_mapping
from melanoma_ensemble.descriptors.lpq import lpq_components, stft_filters, whitening_matrix
from melanoma_ensemble.descriptors.morph import otsu_threshold
from melanoma_ensemble.errors import ConfigError, DataError

GRAY_EXTRACTORS = {
    "ltp": extract_ltp,
    "clbp": extract_clbp,
    "ric": extract_riclbp,
    "hog": extract_hog,
    "lpq": extract_lpq,
    "bsif": extract_bsif,
    "mor": extract_mor,
}


def block_sums(values, sizes):
    out, start = [], 0
    for s in sizes:
        out.append(values[start:start + s].sum())
        start += s
    return out


class TestSampling:
    def test_constant(self):
        img = np.full((7, 7), 7.0)
        for cfg in (NeighborhoodConfig(1, 8), NeighborhoodConfig(2, 16), NeighborhoodConfig(1.5, 12)):
            assert sample_circular(img, 3, 3, cfg) == pytest.approx([7.0] * cfg.points, abs=1e-12)

    def test_axis_neighbours(self, rng):
        img = random_gray(rng, 5, 5)
        vals = sample_circular(img, 2, 2, NeighborhoodConfig(1, 4))
        # angle 0 is +x, then counter-clockwise as displayed (row index decreasing)
        assert vals == [img[2, 3], img[1, 2], img[2, 1], img[3, 2]]

    def test_ramp_hand_computed(self):
        img = np.arange(9, dtype=float).reshape(3, 3)
        # value(row, col) = 3*row + col; bilinear is exact on a linear ramp
        expected = [5.0, 2.585786, 1.0, 1.171573, 3.0, 5.414214, 7.0, 6.828427]
        assert sample_circular(img, 1, 1, NeighborhoodConfig(1, 8)) == pytest.approx(expected, abs=1e-6)

    def test_out_of_bounds(self):
        with pytest.raises(ValueError):
            sample_circular(np.zeros((5, 5)), 0, 2, NeighborhoodConfig(1, 8))


class TestMappings:
    def test_u2_bin_count(self):
        for p in (8, 16):
            table = uniform_mapping(p)
            assert table.max() + 1 == p * (p - 1) + 3
            assert table[0] == 0

    def test_riu2_values(self):
        table = riu2_mapping(8)
        assert table[0] == 0 and table[0xFF] == 8
        assert table[0b00001111] == 4
        assert table[0b01010101] == 9

    def test_ric_classes(self):
        table = ric_classes()
        assert len(np.unique(table)) == 136
        assert table[16 * 1 + 2] == table[16 * 8 + 4]  # (1, 2) ~ (rot180(2), rot180(1)) = (8, 4)


class TestLtp:
    def test_constant(self):
        v = np.asarray(extract_ltp(np.full((12, 12), 100.0)))
        assert v.size == 604
        blocks = np.split(v, [59, 118, 118 + 243])
        for b in blocks:
            assert b.sum() == pytest.approx(1.0)
            assert b[0] == 1.0

    def test_shift(self, rng):
        img = random_gray(rng, 14, 14) * 0.5
        assert extract_ltp(img) == extract_ltp(img + 50)

    def test_bright_column_oracle(self):
        img = np.zeros((5, 5))
        img[:, 2] = 200.0
        assert np.array_equal(np.asarray(extract_ltp(img)), oracles.ltp(img))

    def test_random_oracle(self, rng):
        img = random_gray(rng, 11, 13)
        assert np.array_equal(np.asarray(extract_ltp(img)), oracles.ltp(img))

    def test_threshold_changes_codes(self, rng):
        img = random_gray(rng, 12, 12)
        assert extract_ltp(img, LtpConfig(threshold=0)) != extract_ltp(img, LtpConfig(threshold=30))

    def test_too_small(self):
        with pytest.raises(ValueError):
            extract_ltp(np.zeros((4, 4)))


class TestClbp:
    def test_constant_single_bin(self):
        v = np.asarray(extract_clbp(np.full((9, 9), 3.0)))
        assert v.size == 848
        first, second = v[:200], v[200:]
        # S=0, M=0, C=1 → joint bin 1 in each scale
        assert first[1] == 1.0 and second[1] == 1.0
        assert np.count_nonzero(v) == 2

    def test_shift(self, rng):
        img = random_gray(rng, 12, 12) * 0.5
        assert extract_clbp(img) == extract_clbp(img + 50)

    def test_random_oracle(self, rng):
        img = random_gray(rng, 9, 9)
        assert np.array_equal(np.asarray(extract_clbp(img)), oracles.clbp(img))


class TestRic:
    def test_constant(self):
        v = np.asarray(extract_riclbp(np.full((24, 24), 5.0)))
        assert v.size == 408
        assert np.count_nonzero(v) == 3
        assert v[0] == v[136] == v[272] == 1.0

    def test_random_oracle(self, rng):
        img = random_gray(rng, 12, 12)
        assert np.array_equal(np.asarray(extract_riclbp(img)), oracles.ric(img))

    def test_wrap_oracle(self, rng):
        img = random_gray(rng, 10, 11)
        assert np.array_equal(np.asarray(extract_riclbp(img, wrap=True)), oracles.ric(img, wrap=True))

    @pytest.mark.parametrize("wrap", [True, False])
    def test_rotation_180(self, rng, wrap):
        img = random_gray(rng, 16, 16)
        assert extract_riclbp(img, wrap=wrap) == extract_riclbp(np.rot90(img, 2), wrap=wrap)

    def test_displacement_too_large_gives_zero_block(self, rng):
        img = random_gray(rng, 9, 9)  # interior for r=4 is a single pixel
        v = np.asarray(extract_riclbp(img))
        assert v[272:].sum() == 0.0
        assert v[:136].sum() == pytest.approx(1.0)


class TestHog:
    def test_constant_is_zero(self):
        v = np.asarray(extract_hog(np.full((20, 24), 9.0)))
        assert v.shape == (270,) and not v.any()

    def test_vertical_step_edge(self):
        img = np.zeros((20, 24))
        img[:, 12:] = 100.0
        v = np.asarray(extract_hog(img)).reshape(5, 6, 9)
        # the step sits between columns 11 and 12: cells 2 and 3 (4 columns wide each)
        for i in range(5):
            for j in range(6):
                if j in (2, 3):
                    assert v[i, j, 0] == pytest.approx(1.0, abs=1e-9)
                    assert v[i, j, 1:].sum() == 0.0
                else:
                    assert not v[i, j].any()

    def test_shift(self, rng):
        img = random_gray(rng, 15, 18) * 0.5
        assert extract_hog(img) == extract_hog(img + 50)

    def test_oracle(self, rng):
        img = random_gray(rng, 13, 16)
        assert np.allclose(np.asarray(extract_hog(img)), oracles.hog(img), rtol=0, atol=1e-9)

    def test_too_small(self):
        with pytest.raises(ValueError):
            extract_hog(np.zeros((4, 10)))


class TestLpq:
    def test_constant(self):
        v = np.asarray(extract_lpq(np.full((10, 10), 42.0)))
        assert v.size == 256 and v.max() == 1.0

    def test_oracle(self, rng):
        img = random_gray(rng, 15, 15)
        p = LpqParams(win_radius=1, freq_scale=1.0, rho=0.9, tau=0.0)
        wm = whitening_matrix(1, 1.0, 0.9)
        assert np.array_equal(np.asarray(extract_lpq(img, p)), oracles.lpq(img, 1, 1.0, wm, 0.0))

    def test_oracle_threshold(self, rng):
        img = random_gray(rng, 12, 12)
        p = LpqParams(win_radius=2, freq_scale=1.4, rho=1.15, tau=0.6)
        wm = whitening_matrix(2, 1.4, 1.15)
        assert np.array_equal(np.asarray(extract_lpq(img, p)), oracles.lpq(img, 2, 1.4, wm, 0.6))

    def test_tau_continuity(self, rng):
        img = random_gray(rng, 12, 12)
        comps = lpq_components(img, LpqParams())
        assert np.abs(comps).min() > 1e-12
        assert extract_lpq(img, LpqParams(tau=0.0)) == extract_lpq(img, LpqParams(tau=1e-12))

    @pytest.mark.parametrize("rho", [0.75, 0.9, 1.95])
    def test_whitening_decorrelates(self, rho):
        r, a = 1, 1.0
        w = 2 * r + 1
        pos = np.array([(y, x) for y in range(w) for x in range(w)], dtype=float)
        dist = np.sqrt(((pos[:, None] - pos[None]) ** 2).sum(-1))
        m = stft_filters(r, a).reshape(8, -1)
        d = m @ np.power(rho, dist) @ m.T + 1e-9 * np.eye(8)
        wm = whitening_matrix(r, a, rho)
        out = wm @ d @ wm.T
        # |eigenvalue| scaling gives a signature matrix: diagonal entries ±1
        assert np.allclose(np.abs(np.diag(out)), 1.0, atol=1e-6)
        assert np.allclose(out - np.diag(np.diag(out)), 0.0, atol=1e-6)

    def test_filter_frequencies(self):
        f = stft_filters(1, 1.0)
        # u1 = (f, 0): the real part varies along x only
        assert np.allclose(f[0], f[0][0:1, :])
        assert np.allclose(f[2], f[2][:, 0:1])


class TestBsif:
    def test_default_bank_properties(self):
        for size in (3, 5, 7, 9, 11):
            bank = default_bank(size)
            k = bank.coefficients.reshape(8, -1)
            assert np.allclose(k.sum(axis=1), 0.0, atol=1e-12)
            assert np.allclose(k @ k.T, np.eye(8), atol=1e-10)
        assert np.array_equal(default_bank(7).coefficients, default_bank.__wrapped__(7).coefficients)

    def test_constant(self):
        v = np.asarray(extract_bsif(np.full((10, 10), 77.0)))
        assert v[0] == 1.0

    def test_infinite_threshold(self, rng):
        img = random_gray(rng, 10, 10)
        v = np.asarray(extract_bsif(img, BsifConfig(filter_size=3, threshold=1e18)))
        assert v[0] == 1.0

    def test_oracle(self, rng):
        img = random_gray(rng, 10, 10)
        cfg = BsifConfig(filter_size=3, threshold=0.0)
        expected = oracles.bsif(img, cfg.bank.coefficients, 0.0)
        assert np.array_equal(np.asarray(extract_bsif(img, cfg)), expected)

    def test_shift(self, rng):
        img = random_gray(rng, 12, 12) * 0.5
        cfg = BsifConfig(filter_size=5, threshold=3.0)
        assert extract_bsif(img, cfg) == extract_bsif(img + 50, cfg)

    def test_bank_file_roundtrip(self, tmp_path):
        save_filter_bank(tmp_path / "b.txt", default_bank(5))
        loaded = load_filter_bank(tmp_path / "b.txt")
        assert np.array_equal(loaded.coefficients, default_bank(5).coefficients)

    def test_bank_file_errors(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_filter_bank(tmp_path / "missing.txt")
        (tmp_path / "short.txt").write_text("3 8\n1 2 3\n")
        with pytest.raises(DataError, match="expected 72"):
            load_filter_bank(tmp_path / "short.txt")

    def test_loaded_bank_is_recentred(self):
        bank = FilterBank(np.ones((8, 3, 3)) + np.arange(9).reshape(1, 3, 3))
        assert np.allclose(bank.coefficients.sum(axis=(1, 2)), 0.0)

    def test_bank_size_mismatch(self):
        with pytest.raises(ValueError):
            BsifConfig(filter_size=5, bank=default_bank(3))


class TestCol:
    def test_constant_gray(self):
        v = np.asarray(extract_col(np.full((6, 6, 3), 120.0)))
        assert np.array_equal(v, [120, 0, 0, 120, 0, 0, 120, 0, 0, 0, 0, 0])

    def test_equal_channels(self, rng):
        img = random_rgb(rng, 8, 8)
        img[..., 1] = img[..., 0]
        assert np.asarray(extract_col(img))[9] == pytest.approx(1.0, abs=1e-12)

    def test_oracle(self, rng):
        img = random_rgb(rng, 8, 8)
        assert np.allclose(np.asarray(extract_col(img)), oracles.col(img), rtol=0, atol=1e-9)


class TestMor:
    def test_white(self):
        assert not np.asarray(extract_mor(np.full((10, 10), 255.0))).any()

    def test_centered_square(self):
        img = np.full((11, 11), 255.0)
        img[3:8, 3:8] = 0.0
        v = np.asarray(extract_mor(img))
        assert v[0] == 1 and v[3] == 1.0 and v[6] == pytest.approx(0.0, abs=1e-12)
        assert v[1] == pytest.approx(25 / 121)
        assert v[2] == 16  # boundary pixels of a 5x5 square

    def test_two_blobs(self):
        img = np.full((16, 16), 220.0)
        img[2:5, 2:6] = 10.0
        img[8:14, 7:12] = 20.0
        img[9, 13] = 15.0  # touches the second blob diagonally? no: separated by column 12
        v = np.asarray(extract_mor(img))
        assert np.allclose(v, oracles.mor(img), atol=1e-9)
        assert v[0] == 3

    def test_diagonal_connectivity(self):
        img = np.full((6, 6), 200.0)
        img[1, 1] = img[2, 2] = img[3, 3] = 0.0
        assert np.asarray(extract_mor(img))[0] == 1

    def test_otsu_constant(self):
        assert otsu_threshold(np.ones((3, 3))) is None

    def test_random_oracle(self, rng):
        img = random_gray(rng, 12, 12)
        assert np.allclose(np.asarray(extract_mor(img)), oracles.mor(img), atol=1e-9)


class TestContracts:
    @pytest.mark.parametrize("shape", [(16, 16), (24, 32), (41, 37)])
    def test_dims(self, rng, shape):
        gray = random_gray(rng, *shape)
        rgb = random_rgb(rng, *shape)
        for did, fn in GRAY_EXTRACTORS.items():
            assert np.asarray(fn(gray)).size == DIMS[did], did
        assert np.asarray(extract_col(rgb)).size == DIMS["col"]

    def test_histogram_blocks_normalised(self, rng):
        img = random_gray(rng, 24, 24)
        assert block_sums(np.asarray(extract_ltp(img)), [59, 59, 243, 243]) == pytest.approx([1] * 4)
        assert block_sums(np.asarray(extract_clbp(img)), [200, 648]) == pytest.approx([1] * 2)
        assert block_sums(np.asarray(extract_riclbp(img)), [136] * 3) == pytest.approx([1] * 3)
        assert np.asarray(extract_lpq(img)).sum() == pytest.approx(1.0)
        assert np.asarray(extract_bsif(img)).sum() == pytest.approx(1.0)

    def test_grids(self):
        mlpq = enumerate_variant_grids("mlpq")
        assert len(mlpq) == 525
        first = mlpq[0]
        assert (first.tau, first.win_radius, first.freq_scale, first.rho) == (0.2, 1, 0.8, 0.75)
        assert (mlpq[1].rho, mlpq[7].freq_scale) == (0.95, 1.0)
        fbsif = enumerate_variant_grids("fbsif")
        assert len(fbsif) == 35
        assert (fbsif[0].filter_size, fbsif[0].threshold, fbsif[1].threshold) == (3, -9.0, -6.0)

    @pytest.mark.parametrize("did", ["gold", "clm", "let", "ahp"])
    def test_out_of_scope(self, did):
        with pytest.raises(ConfigError, match="unimplemented, out of scope"):
            build_variants({"id": did})

    def test_unknown(self):
        with pytest.raises(ConfigError, match="unknown descriptor"):
            build_variants({"id": "sift"})

    def test_mlpq_subset_and_concat(self, rng):
        ens = build_variants({"id": "mlpq", "variants": [0, 524]})
        assert [v.variant_id for v in ens] == ["lpq_t0.2_r1_a0.8_p0.75", "lpq_t1_r5_a1.6_p1.95"]
        cat = build_variants({"id": "mlpq", "variants": [0, 1, 2], "mode": "concat"})
        assert len(cat) == 1 and cat[0].dim == 768
        rgb = random_rgb(rng, 16, 16)
        assert cat[0].extract(rgb).shape == (768,)

    def test_fbsif_full(self):
        assert len(build_variants({"id": "fbsif"})) == 35

    def test_bad_variant_index(self):
        with pytest.raises(ConfigError):
            build_variants({"id": "fbsif", "variants": [99]})


gray_images = arrays(np.float64, st.tuples(st.integers(9, 14), st.integers(9, 14)),
                     elements=st.integers(0, 200).map(float))


class TestProperties:
    @settings(max_examples=25, deadline=None)
    @given(img=gray_images, c=st.integers(1, 55))
    def test_shift_invariance(self, img, c):
        for fn in (extract_ltp, extract_clbp, extract_hog, extract_riclbp):
            assert fn(img) == fn(img + c)

    @settings(max_examples=25, deadline=None)
    @given(img=gray_images)
    def test_deterministic(self, img):
        for fn in GRAY_EXTRACTORS.values():
            assert np.array_equal(np.asarray(fn(img)), np.asarray(fn(img.copy())))

    @settings(max_examples=25, deadline=None)
    @given(img=gray_images)
    def test_finite_and_bounded(self, img):
        for did in ("ltp", "clbp", "ric", "lpq", "bsif"):
            v = np.asarray(GRAY_EXTRACTORS[did](img))
            assert np.all((v >= 0) & (v <= 1))
        assert math.isfinite(float(np.asarray(extract_mor(img)).sum()))
