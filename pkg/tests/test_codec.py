import numpy as np
import pytest

from fractalpose.codec import (
    EncoderConfig,
    FractalCode,
    FractalCodeEntry,
    block_distortion,
    code_from_bytes,
    code_to_bytes,
    decode,
    dequantize_o,
    dequantize_s,
    encode,
    encode_with_stats,
    fit_contrast_offset,
    load_code,
    quantize_o,
    quantize_s,
    save_code,
)
from fractalpose.image import (
    Block,
    FormatError,
    GrayImage,
    Isometry,
    apply_isometry,
    downsample_2x,
    extract_domain_blocks,
    extract_range_blocks,
    round_half_away,
)

from conftest import random_image
from oracle import brute_force_encode


class TestConfig:
    def test_stride_defaults_to_range_size(self):
        assert EncoderConfig(range_size=4).domain_stride == 4
        assert EncoderConfig(range_size=4, domain_stride=2).domain_stride == 2

    def test_validation(self):
        with pytest.raises(ValueError):
            EncoderConfig(range_size=3)
        with pytest.raises(ValueError):
            EncoderConfig(s_max=0.0)
        with pytest.raises(ValueError):
            EncoderConfig(s_max=1.5)
        with pytest.raises(ValueError):
            EncoderConfig(s_bits=0)
        with pytest.raises(ValueError):
            EncoderConfig(o_bits=9)

    def test_fingerprint_tracks_coding_fields_only(self):
        a = EncoderConfig()
        assert a.fingerprint() == EncoderConfig().fingerprint()
        assert a.fingerprint() != EncoderConfig(range_size=4).fingerprint()
        assert a.fingerprint() != EncoderConfig(domain_stride=16).fingerprint()
        # decode_iterations does not affect code comparability
        assert a.fingerprint() == EncoderConfig(decode_iterations=3).fingerprint()


class TestQuantizers:
    def test_zero_contrast_is_midrange_level(self):
        cfg = EncoderConfig()
        level = quantize_s(0.0, cfg)
        assert level == 16
        step = 2 * cfg.s_max / 32
        assert abs(dequantize_s(level, cfg)) <= step / 2 + 1e-12

    def test_offset_floor_level(self):
        cfg = EncoderConfig()
        assert quantize_o(-255.0, cfg) == 0

    def test_round_trip_identity_all_levels(self):
        cfg = EncoderConfig()
        for level in range(1 << cfg.s_bits):
            assert quantize_s(dequantize_s(level, cfg), cfg) == level
        for level in range(1 << cfg.o_bits):
            assert quantize_o(dequantize_o(level, cfg), cfg) == level

    def test_out_of_range_clamps(self):
        cfg = EncoderConfig()
        assert quantize_s(5.0, cfg) == 31
        assert quantize_s(-5.0, cfg) == 0
        assert quantize_o(400.0, cfg) == 127
        assert quantize_o(-400.0, cfg) == 0

    def test_dequantize_rejects_bad_level(self):
        cfg = EncoderConfig()
        with pytest.raises(ValueError):
            dequantize_s(32, cfg)


class TestFitContrastOffset:
    def test_equal_blocks_clamp_to_s_max(self):
        d = Block((0, 0), np.array([[10, 20], [30, 40]], dtype=np.uint8))
        s, o = fit_contrast_offset(d, d, 0.99)
        assert s == pytest.approx(0.99)
        assert o == pytest.approx(0.01 * 25.0)

    def test_constant_domain_gives_zero_contrast(self):
        r = Block((0, 0), np.full((2, 2), 50, dtype=np.uint8))
        d = Block((0, 0), np.full((2, 2), 120, dtype=np.uint8))
        assert fit_contrast_offset(r, d, 0.99) == (0.0, 50.0)

    def test_doubled_block_clamps_and_refits_offset(self):
        d = Block((0, 0), np.array([[0, 10], [20, 30]], dtype=np.uint8))
        r = Block((0, 0), (2 * d.data).astype(np.uint8))
        s, o = fit_contrast_offset(r, d, 0.99)
        assert s == pytest.approx(0.99)
        assert o == pytest.approx(30.0 - 0.99 * 15.0)  # 15.15

    def test_matches_brute_force_grid_search(self, rng):
        # dense grid over (s, o) should not beat the analytic fit
        d = Block((0, 0), rng.integers(0, 256, (4, 4), dtype=np.uint8))
        r = Block((0, 0), rng.integers(0, 256, (4, 4), dtype=np.uint8))
        s_fit, o_fit = fit_contrast_offset(r, d, 0.99)
        e_fit = block_distortion(r, d, s_fit, o_fit)
        best = np.inf
        for s in np.linspace(-0.99, 0.99, 397):
            for o in np.linspace(-255, 255, 1021):
                best = min(best, block_distortion(r, d, s, o))
        assert e_fit <= best + 1e-9

    def test_size_mismatch_rejected(self):
        a = Block((0, 0), np.zeros((2, 2), dtype=np.uint8))
        b = Block((0, 0), np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            fit_contrast_offset(a, b, 0.99)


class TestBlockDistortion:
    def test_exact_affine_match_is_zero(self, rng):
        d = Block((0, 0), (2 * rng.integers(0, 100, (4, 4))).astype(np.uint8))
        r = Block((0, 0), (d.data // 2 + 10).astype(np.uint8))
        assert block_distortion(r, d, 0.5, 10.0) == pytest.approx(0.0)

    def test_constant_range_zero_contrast(self, rng):
        r = Block((0, 0), np.full((3, 3), 10, dtype=np.uint8))
        d = Block((0, 0), rng.integers(0, 256, (3, 3), dtype=np.uint8))
        assert block_distortion(r, d, 0.0, 10.0) == pytest.approx(0.0)

    def test_direct_evaluation(self):
        r = Block((0, 0), np.zeros((2, 2), dtype=np.uint8))
        d = Block((0, 0), np.ones((2, 2), dtype=np.uint8))
        assert block_distortion(r, d, 0.5, 0.0) == pytest.approx(1.0)

    def test_size_mismatch_rejected(self):
        a = Block((0, 0), np.zeros((2, 2), dtype=np.uint8))
        b = Block((0, 0), np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            block_distortion(a, b, 0.0, 0.0)


SMALL_CFG = EncoderConfig(range_size=4, domain_stride=4)


class TestEncode:
    def test_matches_brute_force_oracle(self, rng):
        for _ in range(5):
            px = rng.integers(0, 256, (16, 16), dtype=np.uint8)
            code = encode(GrayImage(px), SMALL_CFG)
            got = [(e.domain_index, int(e.isometry), e.s_q, e.o_q) for e in code.entries]
            assert got == brute_force_encode(px, SMALL_CFG)

    def test_matches_oracle_on_degenerate_images(self, rng):
        masked = np.where(
            np.arange(16)[:, None] < 8, rng.integers(0, 256, (16, 16)), 0
        ).astype(np.uint8)
        for px in (
            np.zeros((16, 16), np.uint8),
            np.full((16, 16), 255, np.uint8),
            masked,
        ):
            code = encode(GrayImage(px), SMALL_CFG)
            got = [(e.domain_index, int(e.isometry), e.s_q, e.o_q) for e in code.entries]
            assert got == brute_force_encode(px, SMALL_CFG)

    def test_constant_image_ties_break_to_first_candidate(self):
        code = encode(GrayImage(np.full((16, 16), 77, np.uint8)), SMALL_CFG)
        first = code.entries[0]
        assert all(e == first for e in code.entries)
        assert first.domain_index == 0
        assert first.isometry is Isometry.IDENTITY

    def test_dimension_validation(self, rng):
        with pytest.raises(ValueError):
            encode(random_image(rng, 18, 16), SMALL_CFG)
        with pytest.raises(ValueError):
            # domain side 2N exceeds the image
            encode(random_image(rng, 4, 4), SMALL_CFG)

    def test_deterministic_across_runs(self, rng):
        img = random_image(rng, 32, 32)
        assert encode(img, SMALL_CFG) == encode(img, SMALL_CFG)

    def test_stats_shapes(self, rng):
        img = random_image(rng, 256, 256)
        code, stats = encode_with_stats(img, EncoderConfig())
        assert stats.domain_count == 961
        assert stats.candidate_count == 961 * 8
        assert len(code.entries) == 1024
        assert stats.mean_distortion >= 0.0


def _self_similar_code(seed: int):
    """Random assignment code whose contrast/offset are exact lattice values;
    its decode fixed point is encodable with near-zero error."""
    cfg = EncoderConfig()
    pool_cols = (32 - 16) // 8 + 1
    rng = np.random.default_rng(seed)
    entries = tuple(
        FractalCodeEntry(
            int(rng.integers(pool_cols * pool_cols)),
            Isometry.IDENTITY,
            24,  # contrast near +0.53
            int(rng.integers(69, 89)),  # offsets ~ +20..+100 keep pixels interior
        )
        for _ in range(16)
    )
    return FractalCode(cfg, 32, 32, 4, 4, entries)


class TestConstructedSelfSimilarInstance:
    def test_lattice_exact_construction_recovered(self):
        code = _self_similar_code(seed=5)
        img_a = decode(code, iterations=59)
        img_b = decode(code, iterations=60)
        assert np.array_equal(img_a.pixels, img_b.pixels)  # true fixed point
        recoded = encode(img_b, code.config)
        assert recoded.entries == code.entries
        # the fixed point satisfies each tile relation within rounding only
        total = _selected_distortion(img_b, recoded)
        assert total <= 16 * 64 * 0.25  # 16 tiles, 64 px, (1/2)^2 each

    def test_half_contrast_plus_offset_construction(self, rng):
        # top strip holds free texture; bottom tiles are built from top-strip
        # domains with s=0.5, o=8, so the constructed relation is acyclic
        cfg = EncoderConfig()
        pool_cols = (32 - 16) // 8 + 1
        px = np.zeros((32, 32), dtype=np.float64)
        px[:16] = rng.integers(30, 226, (16, 32)).astype(np.float64)
        doms = rng.integers(0, pool_cols, size=8)
        for k, dom in enumerate(doms):
            gy, gx = divmod(k, 4)
            win = px[0:16, int(dom) * 8 : int(dom) * 8 + 16]
            d = round_half_away(win.reshape(8, 2, 8, 2).sum(axis=(1, 3)) * 0.25)
            px[16 + gy * 8 : 24 + gy * 8, gx * 8 : gx * 8 + 8] = np.clip(
                round_half_away(0.5 * d + 8.0), 0, 255
            )
        img = GrayImage(px.astype(np.uint8))
        code = encode(img, cfg)

        for e, dom in zip(code.entries[8:], doms):
            assert e.domain_index == int(dom)
            assert e.isometry is Isometry.IDENTITY

        # selected distortion stays within the quantization error bound of
        # the constructed candidates
        ranges = extract_range_blocks(img, 8)
        domains = extract_domain_blocks(img, 8, 8)
        bound = 0.0
        for rb, dom in zip(ranges[8:], doms):
            dc = downsample_2x(domains[int(dom)])
            s_q = quantize_s(0.5, cfg)
            s_hat = dequantize_s(s_q, cfg)
            o_ref = float(rb.data.mean()) - s_hat * float(dc.data.astype(float).mean())
            o_hat = dequantize_o(quantize_o(o_ref, cfg), cfg)
            bound += block_distortion(rb, dc, s_hat, o_hat)
        got = sum(
            _entry_distortion(img, code, i) for i in range(8, 16)
        )
        assert got <= bound + 1e-9


def _entry_distortion(img: GrayImage, code: FractalCode, i: int) -> float:
    cfg = code.config
    e = code.entries[i]
    ranges = extract_range_blocks(img, cfg.range_size)
    domains = extract_domain_blocks(img, cfg.range_size, cfg.domain_stride)
    dc = apply_isometry(downsample_2x(domains[e.domain_index]), e.isometry)
    return block_distortion(
        ranges[i], dc, dequantize_s(e.s_q, cfg), dequantize_o(e.o_q, cfg)
    )


def _selected_distortion(img: GrayImage, code: FractalCode) -> float:
    return sum(_entry_distortion(img, code, i) for i in range(len(code.entries)))


class TestDecode:
    def test_constant_image_round_trips_within_quantizer_error(self):
        for v in (0, 50, 128, 200, 255):
            img = GrayImage(np.full((32, 32), v, np.uint8))
            code = encode(img, EncoderConfig())
            dec = decode(code, iterations=30)
            assert np.abs(dec.pixels.astype(int) - v).max() <= 8

    def test_contractivity_black_vs_white(self, rng):
        code = _self_similar_code(seed=2)
        black = GrayImage(np.zeros((32, 32), np.uint8))
        white = GrayImage(np.full((32, 32), 255, np.uint8))
        a, b = black, white
        last = 255
        for _ in range(15):
            a = decode(code, initial=a, iterations=1)
            b = decode(code, initial=b, iterations=1)
            diff = int(np.abs(a.pixels.astype(int) - b.pixels.astype(int)).max())
            assert diff <= last
            last = diff
        assert last <= 2

    def test_zero_iterations_returns_initial(self, rng):
        img = random_image(rng, 32, 32)
        code = encode(img, EncoderConfig())
        out = decode(code, initial=img, iterations=0)
        assert np.array_equal(out.pixels, img.pixels)

    def test_initial_size_mismatch_rejected(self, rng):
        code = encode(random_image(rng, 32, 32), EncoderConfig())
        with pytest.raises(ValueError):
            decode(code, initial=random_image(rng, 16, 16))

    def test_default_initial_is_flat_gray(self, rng):
        img = random_image(rng, 32, 32)
        code = encode(img, EncoderConfig())
        flat = GrayImage(np.full((32, 32), 128, np.uint8))
        a = decode(code, iterations=3)
        b = decode(code, initial=flat, iterations=3)
        assert np.array_equal(a.pixels, b.pixels)

    def test_distortion_non_increasing_until_convergence(self, sample_image):
        code = encode(sample_image, EncoderConfig())
        orig = sample_image.pixels.astype(np.float64)
        prev = np.inf
        cur = None
        for k in range(1, 11):
            cur = decode(code, initial=cur, iterations=1)
            mse = float(((cur.pixels - orig) ** 2).mean())
            # allow sub-rounding wobble once converged
            assert mse <= prev + 0.01
            prev = mse


class TestCodeFormat:
    def _random_code(self, rng) -> FractalCode:
        img = random_image(rng, 32, 32)
        return encode(img, EncoderConfig(range_size=4, domain_stride=3, s_bits=4, o_bits=6))

    def test_round_trip_equality_and_bytes(self, rng, tmp_path):
        code = self._random_code(rng)
        blob = code_to_bytes(code)
        back = code_from_bytes(blob)
        assert back == code
        assert code_to_bytes(back) == blob

        p = tmp_path / "code.hpif"
        save_code(code, p)
        assert load_code(p) == code

    def test_bad_magic_rejected(self, rng):
        blob = bytearray(code_to_bytes(self._random_code(rng)))
        blob[:4] = b"NOPE"
        with pytest.raises(FormatError):
            code_from_bytes(bytes(blob))

    def test_truncation_rejected(self, rng):
        blob = code_to_bytes(self._random_code(rng))
        with pytest.raises(FormatError):
            code_from_bytes(blob[:-3])

    def test_out_of_range_entry_rejected(self, rng):
        code = self._random_code(rng)
        blob = bytearray(code_to_bytes(code))
        blob[-3] = 8  # isometry id beyond the group
        with pytest.raises(FormatError):
            code_from_bytes(bytes(blob))

    def test_config_survives_round_trip(self, rng):
        code = self._random_code(rng)
        back = code_from_bytes(code_to_bytes(code))
        assert back.config.fingerprint() == code.config.fingerprint()
        assert back.config.s_max == code.config.s_max
