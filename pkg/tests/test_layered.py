"""Layer planning, progressive packing, and the two baseline schemes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layerfec import (
    ConfigError,
    FormatError,
    PlanError,
    PrcOutputSymbol,
    StreamConfig,
    baseline_decode_block,
    baseline_encode_block,
    plan_layers,
    prc_decode_block,
    prc_encode_block,
)
from layerfec.layered import (
    CodecParams,
    la_ideal_recoverable,
    pack_segments,
    suggest_valid_config,
    unpack_segments,
)
from layerfec.codec import subseed, RatelessCode

REF_LARGE = StreamConfig(k=(250, 400), r=(0.5, 0.8), T=188, N=1000)
REF_SMALL = StreamConfig(k=(125, 200), r=(0.5, 0.8), T=188, N=500)
TINY = StreamConfig(k=(5, 16), r=(0.5, 0.8), T=3, N=30)
CP = CodecParams(precode=8)


def tiny_layers(rng, cfg=TINY):
    return [rng.integers(0, 256, size=k * cfg.T, dtype=np.uint8).tobytes()
            for k in cfg.k]


class TestPlan:
    def test_reference_large_block(self):
        plan = plan_layers(REF_LARGE)
        assert [s.n for s in plan.layers] == [500, 500]
        assert plan.widths == (94, 94)
        assert plan.k_stars == (500, 800)

    def test_reference_small_block(self):
        plan = plan_layers(REF_SMALL)
        assert [s.n for s in plan.layers] == [250, 250]
        assert plan.widths == (94, 94)
        assert plan.k_stars == (250, 400)

    def test_single_layer_degenerates_to_plain_stream(self):
        cfg = StreamConfig(k=(13,), r=(13 / 20,), T=7, N=20)
        plan = plan_layers(cfg)
        assert plan.widths == (7,)
        assert plan.k_stars == (13,)

    def test_non_integral_width_names_layer(self):
        cfg = StreamConfig(k=(5, 16), r=(0.5, 0.8), T=10, N=30)
        with pytest.raises(PlanError, match="layer 1"):
            plan_layers(cfg)  # width would be 10*10/30

    def test_non_integral_reshape_count_names_layer(self):
        cfg = StreamConfig(k=(3, 5), r=(0.75, 5 / 6), T=5, N=10)
        with pytest.raises(PlanError, match="layer 1"):
            plan_layers(cfg)  # width 2 is fine, 3*5/2 symbols is not

    def test_rate_ordering_enforced(self):
        with pytest.raises(ConfigError):
            StreamConfig(k=(16, 5), r=(0.8, 0.5), T=3, N=30)

    def test_budget_must_close(self):
        with pytest.raises(ConfigError):
            StreamConfig(k=(5, 16), r=(0.5, 0.8), T=3, N=31)

    def test_oversubscribed_block_rejected(self):
        with pytest.raises(ConfigError):
            StreamConfig(k=(30, 16), r=(0.5, 0.8), T=3, N=30)

    def test_suggest_valid_config_finds_neighbor(self):
        got = suggest_valid_config(k=(10, 16), r=(0.5, 0.8), T=10, N=40)
        assert got is not None
        plan_layers(got)  # must not raise

    def test_redundancy_parity_holds(self):
        for cfg in (REF_LARGE, REF_SMALL, TINY):
            plan = plan_layers(cfg)
            for spec in plan.layers:
                assert (cfg.N - spec.k_star) * spec.width == \
                    (spec.n - spec.k) * cfg.T

    def test_byte_budget_exact(self):
        for cfg in (REF_LARGE, REF_SMALL, TINY):
            plan = plan_layers(cfg)
            assert sum(s.width for s in plan.layers) == cfg.T
            assert sum(s.n for s in plan.layers) == cfg.N


class TestPrcEncode:
    def test_single_layer_is_plain_lt_stream(self, rng):
        cfg = StreamConfig(k=(6,), r=(0.5,), T=4, N=12)
        plan = plan_layers(cfg)
        buf = rng.integers(0, 256, size=6 * 4, dtype=np.uint8).tobytes()
        block = prc_encode_block([buf], plan, seed=17)
        code = RatelessCode(plan.k_stars[0], subseed(17, 0))
        src = np.frombuffer(buf, dtype=np.uint8).reshape(6, 4)
        for sym in block:
            plain = code.encode(src, sym.esi)
            assert np.array_equal(sym.payload, plain.payload)

    def test_output_symbols_width_is_T(self, rng):
        plan = plan_layers(REF_LARGE)
        layers = [rng.integers(0, 256, size=k * 188, dtype=np.uint8).tobytes()
                  for k in REF_LARGE.k]
        block = prc_encode_block(layers, plan, seed=1)
        assert len(block) == 1000
        assert {len(s.payload) for s in block} == {188}
        assert [s.esi for s in block] == list(range(1000))

    def test_two_runs_byte_identical(self, rng):
        plan = plan_layers(TINY)
        layers = tiny_layers(rng)
        a = prc_encode_block(layers, plan, seed=5, codec=CP)
        b = prc_encode_block(layers, plan, seed=5, codec=CP)
        assert all(np.array_equal(x.payload, y.payload) for x, y in zip(a, b))

    def test_buffer_size_mismatch_rejected(self, rng):
        plan = plan_layers(TINY)
        layers = tiny_layers(rng)
        layers[0] = layers[0][:-1]
        with pytest.raises(FormatError, match="layer 1"):
            prc_encode_block(layers, plan, seed=5)


class TestPrcDecode:
    def test_lossless_round_trip_ml(self, rng):
        plan = plan_layers(TINY)
        layers = tiny_layers(rng)
        block = prc_encode_block(layers, plan, seed=3, codec=CP)
        out = prc_decode_block(block, plan, seed=3, decoder="ml", codec=CP)
        for (data, rep), want in zip(out, layers):
            assert rep.success and data == want

    def test_ideal_mid_ratio_splits_layers(self):
        plan = plan_layers(REF_LARGE)
        received = [PrcOutputSymbol(esi=e, payload=np.zeros(188, dtype=np.uint8))
                    for e in range(650)]
        out = prc_decode_block(received, plan, seed=0, decoder="ideal")
        assert out[0][1].success and not out[1][1].success

    def test_ideal_boundary_one_short(self):
        plan = plan_layers(REF_LARGE)
        received = [PrcOutputSymbol(esi=e, payload=np.zeros(188, dtype=np.uint8))
                    for e in range(499)]
        out = prc_decode_block(received, plan, seed=0, decoder="ideal")
        assert not out[0][1].success and out[0][1].recovered == 0

    def test_wrong_width_rejected(self):
        plan = plan_layers(TINY)
        bad = [PrcOutputSymbol(esi=0, payload=np.zeros(4, dtype=np.uint8))]
        with pytest.raises(FormatError):
            prc_decode_block(bad, plan, seed=0, decoder="ml")

    def test_layer_independence_under_segment_corruption(self, rng):
        plan = plan_layers(TINY)
        layers = tiny_layers(rng)
        block = prc_encode_block(layers, plan, seed=9, codec=CP)
        kept = block[:28]
        out_ref = prc_decode_block(kept, plan, seed=9, decoder="ml", codec=CP)
        corrupted = []
        for sym in kept:
            p = sym.payload.copy()
            p[plan.widths[0]:] ^= 0xFF  # trash layer 2's segment
            corrupted.append(PrcOutputSymbol(esi=sym.esi, payload=p))
        out = prc_decode_block(corrupted, plan, seed=9, decoder="ml", codec=CP)
        assert out[0][0] == out_ref[0][0]
        assert out[0][1] == out_ref[0][1]


class TestWireFormat:
    def test_esi_prefix_round_trip(self, rng):
        payload = rng.integers(0, 256, size=188, dtype=np.uint8)
        sym = PrcOutputSymbol(esi=70000, payload=payload)
        back = PrcOutputSymbol.from_bytes(sym.to_bytes())
        assert back.esi == 70000
        assert np.array_equal(back.payload, payload)
        assert len(sym.to_bytes()) == 192

    def test_segment_order_lowest_layer_first(self, rng):
        plan = plan_layers(TINY)
        layers = tiny_layers(rng)
        block = prc_encode_block(layers, plan, seed=4, codec=CP)
        codes = [CP.build(ks, subseed(4, i))
                 for i, ks in enumerate(plan.k_stars)]
        srcs = [np.frombuffer(b, dtype=np.uint8).reshape(ks, w)
                for b, ks, w in zip(layers, plan.k_stars, plan.widths)]
        sym = block[7]
        segs = sym.segments(plan)
        for i, code in enumerate(codes):
            assert np.array_equal(segs[i], code.encode(srcs[i], 7).payload)

    @settings(max_examples=40, deadline=None)
    @given(data=st.data())
    def test_pack_unpack_lossless(self, data):
        widths = data.draw(st.lists(st.integers(1, 9), min_size=1, max_size=5))
        raw = data.draw(st.binary(min_size=sum(widths), max_size=sum(widths)))
        segs = []
        off = 0
        for w in widths:
            segs.append(np.frombuffer(raw[off:off + w], dtype=np.uint8))
            off += w
        packed = pack_segments(segs)
        assert packed.tobytes() == raw
        back = unpack_segments(packed, widths)
        assert all(np.array_equal(a, b) for a, b in zip(segs, back))

    def test_unpack_validates_width(self):
        with pytest.raises(FormatError):
            unpack_segments(np.zeros(5, dtype=np.uint8), [2, 2])


class TestBaselines:
    def test_sp_segment_sizes_and_isolation(self, rng):
        layers = [rng.integers(0, 256, size=k * 188, dtype=np.uint8).tobytes()
                  for k in REF_LARGE.k]
        block = baseline_encode_block(layers, REF_LARGE, "SP", seed=6)
        assert len(block.symbols) == 1000
        first = block.symbols[:500]
        assert all(s.segment == 0 for s in first)
        code = RatelessCode(250, subseed(6, 0))
        for s in first[:40]:
            assert int(code.neighbors(s.esi).max()) < 250

    def test_la_segment_two_spans_both_layers(self):
        layers = [np.zeros(k * 188, dtype=np.uint8) for k in REF_LARGE.k]
        block = baseline_encode_block(layers, REF_LARGE, "LA", seed=6)
        code = RatelessCode(650, subseed(6, 1))
        seg2 = [s for s in block.symbols if s.segment == 1]
        assert len(seg2) == 500
        hits = sum(1 for s in seg2[:200]
                   if int(code.neighbors(s.esi).max()) >= 250)
        assert hits > 100  # layer-2 sources appear in most joint symbols

    def test_single_layer_sp_equals_la(self, rng):
        cfg = StreamConfig(k=(6,), r=(0.5,), T=4, N=12)
        buf = [rng.integers(0, 256, size=24, dtype=np.uint8).tobytes()]
        sp = baseline_encode_block(buf, cfg, "SP", seed=2)
        la = baseline_encode_block(buf, cfg, "LA", seed=2)
        assert all(np.array_equal(a.payload, b.payload)
                   for a, b in zip(sp.symbols, la.symbols))

    def test_sp_round_trip_and_independence(self, rng):
        layers = tiny_layers(rng)
        block = baseline_encode_block(layers, TINY, "SP", seed=8, codec=CP)
        out = baseline_decode_block(block.symbols, TINY, "SP", seed=8,
                                    decoder="ml", codec=CP)
        assert all(rep.success and data == want
                   for (data, rep), want in zip(out, layers))
        seg1_only = [s for s in block.symbols if s.segment == 0]
        out = baseline_decode_block(seg1_only, TINY, "SP", seed=8,
                                    decoder="ml", codec=CP)
        assert out[0][1].success and not out[1][1].success

    def test_sp_ideal_boundary(self):
        sym = lambda seg, esi: type(
            "S", (), {"segment": seg, "esi": esi,
                      "payload": np.zeros(188, dtype=np.uint8)})()
        received = [sym(0, e) for e in range(249)]
        out = baseline_decode_block(received, REF_LARGE, "SP", seed=0,
                                    decoder="ideal")
        assert not out[0][1].success
        received.append(sym(0, 249))
        out = baseline_decode_block(received, REF_LARGE, "SP", seed=0,
                                    decoder="ideal")
        assert out[0][1].success

    def test_la_round_trip(self, rng):
        layers = tiny_layers(rng)
        block = baseline_encode_block(layers, TINY, "LA", seed=8, codec=CP)
        out = baseline_decode_block(block.symbols, TINY, "LA", seed=8,
                                    decoder="ml", codec=CP)
        assert all(rep.success and data == want
                   for (data, rep), want in zip(out, layers))

    def test_la_layer_one_recoverable_from_segment_two_alone(self):
        """Search a seed whose four segment-2 symbols span all four
        sources: the joint matrix is 4x4 full rank, so both layers decode
        with zero segment-1 symbols received."""
        cfg = StreamConfig(k=(2, 2), r=(0.5, 0.5), T=2, N=8)
        layers = [b"\x01\x02\x03\x04", b"\x05\x06\x07\x08"]
        from conftest import gf2_rank_oracle, rows_to_ints
        for seed in range(400):
            code = RatelessCode(4, subseed(seed, 1))
            rows = [code.neighbors(e) for e in range(4)]
            rank, _ = gf2_rank_oracle(rows_to_ints(rows), 4)
            if rank == 4:
                block = baseline_encode_block(layers, cfg, "LA", seed=seed)
                seg2 = [s for s in block.symbols if s.segment == 1]
                out = baseline_decode_block(seg2, cfg, "LA", seed=seed,
                                            decoder="ml")
                assert out[0][1].success and out[0][0] == layers[0]
                assert out[1][1].success and out[1][0] == layers[1]
                return
        pytest.fail("no rank-4 segment-2 draw in 400 seeds")

    def test_la_ideal_staircase_rule(self):
        ks = (250, 400)
        assert la_ideal_recoverable((250, 0), ks, 0)
        assert not la_ideal_recoverable((249, 400), ks, 0)
        assert la_ideal_recoverable((249, 401), ks, 0)  # one spare joint symbol
        assert la_ideal_recoverable((250, 400), ks, 1)
        assert not la_ideal_recoverable((251, 399), ks, 1)
        assert not la_ideal_recoverable((0, 649), ks, 1)
        assert la_ideal_recoverable((0, 650), ks, 0)  # carry covers layer 1

    def test_prc_passthrough_rejected(self, rng):
        with pytest.raises(ConfigError):
            baseline_encode_block(tiny_layers(rng), TINY, "PRC", seed=0)


class TestProgressiveOrdering:
    def test_three_layer_ideal_recovery_is_nested(self):
        cfg = StreamConfig(k=(10, 24, 30), r=(0.25, 0.6, 0.75), T=3, N=120)
        plan = plan_layers(cfg)
        assert list(plan.k_stars) == sorted(plan.k_stars)
        dummy = [PrcOutputSymbol(esi=e, payload=np.zeros(3, dtype=np.uint8))
                 for e in range(120)]
        for upto in range(0, 121, 6):
            out = prc_decode_block(dummy[:upto], plan, seed=0, decoder="ideal")
            flags = [rep.success for _, rep in out]
            # layer i recovered implies every lower layer recovered
            for i, j in ((1, 0), (2, 1)):
                if flags[i]:
                    assert flags[j]
