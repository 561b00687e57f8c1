"""Codec behavior: degree distributions, encoding, both decoders."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layerfec import (
    DegreeDistribution,
    ParameterError,
    RatelessCode,
    bp_decode,
    ideal_decode_threshold,
    lt_encode,
    ml_decode,
    robust_soliton,
    symbol_neighbors,
)
from layerfec.codec import stream_key, subseed
from conftest import gf2_in_span, gf2_rank_oracle, peel_oracle, rows_to_ints


def hand_robust_soliton(k, c, delta):
    """Scalar reimplementation from the published formulas: rho(1) = 1/k,
    rho(i) = 1/(i(i-1)); S = c ln(k/delta) sqrt(k); tau(i) = S/(i k) below
    the spike at round(k/S), S ln(S/delta)/k at it; normalize by the total."""
    rho = [float(Fraction(1, k)) if i == 1 else float(Fraction(1, i * (i - 1)))
           for i in range(1, k + 1)]
    S = c * math.log(k / delta) * math.sqrt(k)
    pivot = max(1, round(k / S))
    tau = []
    for i in range(1, k + 1):
        if i < pivot:
            tau.append(S / (i * k))
        elif i == pivot:
            tau.append(S * math.log(S / delta) / k)
        else:
            tau.append(0.0)
    beta = sum(rho) + sum(tau)
    return [(r + t) / beta for r, t in zip(rho, tau)]


class TestRobustSoliton:
    def test_single_symbol_forces_degree_one(self):
        assert robust_soliton(1, 0.03, 0.1).mass.tolist() == [1.0]

    def test_normalized_with_positive_degree_one(self):
        d = robust_soliton(10, c=0.05, delta=0.5)
        assert abs(float(d.mass.sum()) - 1.0) <= 1e-12
        assert d.mass[0] > 0

    def test_k4_matches_hand_computation(self):
        got = robust_soliton(4, c=0.1, delta=0.5).mass
        want = hand_robust_soliton(4, 0.1, 0.5)
        # independently recomputed; spike at round(4/0.41589) = 10 > k,
        # so tau(i) = S/(4i) throughout
        assert want == pytest.approx(
            [0.2909498650153416, 0.4537088482435269,
             0.16547971405752634, 0.08986157268360519], abs=1e-15)
        assert got.tolist() == pytest.approx(want, abs=1e-15)

    def test_spike_lands_inside_support_for_large_k(self):
        d = robust_soliton(500, c=0.05, delta=0.5)
        S = 0.05 * math.log(500 / 0.5) * math.sqrt(500)
        pivot = round(500 / S)
        base = 1.0 / (pivot * (pivot - 1))
        assert d.mass[pivot - 1] > 2 * base / float(d.mass.sum())

    @pytest.mark.parametrize("bad", [
        dict(k=0), dict(k=5, c=0.0), dict(k=5, c=-1.0),
        dict(k=5, delta=0.0), dict(k=5, delta=1.0),
    ])
    def test_invalid_parameters_rejected(self, bad):
        args = dict(k=5, c=0.05, delta=0.5)
        args.update(bad)
        with pytest.raises(ParameterError):
            robust_soliton(args["k"], args["c"], args["delta"])

    def test_distribution_invariants_enforced(self):
        with pytest.raises(ParameterError):
            DegreeDistribution(k=2, mass=np.array([0.0, 1.0]))
        with pytest.raises(ParameterError):
            DegreeDistribution(k=2, mass=np.array([0.6, 0.6]))
        with pytest.raises(ParameterError):
            DegreeDistribution(k=2, mass=np.array([1.2, -0.2]))


class TestLtEncode:
    def test_single_source_copies_payload(self):
        dist = robust_soliton(1)
        src = [b"\x5a\x11\x00"]
        for esi in (0, 1, 99):
            sym = lt_encode(src, esi, dist, seed=3)
            assert sym.payload.tobytes() == src[0]

    def test_degree_two_is_xor_of_both(self):
        dist = robust_soliton(2)
        a, b = b"\x0f\xf0", b"\x33\x55"
        for esi in range(200):
            nb = symbol_neighbors(esi, 2, dist, seed=11)
            if len(nb) == 2:
                sym = lt_encode([a, b], esi, dist, seed=11)
                assert sym.payload.tobytes() == bytes(x ^ y for x, y in zip(a, b))
                break
        else:
            pytest.fail("no degree-2 symbol among 200 esis")

    def test_repeatable_across_runs(self, rng):
        dist = robust_soliton(8)
        src = rng.integers(0, 256, size=(8, 6), dtype=np.uint8)
        one = [lt_encode(src, e, dist, seed=42).payload.tobytes()
               for e in range(100)]
        two = [lt_encode(src, e, dist, seed=42).payload.tobytes()
               for e in range(100)]
        assert one == two

    def test_payload_is_xor_of_neighbors(self, rng):
        dist = robust_soliton(16)
        src = rng.integers(0, 256, size=(16, 4), dtype=np.uint8)
        for esi in range(50):
            nb = symbol_neighbors(esi, 16, dist, seed=5)
            expect = np.bitwise_xor.reduce(src[nb], axis=0)
            assert np.array_equal(lt_encode(src, esi, dist, seed=5).payload,
                                  expect)

    def test_empty_source_rejected(self):
        with pytest.raises(ParameterError):
            lt_encode([], 0, robust_soliton(1), seed=0)


class TestBpDecode:
    def test_single_degree_one_symbol(self):
        dist = robust_soliton(1)
        sym = lt_encode([b"\xaa"], 0, dist, seed=1)
        slots, rep = bp_decode([sym], 1, dist, seed=1)
        assert rep.success and rep.recovered == 1
        assert slots[0].tobytes() == b"\xaa"

    def test_two_symbol_peel(self):
        # construct {A^B, B} directly through the public encoder
        dist = robust_soliton(2)
        a, b = b"\x01", b"\x02"
        esi_two = esi_one = None
        for esi in range(300):
            nb = symbol_neighbors(esi, 2, dist, seed=9)
            if len(nb) == 2 and esi_two is None:
                esi_two = esi
            if len(nb) == 1 and nb[0] == 1 and esi_one is None:
                esi_one = esi
            if esi_two is not None and esi_one is not None:
                break
        syms = [lt_encode([a, b], e, dist, seed=9) for e in (esi_two, esi_one)]
        slots, rep = bp_decode(syms, 2, dist, seed=9)
        assert rep.success and rep.recovered == 2
        assert slots[0].tobytes() == a and slots[1].tobytes() == b

    def test_matches_independent_ripple_simulation(self, rng):
        dist = robust_soliton(16)
        src = rng.integers(0, 256, size=(16, 3), dtype=np.uint8)
        for seed in range(12):
            syms = [lt_encode(src, e, dist, seed=seed) for e in range(18)]
            slots, rep = bp_decode(syms, 16, dist, seed=seed)
            rows = [symbol_neighbors(e, 16, dist, seed=seed) for e in range(18)]
            expected = peel_oracle(rows, 16)
            assert rep.recovered == len(expected)
            assert {i for i, s in enumerate(slots) if s is not None} == expected
            for i in expected:
                assert np.array_equal(slots[i], src[i])

    def test_partial_recovery_reported_not_raised(self):
        dist = robust_soliton(4)
        src = [bytes([i]) for i in range(4)]
        sym = None
        for esi in range(100):
            if len(symbol_neighbors(esi, 4, dist, seed=2)) == 1:
                sym = lt_encode(src, esi, dist, seed=2)
                break
        slots, rep = bp_decode([sym], 4, dist, seed=2)
        assert not rep.success and rep.recovered == 1


class TestMlDecode:
    def test_full_rank_square_system(self, rng):
        dist = robust_soliton(8)
        src = rng.integers(0, 256, size=(8, 2), dtype=np.uint8)
        for seed in range(40):
            rows = [symbol_neighbors(e, 8, dist, seed=seed) for e in range(8)]
            rank, _ = gf2_rank_oracle(rows_to_ints(rows), 8)
            if rank == 8:
                syms = [lt_encode(src, e, dist, seed=seed) for e in range(8)]
                slots, rep = ml_decode(syms, 8, dist, seed=seed)
                assert rep.success and rep.symbols_consumed == 8
                assert all(np.array_equal(s, src[i]) for i, s in enumerate(slots))
                return
        pytest.fail("no full-rank square instance found")

    def test_single_xor_of_two_recovers_nothing(self):
        dist = robust_soliton(2)
        src = [b"\x01", b"\x02"]
        for esi in range(300):
            if len(symbol_neighbors(esi, 2, dist, seed=4)) == 2:
                sym = lt_encode(src, esi, dist, seed=4)
                slots, rep = ml_decode([sym], 2, dist, seed=4)
                assert not rep.success and rep.recovered == 0
                assert slots == [None, None]
                return
        pytest.fail("no degree-2 symbol found")

    def test_success_flag_matches_rank_oracle(self, rng):
        dist = robust_soliton(32)
        src = rng.integers(0, 256, size=(32, 2), dtype=np.uint8)
        agree = 0
        for seed in range(25):
            syms = [lt_encode(src, e, dist, seed=seed) for e in range(34)]
            _, rep = ml_decode(syms, 32, dist, seed=seed)
            rows = [symbol_neighbors(e, 32, dist, seed=seed) for e in range(34)]
            rank, pivots = gf2_rank_oracle(rows_to_ints(rows), 32)
            assert rep.success == (rank == 32)
            recovered_oracle = sum(
                gf2_in_span(1 << c, pivots) for c in range(32))
            assert rep.recovered == recovered_oracle
            agree += 1
        assert agree == 25


class TestIdealThreshold:
    @pytest.mark.parametrize("k_star,received,expect", [
        (500, 500, True), (500, 499, False), (0, 0, True),
    ])
    def test_boundaries(self, k_star, received, expect):
        assert ideal_decode_threshold(k_star, received) is expect

    def test_negative_rejected(self):
        with pytest.raises(ParameterError):
            ideal_decode_threshold(-1, 0)


class TestCodecInvariants:
    def test_round_trip_with_experiment_codec(self, rng):
        """>= 99% ML success at 15 extra symbols, experiment codec
        (robust soliton plus 16 dense parities)."""
        failures = 0
        trials = 0
        for k in (8, 32, 64):
            for t in range(350):
                src = rng.integers(0, 256, size=(k, 3), dtype=np.uint8)
                code = RatelessCode(k, seed=1000 * k + t, precode=16)
                syms = code.encode_block(src, range(k + 15))
                slots, rep = code.decode_ml(syms)
                trials += 1
                if not rep.success:
                    failures += 1
                elif not all(np.array_equal(s, src[i])
                             for i, s in enumerate(slots)):
                    pytest.fail("declared success with wrong bytes")
        assert failures / trials <= 0.01

    def test_bp_success_implies_ml_success(self, rng):
        dist = robust_soliton(24)
        src = rng.integers(0, 256, size=(24, 2), dtype=np.uint8)
        implications = 0
        for seed in range(60):
            syms = [lt_encode(src, e, dist, seed=seed) for e in range(30)]
            _, bp = bp_decode(syms, 24, dist, seed=seed)
            _, ml = ml_decode(syms, 24, dist, seed=seed)
            assert ml.recovered >= bp.recovered
            if bp.success:
                implications += 1
                assert ml.success
        assert implications > 0

    def test_adding_symbols_never_loses_ground(self, rng):
        dist = robust_soliton(12)
        src = rng.integers(0, 256, size=(12, 2), dtype=np.uint8)
        for seed in range(15):
            syms = [lt_encode(src, e, dist, seed=seed) for e in range(16)]
            prev_bp = prev_ml = 0
            for upto in range(1, 17):
                _, bp = bp_decode(syms[:upto], 12, dist, seed=seed)
                _, ml = ml_decode(syms[:upto], 12, dist, seed=seed)
                assert bp.recovered >= prev_bp
                assert ml.recovered >= prev_ml
                prev_bp, prev_ml = bp.recovered, ml.recovered

    @settings(max_examples=25, deadline=None)
    @given(data=st.data())
    def test_encoding_is_linear_in_the_source(self, data):
        k = data.draw(st.integers(2, 12))
        width = data.draw(st.integers(1, 6))
        dist = robust_soliton(k)
        raw = data.draw(st.binary(min_size=2 * k * width,
                                  max_size=2 * k * width))
        buf = np.frombuffer(raw, dtype=np.uint8).reshape(2, k, width)
        a, b = buf[0], buf[1]
        esi = data.draw(st.integers(0, 500))
        ab = lt_encode(np.bitwise_xor(a, b), esi, dist, seed=13)
        ea = lt_encode(a, esi, dist, seed=13)
        eb = lt_encode(b, esi, dist, seed=13)
        assert np.array_equal(ab.payload, np.bitwise_xor(ea.payload, eb.payload))

    def test_decoders_are_pure(self, rng):
        dist = robust_soliton(10)
        src = rng.integers(0, 256, size=(10, 4), dtype=np.uint8)
        syms = [lt_encode(src, e, dist, seed=21) for e in range(13)]
        r1 = ml_decode(syms, 10, dist, seed=21)[1]
        r2 = ml_decode(syms, 10, dist, seed=21)[1]
        b1 = bp_decode(syms, 10, dist, seed=21)[1]
        b2 = bp_decode(syms, 10, dist, seed=21)[1]
        assert r1 == r2 and b1 == b2


class TestPrecode:
    def test_parity_symbols_are_xors_of_sources(self, rng):
        code = RatelessCode(20, seed=3, precode=6)
        src = rng.integers(0, 256, size=(20, 3), dtype=np.uint8)
        inner = code.expand(src)
        masks = code.parity_masks()
        for p in range(6):
            acc = np.zeros(3, dtype=np.uint8)
            for j in range(20):
                if (int(masks[p, j >> 6]) >> (j & 63)) & 1:
                    acc ^= src[j]
            assert np.array_equal(inner[20 + p], acc)

    def test_bp_handles_constraint_rows(self, rng):
        code = RatelessCode(6, seed=5, precode=4)
        src = rng.integers(0, 256, size=(6, 2), dtype=np.uint8)
        syms = code.encode_block(src, range(40))
        slots, rep = code.decode_bp(syms)
        assert rep.success
        assert all(np.array_equal(s, src[i]) for i, s in enumerate(slots))

    def test_precode_bounds_checked(self):
        with pytest.raises(ParameterError):
            RatelessCode(5, seed=0, precode=65)
        with pytest.raises(ParameterError):
            RatelessCode(5, seed=0, precode=-1)


def test_subseed_is_stable_and_distinct():
    seeds = {subseed(99, i) for i in range(64)}
    assert len(seeds) == 64
    assert subseed(99, 7) == subseed(99, 7)
    assert stream_key(0) != stream_key(1)
