"""Tests for the bit buffer, lattice enumeration, and message codecs."""

import itertools
import math

import numpy as np
import pytest

from bitbandit.codec import (
    BitBuffer,
    KnownMessage,
    LatticeMembershipError,
    MessageCodecError,
    UnknownMessage,
    bit_budget,
    decode_known,
    decode_unknown,
    encode_known,
    encode_unknown,
    lattice_enumerator,
    q_size,
)
from bitbandit.quantizer import QuantizedContext, quantize_context


class TestBitBuffer:
    def test_write_read_roundtrip(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            buf = BitBuffer()
            fields = []
            for _ in range(rng.integers(1, 12)):
                width = int(rng.integers(1, 40))
                value = int(rng.integers(0, 1 << width))
                buf.write(value, width)
                fields.append((value, width))
            assert len(buf) == sum(w for _, w in fields)
            for value, width in fields:
                assert buf.read(width) == value

    def test_msb_first_framing(self):
        buf = BitBuffer()
        buf.write(1, 1)
        buf.write(0b10, 2)
        assert buf.to_bytes() == bytes([0b11000000])

    def test_padding_is_zero(self):
        buf = BitBuffer()
        buf.write(0b1011, 4)
        (byte,) = buf.to_bytes()
        assert byte == 0b10110000

    def test_bytes_roundtrip(self):
        buf = BitBuffer()
        buf.write(0b101, 3)
        buf.write(0x5AC3, 16)
        back = BitBuffer.from_bytes(buf.to_bytes(), len(buf))
        assert back.read(3) == 0b101
        assert back.read(16) == 0x5AC3

    def test_from_bytes_length_check(self):
        with pytest.raises(MessageCodecError):
            BitBuffer.from_bytes(b"\x00\x00", 3)  # 3 bits need exactly 1 byte
        with pytest.raises(MessageCodecError):
            BitBuffer.from_bytes(b"", 1)

    def test_read_past_end_raises(self):
        buf = BitBuffer()
        buf.write(3, 2)
        buf.read(2)
        with pytest.raises(MessageCodecError):
            buf.read(1)

    def test_write_validation(self):
        buf = BitBuffer()
        with pytest.raises(ValueError):
            buf.write(4, 2)  # does not fit
        with pytest.raises(ValueError):
            buf.write(-1, 2)


class TestLatticeEnumerator:
    def test_size_matches_binomial(self):
        for d in range(1, 9):
            assert lattice_enumerator(d).size == math.comb(3 * d, d)

    def test_size_matches_brute_force(self):
        for d in (1, 2, 3):
            count = sum(
                1
                for v in itertools.product(range(2 * d + 1), repeat=d)
                if sum(v) <= 2 * d
            )
            assert lattice_enumerator(d).size == count

    def test_lexicographic_order_d2(self):
        enum = lattice_enumerator(2)
        expected = [
            v for v in itertools.product(range(5), repeat=2) if sum(v) <= 4
        ]
        assert enum.size == len(expected)
        for r, vec in enumerate(expected):
            assert enum.rank(np.array(vec)) == r
            np.testing.assert_array_equal(enum.unrank(r), vec)

    def test_exhaustive_bijection_small_d(self):
        for d in (1, 2, 3):
            enum = lattice_enumerator(d)
            seen = set()
            for r in range(enum.size):
                v = enum.unrank(r)
                assert v.sum() <= 2 * d
                assert enum.rank(v) == r
                seen.add(tuple(int(c) for c in v))
            assert len(seen) == enum.size

    def test_randomized_roundtrips_d16(self):
        enum = lattice_enumerator(16)
        rng = np.random.default_rng(42)
        for _ in range(2_000):
            r = int(rng.integers(0, enum.size))
            assert enum.rank(enum.unrank(r)) == r

    def test_membership_rejection(self):
        enum = lattice_enumerator(3)
        with pytest.raises(LatticeMembershipError):
            enum.rank(np.array([3, 3, 1]))  # sum 7 > 6
        with pytest.raises(LatticeMembershipError):
            enum.rank(np.array([-1, 0, 0]))
        with pytest.raises(ValueError):
            enum.rank(np.array([1, 2]))  # wrong length

    def test_unrank_range_check(self):
        enum = lattice_enumerator(2)
        with pytest.raises(MessageCodecError):
            enum.unrank(-1)
        with pytest.raises(MessageCodecError):
            enum.unrank(enum.size)


class TestBitBudget:
    def test_known_values(self):
        assert {d: bit_budget(d) for d in (1, 2, 5, 16, 64)} == {
            1: 5, 2: 9, 5: 23, 16: 75, 64: 302,
        }

    def test_formula(self):
        for d in range(1, 65):
            width = math.ceil(math.log2(math.comb(3 * d, d)))
            assert bit_budget(d) == 1 + 2 * d + width

    def test_q_size_validation(self):
        with pytest.raises(ValueError):
            q_size(0)


class TestKnownMessageCodec:
    def test_reward_bit_validation(self):
        with pytest.raises(ValueError):
            KnownMessage(reward_bit=2)

    def test_exactly_one_bit(self):
        for bit in (0, 1):
            buf = encode_known(KnownMessage(reward_bit=bit))
            assert len(buf) == 1
            assert decode_known(
                BitBuffer.from_bytes(buf.to_bytes(), 1)
            ).reward_bit == bit

    def test_golden_byte(self):
        assert encode_known(KnownMessage(reward_bit=1)).to_bytes() == b"\x80"
        assert encode_known(KnownMessage(reward_bit=0)).to_bytes() == b"\x00"

    def test_wrong_length_rejected(self):
        buf = BitBuffer()
        buf.write(0b10, 2)
        with pytest.raises(MessageCodecError):
            decode_known(buf)


class TestUnknownMessageCodec:
    @staticmethod
    def _context(signs, magnitudes, sq_signs, m):
        return QuantizedContext(
            signs=np.asarray(signs, dtype=np.int8),
            magnitudes=np.asarray(magnitudes, dtype=np.int64),
            sq_errors=np.asarray(sq_signs, dtype=float) * (3.0 / m),
            m=m,
        )

    def test_golden_bytes_d1(self):
        # 1 | 1 | 1 | 10  ->  0b11110000
        msg = UnknownMessage(reward_bit=1, context=self._context([1], [2], [1], 1))
        buf = encode_unknown(msg)
        assert len(buf) == bit_budget(1) == 5
        assert buf.to_bytes() == b"\xf0"

    def test_golden_bytes_d2(self):
        # 0 | 10 | 01 | 0111  ->  0b01001011, 0b10000000; rank((1,2)) = 7
        assert lattice_enumerator(2).rank(np.array([1, 2])) == 7
        msg = UnknownMessage(
            reward_bit=0, context=self._context([1, -1], [1, 2], [-1, 1], 2)
        )
        buf = encode_unknown(msg)
        assert len(buf) == bit_budget(2) == 9
        assert buf.to_bytes() == b"\x4b\x80"

    def test_roundtrip_random_contexts(self):
        rng = np.random.default_rng(42)
        for d in (1, 2, 3, 5, 6):
            for _ in range(100):
                x = rng.standard_normal(d)
                x *= rng.random() / max(np.linalg.norm(x), 1e-12)
                qc = quantize_context(x, rng)
                bit = int(rng.integers(0, 2))
                buf = encode_unknown(UnknownMessage(reward_bit=bit, context=qc))
                assert len(buf) == bit_budget(d)
                out = decode_unknown(BitBuffer.from_bytes(buf.to_bytes(), len(buf)), d)
                assert out.reward_bit == bit
                np.testing.assert_array_equal(out.context.signs, qc.signs)
                np.testing.assert_array_equal(out.context.magnitudes, qc.magnitudes)
                np.testing.assert_allclose(out.context.sq_errors, qc.sq_errors)
                assert out.context.m == qc.m

    def test_wrong_length_rejected(self):
        buf = BitBuffer()
        buf.write(0, 4)
        with pytest.raises(MessageCodecError):
            decode_unknown(buf, 1)
