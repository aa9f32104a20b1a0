"""Prefix coder: Shannon lengths, Kraft sums, lossless round trips."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratecost.coder import (
    CodingError,
    build_codebooks,
    expected_stage_lengths,
    pack_bits,
    shannon_code,
    unpack_bits,
)


@st.composite
def pmfs(draw, max_symbols=6):
    k = draw(st.integers(2, max_symbols))
    raw = draw(
        st.lists(st.floats(1e-6, 1.0, allow_nan=False), min_size=k, max_size=k)
    )
    arr = np.asarray(raw)
    return arr / arr.sum()


class TestShannonCode:
    def test_uniform_four_symbols_dyadic(self):
        code = shannon_code([0.25, 0.25, 0.25, 0.25])
        assert sorted(len(w) for w in code.words.values()) == [2, 2, 2, 2]
        assert code.expected_length == pytest.approx(2.0, abs=0)
        assert code.expected_length == pytest.approx(code.entropy, abs=1e-12)

    def test_half_quarter_quarter_dyadic(self):
        code = shannon_code([0.5, 0.25, 0.25])
        lengths = {sym: len(w) for sym, w in code.words.items()}
        assert lengths == {0: 1, 1: 2, 2: 2}
        assert code.expected_length == pytest.approx(1.5, abs=0)

    def test_nine_tenths_one_tenth(self):
        code = shannon_code([0.9, 0.1])
        lengths = {sym: len(w) for sym, w in code.words.items()}
        assert lengths == {0: 1, 1: 4}
        assert code.expected_length == pytest.approx(1.3, abs=1e-12)
        h = -(0.9 * math.log2(0.9) + 0.1 * math.log2(0.1))
        assert code.expected_length <= h + 1.0

    def test_point_mass_gets_empty_word(self):
        code = shannon_code([0.0, 1.0])
        assert code.words == {1: ""}
        assert code.expected_length == 0.0

    def test_zero_probability_symbols_have_no_word(self):
        code = shannon_code([0.7, 0.0, 0.3])
        assert set(code.words) == {0, 2}

    @given(pmf=pmfs())
    @settings(max_examples=120)
    def test_kraft_lengths_and_roundtrip(self, pmf):
        code = shannon_code(pmf)
        kraft = sum(Fraction(1, 2 ** len(w)) for w in code.words.values())
        assert kraft <= 1
        assert code.expected_length <= code.entropy + 1.0 + 1e-12
        total = sum(Fraction(float(p)) for p in pmf if p > 0)
        for sym, word in code.words.items():
            q = Fraction(float(pmf[sym])) / total
            want = 0
            while Fraction(1, 2 ** want) > q:
                want += 1
            assert len(word) == want
            got, consumed = code.decode(word + "101")
            assert got == sym and consumed == len(word)

    def test_deterministic_under_symbol_relabel(self):
        a = shannon_code([0.6, 0.25, 0.15])
        b = shannon_code([0.6, 0.25, 0.15])
        assert a.words == b.words

    def test_ties_broken_by_symbol_index(self):
        code = shannon_code([0.25, 0.25, 0.25, 0.25])
        ordered = sorted(code.words.items())
        assert [w for _, w in ordered] == ["00", "01", "10", "11"]


class TestCodebooks:
    @staticmethod
    def mixture_law():
        # two-stage binary action law with an unreachable context
        law = np.array([[0.5, 0.2], [0.0, 0.3]])
        return law

    def test_contexts_built_and_skipped(self):
        book = build_codebooks(self.mixture_law())
        assert set(book.stages[0]) == {0}
        assert set(book.stages[1]) == {0, 1}
        with pytest.raises(CodingError):
            book.code(2, (2,))

    def test_expected_lengths_bounded_per_stage(self):
        law = self.mixture_law()
        book = build_codebooks(law)
        lengths = expected_stage_lengths(book, law)
        h1 = -(0.7 * math.log2(0.7) + 0.3 * math.log2(0.3))
        assert lengths[0] <= h1 + 1.0 + 1e-12
        # stage 2: conditional entropies weighted by context mass
        h2 = 0.7 * (-(5 / 7) * math.log2(5 / 7) - (2 / 7) * math.log2(2 / 7))
        assert lengths[1] <= h2 + 1.0 + 1e-12

    def test_exhaustive_roundtrip_all_contexts(self):
        law = self.mixture_law()
        book = build_codebooks(law)
        for t, stage in enumerate(book.stages, start=1):
            for ctx, code in stage.items():
                u_hist = []
                c = ctx
                for _ in range(t - 1):
                    u_hist.insert(0, c % 2)
                    c //= 2
                for sym in code.words:
                    word = book.encode(t, u_hist, sym)
                    got, consumed = book.decode(t, u_hist, word)
                    assert got == sym and consumed == len(word)

    def test_concatenated_stream_roundtrip(self, rng):
        law = np.full((2, 2, 2), 1 / 8.0)
        book = build_codebooks(law)
        seqs = rng.integers(0, 2, size=(1000, 3))
        stream = "".join(
            book.encode(t, seq[: t - 1], int(seq[t - 1]))
            for seq in seqs
            for t in (1, 2, 3)
        )
        pos = 0
        for seq in seqs:
            for t in (1, 2, 3):
                sym, used = book.decode(t, seq[: t - 1], stream, pos)
                assert sym == int(seq[t - 1])
                pos += used
        assert pos == len(stream)

    def test_adversarial_bitstring_raises(self):
        code = shannon_code([0.9, 0.1])  # words: 0 -> "0", 1 -> "0001"... lengths 1,4
        bad = "1111"
        with pytest.raises(CodingError):
            code.decode(bad)

    def test_unknown_symbol_raises(self):
        code = shannon_code([0.7, 0.0, 0.3])
        with pytest.raises(CodingError):
            code.encode(1)


class TestBitPacking:
    @given(bits=st.text(alphabet="01", max_size=64))
    @settings(max_examples=80)
    def test_pack_unpack_roundtrip(self, bits):
        assert unpack_bits(pack_bits(bits), len(bits)) == bits

    def test_padding_is_zero_and_excluded(self):
        data = pack_bits("101")
        assert data == bytes([0b10100000])
        assert unpack_bits(data, 3) == "101"
