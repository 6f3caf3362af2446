"""Tests for Needleman-Wunsch alignment and the request distance."""

import random

import numpy as np
import pytest

from src.opaque_virt.alignment import (
    DistanceUndefinedError,
    align,
    align_weighted,
    column_score,
    distance,
    distances,
    score_grid,
    score_many,
    score_max,
    score_min,
    score_pair,
)
from src.opaque_virt.entropy import derive_weights
from src.opaque_virt.models import EntropyMethod, ScalerSpec, ScoringParams, WeightsVector
from tests.conftest import (
    DIRECTORY_EXAMPLE,
    MISMATCHED_OP_REQUEST,
    UNSEEN_SEARCH,
    WEIGHTING_METHOD,
    WEIGHTING_SCALER,
)

DEFAULTS = ScoringParams()


def _weights(values, default=None) -> WeightsVector:
    return WeightsVector(
        weights=list(values),
        default_weight=values[-1] if default is None else default,
        method=EntropyMethod.SHANNON,
        scaler=ScalerSpec.hyperbolic(a=1.0, c=1.0),
    )


def _oracle(a: bytes, b: bytes, params: ScoringParams) -> float:
    """Exhaustively enumerate every global alignment and return the best score.

    Gaps taken before the other message has started are free.
    """

    def walk(i: int, j: int) -> float:
        if i == len(a) and j == len(b):
            return 0.0
        options = []
        if i < len(a) and j < len(b):
            options.append(params.pair(a[i], b[j]) + walk(i + 1, j + 1))
        if i < len(a):
            options.append((params.d_gap if j > 0 else 0.0) + walk(i + 1, j))
        if j < len(b):
            options.append((params.d_gap if i > 0 else 0.0) + walk(i, j + 1))
        return max(options)

    return walk(0, 0)


def _random_message(rng: random.Random, alphabet: bytes, max_length: int, min_length: int = 0) -> bytes:
    return bytes(rng.choice(alphabet) for _ in range(rng.randint(min_length, max_length)))


def _is_subsequence(needle: bytes, haystack: bytes) -> bool:
    it = iter(haystack)
    return all(symbol in it for symbol in needle)


class TestScorePair:
    """Test the symbol scoring function."""

    def test_identical(self):
        """Test identical symbols score d_identical."""
        assert score_pair(ord("e"), ord("e"), DEFAULTS) == 1
        assert score_pair(0, 0, DEFAULTS) == 1

    def test_differing(self):
        """Test differing symbols score d_differing."""
        assert score_pair(ord("e"), ord("f"), DEFAULTS) == -1


class TestAlign:
    """Test plain alignment."""

    def test_reference_alignment(self):
        """Test the efheh / eheheg alignment."""
        result = align(b"efheh", b"eheheg", DEFAULTS)

        assert result.score == 4
        assert result.render() == ("efheh--", "e-heheg")

    def test_empty_input(self):
        """Test aligning against an empty message."""
        result = align(b"", b"abc", DEFAULTS)

        assert result.score == 0
        assert result.aligned_a == [None, None, None]
        assert list(result.aligned_b) == list(b"abc")

    def test_identity(self):
        """Test a message aligned with itself."""
        result = align(b"abc", b"abc", DEFAULTS)

        assert result.score == 3
        assert result.render() == ("abc", "abc")

    def test_both_empty(self):
        """Test two empty messages."""
        result = align(b"", b"", DEFAULTS)

        assert result.score == 0
        assert result.aligned_a == []

    def test_matches_exhaustive_oracle(self):
        """Test scores equal the exhaustive optimum on short messages."""
        rng = random.Random(11)
        for _ in range(10000):
            a = _random_message(rng, b"abc", 6)
            b = _random_message(rng, b"abc", 6)

            assert align(a, b, DEFAULTS).score == _oracle(a, b, DEFAULTS)

    def test_matches_oracle_with_gap_penalty(self):
        """Test the oracle agreement holds with a negative gap score."""
        params = ScoringParams(d_identical=2, d_differing=-1, d_gap=-1)
        rng = random.Random(12)
        for _ in range(1000):
            a = _random_message(rng, b"abc", 5)
            b = _random_message(rng, b"abc", 5)

            assert align(a, b, params).score == pytest.approx(_oracle(a, b, params), abs=1e-9)

    def test_traceback_soundness(self):
        """Test degapped alignments recover inputs and rescore to the matrix score."""
        rng = random.Random(13)
        params = ScoringParams(d_identical=1, d_differing=-1, d_gap=-0.5)
        for trial in range(1000):
            a = _random_message(rng, b"abcd", 12)
            b = _random_message(rng, b"abcd", 12)
            weights = None
            if trial % 2:
                weights = _weights([rng.uniform(0.01, 1.0) for _ in range(8)], default=0.3)

            result = align(a, b, params, weights)

            assert len(result.aligned_a) == len(result.aligned_b)
            assert bytes(s for s in result.aligned_a if s is not None) == a
            assert bytes(s for s in result.aligned_b if s is not None) == b
            assert all(x is not None or y is not None for x, y in zip(result.aligned_a, result.aligned_b))
            assert column_score(result, params, weights) == pytest.approx(result.score, abs=1e-9)


class TestAlignWeighted:
    """Test the weighted recurrence."""

    def test_two_column_example(self):
        """Test ab/ab with weights (0.5, 0.25)."""
        result = align_weighted(b"ab", b"ab", DEFAULTS, _weights([0.5, 0.25]))

        assert result.score == pytest.approx(0.75)

    def test_uniform_weights_degenerate_to_plain(self):
        """Test all-one weights reproduce the plain score exactly."""
        rng = random.Random(21)
        uniform = WeightsVector.uniform(8)
        for _ in range(1000):
            a = _random_message(rng, b"abcdefgh", 64)
            b = _random_message(rng, b"abcdefgh", 64)

            assert align_weighted(a, b, DEFAULTS, uniform).score == align(a, b, DEFAULTS).score

    def test_default_weight_beyond_vector(self):
        """Test columns beyond L use the default weight."""
        weights = _weights([1.0], default=0.5)

        result = align_weighted(b"aaa", b"aaa", DEFAULTS, weights)

        assert result.score == pytest.approx(1.0 + 0.5 + 0.5)

    def test_lowering_a_weight_lowers_its_contribution(self):
        """Test scaling one column weight down scales its match contribution."""
        base = [0.9, 0.8, 0.7, 0.6]
        message = b"abcd"
        for column in range(4):
            for factor in (0.1, 0.5, 0.9):
                lowered = list(base)
                lowered[column] *= factor

                before = align_weighted(message, message, DEFAULTS, _weights(base)).score
                after = align_weighted(message, message, DEFAULTS, _weights(lowered)).score

                assert after < before
                assert before - after == pytest.approx(base[column] * (1 - factor))


class TestBatchedScores:
    """Test the batched scorer against single alignments."""

    def test_score_many_matches_align(self):
        """Test batched scores equal individual alignments."""
        rng = random.Random(31)
        for trial in range(200):
            query = _random_message(rng, b"abcde", 20)
            candidates = [_random_message(rng, b"abcde", 20) for _ in range(rng.randint(1, 6))]
            weights = _weights([rng.uniform(0.05, 1) for _ in range(10)], default=0.2) if trial % 2 else None

            scores = score_many(query, candidates, DEFAULTS, weights)

            expected = [align(query, c, DEFAULTS, weights).score for c in candidates]
            assert scores.tolist() == pytest.approx(expected, abs=1e-12)

    def test_score_grid_shape(self):
        """Test the grid covers every query and candidate."""
        grid = score_grid([b"a", b"abc"], [b"a", b"b", b"abc"], DEFAULTS)

        assert grid.shape == (2, 3)
        assert grid.tolist() == [[1, 0, 1], [1, 1, 3]]


class TestScoreBounds:
    """Test maximum and minimum scores."""

    def test_score_max(self):
        """Test the maximum possible score."""
        assert score_max(b"efheh", DEFAULTS) == 5
        assert score_max(b"ab", DEFAULTS, _weights([0.5, 0.25])) == pytest.approx(0.75)
        assert score_max(b"", DEFAULTS) == 0

    def test_score_min(self):
        """Test the minimum possible score."""
        assert score_min(b"efheh", DEFAULTS) == -5
        assert score_min(b"ab", DEFAULTS, _weights([0.5, 0.25])) == pytest.approx(-0.75)
        assert score_min(b"", DEFAULTS) == 0


class TestDistance:
    """Test the normalised distance."""

    def test_self_distance_zero(self):
        """Test every message is at distance zero from itself."""
        rng = random.Random(41)
        for trial in range(1000):
            message = _random_message(rng, b"abcdxyz", 40, min_length=1)
            weights = _weights([rng.uniform(0.001, 1) for _ in range(30)], default=0.01) if trial % 2 else None

            assert distance(message, message, DEFAULTS, weights) == 0.0

    def test_positive_unless_subsequence(self):
        """Test distinct messages are apart unless the query is embedded in the candidate."""
        rng = random.Random(42)
        for _ in range(1000):
            m1 = _random_message(rng, b"abc", 8, min_length=1)
            m2 = _random_message(rng, b"abc", 8)
            if m1 == m2:
                continue

            d = distance(m1, m2, DEFAULTS)

            if _is_subsequence(m1, m2):
                assert d == 0.0
            else:
                assert d > 0.0

    def test_empty_query_undefined(self):
        """Test the distance from an empty message is undefined."""
        with pytest.raises(DistanceUndefinedError):
            distance(b"", b"abc", DEFAULTS)

    def test_distances_vector_matches_scalar(self):
        """Test the vector form agrees with the scalar form."""
        requests = [request for request, _ in DIRECTORY_EXAMPLE]

        vector = distances(UNSEEN_SEARCH, requests, DEFAULTS)

        assert vector.tolist() == [distance(UNSEEN_SEARCH, r, DEFAULTS) for r in requests]

    def test_wrong_operation_is_nearer_without_weights(self):
        """Test the add request is nearer than the search request for the mismatched-operation request."""
        add_request, search_request = DIRECTORY_EXAMPLE[2][0], DIRECTORY_EXAMPLE[3][0]

        assert distance(MISMATCHED_OP_REQUEST, add_request, DEFAULTS) == pytest.approx(1 / 52)
        assert distance(MISMATCHED_OP_REQUEST, add_request, DEFAULTS) < distance(
            MISMATCHED_OP_REQUEST, search_request, DEFAULTS
        )

    def test_unseen_search_argmin(self):
        """Test the unseen search's nearest request is index 4."""
        requests = [request for request, _ in DIRECTORY_EXAMPLE]

        vector = distances(UNSEEN_SEARCH, requests, DEFAULTS)

        assert int(np.argmin(vector)) + 1 == 4
        assert vector[3] == pytest.approx(0.125)

    def test_weights_bring_search_request_nearer(self, directory_library):
        """Test entropy weights rank the search request ahead of the add request."""
        weights = derive_weights(directory_library, WEIGHTING_METHOD, WEIGHTING_SCALER)
        add_request, search_request = DIRECTORY_EXAMPLE[2][0], DIRECTORY_EXAMPLE[3][0]

        add_distance = distance(MISMATCHED_OP_REQUEST, add_request, DEFAULTS, weights)
        search_distance = distance(MISMATCHED_OP_REQUEST, search_request, DEFAULTS, weights)

        assert search_distance < add_distance
        assert search_distance == pytest.approx(0.0065, abs=5e-4)
