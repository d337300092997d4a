import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_align, dtw_memo, tiling_score
from songmass.align import (
    AlignmentError,
    AlignmentPair,
    alignment_accuracy,
    check_tiling,
    dp_align,
    fan_out,
    greedy_align,
    pairs_from_json,
    pairs_to_json,
    score_alignment,
)
from songmass.metrics import (
    distribution_similarity,
    dtw,
    histogram,
    melody_distance,
    overlapped_area,
    perplexity_from_nll,
    pitch_series,
)
from songmass.score_io.melody import MelodySong, NoPitchError, Note
from songmass.synth import attention_suite

P = AlignmentPair


def song_of(events):
    notes, t = [], 0
    for p, d in events:
        notes.append(Note(p, t, d))
        t += d
    return MelodySong(notes, [len(notes)])


# ------------------------------------------------------------------- align


def test_dp_diagonal_identity():
    pairs, score = dp_align(np.eye(3))
    assert pairs == [P((1, 1), (1, 1)), P((2, 2), (2, 2)), P((3, 3), (3, 3))]
    assert score == 3.0


def test_dp_one_source_many_targets():
    # every target attends to the single source word
    A = np.ones((3, 1))
    pairs, score = dp_align(A)
    assert pairs == [P((1, 1), (1, 3))]
    assert score == pytest.approx(1.0)


def test_dp_one_target_many_sources():
    A = np.full((1, 3), 1 / 3)
    pairs, score = dp_align(A)
    assert pairs == [P((1, 3), (1, 1))]
    assert score == pytest.approx(1.0)


def test_dp_tie_break_prefers_last_evaluated():
    # all splits of a constant 2x2 score 2: the many-to-one candidates come last
    pairs, score = dp_align(np.ones((2, 2)))
    assert score == 2.0
    check_tiling(pairs, 2, 2)
    assert pairs == [P((1, 1), (1, 1)), P((2, 2), (2, 2))]


def test_dp_rejects_bad_input():
    with pytest.raises(AlignmentError):
        dp_align(np.zeros((0, 3)))
    with pytest.raises(AlignmentError):
        dp_align(np.zeros(3))


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_dp_equals_brute_force(M, N, seed):
    A = np.random.default_rng(seed).random((M, N))
    pairs, score = dp_align(A)
    best, best_score = brute_force_align(A)
    check_tiling(pairs, N, M)
    assert score == pytest.approx(best_score, abs=1e-9)
    assert score_alignment(A, pairs) == pytest.approx(score, abs=1e-9)
    assert tiling_score(A, pairs) == pytest.approx(score, abs=1e-9)
    assert pairs == best


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_greedy_is_a_valid_tiling_and_never_beats_dp(M, N, seed):
    A = np.random.default_rng(seed).random((M, N))
    pairs = greedy_align(A)
    check_tiling(pairs, N, M)
    assert score_alignment(A, pairs) <= dp_align(A)[1] + 1e-12


def test_greedy_diagonal():
    assert greedy_align(np.eye(4)) == [P((k, k), (k, k)) for k in range(1, 5)]


def test_check_tiling_rejects_many_to_many_and_gaps():
    with pytest.raises(AlignmentError):
        check_tiling([P((1, 2), (1, 2))], 2, 2)
    with pytest.raises(AlignmentError):
        check_tiling([P((1, 1), (1, 1)), P((3, 3), (2, 2))], 3, 2)


def test_fan_out_and_accuracy():
    ref = [P((1, 1), (1, 2)), P((2, 3), (3, 3)), P((4, 4), (4, 4))]
    assert fan_out(ref, 4).tolist() == [2, 1, 1, 1]
    pred = [P((1, 1), (1, 1)), P((2, 2), (2, 3)), P((3, 3), (4, 4)), P((4, 4), (5, 5))]
    # source 1: 1 vs 2, source 2: 2 vs 1, sources 3 and 4 match
    assert alignment_accuracy([pred], [ref]) == 0.5
    assert alignment_accuracy([ref], [ref]) == 1.0
    with pytest.raises(AlignmentError):
        alignment_accuracy([pred[:2]], [ref])


def test_pairs_json_round_trip():
    pairs = [P((1, 2), (1, 1)), P((3, 3), (2, 4))]
    assert pairs_from_json(pairs_to_json(pairs)) == pairs
    assert pairs_from_json([[[1, 1], [1, 2]]]) == [P((1, 1), (1, 2))]


def test_dp_recovers_clean_suite_and_beats_greedy():
    cases = attention_suite(40, seed=3, noise=0.0)
    refs = [p for _, p in cases]
    dp = [dp_align(A)[0] for A, _ in cases]
    greedy = [greedy_align(A) for A, _ in cases]
    assert alignment_accuracy(dp, refs) == 1.0
    assert alignment_accuracy(greedy, refs) < 0.8


# ----------------------------------------------------------------- metrics


def test_overlapped_area_hand_case():
    assert overlapped_area({60: 0.5, 62: 0.5}, {60: 0.5, 64: 0.5}) == 0.5


def test_histograms():
    song = song_of([(60, 2), (None, 2), (60, 4)])
    assert histogram(song, "pitch") == {60: 2 / 3, "R": 1 / 3}
    assert histogram(song, "duration") == {2: 2 / 3, 4: 1 / 3}
    with pytest.raises(ValueError):
        histogram(song, "velocity")


def test_self_similarity_is_one():
    a = song_of([(60, 2), (62, 2), (None, 1), (64, 4)])
    assert distribution_similarity([a], [a], "pitch") == 1.0
    assert distribution_similarity([a], [a], "duration") == 1.0
    assert melody_distance(a, a) == 0.0


def test_empty_song_is_skipped(caplog):
    a = song_of([(60, 2)])
    empty = MelodySong([], [])
    assert distribution_similarity([empty, a], [a, a], "pitch") == 1.0
    assert "empty" in caplog.text


def test_pitch_series_rests_hold_previous_pitch():
    s = pitch_series(song_of([(None, 1), (60, 2), (None, 1), (64, 1)]))
    np.testing.assert_allclose(s, np.array([60, 60, 60, 60, 64]) - 60.8)
    with pytest.raises(NoPitchError):
        pitch_series(song_of([(None, 2)]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-10, 10), min_size=1, max_size=15),
       st.lists(st.integers(-10, 10), min_size=1, max_size=15))
def test_dtw_matches_memoized_oracle(a, b):
    assert dtw(np.array(a), np.array(b)) == pytest.approx(dtw_memo(a, b), abs=1e-9)


def test_dtw_hand_case():
    assert dtw(np.array([0, 1, 2]), np.array([0, 2])) == 1.0
    assert dtw(np.array([1.0]), np.array([3.0, 3.0])) == 4.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(40, 80), st.integers(1, 8)), min_size=1, max_size=12),
       st.lists(st.tuples(st.integers(40, 80), st.integers(1, 8)), min_size=1, max_size=12),
       st.integers(-12, 12))
def test_melody_distance_transposition_invariant(a, b, k):
    sa, sb = song_of(a), song_of(b)
    assert melody_distance(sa.shifted(k), sb) == pytest.approx(melody_distance(sa, sb), abs=1e-9)


def test_perplexity_from_nll():
    assert perplexity_from_nll(0.0, 5) == 1.0
    assert perplexity_from_nll(2 * math.log(3), 2) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        perplexity_from_nll(1.0, 0)
