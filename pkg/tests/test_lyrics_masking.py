import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from songmass.lyrics import Vocabulary, build_vocab, normalize_line, parse_lyrics
from songmass.masking import mask_song, span_length
from songmass.tokens import MASK, SEP, SPECIAL_TOKENS, MalformedSequenceError, TokenSequence, sentence_ids_of


def test_sentence_ids_sep_closes_its_sentence():
    assert sentence_ids_of(["a", "b", SEP, "c", SEP]) == [0, 0, 0, 1, 1]
    seq = TokenSequence(["a", SEP, "b", "c", SEP])
    assert seq.sentences() == [["a"], ["b", "c"]]
    assert seq.sentence_spans() == [(0, 1), (2, 4)]
    with pytest.raises(MalformedSequenceError):
        TokenSequence(["a", SEP, "b"]).sentences()


def test_token_file_round_trip(tmp_path):
    from songmass.tokens import read_token_file, write_token_file

    songs = [TokenSequence.from_line("a b [SEP]"), TokenSequence.from_line("c [SEP] d [SEP]")]
    write_token_file(tmp_path / "t.txt", songs)
    assert read_token_file(tmp_path / "t.txt") == songs


# ----------------------------------------------------------------- lyrics


def test_normalize_line():
    assert normalize_line("Another day has gone,") == ["another", "day", "has", "gone"]
    assert normalize_line("I’m still all alone!") == ["i'm", "still", "all", "alone"]
    assert normalize_line("'Cause  rock_n roll") == ["cause", "rock", "n", "roll"]
    assert normalize_line("...") == []


def test_parse_lyrics_songs_and_sentences():
    text = "Another day has gone\nI'm still all alone\n\n\nLove me\n--\nSecond song\n"
    songs = parse_lyrics(text)
    assert [s.to_line() for s in songs] == [
        "another day has gone [SEP] i'm still all alone [SEP]",
        "love me [SEP]",
        "second song [SEP]",
    ]


def test_parse_lyrics_hyphenation_hook():
    songs = parse_lyrics("alone day", hyphenate=lambda w: ["a", "lone"] if w == "alone" else [w])
    assert songs[0].tokens == ["a", "lone", "day", SEP]


def test_fixture_lyrics_have_twenty_lines(fixtures_dir):
    songs = parse_lyrics((fixtures_dir / "lyrics.txt").read_text())
    assert sum(s.num_sentences for s in songs) == 20


def test_vocabulary():
    v = build_vocab([["b", "a", "b"], TokenSequence(["c", "a", SEP, "b"])])
    assert v.itos[:6] == list(SPECIAL_TOKENS)
    assert v.itos[6:] == ["b", "a", "c"]
    assert v.encode(["a", "zzz"]) == [v.stoi["a"], v.unk_id]
    assert v.decode(v.encode(["c", SEP])) == ["c", SEP]
    assert build_vocab([["a", "b", "b"]], min_count=2).itos[6:] == ["b"]
    with pytest.raises(ValueError):
        Vocabulary(["x"])


def test_vocabulary_save_load(tmp_path):
    v = build_vocab([["x", "y"]])
    v.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt") == v


# ---------------------------------------------------------------- masking


def test_span_length_rounding():
    assert span_length(4, 0.5) == 2
    assert span_length(5, 0.5) == 3   # 2.5 rounds up
    assert span_length(1, 0.1) == 1
    assert span_length(3, 1.0) == 3


def test_mask_song_example():
    seq = TokenSequence.from_line("a b c d [SEP] e f [SEP]")
    pair = mask_song(seq, 0.5, rng_seed=0)
    assert len(pair.span_list) == 2
    for sid, u, v in pair.span_list:
        assert v - u + 1 == 2 if sid == 0 else 1
    assert pair.encoder_input.count(MASK) == 3
    assert pair.decoder_target == [seq.tokens[p] for p in pair.target_positions]
    assert pair.target_sentence_ids == [0, 0, 1]


def test_mask_song_rejects_bad_input():
    with pytest.raises(MalformedSequenceError):
        mask_song(TokenSequence.from_line("a b"))
    with pytest.raises(MalformedSequenceError):
        mask_song(TokenSequence.from_line("a [SEP] [SEP]"))
    with pytest.raises(ValueError):
        mask_song(TokenSequence.from_line("a [SEP]"), ratio=0)


sentences = st.lists(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=12), min_size=1, max_size=6)


@settings(max_examples=200, deadline=None)
@given(sentences, st.floats(0.05, 1.0), st.integers(0, 2**31))
def test_mask_song_properties(sents, ratio, seed):
    seq = TokenSequence.from_sentences(sents)
    pair = mask_song(seq, ratio, seed)
    # one contiguous span per sentence, never touching [SEP]
    assert [sid for sid, _, _ in pair.span_list] == list(range(len(sents)))
    for (sid, u, v), (start, sep) in zip(pair.span_list, seq.sentence_spans()):
        assert start <= u <= v < sep
        assert v - u + 1 == span_length(sep - start, ratio)
    masked = [i for i, t in enumerate(pair.encoder_input) if t == MASK]
    assert masked == pair.target_positions
    assert all(pair.encoder_input[i] == SEP for i, t in enumerate(seq.tokens) if t == SEP)
    # same seed, same mask
    assert mask_song(seq, ratio, seed) == pair
