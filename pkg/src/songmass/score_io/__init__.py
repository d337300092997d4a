from songmass.score_io.melody import (
    REST,
    MelodySong,
    NoPitchError,
    Note,
    key_shift,
    mean_phrase_length,
    monophonize,
    normalize,
    octave_center,
    octave_shift,
    parse_midi_melody,
    quantize,
    song_to_midi,
    split_phrases_unpaired,
    transpose_to_c,
)
from songmass.score_io.midi import EmptyTrackError, MidiParseError
from songmass.score_io.tokenize import (
    MelodyFormatError,
    detokenize_melody,
    is_duration_token,
    is_pitch_token,
    tokenize_melody,
)

__all__ = [
    "REST",
    "EmptyTrackError",
    "MelodyFormatError",
    "MelodySong",
    "MidiParseError",
    "NoPitchError",
    "Note",
    "detokenize_melody",
    "is_duration_token",
    "is_pitch_token",
    "key_shift",
    "mean_phrase_length",
    "monophonize",
    "normalize",
    "octave_center",
    "octave_shift",
    "parse_midi_melody",
    "quantize",
    "song_to_midi",
    "split_phrases_unpaired",
    "tokenize_melody",
    "transpose_to_c",
]
