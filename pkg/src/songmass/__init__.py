"""Lyric-to-melody and melody-to-lyric generation with song-level masked
pre-training and attention-based alignment."""

__version__ = "0.1.0"
