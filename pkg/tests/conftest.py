from pathlib import Path

import pytest

from songmass.data import process_raw_paired, read_jsonl
from songmass.lyrics import build_vocab
from songmass.model.train import Bundle, build_model
from songmass.model.transformer import ModelConfig
from songmass.synth import paired_corpus

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def train_songs():
    return [process_raw_paired(o) for o in read_jsonl(FIXTURES / "paired_train.jsonl")]


@pytest.fixture(scope="session")
def heldout_songs():
    return [process_raw_paired(o) for o in read_jsonl(FIXTURES / "paired_heldout.jsonl")]


def tiny_bundle(songs, seed=0, **cfg_kw) -> Bundle:
    lv = build_vocab([s.lyric for s in songs])
    mv = build_vocab([s.melody for s in songs])
    kw = dict(layers=2, hidden=16, heads=2, ff=16, dropout=0.0)
    kw.update(cfg_kw)
    return Bundle(build_model(ModelConfig(len(lv), len(mv), **kw), seed), lv, mv)


@pytest.fixture
def toy_songs():
    return [process_raw_paired(o) for o in paired_corpus(2, seed=3, n_sentences=(2, 2), n_words=(2, 3))]


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"AC{number:>2} {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
