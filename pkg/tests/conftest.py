from __future__ import annotations

from pathlib import Path

import pytest

from moca_verify import parse_program

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def corpus_program(name: str):
    return parse_program((CORPUS / f"{name}.lit").read_text())


def corpus_names() -> list[str]:
    return sorted(p.stem for p in CORPUS.glob("*.lit"))


@pytest.fixture
def mp():
    return corpus_program("mp")


@pytest.fixture
def w_rwr():
    return corpus_program("w-rwr")
