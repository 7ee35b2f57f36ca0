from pathlib import Path

import pytest

from forge.toy import make_toy_corpus

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def toy():
    corpus, seqs = make_toy_corpus()
    return corpus, seqs


@pytest.fixture(scope="session")
def toy_csv():
    return ROOT / "data" / "toy_corpus.csv"


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
