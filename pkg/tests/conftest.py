import numpy as np
import pytest

from stainkit.imaging import save_png
from stainkit.synthetic import synth_corpus, synth_image

_acceptance_results = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _acceptance_results.append((name, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name, passed in _acceptance_results:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"  {status}  {name}")


@pytest.fixture(scope="session")
def small_corpus():
    """Eight 96x96 synthetic stained images."""
    return synth_corpus(8, 96, seed=2024)


@pytest.fixture(scope="session")
def known_image():
    """One synthetic image together with its true colour matrix."""
    rng = np.random.default_rng(11)
    return synth_image(96, 96, rng)


@pytest.fixture()
def corpus_dir(tmp_path, small_corpus):
    """The small corpus written to disk as PNGs."""
    d = tmp_path / "corpus"
    d.mkdir()
    for i, img in enumerate(small_corpus):
        save_png(img, d / f"img{i:02d}.png")
    return d
