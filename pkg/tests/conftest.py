import pytest

from cervreg import pipeline
from cervreg.config import parse

TINY_INI = """\
[data]
subjects = 3
per_subject = 4
seed = 0

[train]
epochs = 1
learning_rate = 1e-3

[experiment]
seeds = 0
"""


def tiny_config(text=TINY_INI):
    return pipeline.experiment_config(parse(text, "tiny.ini"))


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """One small experiment shared by the pipeline and CLI tests."""
    out = tmp_path_factory.mktemp("tiny")
    res = pipeline.run_experiment(tiny_config(), out, workers=1)
    return res


ACCEPTANCE = []


def record_criterion(number, ok, detail):
    """Log one acceptance-criterion outcome; echoed again in the terminal summary."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
