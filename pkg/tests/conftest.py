import pytest

from rtt_forge.execution import DlvR, DlvrR, SndR, SndS


@pytest.fixture
def chart_execution():
    """The 11-event message sequence chart: packet 2 overtakes packet 1, the
    receiver acks 1 then jumps to 3 and 4, and the final ack yields a sample."""
    return (SndS(1), SndS(2), DlvR(2), SndR(1), DlvrR(1), DlvR(1),
            SndS(3), SndR(3), DlvR(3), SndR(4), DlvrR(4))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
