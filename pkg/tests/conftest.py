import numpy as np
from hypothesis import strategies as st

from tipfront.lattice import Configuration


@st.composite
def configurations(draw, cap=None, max_len=20, nonempty=True):
    n = draw(st.integers(1, 4)) if cap is None else cap
    cells = draw(st.lists(st.integers(0, n), min_size=1 if nonempty else 0, max_size=max_len))
    if nonempty and not any(cells):
        cells[draw(st.integers(0, len(cells) - 1))] = draw(st.integers(1, n))
    offset = draw(st.integers(-50, 50))
    return Configuration.build(offset, cells, n)


def random_config(rng: np.random.Generator, cap: int, lo: int, hi: int, density=None):
    p = rng.random() if density is None else density
    occupied = rng.random(hi - lo + 1) < p
    vals = rng.integers(1, cap + 1, size=hi - lo + 1) * occupied
    return Configuration.build(lo, vals.tolist(), cap)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
