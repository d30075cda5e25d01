import numpy as np
import pytest


def planted_blocks(rng, max_dim=30, max_blocks=5, zero_prob=0.3):
    """Random nonnegative matrix with planted blocks, shuffled, maybe with zero rows/cols.

    Returns ``(x, n_blocks, n_zero_rows, n_zero_cols)``.
    """
    n_blocks = int(rng.integers(1, max_blocks + 1))
    row_sizes = rng.integers(1, max(2, max_dim // (2 * n_blocks)) + 1, size=n_blocks)
    col_sizes = rng.integers(1, max(2, max_dim // (2 * n_blocks)) + 1, size=n_blocks)
    zr = int(rng.integers(0, 3)) if rng.random() < zero_prob else 0
    zc = int(rng.integers(0, 3)) if rng.random() < zero_prob else 0
    R, C = int(row_sizes.sum()) + zr, int(col_sizes.sum()) + zc
    x = np.zeros((R, C))
    r0 = c0 = 0
    for rs, cs in zip(row_sizes, col_sizes):
        block = rng.uniform(0.1, 1.0, size=(rs, cs))
        # sparsify but keep the block connected through a spanning pattern
        mask = rng.random((rs, cs)) < 0.6
        mask[:, 0] = True
        mask[0, :] = True
        x[r0:r0 + rs, c0:c0 + cs] = block * mask
        r0, c0 = r0 + rs, c0 + cs
    x = x[rng.permutation(R)][:, rng.permutation(C)]
    return x, n_blocks, zr, zc


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion that ran."""
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
