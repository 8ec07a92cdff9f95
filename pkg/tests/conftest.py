import pytest

from cardpattern.mobility import PathMatrix

# the four weekly path rows of the worked example, oldest first
TABLE1_ROWS = [
    [7, 1, 1, 2],
    [6, 6, 9, 4, 4, 4, 10, 1, 1],
    [1, 1, 1, 6, 6, 1, 12, 3],
    [8, 11],
]

# printed supports of every length-1 and length-2 pattern, as exact rationals
TABLE2_SUPPORTS = {
    (1,): 3, (2,): 1, (3,): 1, (4,): 1, (6,): 2, (7,): 1, (8,): 1, (9,): 1, (10,): 1, (11,): 1, (12,): 1,
    (1, 1): 3, (1, 2): 1, (1, 3): 1 / 2, (1, 6): 1, (1, 12): 1, (4, 1): 1 / 2, (4, 4): 1, (4, 10): 1,
    (6, 1): 7 / 6, (6, 3): 1 / 3, (6, 4): 1 / 2, (6, 6): 2, (6, 9): 1, (6, 10): 1 / 5, (6, 12): 1 / 2,
    (7, 1): 1, (7, 2): 1 / 3, (8, 11): 1, (9, 1): 1 / 5, (9, 4): 1, (9, 10): 1 / 4, (10, 1): 1, (12, 3): 1,
}

# the same values as printed, two decimals
TABLE2_PRINTED = {
    (1,): 3, (2,): 1, (3,): 1, (4,): 1, (6,): 2, (7,): 1, (8,): 1, (9,): 1, (10,): 1, (11,): 1, (12,): 1,
    (1, 1): 3, (1, 2): 1, (1, 3): 0.5, (1, 6): 1, (1, 12): 1, (4, 1): 0.5, (4, 4): 1, (4, 10): 1,
    (6, 1): 1.17, (6, 3): 0.33, (6, 4): 0.5, (6, 6): 2, (6, 9): 1, (6, 10): 0.2, (6, 12): 0.5,
    (7, 1): 1, (7, 2): 0.33, (8, 11): 1, (9, 1): 0.2, (9, 4): 1, (9, 10): 0.25, (10, 1): 1, (12, 3): 1,
}


@pytest.fixture
def table1():
    return PathMatrix.from_rows(TABLE1_ROWS)
