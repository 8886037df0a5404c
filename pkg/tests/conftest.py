import numpy as np
import pytest

from deltatorus.lattice import enumerate_spectrum


@pytest.fixture(scope="session")
def table_d2_small():
    return enumerate_spectrum(2, 300)


@pytest.fixture(scope="session")
def table_d3_small():
    return enumerate_spectrum(3, 60)


@pytest.fixture(scope="session")
def table_d2_mid():
    return enumerate_spectrum(2, 21000)


def brute_counts_d2(m_max: int) -> np.ndarray:
    """Independent oracle: full double loop over the coordinate box."""
    import math

    a = math.isqrt(m_max)
    counts = np.zeros(m_max + 1, dtype=np.int64)
    for x in range(-a, a + 1):
        for y in range(-a, a + 1):
            m = x * x + y * y
            if m <= m_max:
                counts[m] += 1
    return counts


def brute_counts_d3(m_max: int) -> np.ndarray:
    import math

    a = math.isqrt(m_max)
    counts = np.zeros(m_max + 1, dtype=np.int64)
    for x in range(-a, a + 1):
        for y in range(-a, a + 1):
            for z in range(-a, a + 1):
                m = x * x + y * y + z * z
                if m <= m_max:
                    counts[m] += 1
    return counts
