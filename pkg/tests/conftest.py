import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp


def vector_sets(min_n=1, max_n=8, max_d=3, lo=-100.0, hi=100.0):
    """Hypothesis strategy for finite (n, d) float arrays."""
    return st.tuples(st.integers(min_n, max_n), st.integers(1, max_d)).flatmap(
        lambda nd: hnp.arrays(
            np.float64, nd, elements=st.floats(lo, hi, allow_nan=False, allow_infinity=False, width=32)
        )
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
