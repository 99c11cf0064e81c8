import numpy as np
import pytest

from nmfsga import rng


def test_streams_reproducible():
    assert np.array_equal(rng.stream(4, 1, 2).random(5), rng.stream(4, 1, 2).random(5))


def test_keys_give_independent_streams():
    draws = {tuple(rng.stream(4, *key).integers(0, 2**62, 3)) for key in [(), (0,), (1,), (0, 1), (1, 0)]}
    assert len(draws) == 5


def test_derive_seed():
    assert rng.derive_seed(7, 1, 2) == rng.derive_seed(7, 1, 2)
    assert rng.derive_seed(7, 1, 2) != rng.derive_seed(7, 2, 1)
    assert 0 <= rng.derive_seed(7, 3) <= rng.MAX_SEED


@pytest.mark.parametrize("bad", [-1, 2**64, 1.5, "3", True])
def test_bad_seeds(bad):
    with pytest.raises((TypeError, ValueError)):
        rng.check_seed(bad)
