import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pelspeech.autodiff import Tensor
from pelspeech.labelmap import LabelMap, dialect_probs, predict_dialect, random_map

from conftest import check_grads


def test_seventeen_dialects_from_99_languages():
    m = random_map(17, 1, range(1, 100), np.random.default_rng(0))
    assert m.n_dialects == 17
    assert len(set(m.tokens)) == 17
    assert set(m.tokens) <= set(range(1, 100))


def test_pool_fully_partitioned():
    m = random_map(2, 3, range(6), np.random.default_rng(1))
    assert sorted(m.tokens) == list(range(6))
    assert all(len(g) == 3 for g in m.groups)


def test_seeded_map_is_deterministic():
    a = random_map(5, 2, range(50), np.random.default_rng(7))
    b = random_map(5, 2, range(50), np.random.default_rng(7))
    assert a == b


def test_pool_too_small():
    with pytest.raises(ValueError, match="pool"):
        random_map(4, 2, range(7), np.random.default_rng(0))


def test_groups_must_be_disjoint():
    with pytest.raises(ValueError):
        LabelMap(((1, 2), (2, 3)))


def test_uniform_logits_give_uniform_probs():
    m = LabelMap.singletons(range(17))
    p = dialect_probs(np.zeros(30), m).data
    np.testing.assert_allclose(p, 1 / 17)


def test_equal_group_sums():
    p = dialect_probs(np.array([2.0, 3.0, 5.0]), LabelMap(((0, 1), (2,)))).data
    np.testing.assert_allclose(p, [0.5, 0.5])


def test_shift_invariance_matches_direct_computation():
    rng = np.random.default_rng(3)
    m = random_map(4, 3, range(20), rng)
    logits = rng.standard_normal(20)
    shifted = logits + 2.5
    direct = np.array([shifted[list(g)].sum() for g in m.groups])
    direct = np.exp(direct - direct.max())
    direct /= direct.sum()
    np.testing.assert_allclose(dialect_probs(shifted, m).data, direct, rtol=1e-12)
    np.testing.assert_allclose(dialect_probs(logits, m).data, direct, rtol=1e-12)


def test_predict_argmax_and_ties():
    m = LabelMap.singletons([0, 1, 2])
    assert predict_dialect(np.array([1.0, 2.0, 0.5]), m) == 1
    assert predict_dialect(np.array([3.0, 1.0, 3.0]), m) == 0


def test_predict_batched():
    m = LabelMap(((0, 1), (2, 3)))
    logits = np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 5.0]])
    np.testing.assert_array_equal(predict_dialect(logits, m), [0, 1])


def test_group_softmax_gradient():
    rng = np.random.default_rng(8)
    m = random_map(3, 2, range(10), rng)
    for _ in range(20):
        x = Tensor(rng.standard_normal((4, 10)), requires_grad=True, dtype=np.float64)
        c = rng.standard_normal((4, 3))
        assert check_grads(lambda: (dialect_probs(x, m) * c).sum(), [x]) < 1e-5


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_probability_vector(seed):
    rng = np.random.default_rng(seed)
    d, k = int(rng.integers(1, 6)), int(rng.integers(1, 4))
    m = random_map(d, k, range(40), rng)
    p = dialect_probs(rng.normal(0, 5, 40), m).data
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-6


def test_singletons_agree_with_raw_argmax():
    rng = np.random.default_rng(4)
    m = random_map(6, 1, range(30), rng)
    for _ in range(100):
        logits = rng.standard_normal(30)
        raw = int(np.argmax(logits[m.tokens]))
        assert predict_dialect(logits, m) == raw
