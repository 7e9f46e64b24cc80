import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sigscene.embedding import (
    DEFAULT_T_GRID,
    EmbeddingSet,
    SIGRegNormalizer,
    char_fn_similarity,
    empirical_char_fn,
    gaussian_cosine_similarity,
    pairwise_similarity,
    read_embeddings,
    sigreg_normalize,
    to_distance,
    write_embeddings,
)
from sigscene.exceptions import DimMismatch, EmptyGrid, FormatError, InvalidParam, ZeroVector

coords = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def nonzero_vectors(dim):
    return arrays(float, dim, elements=coords).filter(lambda v: np.linalg.norm(v) > 1e-3)


def test_sigreg_normalize_examples():
    np.testing.assert_allclose(sigreg_normalize([3, 4]), [0.848528137423857, 1.131370849898476], rtol=1e-12)
    np.testing.assert_allclose(sigreg_normalize([1, 0, 0, 0]), [2, 0, 0, 0])
    with pytest.raises(ZeroVector):
        sigreg_normalize([0, 0])


@given(nonzero_vectors(6))
def test_sigreg_normalize_norm_and_idempotence(v):
    once = sigreg_normalize(v)
    assert np.linalg.norm(once) == pytest.approx(math.sqrt(6), rel=1e-12)
    np.testing.assert_allclose(sigreg_normalize(once), once, atol=1e-9)
    # direction preserved
    assert float(once @ v) > 0


@pytest.mark.parametrize(
    "zi, zj, expected",
    [([1, 2, 3], [1, 2, 3], 1.0), ([1, 0], [-1, 0], 0.0), ([1, 0], [0, 1], 0.5)],
)
def test_gaussian_cosine_examples(zi, zj, expected):
    assert gaussian_cosine_similarity(zi, zj) == pytest.approx(expected, abs=1e-15)


def test_gaussian_cosine_errors():
    with pytest.raises(ZeroVector):
        gaussian_cosine_similarity([0, 0], [1, 0])
    with pytest.raises(DimMismatch):
        gaussian_cosine_similarity([1, 0], [1, 0, 0])


@given(nonzero_vectors(5), nonzero_vectors(5), st.floats(0.01, 100), st.floats(0.01, 100))
def test_gaussian_cosine_properties(zi, zj, a, b):
    s = gaussian_cosine_similarity(zi, zj)
    assert s == gaussian_cosine_similarity(zj, zi)
    assert 0.0 <= s <= 1.0
    assert gaussian_cosine_similarity(a * zi, b * zj) == pytest.approx(s, abs=1e-12)
    assert gaussian_cosine_similarity(a * zi, zi) == pytest.approx(1.0, abs=1e-12)


def test_gaussian_cosine_one_only_for_positive_multiples():
    assert 1.0 - gaussian_cosine_similarity([1, 2], [2, 5]) > 1e-9
    assert gaussian_cosine_similarity([1, 2], [-1, -2]) == pytest.approx(0.0, abs=1e-15)


def test_empirical_char_fn_examples():
    v = [0.3, -1.2, 4.0]
    assert empirical_char_fn(v, [0.0])[0] == 1 + 0j
    phi = empirical_char_fn([1, -1], [math.pi])[0]
    assert phi.real == pytest.approx(-1.0, abs=1e-15)
    assert phi.imag == pytest.approx(0.0, abs=1e-15)


def test_empirical_char_fn_against_scalar_sum():
    # frozen from sum(cmath.exp(1j * x) for x in v) / 4
    phi = empirical_char_fn([0.5, 1.5, -2.0, 0.0], [1.0])[0]
    assert phi.real == pytest.approx(0.3830432317527333, abs=1e-15)
    assert phi.imag == pytest.approx(0.14190577459564396, abs=1e-15)
    oracle = sum(cmath.exp(1j * x) for x in [0.5, 1.5, -2.0, 0.0]) / 4
    assert abs(phi - oracle) < 1e-15


@given(arrays(float, 7, elements=coords), st.lists(st.floats(-10, 10), min_size=1, max_size=5))
def test_empirical_char_fn_bounded(v, grid):
    assert np.all(np.abs(empirical_char_fn(v, grid)) <= 1 + 1e-12)


def test_empirical_char_fn_empty_grid():
    with pytest.raises(EmptyGrid):
        empirical_char_fn([1, 2], [])


def test_char_fn_similarity_examples():
    z = [0.2, -1.0, 3.5, 0.7]
    assert char_fn_similarity(z, z) == 1.0
    assert char_fn_similarity(z, z[::-1]) == 1.0
    # |e^{it} - e^{-it}| / 2 = |sin t|; frozen from the direct evaluation
    s = char_fn_similarity([1, 1, 1, 1], [-1, -1, -1, -1], DEFAULT_T_GRID)
    assert s == pytest.approx(0.3387864851657234, abs=1e-14)
    oracle = 1 - np.mean([abs(math.sin(t)) for t in DEFAULT_T_GRID])
    assert s == pytest.approx(oracle, abs=1e-14)


def test_char_fn_similarity_rejects_zero_frequency():
    with pytest.raises(InvalidParam):
        char_fn_similarity([1, 2], [2, 1], [0.0, 1.0])
    with pytest.raises(EmptyGrid):
        char_fn_similarity([1, 2], [2, 1], [])


@given(nonzero_vectors(6), nonzero_vectors(6), st.permutations(range(6)))
def test_char_fn_similarity_properties(zi, zj, perm):
    s = char_fn_similarity(zi, zj)
    assert 0.0 <= s <= 1.0
    assert s == char_fn_similarity(zj, zi)
    assert char_fn_similarity(zi[list(perm)], zj) == pytest.approx(s, abs=1e-12)


def test_pairwise_single_and_orthogonal():
    one = EmbeddingSet(["a"], [[1.0, 2.0]])
    np.testing.assert_array_equal(pairwise_similarity(one).entries, [[1.0]])
    eye = EmbeddingSet(["a", "b", "c"], np.eye(3))
    S = pairwise_similarity(eye).entries
    off = S[~np.eye(3, dtype=bool)]
    np.testing.assert_array_equal(off, 0.5)


@pytest.mark.parametrize("method", ["gaussian_cosine", "char_fn"])
def test_pairwise_matches_per_pair_loop(rng, method):
    X = rng.standard_normal((5, 16))
    es = EmbeddingSet(list("abcde"), X)
    grid = DEFAULT_T_GRID if method == "char_fn" else None
    S = pairwise_similarity(es, method, grid)
    scalar = gaussian_cosine_similarity if method == "gaussian_cosine" else char_fn_similarity
    for i in range(5):
        assert S.entries[i, i] == 1.0
        for j in range(i + 1, 5):
            assert S.entries[i, j] == scalar(X[i], X[j])
            assert S.entries[j, i] == S.entries[i, j]
    assert S.method == method


def test_pairwise_argument_checks(rng):
    es = EmbeddingSet(["a", "b"], rng.standard_normal((2, 3)))
    with pytest.raises(EmptyGrid):
        pairwise_similarity(es, "char_fn")
    with pytest.raises(InvalidParam):
        pairwise_similarity(es, "gaussian_cosine", DEFAULT_T_GRID)
    with pytest.raises(InvalidParam):
        pairwise_similarity(es, "euclid")
    bad = EmbeddingSet(["a", "b"], [[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(ZeroVector, match="'a'"):
        pairwise_similarity(bad)


def test_to_distance(rng):
    es = EmbeddingSet([f"i{k}" for k in range(6)], rng.standard_normal((6, 4)))
    S = pairwise_similarity(es)
    D = to_distance(S).entries
    for i in range(6):
        assert D[i, i] == 0.0
        for j in range(6):
            if i != j:
                assert D[i, j] == 1.0 - S.entries[i, j]
    assert np.array_equal(D, D.T)
    assert D.min() >= 0 and D.max() <= 1


def test_embedding_set_invariants():
    with pytest.raises(ValueError, match="duplicate"):
        EmbeddingSet(["a", "a"], np.ones((2, 2)))
    with pytest.raises(ValueError):
        EmbeddingSet(["a"], np.ones((2, 2)))
    with pytest.raises(ValueError):
        EmbeddingSet(["a"], [[np.nan, 1.0]])
    with pytest.raises(ValueError):
        EmbeddingSet(["a"], [[3.0, 4.0]], normalized=True)
    es = EmbeddingSet(["a", "b"], [[3.0, 4.0], [0.0, 2.0]]).normalize()
    assert es.normalized
    np.testing.assert_allclose(np.linalg.norm(es.matrix, axis=1), math.sqrt(2), rtol=1e-12)


def test_normalizer_transformer(rng):
    X = rng.standard_normal((10, 8))
    out = SIGRegNormalizer().fit_transform(X)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), math.sqrt(8), rtol=1e-12)
    assert SIGRegNormalizer().get_params() == {}


def test_jsonl_round_trip(tmp_path, rng):
    es = EmbeddingSet(["x", "y", "z"], rng.standard_normal((3, 5)))
    path = tmp_path / "emb.jsonl"
    write_embeddings(path, es)
    back = read_embeddings(path)
    assert back.image_ids == es.image_ids
    np.testing.assert_array_equal(back.matrix, es.matrix)


@pytest.mark.parametrize(
    "lines, match",
    [
        (['{"image": "a", "embedding": [1, 2]}', '{"image": "a", "embedding": [1, 2]}'], "line 2: duplicate"),
        (['{"image": "a", "embedding": [1, 2]}', '{"image": "b", "embedding": [1, 2, 3]}'], "line 2"),
        (['{"image": "a"}'], "line 1"),
        (["not json"], "line 1"),
    ],
)
def test_jsonl_rejects_bad_input(tmp_path, lines, match):
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match=match):
        read_embeddings(path)
