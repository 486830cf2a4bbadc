import numpy as np
import pytest
from hypothesis import given, strategies as st

from hyperind.features import (FeatureFormatError, FeatureTable, MissingFeatureError, load_features,
                               synthetic_features, write_features)
from hyperind.kg import Vocabulary


def test_load_3x4(tmp_path):
    p = tmp_path / "f.tsv"
    p.write_text("b\t1\t2\t3\t4\na\t5\t6\t7\t8\nc\t0\t0\t0\t1\n")
    table = load_features(p, Vocabulary(["a", "b", "c"]))
    assert table.rows.shape == (3, 4)
    assert table.rows[0].tolist() == [5, 6, 7, 8]


def test_missing_entity_named(tmp_path):
    p = tmp_path / "f.tsv"
    p.write_text("a\t1\t2\n")
    with pytest.raises(MissingFeatureError) as err:
        load_features(p, Vocabulary(["a", "zz"]))
    assert "zz" in str(err.value)


def test_inconsistent_width(tmp_path):
    p = tmp_path / "f.tsv"
    p.write_text("a\t1\t2\nb\t1\n")
    with pytest.raises(FeatureFormatError):
        load_features(p, Vocabulary(["a", "b"]))


def test_wide_file(tmp_path):
    vocab = Vocabulary(["x", "y"])
    write_features(tmp_path / "f.tsv", vocab, synthetic_features(vocab, 1024, 0))
    assert load_features(tmp_path / "f.tsv", vocab).dim == 1024


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        FeatureTable(np.array([[1.0, np.nan]]))


def test_synthetic_deterministic():
    vocab = Vocabulary([f"E{i}" for i in range(20)])
    a, b = synthetic_features(vocab, 8, 3), synthetic_features(vocab, 8, 3)
    assert np.array_equal(a.rows, b.rows)


def test_synthetic_keyed_on_label_not_index():
    a = synthetic_features(Vocabulary(["p", "q"]), 8, 3)
    b = synthetic_features(Vocabulary(["q", "p"]), 8, 3)
    assert np.array_equal(a.rows[0], b.rows[1])


@given(st.lists(st.text(min_size=1, max_size=6), min_size=2, max_size=10, unique=True),
       st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_synthetic_unit_norm_and_distinct(labels, dim, seed):
    rows = synthetic_features(labels, dim, seed).rows
    assert np.allclose(np.linalg.norm(rows, axis=1), 1.0, atol=1e-9)
    if dim > 1:
        cos = rows[0] @ rows[1]
        assert cos < 1.0
