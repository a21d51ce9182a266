import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multidefer.data import (
    Dataset,
    ExpertCostVector,
    ExpertPredictionMatrix,
    ParseError,
    Standardizer,
    ValidationError,
    load_dataset,
    load_expert_predictions,
    save_dataset,
    save_expert_predictions,
    split,
)
from multidefer.synthetic import gen_three_cluster_dataset


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_load_small_dataset(tmp_path):
    p = _write(tmp_path / "d.csv", "f0,f1,label,group\n0.5,1,0,0\n1.5,2,1,0\n-1,0.25,1,1\n")
    ds = load_dataset(p)
    assert len(ds) == 3 and ds.dim == 2
    assert ds.labels.tolist() == [0, 1, 1]
    assert ds.groups.tolist() == [0, 0, 1]
    assert ds.num_classes >= 2 and ds.num_groups == 2
    np.testing.assert_array_equal(ds.features[2], [-1.0, 0.25])


def test_declared_class_count_rejects_label(tmp_path):
    p = _write(tmp_path / "d.csv", "# num_classes=2,num_groups=1\nf0,label,group\n0.1,7,0\n")
    with pytest.raises(ValidationError):
        load_dataset(p)


def test_malformed_row_names_line(tmp_path):
    p = _write(tmp_path / "d.csv", "f0,label,group\n0.1,0,0\nabc,1,0\n")
    with pytest.raises(ParseError, match="line 3"):
        load_dataset(p)
    p = _write(tmp_path / "e.csv", "f0,label,group\n0.1,0\n")
    with pytest.raises(ParseError, match="line 2"):
        load_dataset(p)


def test_bad_header(tmp_path):
    with pytest.raises(ParseError):
        load_dataset(_write(tmp_path / "d.csv", "x,label,group\n1,0,0\n"))


def test_crlf_is_tolerated(tmp_path):
    p = tmp_path / "d.csv"
    p.write_bytes(b"f0,label,group\r\n0.5,1,0\r\n0.25,0,0\r\n")
    ds = load_dataset(str(p))
    assert ds.labels.tolist() == [1, 0]


def test_three_cluster_file_roundtrip(tmp_path):
    ds = gen_three_cluster_dataset(3).dataset
    path = str(tmp_path / "d.csv")
    save_dataset(ds, path)
    back = load_dataset(path)
    assert len(back) == 1000 and back.dim == 2
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.groups, ds.groups)
    assert (back.num_classes, back.num_groups) == (ds.num_classes, ds.num_groups)
    with open(path, "rb") as fh:
        assert fh.read().endswith(b"\n")


@settings(max_examples=25, deadline=None)
@given(
    st.integers(1, 12),
    st.integers(1, 4),
    st.integers(2, 4),
    st.integers(1, 3),
    st.integers(0, 2**31 - 1),
)
def test_dataset_roundtrip_property(tmp_path_factory, n, d, c, g, seed):
    r = np.random.default_rng(seed)
    ds = Dataset(r.normal(size=(n, d)) * 1e3, r.integers(0, c, n), r.integers(0, g, n), c, g)
    path = str(tmp_path_factory.mktemp("rt") / "d.csv")
    save_dataset(ds, path)
    back = load_dataset(path)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.groups, ds.groups)
    assert (back.num_classes, back.num_groups) == (c, g)


def test_dataset_invariants():
    with pytest.raises(ValidationError):
        Dataset(np.zeros((3, 2)), [0, 1], [0, 0, 0], 2)
    with pytest.raises(ValidationError):
        Dataset(np.zeros((2, 2)), [0, 2], [0, 0], 2)
    with pytest.raises(ValidationError):
        Dataset(np.zeros((2, 2)), [0, 1], [0, 1], 2, num_groups=1)
    with pytest.raises(ValidationError):
        Dataset(np.zeros((2, 2)), [0, 0], [0, 0], 1)
    ds = Dataset(np.zeros((2, 2)), [0, 1], [0, 0], 2)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


def test_empty_expert_file_gives_empty_mask(tmp_path):
    m = load_expert_predictions(_write(tmp_path / "e.csv", ""), 4, 3)
    assert m.mask.shape == (4, 3) and not m.mask.any()
    m = load_expert_predictions(_write(tmp_path / "h.csv", "sample_id,expert_id,label\n"), 4, 3)
    assert not m.mask.any()


def test_full_expert_file(tmp_path):
    rows = ["sample_id,expert_id,label"] + [f"{s},{e},{(s + e) % 2}" for s in range(5) for e in range(3)]
    m = load_expert_predictions(_write(tmp_path / "e.csv", "\n".join(rows) + "\n"), 5, 3, 2)
    assert m.mask.all()
    assert m.predictions[4, 2] == 0 and m.predictions[4, 1] == 1


def test_random_pairs_popcount_and_duplicates(tmp_path, caplog):
    r = np.random.default_rng(0)
    pairs = [(int(s), int(e)) for s, e in zip(r.integers(0, 10, 20), r.integers(0, 4, 20))]
    lines = ["sample_id,expert_id,label"] + [f"{s},{e},{i % 2}" for i, (s, e) in enumerate(pairs)]
    with caplog.at_level(logging.WARNING):
        m = load_expert_predictions(_write(tmp_path / "e.csv", "\n".join(lines) + "\n"), 10, 4, 2)
    distinct = len(set(pairs))
    assert m.mask.sum() == distinct
    assert m.duplicates == len(pairs) - distinct
    if m.duplicates:
        assert "duplicate" in caplog.text
    # last one wins
    last = {}
    for i, (s, e) in enumerate(pairs):
        last[(s, e)] = i % 2
    for (s, e), y in last.items():
        assert m.predictions[s, e] == y


def test_expert_ids_out_of_range(tmp_path):
    with pytest.raises(ValidationError):
        load_expert_predictions(_write(tmp_path / "e.csv", "sample_id,expert_id,label\n0,3,1\n"), 2, 3)
    with pytest.raises(ValidationError):
        load_expert_predictions(_write(tmp_path / "f.csv", "sample_id,expert_id,label\n5,0,1\n"), 2, 3)
    with pytest.raises(ParseError, match="line 2"):
        load_expert_predictions(_write(tmp_path / "g.csv", "sample_id,expert_id,label\n0,x,1\n"), 2, 3)


def test_expert_roundtrip_and_onehot(tmp_path):
    r = np.random.default_rng(4)
    m = ExpertPredictionMatrix(r.integers(0, 3, (6, 4)), r.random((6, 4)) < 0.5, 3)
    path = str(tmp_path / "e.csv")
    save_expert_predictions(m, path)
    back = load_expert_predictions(path, 6, 4, 3)
    np.testing.assert_array_equal(back.mask, m.mask)
    np.testing.assert_array_equal(back.predictions, m.predictions)
    oh = m.onehot()
    np.testing.assert_array_equal(oh.sum(axis=2), m.mask.astype(float))


def test_expert_matrix_invariants():
    with pytest.raises(ValidationError):
        ExpertPredictionMatrix(np.zeros((2, 2)), np.ones((2, 3), dtype=bool))
    with pytest.raises(ValidationError):
        ExpertPredictionMatrix(np.array([[0, 5]]), np.array([[True, True]]), num_classes=2)
    # unobserved junk is tolerated and zeroed
    m = ExpertPredictionMatrix(np.array([[0, 5]]), np.array([[True, False]]), num_classes=2)
    assert m.predictions[0, 1] == 0


def test_split_sizes_and_determinism():
    sp = split(1000, 0.2, seed=7)
    assert len(sp.test) == 200 and len(sp.train) == 800
    again = split(1000, 0.2, seed=7)
    np.testing.assert_array_equal(sp.test, again.test)
    np.testing.assert_array_equal(sp.train, again.train)


def test_split_small_differs_across_seeds():
    tests = {tuple(split(5, 0.2, seed=s).test) for s in range(10)}
    assert len(split(5, 0.2, 1).test) == 1
    assert len(tests) > 1


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.floats(0.01, 0.99), st.integers(0, 10**6))
def test_split_is_partition(n, frac, seed):
    sp = split(n, frac, seed)
    both = np.concatenate([sp.train, sp.test])
    np.testing.assert_array_equal(np.sort(both), np.arange(n))
    assert len(sp.test) == int(np.floor(frac * n + 0.5))


def test_split_preconditions():
    with pytest.raises(ValueError):
        split(0, 0.2, 0)
    with pytest.raises(ValueError):
        split(10, 1.0, 0)


def test_costs_nonnegative():
    with pytest.raises(ValidationError):
        ExpertCostVector([1.0, -0.5])
    np.testing.assert_array_equal(ExpertCostVector.uniform(3).costs, [1.0, 1.0, 1.0])


def test_standardizer():
    x = np.array([[1.0, 5.0], [3.0, 5.0]])
    s = Standardizer.fit(x)
    np.testing.assert_allclose(s.transform(x), [[-1.0, 0.0], [1.0, 0.0]])
