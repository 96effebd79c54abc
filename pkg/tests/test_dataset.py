import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svmap.dataset import (
    DataError,
    Dataset,
    binarize,
    kfold_split,
    load,
    minmax_scale,
    parse_csv,
    parse_sparse,
    serialize_sparse,
    stratified_partition,
    stratified_subsample,
)
from svmap.solver import TrainConfig, TrainingError, train_svm

from _fixtures import LETTER, PENDIGITS, raw_label_count, raw_line_count


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def labelled(y, dim=2, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.standard_normal((len(y), dim)), y)


# ------------------------------------------------------------------ parsing


def test_sparse_line(tmp_path):
    d = parse_sparse(write(tmp_path, "a.txt", "+1 1:0.5 3:-2.0\n"))
    assert d.n == 1 and d.dim == 3
    s = next(iter(d))
    assert s.label == 1
    np.testing.assert_array_equal(s.features, [0.5, 0.0, -2.0])


def test_sparse_comments_and_dimension_over_file(tmp_path):
    text = "# header\n-1 2:1.5  # trailing\n\n+1 1:1 5:2\n"
    d = parse_sparse(write(tmp_path, "a.txt", text))
    assert d.dim == 5
    np.testing.assert_array_equal(d.X[0], [0, 1.5, 0, 0, 0])
    assert list(d.labels) == [-1, 1]


def test_empty_sparse_file_then_training_fails(tmp_path):
    d = parse_sparse(write(tmp_path, "empty.txt", ""))
    assert d.n == 0
    with pytest.raises(TrainingError):
        train_svm(d, TrainConfig())


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("+1 1:0.5\n+1 3:1 2:2\n", "line 2"),
        ("+1 1:0.5\n-1 abc\n", "line 2"),
        ("+1 1:x\n", "line 1"),
        ("+1 0:1\n", "line 1"),
        ("+1 2:1 2:3\n", "ascending"),
        ("99999999999999999999 1:1\n", "integer range"),
        ("1.5 1:1\n", "not an integer"),
    ],
)
def test_sparse_errors(tmp_path, text, fragment):
    with pytest.raises(DataError, match=fragment):
        parse_sparse(write(tmp_path, "bad.txt", text))


def test_sparse_multiclass_labels_kept_raw(tmp_path):
    d = parse_sparse(write(tmp_path, "m.txt", "3 1:1\n7 1:2\n3 1:0\n"))
    assert d.labels is None
    assert list(binarize(d, 3).labels) == [1, -1, 1]


def test_csv_raw_label_kept(tmp_path):
    d = parse_csv(write(tmp_path, "r.csv", "2,4,4,5,8,T\n1,1,1,1,1,A\n"))
    assert d.raw_labels == ("T", "A")
    assert d.dim == 5
    np.testing.assert_array_equal(d.X[0], [2, 4, 4, 5, 8])


def test_csv_label_column_first(tmp_path):
    d = parse_csv(write(tmp_path, "r.csv", "T,1,2\nA,3,4\n"), label_column=0)
    assert d.raw_labels == ("T", "A")
    np.testing.assert_array_equal(d.X, [[1, 2], [3, 4]])


def test_csv_bad_cell_names_row_and_column(tmp_path):
    p = write(tmp_path, "bad.csv", "1,2,A\n3,oops,B\n5,6,A\n")
    with pytest.raises(DataError, match=r"row 2, column 2"):
        parse_csv(p)


def test_csv_ragged(tmp_path):
    with pytest.raises(DataError, match="row 2"):
        parse_csv(write(tmp_path, "bad.csv", "1,2,A\n3,B\n"))


def test_binarize_definition():
    d = Dataset(np.zeros((3, 1)), None, raw_labels=["A", "B", "A"])
    b = binarize(d, "A")
    assert list(b.labels) == [1, -1, 1]
    assert b.class_counts == {1: 2, -1: 1}


def test_binarize_absent_label():
    d = Dataset(np.zeros((3, 1)), None, raw_labels=["A", "B", "A"])
    with pytest.raises(DataError, match="Z"):
        binarize(d, "Z")


def test_letter_file_counts():
    # Expected values are counted straight from the raw file, not via the parser.
    d = load(LETTER, "csv", -1, "A")
    assert d.n == raw_line_count(LETTER) == 20000
    assert d.dim == 16
    assert d.class_counts[1] == raw_label_count(LETTER, "A")


def test_pendigits_dim():
    d = parse_csv(PENDIGITS)
    assert d.dim == 16
    assert d.n == raw_line_count(PENDIGITS)


def test_letter_sparse_conversion_keeps_line_count(tmp_path):
    d = load(LETTER, "csv", -1, "A")
    out = tmp_path / "letter.svm"
    serialize_sparse(d, out)
    assert parse_sparse(out).n == raw_line_count(LETTER)


# --------------------------------------------------------------- round trip


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 12).flatmap(
        lambda dim: st.lists(
            st.tuples(
                st.sampled_from([-1, 1]),
                st.lists(
                    st.one_of(st.just(0.0), st.floats(-1e6, 1e6, allow_nan=False)),
                    min_size=dim,
                    max_size=dim,
                ),
            ),
            min_size=0,
            max_size=8,
        ).map(lambda rows: (dim, rows))
    )
)
def test_sparse_round_trip(tmp_path_factory, case):
    dim, rows = case
    X = np.array([r for _, r in rows]).reshape(len(rows), dim)
    d = Dataset(X, [y for y, _ in rows])
    path = tmp_path_factory.mktemp("rt") / "d.svm"
    serialize_sparse(d, path)
    back = parse_sparse(path)
    if d.n:
        assert back.dim == d.dim
        np.testing.assert_array_equal(back.X, d.X)
        np.testing.assert_array_equal(back.labels, d.labels)
    else:
        assert back.n == 0


def test_minmax_scale_range():
    d = Dataset([[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]], [1, -1, 1])
    s = minmax_scale(d)
    np.testing.assert_array_equal(s.X[:, 0], [0.0, 1.0, 0.5])
    np.testing.assert_array_equal(s.X[:, 1], [0.0, 0.0, 0.0])


# ------------------------------------------------------------- partitioning


def check_partition(d, ps):
    ids = [set(int(i) for i in p.ids) for p in ps.partitions]
    union = set().union(*ids)
    assert union == set(int(i) for i in d.ids)
    assert sum(len(s) for s in ids) == d.n
    sizes = [p.n for p in ps.partitions]
    assert max(sizes) - min(sizes) <= 1
    for cls in (1, -1):
        per = [p.class_counts[cls] for p in ps.partitions]
        assert max(per) - min(per) <= 1


def test_partition_balanced_ten():
    d = labelled([1] * 5 + [-1] * 5)
    for seed in range(5):
        ps = stratified_partition(d, 2, seed)
        assert ps.L == 2
        assert [p.n for p in ps.partitions] == [5, 5]
        assert sorted((p.class_counts[1], p.class_counts[-1]) for p in ps.partitions) == [(2, 3), (3, 2)]
        check_partition(d, ps)


def test_partition_identity():
    d = labelled([1, -1, 1, 1, -1])
    ps = stratified_partition(d, 1, 3)
    assert set(ps.partitions[0].ids) == set(d.ids)


def test_partition_letter_sizes():
    d = load(LETTER, "csv", -1, "A")
    ps = stratified_partition(d, 10, 7)
    assert all(abs(p.n - d.n / 10) <= 1 for p in ps.partitions)
    check_partition(d, ps)


@pytest.mark.parametrize("L", [0, 6])
def test_partition_errors(L):
    with pytest.raises(DataError):
        stratified_partition(labelled([1, -1, 1, -1, 1]), L, 0)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=60),
    st.integers(1, 12),
    st.integers(0, 2**31),
)
def test_partition_invariants(y, L, seed):
    d = labelled(y)
    if L > d.n:
        return
    ps = stratified_partition(d, L, seed)
    check_partition(d, ps)
    again = stratified_partition(d, L, seed)
    for a, b in zip(ps.partitions, again.partitions):
        assert a == b


def test_partition_serialized_determinism(tmp_path):
    d = labelled([1] * 13 + [-1] * 20, dim=3, seed=4)
    blobs = []
    for run in range(2):
        ps = stratified_partition(d, 4, 11)
        for l, p in enumerate(ps.partitions):
            serialize_sparse(p, tmp_path / f"{run}_{l}.svm")
        blobs.append([(tmp_path / f"{run}_{l}.svm").read_bytes() for l in range(4)])
    assert blobs[0] == blobs[1]


def test_kfold_leave_one_out():
    d = labelled([1] * 5 + [-1] * 5)
    folds = kfold_split(d, 10, 0)
    assert len(folds) == 10
    assert all(test.n == 1 and train.n == 9 for train, test in folds)


def test_kfold_cover_and_sizes():
    d = labelled([1] * 37 + [-1] * 66)
    folds = kfold_split(d, 10, 5)
    test_ids = [int(i) for _, test in folds for i in test.ids]
    assert sorted(test_ids) == list(range(d.n))
    for train, test in folds:
        assert abs(train.n - 0.9 * d.n) <= 1
        assert set(train.ids).isdisjoint(set(test.ids))
        assert train.n + test.n == d.n


@pytest.mark.parametrize("k", [1, 11])
def test_kfold_errors(k):
    with pytest.raises(DataError):
        kfold_split(labelled([1, -1] * 5), k, 0)


def test_subsample_proportional():
    d = labelled([1] * 100 + [-1] * 300)
    s = stratified_subsample(d, 40, 1)
    assert s.n == 40 and s.class_counts == {1: 10, -1: 30}
    assert list(s.ids) == sorted(s.ids)
