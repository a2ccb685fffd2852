import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ivrobust.data import Dataset, ModelSpec, build_design, load_csv
from ivrobust.errors import DataError, RankDeficiencyError


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_e1(tmp_path):
    ds = load_csv(write(tmp_path, "Y,D,Z\n1,0,0\n1,0,0\n3,1,1\n3,1,1\n"))
    assert ds.n == 4
    assert ds.column_names == ("Y", "D", "Z")
    assert ds.dropped_count == 0


def test_na_row_dropped(tmp_path):
    rows = [f"{i},{i % 2},{i % 3}" for i in range(10)]
    rows[4] = "4,NA,1"
    ds = load_csv(write(tmp_path, "Y,D,Z\n" + "\n".join(rows) + "\n"))
    assert ds.n == 9
    assert ds.dropped_count == 1
    assert 4.0 not in ds["Y"]


def test_custom_delimiter_and_na(tmp_path):
    ds = load_csv(write(tmp_path, "a;b\n1;.\n2;3\n"), delimiter=";", na_token=".")
    assert ds.n == 1 and ds.dropped_count == 1


def test_empty_body(tmp_path):
    with pytest.raises(DataError, match="zero observations"):
        load_csv(write(tmp_path, "Y,D,Z\n"))


def test_all_rows_missing(tmp_path):
    with pytest.raises(DataError, match="zero observations"):
        load_csv(write(tmp_path, "Y,D\nNA,1\n2,NA\n"))


def test_ragged(tmp_path):
    with pytest.raises(DataError, match="expected 3 fields"):
        load_csv(write(tmp_path, "Y,D,Z\n1,2\n"))


def test_non_numeric(tmp_path):
    with pytest.raises(DataError, match="non-numeric"):
        load_csv(write(tmp_path, "Y,D\n1,abc\n"))


def test_unreadable(tmp_path):
    missing = tmp_path / "nope.csv"
    with pytest.raises(DataError, match="nope.csv"):
        load_csv(missing)


def test_layout_e1(e1):
    assert e1.X.shape == (4, 2) and e1.Z.shape == (4, 2)
    np.testing.assert_array_equal(e1.X, [[1, 0], [1, 0], [1, 1], [1, 1]])
    np.testing.assert_array_equal(e1.Z, [[1, 0], [1, 0], [1, 1], [1, 1]])
    assert e1.x_names == ("const", "D") and e1.z_names == ("const", "Z")


def test_layout_e2(e2):
    assert e2.X.shape == (6, 2) and e2.Z.shape == (6, 3)
    assert e2.z_names == ("const", "Z1", "Z2")
    np.testing.assert_array_equal(e2.Z[:, 0], 1)
    assert (e2.l, e2.p, e2.q, e2.k) == (1, 1, 2, 2)


def test_instrument_equal_to_constant():
    ds = Dataset.from_arrays(Y=[1, 2, 3, 4], D=[0, 1, 0, 1], Z=[1, 1, 1, 1])
    with pytest.raises(RankDeficiencyError, match="Z"):
        build_design(ds, ModelSpec("Y", ["D"], ["Z"]))


def test_rank_error_names_column():
    ds = Dataset.from_arrays(Y=[1, 2, 3, 4, 5], D=[0, 1, 0, 1, 1], Z1=[0, 1, 1, 0, 1], Z2=[0, 2, 2, 0, 2])
    with pytest.raises(RankDeficiencyError, match="Z2"):
        build_design(ds, ModelSpec("Y", ["D"], ["Z1", "Z2"]))


def test_duplicate_label(e2_data):
    with pytest.raises(DataError, match="more than one role"):
        build_design(e2_data, ModelSpec("Y", ["D"], ["Z1", "D"]))


def test_too_few_instruments(e2_data):
    with pytest.raises(DataError, match="at least as many instruments"):
        build_design(e2_data, ModelSpec("Y", ["D", "Z1"], ["Z2"]))


def test_unknown_column(e2_data):
    with pytest.raises(DataError, match="not found"):
        build_design(e2_data, ModelSpec("Y", ["D"], ["Z9"]))


def test_constant_suppressed(e2_data):
    d = build_design(e2_data, ModelSpec("Y", ["D"], ["Z2"], covariates=["Z1"], constant=False))
    assert d.x_names == ("Z1", "D")


def test_cluster_codes():
    ds = Dataset.from_arrays(Y=[1, 2, 3, 4], D=[0, 1, 0, 1], Z=[0, 1, 0, 1], g=[10, 30, 10, 20])
    d = build_design(ds, ModelSpec("Y", ["D"], ["Z"], cluster="g"))
    np.testing.assert_array_equal(d.cluster_ids, [0, 2, 0, 1])
    assert d.n_clusters == 3


def test_round_trip_bit_identical(e2_data):
    spec = ModelSpec("Y", ["D"], ["Z1", "Z2"])
    a, b = build_design(e2_data, spec), build_design(e2_data, spec)
    assert a.X.tobytes() == b.X.tobytes() and a.Z.tobytes() == b.Z.tobytes()


def test_column_order_does_not_matter(tmp_path):
    rows = [(2, 1, 1, 0), (0, 0, 1, 0), (4, 1, 0, 1), (0, 0, 0, 1), (1, 0, 0, 0)]
    a = write(tmp_path, "Y,D,Z1,Z2\n" + "\n".join(",".join(map(str, r)) for r in rows), "a.csv")
    b = write(tmp_path, "Z2,D,Y,Z1\n" + "\n".join(f"{r[3]},{r[1]},{r[0]},{r[2]}" for r in rows), "b.csv")
    spec = ModelSpec("Y", ["D"], ["Z1", "Z2"])
    da, db = build_design(load_csv(a), spec), build_design(load_csv(b), spec)
    np.testing.assert_array_equal(da.X, db.X)
    np.testing.assert_array_equal(da.Z, db.Z)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.booleans()), min_size=1, max_size=30))
def test_listwise_deletion_accounting(tmp_path_factory, cells):
    tmp = tmp_path_factory.mktemp("lw")
    lines = ["a,b"] + [f"{v},{'NA' if miss else v}" for v, miss in cells]
    path = write(tmp, "\n".join(lines) + "\n")
    n_in = len(cells)
    if all(m for _, m in cells):
        with pytest.raises(DataError):
            load_csv(path)
        return
    ds = load_csv(path)
    assert ds.n + ds.dropped_count == n_in
