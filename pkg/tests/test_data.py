import numpy as np
import pytest

from surropte.data import Dataset, TruthBlock, arm_sizes, load_csv, write_csv
from surropte.errors import (
    DegenerateArmError,
    DimensionError,
    ParseError,
    SampleTooSmallError,
    SchemaError,
)

from conftest import make_dataset


def _arrays(n=30, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=n)
    s = rng.normal(size=n)
    a = (rng.uniform(size=n) < 0.5).astype(int)
    a[0], a[1] = 0, 1
    x = rng.normal(size=(n, 2))
    return y, s, a, x


class TestDatasetValidation:
    def test_misaligned_arrays_rejected(self):
        y, s, a, x = _arrays()
        with pytest.raises(DimensionError):
            Dataset(y=y, s=s[:-1], a=a, x=x, colnames=("x1", "x2"))

    def test_wrong_x_shape_rejected(self):
        y, s, a, x = _arrays()
        with pytest.raises(DimensionError):
            Dataset(y=y, s=s, a=a, x=x.ravel(), colnames=("x1",))

    def test_nonbinary_treatment_rejected(self):
        y, s, a, x = _arrays()
        a = a.astype(float)
        a[3] = 0.5
        with pytest.raises(ParseError):
            Dataset(y=y, s=s, a=a, x=x, colnames=("x1", "x2"))

    def test_nonfinite_rejected(self):
        y, s, a, x = _arrays()
        y = y.copy()
        y[0] = np.nan
        with pytest.raises(ParseError):
            Dataset(y=y, s=s, a=a, x=x, colnames=("x1", "x2"))

    def test_empty_arm_rejected(self):
        y, s, a, x = _arrays()
        with pytest.raises(DegenerateArmError):
            Dataset(y=y, s=s, a=np.zeros_like(a), x=x, colnames=("x1", "x2"))

    def test_colname_count_must_match(self):
        y, s, a, x = _arrays()
        with pytest.raises(SchemaError):
            Dataset(y=y, s=s, a=a, x=x, colnames=("x1",))

    def test_arrays_frozen(self):
        data = make_dataset(n=30)
        with pytest.raises(ValueError):
            data.y[0] = 99.0

    def test_estimation_size_floor(self):
        y, s, a, x = _arrays(n=10)
        data = Dataset(y=y, s=s, a=a, x=x, colnames=("x1", "x2"))
        with pytest.raises(SampleTooSmallError):
            data.require_estimation_size()

    def test_column_lookup(self):
        data = make_dataset(n=40)
        assert np.array_equal(data.column("x2"), data.x[:, 1])
        with pytest.raises(SchemaError):
            data.column("nope")

    def test_arm_sizes(self):
        data = make_dataset(n=50, seed=8)
        n0, n1 = arm_sizes(data)
        assert n0 + n1 == 50
        assert n1 == int(data.a.sum())


class TestTruthBlock:
    def test_length_consistency_enforced(self):
        z = np.zeros(5)
        with pytest.raises(DimensionError):
            TruthBlock(y0=z, y1=z, s0=z, s1=np.zeros(4))


class TestCsvRoundTrip:
    def test_round_trip(self, tmp_path):
        data = make_dataset(n=45, seed=4)
        path = tmp_path / "d.csv"
        write_csv(data, str(path))
        back = load_csv(str(path), {"y": "y", "s": "s", "a": "a", "x": ["x1", "x2"]})
        assert np.allclose(back.y, data.y)
        assert np.allclose(back.s, data.s)
        assert np.array_equal(back.a, data.a)
        assert np.allclose(back.x, data.x)

    def test_truth_columns_picked_up_automatically(self, tmp_path):
        from surropte.simulation import generate_setting1

        data = generate_setting1(60, seed=12)
        path = tmp_path / "t.csv"
        write_csv(data, str(path))
        back = load_csv(str(path), {"y": "y", "s": "s", "a": "a", "x": ["x1", "x2", "x3"]})
        assert back.truth is not None
        assert np.allclose(back.truth.y1, data.truth.y1)

    def test_missing_column_named_in_error(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("y,s,a\n1.0,2.0,1\n0.5,1.0,0\n")
        with pytest.raises(SchemaError, match="x1"):
            load_csv(str(path), {"y": "y", "s": "s", "a": "a", "x": ["x1"]})

    def test_missing_role_rejected(self, tmp_path):
        with pytest.raises(SchemaError, match="'y'"):
            load_csv(str(tmp_path / "none.csv"), {"s": "s", "a": "a", "x": ["x1"]})

    def test_unparseable_cell_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("y,s,a,x1\n1.0,2.0,1,0.1\nhuh,1.0,0,0.2\n")
        with pytest.raises(ParseError, match="row 2"):
            load_csv(str(path), {"y": "y", "s": "s", "a": "a", "x": ["x1"]})

    def test_nonbinary_treatment_cell_rejected(self, tmp_path):
        path = tmp_path / "a2.csv"
        path.write_text("y,s,a,x1\n1.0,2.0,2,0.1\n0.5,1.0,0,0.2\n")
        with pytest.raises(ParseError, match="0 or 1"):
            load_csv(str(path), {"y": "y", "s": "s", "a": "a", "x": ["x1"]})

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("")
        with pytest.raises(SchemaError, match="empty"):
            load_csv(str(path), {"y": "y", "s": "s", "a": "a", "x": ["x1"]})

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("y,s,a,x1\n1.0,2.0,1,0.1\n\n0.5,1.0,0,0.2\n")
        data = load_csv(str(path), {"y": "y", "s": "s", "a": "a", "x": ["x1"]})
        assert data.n == 2
