"""Tests for the element table and node featurization."""

import numpy as np
import pandas as pd
import pytest

from lesets.elemtable import (
    CONTINUOUS_FIELDS,
    DEFAULT_TABLE_PATH,
    TABLE_COLUMNS,
    ElementDescriptor,
    ElementTable,
    UnknownElementError,
    default_table_path,
    featurize_element,
    load_table,
)

HEADER = ",".join(TABLE_COLUMNS)


def _write_table(tmp_path, rows: list[str], name: str = "elements.csv"):
    path = tmp_path / name
    path.write_text("\n".join([HEADER, *rows]) + "\n", encoding="utf-8")
    return path


THREE_ROWS = [
    "Al,3,13,1.0,1.0,1.0,5.0,0.1,10.0",
    "Fe,4,8,2.0,1.5,2.0,7.0,0.2,7.0",
    "W,6,6,3.0,2.0,2.5,8.0,0.9,9.5",
]


class TestLoadTable:
    """Tests for load_table()."""

    def test_shipped_fe_row(self, table):
        fe = table.get("Fe")
        assert (fe.symbol, fe.period, fe.group) == ("Fe", 4, 8)
        expected = [55.845, 1.32, 1.83, 7.902, 0.151, 7.09]
        assert fe.continuous.tolist() == pytest.approx(expected, rel=1e-12)

    def test_schema_dimensions(self, table):
        assert table.schema.period_onehot_width == 5
        assert table.schema.group_onehot_width == 18
        assert table.schema.continuous_count == 6
        assert table.schema.total_dim == 29

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(ValueError, match="empty table"):
            load_table(path)

    def test_header_only(self, tmp_path):
        with pytest.raises(ValueError, match="empty table"):
            load_table(_write_table(tmp_path, []))

    def test_duplicate_symbol(self, tmp_path):
        rows = [*THREE_ROWS, "Fe,4,8,2.5,1.5,2.0,7.0,0.2,7.0"]
        with pytest.raises(ValueError, match="duplicate symbol Fe"):
            load_table(_write_table(tmp_path, rows))

    def test_period_out_of_range(self, tmp_path):
        rows = [*THREE_ROWS, "H,1,1,1.008,0.31,2.2,13.6,0.75,14.1"]
        with pytest.raises(ValueError, match="period"):
            load_table(_write_table(tmp_path, rows))

    def test_group_out_of_range(self, tmp_path):
        rows = [*THREE_ROWS, "Xx,4,19,10.0,1.0,1.0,5.0,0.1,5.0"]
        with pytest.raises(ValueError, match="group"):
            load_table(_write_table(tmp_path, rows))

    def test_non_finite_value(self, tmp_path):
        rows = [*THREE_ROWS, "Ni,4,10,58.693,1.24,,7.640,1.156,6.59"]
        with pytest.raises(ValueError, match="non-finite electronegativity"):
            load_table(_write_table(tmp_path, rows))

    def test_non_positive_mass(self, tmp_path):
        rows = [*THREE_ROWS, "Ni,4,10,0.0,1.24,1.91,7.640,1.156,6.59"]
        with pytest.raises(ValueError, match="atomic_mass"):
            load_table(_write_table(tmp_path, rows))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_table(tmp_path / "nope.csv")

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("symbol,period,group\nFe,4,8\n", encoding="utf-8")
        with pytest.raises(ValueError, match="missing columns"):
            load_table(path)

    def test_env_override(self, tmp_path, monkeypatch):
        path = _write_table(tmp_path, THREE_ROWS, "custom.csv")
        monkeypatch.setenv("LESETS_ELEMENT_TABLE", str(path))
        assert default_table_path() == path
        assert load_table().symbols == ["Al", "Fe", "W"]

    def test_default_path_without_override(self):
        assert default_table_path() == DEFAULT_TABLE_PATH


class TestFeaturizeElement:
    """Tests for featurize_element()."""

    def test_period_three_onehot(self, table):
        vector = featurize_element("Al", table)
        assert vector[:5].tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]

    def test_group_onehot(self, table):
        vector = featurize_element("Fe", table)
        group = vector[5:23]
        assert group[8 - 1] == 1.0
        assert group.sum() == 1.0

    def test_onehot_blocks_have_single_one(self, table):
        for symbol in table.symbols:
            vector = featurize_element(symbol, table)
            for block in (vector[:5], vector[5:23]):
                assert np.count_nonzero(block == 1.0) == 1
                assert np.count_nonzero(block) == 1

    def test_fe_matches_direct_zscore(self, table):
        frame = pd.read_csv(DEFAULT_TABLE_PATH)
        fe = frame[frame["symbol"] == "Fe"].iloc[0]
        expected = [
            (fe[c] - frame[c].mean()) / frame[c].std(ddof=0) for c in CONTINUOUS_FIELDS
        ]
        np.testing.assert_allclose(featurize_element("Fe", table)[23:], expected, rtol=0, atol=1e-12)

    def test_mass_at_mean_scores_zero(self, tmp_path):
        small = load_table(_write_table(tmp_path, THREE_ROWS))
        assert featurize_element("Fe", small)[23] == pytest.approx(0.0, abs=1e-15)

    def test_zscores_are_standardized_over_table(self, table):
        block = np.stack([featurize_element(s, table)[23:] for s in table.symbols])
        np.testing.assert_allclose(block.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(block.std(axis=0), 1.0, atol=1e-10)

    def test_pure_function(self, table):
        a = featurize_element("Co", table)
        b = featurize_element("Co", table)
        assert a.tobytes() == b.tobytes()

    def test_unknown_symbol(self, table):
        with pytest.raises(UnknownElementError, match="Xx"):
            featurize_element("Xx", table)

    def test_unknown_symbol_is_key_error(self, table):
        with pytest.raises(KeyError):
            table.get("Qq")


def test_table_without_spread_is_rejected():
    element = ElementDescriptor("Fe", 4, 8, 55.845, 1.32, 1.83, 7.902, 0.151, 7.09)
    with pytest.raises(ValueError, match="without spread"):
        ElementTable([element])


def test_schema_hash_tracks_contents(tmp_path, table):
    small = load_table(_write_table(tmp_path, THREE_ROWS))
    again = load_table(_write_table(tmp_path, THREE_ROWS, "copy.csv"))
    assert small.schema_hash == again.schema_hash
    assert small.schema_hash != table.schema_hash
