"""CSV ingestion and strict JSON configuration."""

import json

import numpy as np
import pytest

from propfit.config import load_config, load_schema, parse_config
from propfit.exceptions import ConfigError
from propfit.io import read_input_table, write_input_table


CSV = "curve,x,y\n1,0.0,1.0\n1,1.0,2.0\n1,2.0,3.0\n2,0.5,1.5\n"


class TestReadTable:
    def test_basic_two_curves(self):
        table = read_input_table(CSV)
        assert table.labels == ("1", "2")
        d1 = table.curves["1"]
        np.testing.assert_array_equal(d1.x, [0.0, 1.0, 2.0])
        np.testing.assert_array_equal(d1.y, [1.0, 2.0, 3.0])

    def test_curve_column_optional(self):
        table = read_input_table("x,y\n1,2\n3,4\n")
        assert table.labels == ("1",)

    def test_duplicate_x_rows_kept(self):
        table = read_input_table("x,y\n1,2\n1,3\n")
        assert table.single().n == 2

    def test_crlf_accepted(self):
        table = read_input_table("x,y\r\n1,2\r\n3,4\r\n")
        assert table.single().n == 2

    @pytest.mark.parametrize("text", [
        "",                           # no header
        "a,b\n1,2\n",                # wrong columns
        "x,y,z\n1,2,3\n",            # extra column
        "x,y\n1,abc\n",              # non-numeric
        "x,y\n1,inf\n",              # non-finite
        "x,y\n1\n",                  # ragged row
        "curve,x,y\n,1,2\n",         # empty label
    ])
    def test_strict_rejection(self, text):
        with pytest.raises(ConfigError):
            read_input_table(text)

    def test_round_trip_identity(self, tmp_path):
        table = read_input_table(CSV)
        path = tmp_path / "t.csv"
        write_input_table(table, path)
        again = read_input_table(str(path))
        assert again.labels == table.labels
        for label in table.labels:
            np.testing.assert_array_equal(again.curves[label].x, table.curves[label].x)
            np.testing.assert_array_equal(again.curves[label].y, table.curves[label].y)
        # serialize(parse(serialize(...))) is byte-stable too
        assert write_input_table(again) == write_input_table(table)


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({})
        assert cfg.model == "saturating_exponential"
        assert cfg.methods == ("ml", "ql", "wls", "dwls")
        assert cfg.fit_options.max_iter == 100

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError, match="invalid config"):
            parse_config({"modle": "constant"})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"fit": {"tol": 1e-8}})

    def test_bad_method_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"methods": ["ols"]})

    def test_sigma_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"sim": {"theta0": [1.0], "x1": [0, 1], "sigma": [0.9],
                                  "replicates": 5}})

    def test_two_curve_design_built(self):
        cfg = parse_config({
            "model": "partial_bleach",
            "sim": {"theta0": [142853.0, 123.182, 393.065, 95717.8, 192.547, 756.62],
                    "x1": [0, 100, 200, 400, 600, 800, 1000],
                    "x2": [0, 100, 200, 400, 600, 800, 1000],
                    "sigma": [0.01], "replicates": 3, "seed": 1},
        })
        design = cfg.build_design()
        assert design.two_curve
        assert design.target_names[-1] == "gamma"

    def test_theta0_length_checked(self):
        cfg = parse_config({"model": "constant",
                            "sim": {"theta0": [1.0, 2.0], "x1": [0, 1, 2],
                                    "sigma": [0.01], "replicates": 2}})
        with pytest.raises(ConfigError, match="theta0"):
            cfg.build_design()

    def test_x2_only_for_two_curves(self):
        cfg = parse_config({"model": "constant",
                            "sim": {"theta0": [1.0], "x1": [0, 1, 2], "x2": [0, 1],
                                    "sigma": [0.01], "replicates": 2}})
        with pytest.raises(ConfigError, match="x2"):
            cfg.build_design()

    def test_load_config_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"model": "constant", "methods": ["ql"]}))
        cfg = load_config(path)
        assert cfg.methods == ("ql",)

    def test_invalid_json_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_schemas_load(self):
        for name in ("config", "fit_report", "sim_report"):
            schema = load_schema(name)
            assert schema["type"] == "object"