import json

import numpy as np
import pytest

from cpmarket import model
from cpmarket.errors import NetworkParseError, NetworkValidationError
from cpmarket.model import (BayesNet, Cpd, DiscreteVariable, config_index,
                            parse_network, serialize_network, validate_network)


def net_text(variables, cpds) -> str:
    return json.dumps({"variables": variables, "cpds": cpds})


def simple_net_text(**overrides) -> str:
    doc = {
        "variables": [
            {"name": "A", "states": ["a0", "a1"]},
            {"name": "B", "states": ["b0", "b1"]},
        ],
        "cpds": [
            {"child": "A", "parents": [], "table": [[0.4, 0.6]]},
            {"child": "B", "parents": ["A"], "table": [[0.1, 0.9], [0.7, 0.3]]},
        ],
    }
    doc.update(overrides)
    return json.dumps(doc)


class TestParsing:
    def test_native_round_trip_is_canonical(self, bn_def):
        text = serialize_network(bn_def)
        again = serialize_network(parse_network(text))
        assert text == again

    def test_bif_round_trip_through_native(self):
        net = model.load_builtin("alarm")
        text = serialize_network(net)
        assert parse_network(text) == net

    def test_parse_reports_position_on_bad_json(self):
        with pytest.raises(NetworkParseError) as err:
            parse_network('{"variables": [,]}')
        assert err.value.line == 1

    def test_empty_text_rejected(self):
        with pytest.raises(NetworkParseError):
            parse_network("")

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            parse_network(simple_net_text(), format="xdsl")

    def test_bif_bad_syntax_reports_line(self):
        text = "network x {\n}\nvariable A {\n  type discrete [ 2 ] { a0, a1 };\n}\nprobability (A) {\n  table 0.5;\n}\n"
        with pytest.raises((NetworkParseError, NetworkValidationError)):
            parse_network(text, format="bif")

    def test_ragged_table_rejected(self):
        text = simple_net_text(cpds=[
            {"child": "A", "parents": [], "table": [[0.4, 0.6]]},
            {"child": "B", "parents": ["A"], "table": [[0.1, 0.9], [0.7]]},
        ])
        with pytest.raises(NetworkParseError):
            parse_network(text)


class TestValidation:
    def check(self, **overrides):
        with pytest.raises(NetworkValidationError):
            parse_network(simple_net_text(**overrides))

    def test_duplicate_variable(self):
        self.check(variables=[
            {"name": "A", "states": ["a0", "a1"]},
            {"name": "A", "states": ["x", "y"]},
            {"name": "B", "states": ["b0", "b1"]},
        ])

    def test_single_state_variable(self):
        self.check(variables=[
            {"name": "A", "states": ["a0"]},
            {"name": "B", "states": ["b0", "b1"]},
        ], cpds=[
            {"child": "A", "parents": [], "table": [[1.0]]},
            {"child": "B", "parents": ["A"], "table": [[0.1, 0.9]]},
        ])

    def test_row_sum_violation(self):
        self.check(cpds=[
            {"child": "A", "parents": [], "table": [[0.4, 0.5]]},
            {"child": "B", "parents": ["A"], "table": [[0.1, 0.9], [0.7, 0.3]]},
        ])

    def test_zero_entry_rejected(self):
        self.check(cpds=[
            {"child": "A", "parents": [], "table": [[0.0, 1.0]]},
            {"child": "B", "parents": ["A"], "table": [[0.1, 0.9], [0.7, 0.3]]},
        ])

    def test_missing_cpd(self):
        self.check(cpds=[{"child": "A", "parents": [], "table": [[0.4, 0.6]]}])

    def test_unknown_parent(self):
        self.check(cpds=[
            {"child": "A", "parents": [], "table": [[0.4, 0.6]]},
            {"child": "B", "parents": ["Z"], "table": [[0.1, 0.9], [0.7, 0.3]]},
        ])

    def test_wrong_shape(self):
        self.check(cpds=[
            {"child": "A", "parents": [], "table": [[0.4, 0.6]]},
            {"child": "B", "parents": ["A"], "table": [[0.1, 0.9]]},
        ])

    def test_cycle_detected(self):
        self.check(cpds=[
            {"child": "A", "parents": ["B"], "table": [[0.4, 0.6], [0.2, 0.8]]},
            {"child": "B", "parents": ["A"], "table": [[0.1, 0.9], [0.7, 0.3]]},
        ])

    def test_validate_ok_report(self, bn_def):
        report = validate_network(bn_def)
        assert report.ok and report.violations == []


class TestBuiltins:
    def test_names(self):
        assert set(model.builtin_names()) == {"bn-def", "alarm"}

    def test_bn_def_exact_tables(self, bn_def):
        assert list(bn_def.names) == ["D", "E", "F"]
        d, e, f = bn_def.cpds
        assert np.array_equal(d.table, [[0.5, 0.5]])
        assert np.array_equal(e.table, [[0.9, 0.1], [0.4, 0.6]])
        assert np.array_equal(f.table, [[0.3, 0.7], [0.1, 0.9]])

    def test_alarm_shape(self):
        net = model.load_builtin("alarm")
        assert len(net.variables) == 37
        arcs = sum(len(c.parents) for c in net.cpds)
        assert arcs == 46
        for cpd in net.cpds:
            assert np.all(cpd.table > 0)
            assert np.allclose(cpd.table.sum(axis=1), 1.0, atol=1e-9)

    def test_unknown_builtin(self):
        with pytest.raises(KeyError):
            model.load_builtin("nope")


class TestIndexing:
    def test_last_variable_fastest(self):
        cards = (2, 3, 2)
        seen = [config_index(cards, (i, j, k))
                for i in range(2) for j in range(3) for k in range(2)]
        assert seen == list(range(12))

    def test_cpd_row_order_matches_config_index(self):
        # row for parent config (i, j) with cards (2, 3) must be i*3 + j
        assert config_index((2, 3), (1, 2)) == 5


def test_file_loader_guesses_bif(tmp_path):
    src = model.load_builtin("bn-def")
    p = tmp_path / "net.json"
    p.write_text(serialize_network(src))
    assert model.load_network_file(str(p)) == src
