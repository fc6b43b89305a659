"""
Tests for liberty and JSON cell library parsing.
"""

import json

import pytest

from src.cell_library import (
    CellDefinition, CellLibrary, DuplicateCell, InvalidCell, LibraryError, MalformedLiberty,
    MissingPin, NoFunctionForPin, evaluate_cell, is_nand2, load_library, parse_library_json,
    parse_liberty
)
from src.boolexpr import parse_bool_expr


SMALL_LIBERTY = """
library (tiny) {
  /* comment with { braces } */
  cell (NAND2_X2) {
    area : 1.5 ;
    pin (A1) { direction : input ; }
    pin (A2) { direction : input ; }
    pin (ZN) { direction : output ; function : "!(A1 & A2)" ; }
  }
  cell (AOI21_X2) {
    area : 2.0 ;
    pin (A1) { direction : input ; }
    pin (B1) { direction : input ; }
    pin (B2) { direction : input ; }
    pin (ZN) { direction : output ; \\
      function : "!(A1 & (B1 | B2))" ; }
  }
  cell (TAP) {
    area : 0.1 ;
  }
}
"""


class TestParseLiberty:
    """Test the liberty subset frontend."""

    def test_parse_small_library(self):
        """Test cells, pins, functions and areas are extracted."""
        library = parse_liberty(SMALL_LIBERTY)

        assert library.name == "tiny"
        assert set(library.cells) == {"NAND2_X2", "AOI21_X2"}
        aoi = library["AOI21_X2"]
        assert aoi.input_pins == ["A1", "B1", "B2"]
        assert aoi.output_pins == ["ZN"]
        assert aoi.area == 2.0
        assert aoi.evaluate("ZN", {'A1': 1, 'B1': 0, 'B2': 0}) == 1

    def test_cells_without_function_skipped(self):
        """Test physical-only cells are not part of the library."""
        assert "TAP" not in parse_liberty(SMALL_LIBERTY)

    def test_unbalanced_braces(self):
        """Test a missing closing brace is reported with a line."""
        with pytest.raises(MalformedLiberty) as excinfo:
            parse_liberty("library (x) {\n  cell (A) {\n")
        assert excinfo.value.line >= 1

    def test_bad_function_string(self):
        """Test an unparsable function string is malformed liberty."""
        text = """library (x) { cell (B) {
            pin (A) { direction : input ; }
            pin (Z) { direction : output ; function : "A &" ; } } }"""
        with pytest.raises(MalformedLiberty):
            parse_liberty(text)

    def test_non_numeric_area(self):
        """Test an area that is not a number names the cell."""
        text = """library (x) {
  cell (INV) { area : big ;
            pin (A) { direction : input ; }
            pin (ZN) { direction : output ; function : "!A" ; } } }"""
        with pytest.raises(MalformedLiberty) as excinfo:
            parse_liberty(text)
        assert "INV" in excinfo.value.reason
        assert excinfo.value.line == 2

    def test_duplicate_cell(self):
        """Test a cell defined twice is rejected."""
        cell = """cell (INV) { pin (A) { direction : input ; }
                  pin (ZN) { direction : output ; function : "!A" ; } }"""
        with pytest.raises(DuplicateCell):
            parse_liberty(f"library (x) {{ {cell} {cell} }}")

    def test_sequential_cell(self, demo_library):
        """Test the DFF data pin, clock pin and inverted output are recognized."""
        dff = demo_library["DFF_X1"]
        assert dff.is_sequential
        assert dff.data_pin == "D"
        assert dff.clock_pin == "CK"
        assert dff.inverted_outputs == ["QN"]

    def test_sequential_override(self):
        """Test a register without ff group can be declared sequential."""
        text = """library (x) { cell (REG) {
            pin (D) { direction : input ; }
            pin (CK) { direction : input ; clock : true ; }
            pin (Q) { direction : output ; } } }"""
        library = parse_liberty(text, sequential_overrides={'REG': 'D'})
        assert library["REG"].is_sequential
        assert library["REG"].data_pin == "D"

    def test_override_inversion_ignores_pin_names(self):
        """Test an output named like an inverted pin is not inverting without evidence."""
        text = """library (x) { cell (REG) {
            pin (D) { direction : input ; }
            pin (CK) { direction : input ; clock : true ; }
            pin (Q) { direction : output ; }
            pin (QN) { direction : output ; }
            pin (SCAN_EN) { direction : output ; } } }"""
        library = parse_liberty(text, sequential_overrides={'REG': 'D'})
        assert library["REG"].inverted_outputs == []

    def test_override_inversion_from_state_function(self):
        """Test an IQN function marks the inverting output of an override register."""
        text = """library (x) { cell (REG) {
            pin (D) { direction : input ; }
            pin (CK) { direction : input ; clock : true ; }
            pin (Q) { direction : output ; function : "IQ" ; }
            pin (XB) { direction : output ; function : "IQN" ; }
            pin (XC) { direction : output ; function : "!IQ" ; } } }"""
        library = parse_liberty(text, sequential_overrides={'REG': 'D'})
        assert library["REG"].inverted_outputs == ["XB", "XC"]

    def test_configured_inverted_outputs(self):
        """Test inverting outputs given in the configuration."""
        text = """library (x) { cell (REG) {
            pin (D) { direction : input ; }
            pin (CK) { direction : input ; clock : true ; }
            pin (Q) { direction : output ; }
            pin (QB) { direction : output ; } } }"""
        library = parse_liberty(text, sequential_overrides={'REG': 'D'}, inverted_outputs={'REG': ['QB']})
        assert library["REG"].inverted_outputs == ["QB"]

    def test_configured_inverted_output_must_exist(self):
        """Test a configured inverting output that the cell lacks is rejected."""
        text = """library (x) { cell (REG) {
            pin (D) { direction : input ; }
            pin (Q) { direction : output ; } } }"""
        with pytest.raises(InvalidCell):
            parse_liberty(text, sequential_overrides={'REG': 'D'}, inverted_outputs={'REG': ['QN']})

    def test_data_pin_override(self):
        """Test a scan flop whose next state is an expression takes the configured data pin."""
        text = """library (x) { cell (SDFF) {
            ff (IQ, IQN) { next_state : "(SE & SI) | (!SE & D)" ; clocked_on : "CK" ; }
            pin (D) { direction : input ; }
            pin (SI) { direction : input ; }
            pin (SE) { direction : input ; }
            pin (CK) { direction : input ; clock : true ; }
            pin (Q) { direction : output ; function : "IQ" ; } } }"""
        assert parse_liberty(text)["SDFF"].data_pin is None
        assert parse_liberty(text, data_pins={'SDFF': 'D'})["SDFF"].data_pin == "D"

    def test_demo_library(self, demo_library):
        """Test the bundled library loads every logical cell."""
        assert len(demo_library) == 10
        assert demo_library.name == "demo_cells"
        assert demo_library.nand2_area == pytest.approx(0.798)


class TestJsonLibrary:
    """Test the JSON cell library format."""

    def test_parse_json_entry(self):
        """Test the documented entry shape."""
        text = json.dumps({"AOI21_X2": {"input_pins": ["A1", "B1", "B2"], "output_pins": "ZN",
                                        "boolean_function": "ZN = !(A1 & (B1 | B2))"}})
        cell = parse_library_json(text)["AOI21_X2"]
        assert cell.output_pins == ["ZN"]
        assert cell.evaluate("ZN", {'A1': 1, 'B1': 1, 'B2': 0}) == 0

    def test_wrapper_and_function_map(self):
        """Test the Cell Library wrapper and a per-pin function map."""
        text = json.dumps({"Cell Library": {"HA": {
            "input_pins": ["A", "B"], "output_pins": ["S", "C"],
            "boolean_function": {"S": "A ^ B", "C": "A & B"}}}})
        cell = parse_library_json(text)["HA"]
        assert cell.evaluate("S", {'A': 1, 'B': 1}) == 0
        assert cell.evaluate("C", {'A': 1, 'B': 1}) == 1

    def test_invalid_json(self):
        """Test malformed JSON raises a library error."""
        with pytest.raises(LibraryError):
            parse_library_json("{not json")

    def test_to_dict_round_trip(self, demo_library):
        """Test a library survives conversion to JSON and back."""
        restored = parse_library_json(json.dumps(demo_library.to_dict()))
        assert restored["AOI21_X1"].functions == demo_library["AOI21_X1"].functions
        assert restored["DFF_X1"].data_pin == "D"

    def test_load_library_missing_file(self, tmp_path):
        """Test a missing file raises a library error."""
        with pytest.raises(LibraryError):
            load_library(tmp_path / "missing.lib")


class TestCellDefinition:
    """Test cell invariants and evaluation."""

    def test_undeclared_pin_in_function(self):
        """Test a function over an undeclared pin is invalid."""
        with pytest.raises(InvalidCell):
            CellDefinition("BAD", ["A"], ["Z"], {"Z": parse_bool_expr("A & B")})

    def test_missing_function(self):
        """Test combinational cells need a function per output."""
        with pytest.raises(InvalidCell):
            CellDefinition("BAD", ["A"], ["Z"])

    def test_evaluate_cell_missing_pin(self, demo_library):
        """Test an incomplete assignment is rejected."""
        with pytest.raises(MissingPin):
            evaluate_cell(demo_library["NAND2_X1"], "ZN", {'A1': 1})

    def test_no_function_for_pin(self, demo_library):
        """Test evaluating a sequential output has no function."""
        with pytest.raises(NoFunctionForPin):
            demo_library["DFF_X1"].evaluate("Q", {'D': 1, 'CK': 0})

    def test_is_nand2(self, demo_library):
        """Test NAND detection by truth table."""
        assert is_nand2(demo_library["NAND2_X1"])
        assert not is_nand2(demo_library["NOR2_X1"])

    def test_nand2_area_fallback(self, demo_library):
        """Test libraries without a NAND2 fall back to the smallest area."""
        library = CellLibrary([demo_library["INV_X1"], demo_library["AND2_X1"]])
        assert library.nand2_area == pytest.approx(0.532)
