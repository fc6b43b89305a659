"""
Tests for campaign report charts.
"""

from src.report_chart import ReportChartGenerator, generate_report_chart, location_counts


def model_dict(name: str, records):
    return {
        'name': name, 'setting': 'FE', 'simultaneous_faults': 1,
        'effective': len(records), 'total': 10,
        'effective_percent': 10.0 * len(records),
        'effective_faults': [{'index': index, 'faults': [{'location': loc, 'cell': 'X', 'mapping': 0}
                                                         for loc in locations]}
                             for index, locations in enumerate(records)],
    }


class TestLocationCounts:
    """Test per-location effective counts."""

    def test_counts_most_frequent_first(self):
        """Test locations are counted across records."""
        counts = location_counts(model_dict("m", [["U1", "U2"], ["U2"], ["U3", "U2"]]))
        assert list(counts.index) == ["U2", "U1", "U3"]
        assert counts["U2"] == 3

    def test_no_effective_faults(self):
        """Test an empty series for clean models."""
        assert location_counts(model_dict("m", [])).empty


class TestReportChartGenerator:
    """Test PNG generation."""

    def test_generate_chart(self, tmp_path):
        """Test a chart with two models is written."""
        report = {'models': [model_dict("a", [["U1"]]), model_dict("b", [])]}
        path = ReportChartGenerator().generate_report_chart(report, tmp_path / "charts" / "report.png")
        assert path is not None
        assert path.exists()
        assert path.read_bytes()[:4] == b"\x89PNG"

    def test_empty_report(self, tmp_path):
        """Test a report without models still renders."""
        assert generate_report_chart({'models': []}, tmp_path / "empty.png") is not None

    def test_failure_returns_none(self, tmp_path):
        """Test malformed reports are logged and give None."""
        assert generate_report_chart({'models': [{'name': 'broken'}]}, tmp_path / "bad.png") is None
