"""Tests for the report models."""

import pytest
from pydantic import TypeAdapter, ValidationError

from snap_prep.utils.models import ComplexValue, FidelityReport, GateParameters

complex_adapter = TypeAdapter(ComplexValue)


class TestComplexValue:
    """Test parsing and dumping of complex numbers."""

    @pytest.mark.parametrize(
        ("raw", "expected"),
        [(1.5, 1.5 + 0j), ([0.2, -0.4], 0.2 - 0.4j), ("1.5j", 1.5j), ("1 + 2i", 1 + 2j)],
    )
    def test_parse(self, raw, expected):
        """Test the accepted input forms."""
        assert complex_adapter.validate_python(raw) == pytest.approx(expected)

    def test_rejects_triple(self):
        """Test that a list must be a pair."""
        with pytest.raises(ValidationError):
            complex_adapter.validate_python([1.0, 2.0, 3.0])

    def test_dump_as_pair(self):
        """Test the [re, im] serialization."""
        assert complex_adapter.dump_python(0.5 - 1.0j) == [0.5, -1.0]


class TestReports:
    """Test report models."""

    def test_gate_parameters_json(self):
        """Test the serialized displacement list."""
        report = GateParameters(target="fock2", alphas=[1.39, -0.494j], thetas=[[0.1]])
        dumped = report.model_dump(mode="json")
        assert dumped["alphas"] == [[1.39, 0.0], [0.0, -0.494]]
        assert dumped["schema_version"] == "1.0"

    def test_extra_fields_forbidden(self):
        """Test that reports reject unknown fields."""
        with pytest.raises(ValidationError):
            GateParameters(target="fock2", alphas=[], thetas=[], comment="x")

    def test_serialization_schema(self):
        """Test that complex fields appear as arrays in the written schema."""
        schema = GateParameters.model_json_schema(mode="serialization")
        assert schema["properties"]["alphas"]["items"]["type"] == "array"
        assert "schema_version" in FidelityReport.model_json_schema(mode="serialization")["properties"]
