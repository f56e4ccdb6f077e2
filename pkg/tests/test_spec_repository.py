"""Spec document parsing, validation and overrides."""

import textwrap

import pytest
import yaml
from pydantic import ValidationError as PydanticValidationError

from core.config import Settings, get_settings
from core.exceptions import ValidationError
from core.models import AUTO_STAGE, OutputFormat, ZeroStage, estimate_param_count
from repositories.spec_repository import (
    SpecRepository,
    load_spec,
    parse_spec,
    serialize_spec,
    with_overrides,
)

NEGATIVE_MEMORY = textwrap.dedent("""\
    cluster:
      link_bandwidth: 16000000000.0
      devices:
        - total_mem: -1
          act_mem_per_batch: 1
          compute_fixed: 0.01
          compute_per_batch: 0.01
    model:
      param_count: 1000
      hidden_size: 8
      num_layers: 1
    gbs: 4
""")


@pytest.fixture
def repository():
    return SpecRepository()


class TestParse:

    def test_defaults_and_count_expansion(self, repository, spec_document):
        """Test: count expands devices with suffixed names and sequential ids."""
        # Act
        spec = repository.from_dict(spec_document)

        # Assert
        assert [d.name for d in spec.cluster.devices] == ["fast-0", "fast-1", "slow-0", "slow-1"]
        assert [d.id for d in spec.cluster.devices] == [0, 1, 2, 3]
        assert spec.cluster.link_bandwidths == (1.6e10,) * 4
        assert spec.stage == AUTO_STAGE
        assert spec.iterations == 3
        assert spec.seed == 0
        assert spec.output_format is OutputFormat.OBJ

    def test_negative_memory_names_field_and_line(self):
        """Test: the error points at the offending field and its line."""
        with pytest.raises(ValidationError) as exc_info:
            parse_spec(NEGATIVE_MEMORY)

        error = exc_info.value
        assert error.field == "cluster.devices[0].total_mem"
        assert error.line == 4
        assert "cluster.devices[0].total_mem" in error.message
        assert error.exit_code == 1

    def test_unknown_field(self, repository, spec_document):
        """Test: unknown keys are rejected by name."""
        spec_document["model"]["bogus"] = 1
        with pytest.raises(ValidationError) as exc_info:
            repository.from_dict(spec_document)
        assert exc_info.value.field == "model.bogus"

    def test_invalid_stage(self, repository, spec_document):
        """Test: stages outside 0-3 and auto are rejected."""
        spec_document["stage"] = 5
        with pytest.raises(ValidationError) as exc_info:
            repository.from_dict(spec_document)
        assert exc_info.value.field == "stage"

    def test_explicit_stage(self, repository, spec_document):
        """Test: numeric stages parse to ZeroStage."""
        spec_document["stage"] = 2
        assert repository.from_dict(spec_document).stage == ZeroStage.STAGE_2

    def test_param_count_estimated(self, repository, spec_document):
        """Test: a missing parameter count is derived from the model shape."""
        del spec_document["model"]["param_count"]
        spec = repository.from_dict(spec_document)
        assert spec.model.param_count == estimate_param_count(1024, 8)

    def test_bandwidth_list_length(self, repository, spec_document):
        """Test: a bandwidth list must cover every expanded device."""
        spec_document["cluster"]["link_bandwidths"] = [1e10, 1e10]
        with pytest.raises(ValidationError) as exc_info:
            repository.from_dict(spec_document)
        assert exc_info.value.field == "cluster.link_bandwidths"

    def test_missing_bandwidth(self, repository, spec_document):
        """Test: every device needs some link bandwidth."""
        del spec_document["cluster"]["link_bandwidth"]
        with pytest.raises(ValidationError, match="link bandwidth"):
            repository.from_dict(spec_document)

    def test_malformed_document(self):
        """Test: YAML syntax errors become validation errors."""
        with pytest.raises(ValidationError) as exc_info:
            parse_spec("cluster: [\n")
        assert exc_info.value.field == "document"

    def test_non_mapping_document(self):
        """Test: the document must be a mapping."""
        with pytest.raises(ValidationError, match="mapping"):
            parse_spec("- 1\n- 2\n")

    def test_missing_file(self, tmp_path):
        """Test: unreadable files are reported against the spec path."""
        with pytest.raises(ValidationError) as exc_info:
            load_spec(tmp_path / "missing.yaml")
        assert exc_info.value.field == "spec"


class TestSettingsDefaults:
    """Run defaults for documents that omit iterations or seed."""

    def test_missing_values_come_from_settings(self, spec_document):
        """Test: omitted iterations and seed take the configured defaults."""
        # Arrange
        del spec_document["iterations"]
        repository = SpecRepository(Settings(default_iterations=7, default_seed=11))

        # Act
        spec = repository.from_dict(spec_document)

        # Assert
        assert spec.iterations == 7
        assert spec.seed == 11
        assert spec.cluster.seed == 11

    def test_document_values_win(self, spec_document):
        """Test: values in the document override the configured defaults."""
        spec_document["seed"] = 2
        repository = SpecRepository(Settings(default_iterations=7, default_seed=11))

        spec = repository.from_dict(spec_document)

        assert spec.iterations == 3
        assert spec.seed == 2

    def test_environment_default(self, monkeypatch, spec_document, tmp_path):
        """Test: PLANNER_DEFAULT_ITERATIONS reaches load_spec."""
        del spec_document["iterations"]
        path = tmp_path / "cluster.yaml"
        path.write_text(yaml.safe_dump(spec_document), encoding="utf-8")
        monkeypatch.setenv("PLANNER_DEFAULT_ITERATIONS", "9")
        get_settings.cache_clear()
        try:
            spec = load_spec(path)
        finally:
            get_settings.cache_clear()

        assert spec.iterations == 9

    def test_invalid_default_rejected(self):
        """Test: the configured default iterations must be positive."""
        with pytest.raises(PydanticValidationError):
            Settings(default_iterations=0)


class TestRoundTrip:

    def test_serialize_parses_back(self, repository, spec_document):
        """Test: the serialized form parses to an equal spec."""
        spec = repository.from_dict(spec_document)
        assert parse_spec(serialize_spec(spec)) == spec

    def test_save_and_load(self, repository, spec_document, tmp_path):
        """Test: save writes a file load reads back."""
        spec = repository.from_dict(spec_document)
        path = tmp_path / "spec.yaml"
        repository.save(spec, path)
        assert repository.load(path) == spec


class TestOverrides:

    def test_overrides_apply(self, repository, spec_document):
        """Test: overrides replace fields; the seed also reseeds the cluster."""
        spec = repository.from_dict(spec_document)

        updated = with_overrides(spec, gbs=64, stage="3", iterations=7, seed=9, output_format="table")

        assert updated.gbs == 64
        assert updated.stage == ZeroStage.STAGE_3
        assert updated.iterations == 7
        assert updated.seed == 9
        assert updated.cluster.seed == 9
        assert updated.output_format is OutputFormat.TABLE

    def test_no_overrides_returns_same_spec(self, repository, spec_document):
        """Test: nothing to change returns the input."""
        spec = repository.from_dict(spec_document)
        assert with_overrides(spec) is spec

    @pytest.mark.parametrize("kwargs,field", [
        ({"gbs": 0}, "gbs"),
        ({"iterations": 0}, "iterations"),
        ({"seed": -1}, "seed"),
        ({"stage": "7"}, "stage"),
    ])
    def test_invalid_overrides(self, repository, spec_document, kwargs, field):
        """Test: out-of-range overrides name the field."""
        spec = repository.from_dict(spec_document)
        with pytest.raises(ValidationError) as exc_info:
            with_overrides(spec, **kwargs)
        assert exc_info.value.field == field
