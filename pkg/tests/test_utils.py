import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import pytest
import yaml

from s5kit.exceptions import ConfigError, ManifestError
from s5kit.models import LabelScores
from s5kit.utils import (
    Configuration,
    PluggableDecorator,
    S5JSONEncoder,
    atomic_write,
    merge_settings,
    read_jsonl,
    scratch_root,
    to_json_line,
    write_effective_config,
    write_jsonl,
)


def test_custom_json_encoder_enum():
    """Test enum values returned as their value"""

    class TestEnum(Enum):
        X = "x"

    assert S5JSONEncoder().default(TestEnum.X) == "x"


def test_custom_json_encoder_dataclass():
    """Test dataclasses returned as dictionaries"""

    @dataclass
    class TestDataclass:
        X: str = None

    data = TestDataclass(X="test")
    assert S5JSONEncoder().default(data) == {"X": "test"}


def test_custom_json_encoder_numpy():
    """Test numpy scalars and arrays become plain numbers and lists"""
    assert S5JSONEncoder().default(np.float32(0.5)) == 0.5
    assert isinstance(S5JSONEncoder().default(np.int64(3)), int)
    assert S5JSONEncoder().default(np.array([1, 2])) == [1, 2]


def test_custom_json_encoder_records():
    """Test objects with to_record are serialised through it"""
    scores = LabelScores.uniform(0.25)
    assert json.loads(to_json_line(scores))["Cough"] == 0.25


def test_custom_json_encoder_sets_and_paths():
    """Test sets are sorted and paths stringified"""
    assert S5JSONEncoder().default({"b", "a"}) == ["a", "b"]
    assert S5JSONEncoder().default(Path("/tmp/x")) == "/tmp/x"


def test_custom_json_encoder_other():
    """Test TypeError is raised for unhandled types"""
    with pytest.raises(TypeError):
        S5JSONEncoder().default(object())


def test_configuration_from_file(tmp_path):
    """Sections are read from YAML"""
    path = tmp_path / "s5kit.yaml"
    path.write_text("agent:\n  threshold: 0.4\n  top_k: 2\n")
    config = Configuration.from_file(str(path))
    assert config.section("agent") == {"threshold": 0.4, "top_k": 2}
    assert config.section("evaluate") == {}


def test_configuration_default_missing(tmp_path, monkeypatch):
    """A missing default file gives an empty configuration"""
    monkeypatch.setenv("HOME", str(tmp_path))
    assert Configuration.from_file() == {}


def test_configuration_errors(tmp_path):
    """Missing explicit files, bad YAML and non-mappings are config errors"""
    with pytest.raises(ConfigError):
        Configuration.from_file(str(tmp_path / "missing.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("agent: [unclosed\n")
    with pytest.raises(ConfigError):
        Configuration.from_file(str(bad))
    bad.write_text("- a\n- b\n")
    with pytest.raises(ConfigError):
        Configuration.from_file(str(bad))
    bad.write_text("agent: 3\n")
    with pytest.raises(ConfigError):
        Configuration.from_file(str(bad)).section("agent")


def test_merge_settings():
    """Later layers win, None never overrides"""
    merged = merge_settings({"a": 1, "b": 2, "c": 3}, {"b": 20, "c": None}, {"c": 30, "d": None})
    assert merged == {"a": 1, "b": 20, "c": 30}


def test_jsonl_round_trip(tmp_path):
    """Records are written one per line after an optional header"""
    path = tmp_path / "out" / "records.jsonl"
    write_jsonl(path, [{"b": 1}, {"a": np.float64(2.5)}], header={"format": "test"})
    assert list(read_jsonl(path)) == [(1, {"format": "test"}), (2, {"b": 1}), (3, {"a": 2.5})]


def test_read_jsonl_errors(tmp_path):
    """Bad lines are reported with their number"""
    path = tmp_path / "bad.jsonl"
    path.write_text('{"a": 1}\n\n[1]\n')
    with pytest.raises(ManifestError) as exc:
        list(read_jsonl(path))
    assert exc.value.line_no == 3
    with pytest.raises(ManifestError):
        list(read_jsonl(tmp_path / "missing.jsonl"))


def test_atomic_write_leaves_no_temporary_files(tmp_path):
    """Only the target file remains after a write"""
    atomic_write(tmp_path / "a.txt", "hello")
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]
    assert (tmp_path / "a.txt").read_text() == "hello"


def test_effective_config(tmp_path):
    """Effective settings are echoed as YAML"""
    path = write_effective_config(tmp_path, "agent", {"threshold": 0.5, "weights": np.array([1.0, 2.0])})
    document = yaml.safe_load(path.read_text())
    assert document["command"] == "agent"
    assert document["settings"] == {"threshold": 0.5, "weights": [1.0, 2.0]}


def test_scratch_root(monkeypatch):
    """Scratch root comes from S5KIT_SCRATCH"""
    monkeypatch.delenv("S5KIT_SCRATCH", raising=False)
    assert scratch_root() is None
    monkeypatch.setenv("S5KIT_SCRATCH", "/var/tmp")
    assert scratch_root() == "/var/tmp"


def test_pluggable_decorator():
    """Decorated methods are reported to the callback and stay callable"""
    seen = []
    decorator = PluggableDecorator.build_decorator_class(lambda owner, name: seen.append((owner.__name__, name)))

    class Command:
        @decorator
        def run(self):
            """Run it"""
            return 42

    assert seen == [("Command", "run")]
    assert Command().run() == 42
    assert Command().run.__doc__ == "Run it"
