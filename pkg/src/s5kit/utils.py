"""Various utility classes and functions
"""

import contextlib
import dataclasses
import enum
import functools
import json
import logging
import os
import tempfile
import uuid
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, Mapping, Optional, Tuple, Union

import arrow
import numpy as np
import yaml

from . import __version__
from .exceptions import ConfigError, ManifestError

logger = logging.getLogger(__name__)


class S5JSONEncoder(json.JSONEncoder):
    """Custom JSON encoder:

    * objects with a ``to_record()`` method are serialised through it
    * :class:`enum.Enum` objects are serialised as their ``value``
    * :mod:`dataclasses` objects are turned in to dictionaries
    * numpy scalars and arrays become plain numbers and lists
    * sets become sorted lists, paths become strings
    """

    def default(self, o: Any) -> Any:
        if hasattr(o, "to_record"):
            return o.to_record()
        elif isinstance(o, enum.Enum):
            return o.value
        elif dataclasses.is_dataclass(o) and not isinstance(o, type):
            return dataclasses.asdict(o)
        elif isinstance(o, np.integer):
            return int(o)
        elif isinstance(o, np.floating):
            return float(o)
        elif isinstance(o, np.ndarray):
            return o.tolist()
        elif isinstance(o, (set, frozenset)):
            return sorted(o)
        elif isinstance(o, Path):
            return str(o)
        else:
            return json.JSONEncoder.default(self, o)


def to_json_line(record: Any) -> str:
    """Single line, key-sorted JSON so equal records give equal bytes"""
    return json.dumps(record, sort_keys=True, cls=S5JSONEncoder)


def method_labeler(owner: type, name: str, label: str):
    """Callback for :class:`PluggableDecorator`: append the decorated method
    name to a list stored on the owner class under ``label``.

    The list is created on the owner itself, so subclasses never share
    their parent's list.
    """
    if label not in owner.__dict__:
        setattr(owner, label, [])
    getattr(owner, label).append(name)


class PluggableDecorator:
    """Method decorator that reports every decorated method to a callback.

    Build a concrete decorator with :meth:`build_decorator_class`::

        cli_command = PluggableDecorator.build_decorator_class(
            set_name_callback=functools.partial(method_labeler, label="_cli_command")
        )

        class FeaturesCommand:
            @cli_command
            def run(self, parser):
                ...

    When ``FeaturesCommand`` is created the callback receives
    ``(FeaturesCommand, "run")``, which the CLI uses to discover actions.
    Attribute access on an instance returns the plain bound function.
    """

    _set_name_callback: Callable[[type, str], None] = None

    def __init__(self, fn):
        self.fn = fn
        functools.update_wrapper(self, fn)

    def __set_name__(self, owner: type, name: str):
        self._set_name_callback(owner, name)

    def __get__(self, instance, owner):
        if instance is None:
            return self
        bound = functools.partial(self.fn, instance)
        bound.__doc__ = self.fn.__doc__
        return bound

    def __call__(self, *args, **kwargs):
        return self.fn(*args, **kwargs)

    @classmethod
    def build_decorator_class(cls, set_name_callback: Callable[[type, str], None]) -> type:
        """Create a new decorator class bound to ``set_name_callback``"""
        cls_name = f"{cls.__name__}-{uuid.uuid4().hex[:5]}"
        return type(cls_name, (cls,), {"_set_name_callback": staticmethod(set_name_callback)})


class Configuration(dict):
    """Manage configuration

    Top level keys are section names (``features``, ``evaluate``,
    ``agent``, ``dataset``), each holding a mapping of settings.
    """

    DEFAULT_PATH = "~/.s5kit.yaml"

    def __init__(self):
        super().__init__()

    @classmethod
    def from_file(cls, path: str = None) -> "Configuration":
        """Read configuration file and return initialised object.

        If the default file does not exist, return an empty configuration.
        A file given explicitly must exist.

        :param path: Path to a YAML configuration file. Default: ``~/.s5kit.yaml``
        :type path: str
        :return: Instance of :class:`utils.Configuration` initialised from the file
        :rtype: :class:`Configuration`
        :raises ConfigError: if the file is not valid YAML, is not a mapping, or an
            explicitly given file is missing
        """
        explicit = path is not None
        path = os.path.expanduser(path or cls.DEFAULT_PATH)
        try:
            with open(path, "r") as file:
                config = yaml.safe_load(file) or {}
        except FileNotFoundError:
            if explicit:
                raise ConfigError(f"Configuration file not found: {path}") from None
            config = {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"Cannot parse configuration file {path}: {exc}") from None
        if not isinstance(config, dict):
            raise ConfigError(f"Configuration file {path} must contain a mapping")
        obj = cls()
        for key, value in config.items():
            obj[key] = value
        return obj

    def section(self, name: str) -> Dict[str, Any]:
        """Settings of one section, empty if absent"""
        value = self.get(name) or {}
        if not isinstance(value, dict):
            raise ConfigError(f"Configuration section '{name}' must be a mapping")
        return dict(value)


def merge_settings(defaults: Mapping[str, Any], *layers: Mapping[str, Any]) -> Dict[str, Any]:
    """Overlay setting layers on top of defaults, lowest precedence first.

    ``None`` values in a layer mean "not set" and never override.
    """
    merged = dict(defaults)
    for layer in layers:
        merged.update({k: v for k, v in layer.items() if v is not None})
    return merged


@contextlib.contextmanager
def atomic_path(path: Union[str, Path], suffix: str = None) -> Iterator[str]:
    """Yield a temporary path next to ``path``; move it in place on success.

    Interrupted writes leave no partial file at ``path``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=suffix or path.suffix, dir=path.parent)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def atomic_write(path: Union[str, Path], text: str):
    """Write text to ``path`` atomically"""
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as file:
            file.write(text)


def write_jsonl(path: Union[str, Path], records: Iterable[Any], header: Mapping[str, Any] = None):
    """Write one JSON record per line, optionally preceded by a header record"""
    lines = []
    if header is not None:
        lines.append(to_json_line(header))
    lines.extend(to_json_line(r) for r in records)
    atomic_write(path, "".join(line + "\n" for line in lines))


def read_jsonl(path: Union[str, Path]) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield ``(line_number, record)`` for every non-blank line

    :raises ManifestError: on unreadable files or lines that are not JSON objects
    """
    try:
        file = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ManifestError(path, 0, f"cannot open: {exc.strerror}") from None
    with file:
        for line_no, line in enumerate(file, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(path, line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise ManifestError(path, line_no, "expected a JSON object")
            yield line_no, record


def write_effective_config(out_dir: Union[str, Path], command: str, settings: Mapping[str, Any]) -> Path:
    """Echo the settings a run actually used in to its output directory"""
    document = {
        "tool": "s5kit",
        "version": __version__,
        "command": command,
        "created": arrow.utcnow().isoformat(),
        "settings": json.loads(json.dumps(dict(settings), cls=S5JSONEncoder)),
    }
    path = Path(out_dir) / "effective_config.yaml"
    atomic_write(path, yaml.safe_dump(document, sort_keys=True))
    logger.debug("Effective configuration written to %s", path)
    return path


def scratch_root() -> Optional[str]:
    """Parent directory for scratch space, from ``S5KIT_SCRATCH``"""
    return os.environ.get("S5KIT_SCRATCH") or None
