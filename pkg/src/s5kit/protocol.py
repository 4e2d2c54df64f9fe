"""Wire protocol spoken with external tagger/separator processes.

Messages are single-line JSON objects exchanged over the child's standard
input and output, strictly alternating request and response::

    -> {"type": "hello", "version": 1, "vocabulary": [...], "scratch_dir": "/abs/dir"}
    <- {"type": "hello-ack", "version": 1}
    -> {"type": "tag", "id": "r1", "audio_path": "/abs/in.wav"}
    <- {"type": "scores", "id": "r1", "scores": {"AlarmClock": 0.1, ...}}
    -> {"type": "separate", "id": "r2", "audio_path": "/abs/in.wav", "label": "Cough"}
    <- {"type": "stem", "id": "r2", "stem_path": "/abs/out.wav"}
    <- {"type": "error", "id": "r2", "message": "..."}
    -> {"type": "bye"}

Audio travels by absolute file path inside the scratch directory announced
in ``hello``. Anything a backend writes to standard error is passed through.
"""

import json
import os
from enum import unique
from typing import Any, Dict, Iterable

from .exceptions import ProtocolError
from .models import DocEnum
from .utils import to_json_line

PROTOCOL_VERSION = 1


@unique
class MessageType(DocEnum):
    """Message types of the backend protocol"""

    HELLO = "hello", "Harness greeting: protocol version, vocabulary and scratch directory"
    HELLO_ACK = "hello-ack", "Backend greeting answer carrying its protocol version"
    TAG = "tag", "Request class scores for an audio file"
    SCORES = "scores", "Class scores answer"
    SEPARATE = "separate", "Request the stem of one class from an audio file"
    STEM = "stem", "Path of the separated stem"
    ERROR = "error", "Request failed on the backend side"
    BYE = "bye", "Harness is shutting the backend down"


REQUIRED_FIELDS = {
    MessageType.HELLO: ("version", "vocabulary", "scratch_dir"),
    MessageType.HELLO_ACK: ("version",),
    MessageType.TAG: ("id", "audio_path"),
    MessageType.SCORES: ("id", "scores"),
    MessageType.SEPARATE: ("id", "audio_path", "label"),
    MessageType.STEM: ("id", "stem_path"),
    MessageType.ERROR: ("message",),
    MessageType.BYE: (),
}


def encode(message: Dict[str, Any]) -> str:
    """Serialise a message to one protocol line, newline included"""
    return to_json_line(message) + "\n"


def decode(line: str) -> Dict[str, Any]:
    """Parse and check one protocol line

    :raises ProtocolError: if the line is not a known, complete message
    """
    try:
        message = json.loads(line)
    except json.JSONDecodeError:
        raise ProtocolError(f"Malformed protocol line: {line.strip()[:200]!r}") from None
    if not isinstance(message, dict) or "type" not in message:
        raise ProtocolError(f"Protocol message without a type: {line.strip()[:200]!r}")
    try:
        kind = MessageType(message["type"])
    except ValueError:
        raise ProtocolError(f"Unknown protocol message type: {message['type']!r}") from None
    missing = [name for name in REQUIRED_FIELDS[kind] if name not in message]
    if missing:
        raise ProtocolError(f"'{kind.value}' message lacks field(s): {', '.join(missing)}")
    message["type"] = kind
    return message


def check_absolute(path: str, what: str) -> str:
    if not isinstance(path, str) or not os.path.isabs(path):
        raise ProtocolError(f"{what} must be an absolute path, got {path!r}")
    return path


def hello(vocabulary: Iterable[str], scratch_dir: str, version: int = PROTOCOL_VERSION) -> Dict[str, Any]:
    return {
        "type": MessageType.HELLO,
        "version": version,
        "vocabulary": list(vocabulary),
        "scratch_dir": check_absolute(scratch_dir, "scratch_dir"),
    }


def tag_request(request_id: str, audio_path: str) -> Dict[str, Any]:
    return {"type": MessageType.TAG, "id": request_id, "audio_path": check_absolute(audio_path, "audio_path")}


def separate_request(request_id: str, audio_path: str, label: str) -> Dict[str, Any]:
    return {
        "type": MessageType.SEPARATE,
        "id": request_id,
        "audio_path": check_absolute(audio_path, "audio_path"),
        "label": label,
    }
