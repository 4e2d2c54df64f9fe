import json

import pytest

from s5kit import protocol
from s5kit.exceptions import ProtocolError
from s5kit.protocol import MessageType


def test_encode_single_line():
    """Messages encode to one key-sorted JSON line"""
    line = protocol.encode(protocol.tag_request("r1", "/tmp/in.wav"))
    assert line.endswith("\n") and line.count("\n") == 1
    assert json.loads(line) == {"type": "tag", "id": "r1", "audio_path": "/tmp/in.wav"}
    assert line.index('"audio_path"') < line.index('"id"') < line.index('"type"')


def test_decode_sets_message_type():
    """Decoded messages carry a MessageType member"""
    message = protocol.decode('{"type": "stem", "id": "r2", "stem_path": "/tmp/out.wav"}')
    assert message["type"] is MessageType.STEM


def test_hello():
    """The greeting lists the vocabulary and scratch directory"""
    message = protocol.hello(["Cough", "Speech"], "/tmp/scratch")
    assert message["version"] == protocol.PROTOCOL_VERSION
    assert message["vocabulary"] == ["Cough", "Speech"]
    assert protocol.decode(protocol.encode(message))["type"] is MessageType.HELLO


@pytest.mark.parametrize(
    "line",
    [
        "not json",
        "[1, 2]",
        '{"id": "r1"}',
        '{"type": "shout"}',
        '{"type": "scores", "id": "r1"}',
        '{"type": "hello-ack"}',
    ],
)
def test_decode_rejects(line):
    """Malformed, untyped, unknown or incomplete messages are protocol errors"""
    with pytest.raises(ProtocolError):
        protocol.decode(line)


def test_paths_must_be_absolute():
    """Audio travels by absolute path only"""
    with pytest.raises(ProtocolError):
        protocol.tag_request("r1", "in.wav")
    with pytest.raises(ProtocolError):
        protocol.check_absolute(None, "stem_path")
    with pytest.raises(ProtocolError):
        protocol.hello(["Cough"], "scratch")


def test_error_message_needs_no_id():
    """Error answers may omit the request id"""
    assert protocol.decode('{"type": "error", "message": "boom"}')["message"] == "boom"
