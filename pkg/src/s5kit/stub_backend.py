"""Conformance stub for the external backend protocol.

Run as ``python -m s5kit.stub_backend``. Tag scores are pseudo-random but
fixed for a given audio content; separation echoes the input audio back as
the stem. ``--fault`` makes the stub misbehave in one specific way so the
harness error paths can be exercised; ``slow-first`` answers request
``r1`` late, the rest on time.
"""

import argparse
import hashlib
import logging
import os
import sys
import time

import numpy as np

from . import protocol
from .audio import read_wav, write_wav
from .exceptions import S5KitError
from .models import WavFormat
from .protocol import MessageType

logger = logging.getLogger(__name__)

FAULTS = ("none", "missing-class", "bad-score", "bad-length", "error", "wrong-version", "hang", "slow-first")

# Answer delay of the "slow-first" fault, seconds
SLOW_DELAY = 2.0


def _write(message: dict):
    sys.stdout.write(protocol.encode(message))
    sys.stdout.flush()


class StubBackend:
    def __init__(self, fault: str = "none"):
        self.fault = fault
        self.vocabulary = []
        self.scratch_dir = None

    def hello(self, message: dict) -> dict:
        self.vocabulary = list(message["vocabulary"])
        self.scratch_dir = message["scratch_dir"]
        version = protocol.PROTOCOL_VERSION + 1 if self.fault == "wrong-version" else protocol.PROTOCOL_VERSION
        return {"type": MessageType.HELLO_ACK, "version": version}

    def tag(self, message: dict) -> dict:
        with open(message["audio_path"], "rb") as file:
            digest = hashlib.sha1(file.read()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        values = rng.random(len(self.vocabulary))
        scores = {label: round(float(value), 6) for label, value in zip(self.vocabulary, values)}
        if self.fault == "missing-class" and scores:
            scores.pop(self.vocabulary[-1])
        elif self.fault == "bad-score" and scores:
            scores[self.vocabulary[0]] = 1.5
        return {"type": MessageType.SCORES, "id": message["id"], "scores": scores}

    def separate(self, message: dict) -> dict:
        clip = read_wav(message["audio_path"])
        if self.fault == "bad-length":
            clip = clip.with_samples(clip.samples[:, : clip.frame_count // 2])
        stem_path = os.path.join(self.scratch_dir, f"{message['id']}.{message['label']}.stem.wav")
        write_wav(clip, stem_path, WavFormat.FLOAT32)
        return {"type": MessageType.STEM, "id": message["id"], "stem_path": stem_path}

    def handle(self, message: dict):
        """Answer one request; ``None`` means no answer is sent"""
        kind = message["type"]
        if kind is MessageType.HELLO:
            return self.hello(message)
        if self.fault == "hang":
            return None
        if self.fault == "slow-first" and message.get("id") == "r1":
            time.sleep(SLOW_DELAY)
        if self.fault == "error":
            return {"type": MessageType.ERROR, "id": message.get("id"), "message": "stub failure requested"}
        if kind is MessageType.TAG:
            return self.tag(message)
        if kind is MessageType.SEPARATE:
            return self.separate(message)
        return {"type": MessageType.ERROR, "id": message.get("id"), "message": f"unexpected '{kind.value}'"}


def serve(backend: StubBackend, stdin=None) -> int:
    for line in stdin or sys.stdin:
        if not line.strip():
            continue
        try:
            message = protocol.decode(line)
        except S5KitError as exc:
            _write({"type": MessageType.ERROR, "message": str(exc)})
            continue
        if message["type"] is MessageType.BYE:
            return 0
        try:
            answer = backend.handle(message)
        except (S5KitError, OSError) as exc:
            answer = {"type": MessageType.ERROR, "id": message.get("id"), "message": str(exc)}
        if answer is not None:
            _write(answer)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="s5kit.stub_backend", description=__doc__.splitlines()[0])
    parser.add_argument("--fault", choices=FAULTS, default="none", help="Misbehaviour to simulate")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)
    logger.debug("Stub backend started with fault=%s", args.fault)
    return serve(StubBackend(args.fault))


if __name__ == "__main__":
    sys.exit(main())
