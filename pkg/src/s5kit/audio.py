"""WAV file I/O and basic signal utilities"""

import logging
import os
import struct
from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf

from .exceptions import AudioWriteError, TruncatedDataError, UnreadableFileError, UnsupportedCodecError
from .models import AudioClip, ClipOrigin, WavFormat
from .utils import atomic_path

logger = logging.getLogger(__name__)

READABLE_SUBTYPES = ("PCM_16", "PCM_24", "FLOAT")
WAV_CONTAINERS = ("WAV", "WAVEX")

_PCM_SCALE = {
    WavFormat.PCM16: (2**15, np.int16, "PCM_16", 1),
    # libsndfile reads int32 buffers as full-scale 32-bit, so 24-bit codes are shifted up
    WavFormat.PCM24: (2**23, np.int32, "PCM_24", 2**8),
}


def _check_riff_layout(path: str):
    """Walk the RIFF chunk list and make sure the data chunk is complete.

    libsndfile silently shortens truncated files, so this is checked
    before decoding.
    """
    file_size = os.path.getsize(path)
    with open(path, "rb") as file:
        magic = file.read(12)
        if len(magic) < 12 or magic[:4] != b"RIFF" or magic[8:12] != b"WAVE":
            raise UnsupportedCodecError(path, "not a RIFF/WAVE file")
        offset = 12
        while offset + 8 <= file_size:
            file.seek(offset)
            chunk_id, chunk_size = struct.unpack("<4sI", file.read(8))
            if chunk_id == b"data":
                if offset + 8 + chunk_size > file_size:
                    raise TruncatedDataError(
                        path, f"data chunk declares {chunk_size} bytes, only {file_size - offset - 8} present"
                    )
                return
            offset += 8 + chunk_size + (chunk_size & 1)
    raise TruncatedDataError(path, "no data chunk")


def read_wav(path: Union[str, Path], clip_id: str = None) -> AudioClip:
    """Read a WAV file.

    Integer PCM is scaled to ``[-1, 1)``, so a 16-bit ``-32768`` reads as ``-1.0``.

    :param path: WAV file path
    :param clip_id: Optional clip ID recorded as the clip origin
    :return: Clip with the sample rate from the file header
    :raises UnreadableFileError: the file is missing or cannot be opened
    :raises UnsupportedCodecError: not a WAV file, or not 16/24-bit PCM or 32-bit float
    :raises TruncatedDataError: the data chunk is shorter than declared
    """
    path = str(path)
    try:
        with open(path, "rb"):
            pass
    except OSError as exc:
        raise UnreadableFileError(path, exc.strerror or str(exc)) from None
    _check_riff_layout(path)
    try:
        info = sf.info(path)
    except RuntimeError as exc:
        raise UnsupportedCodecError(path, str(exc)) from None
    if info.format not in WAV_CONTAINERS or info.subtype not in READABLE_SUBTYPES:
        raise UnsupportedCodecError(path, f"unsupported sample format {info.format}/{info.subtype}")
    try:
        data, sample_rate = sf.read(path, dtype="float32", always_2d=True)
    except RuntimeError as exc:
        raise UnsupportedCodecError(path, str(exc)) from None
    logger.debug("Read %s: %d frames, %d channel(s) at %d Hz", path, data.shape[0], data.shape[1], sample_rate)
    origin = ClipOrigin(clip_id) if clip_id is not None else None
    return AudioClip(data.T, sample_rate, origin)


def write_wav(clip: AudioClip, path: Union[str, Path], format: WavFormat = WavFormat.FLOAT32):
    """Write a clip as a WAV file, atomically.

    ``float32`` is lossless; integer formats round to the nearest code and
    clip at full scale, so a round trip is within one quantisation step.

    :raises AudioWriteError: if the file cannot be written
    """
    format = WavFormat(format)
    frames = clip.samples.T
    if format is WavFormat.FLOAT32:
        data, subtype = np.ascontiguousarray(frames, dtype=np.float32), "FLOAT"
    else:
        scale, dtype, subtype, shift = _PCM_SCALE[format]
        codes = np.clip(np.round(frames.astype(np.float64) * scale), -scale, scale - 1)
        data = np.ascontiguousarray(codes.astype(dtype) * dtype(shift))
    try:
        with atomic_path(path, suffix=".wav") as tmp:
            sf.write(tmp, data, clip.sample_rate, subtype=subtype, format="WAV")
    except (OSError, RuntimeError) as exc:
        raise AudioWriteError(f"Cannot write {path}: {exc}") from None
    logger.debug("Wrote %s (%s, %d frames)", path, format.value, clip.frame_count)


def rms(clip: AudioClip, channel: int = 0) -> float:
    """Root mean square amplitude of one channel, 0 for an empty clip

    :raises ChannelError: if ``channel`` is out of range
    """
    x = clip.channel(channel)
    if x.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(x * x)))


def active_rms(clip: AudioClip, channel: int = 0) -> float:
    """RMS between the first and the last non-zero sample"""
    x = clip.channel(channel)
    active = np.flatnonzero(x)
    if active.size == 0:
        return 0.0
    span = x[active[0] : active[-1] + 1]
    return float(np.sqrt(np.mean(span * span)))
