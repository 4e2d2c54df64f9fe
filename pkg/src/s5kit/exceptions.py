"""Exception hierarchy

Every error raised on purpose by the toolkit derives from :class:`S5KitError`.
The ``exit_code`` class attribute is what the command line tool exits with
when the error reaches it:

* ``2`` - usage and configuration errors
* ``3`` - data errors (audio files, manifests, predictions)
* ``4`` - backend errors (taggers, separators, external processes)
"""

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_BACKEND = 4


class S5KitError(Exception):
    """Base class for all toolkit errors"""

    exit_code = EXIT_DATA


class ConfigError(S5KitError, ValueError):
    """Invalid parameter value or configuration"""

    exit_code = EXIT_USAGE


class AudioError(S5KitError):
    """Base class for audio buffer and file errors"""


class AudioReadError(AudioError):
    """Audio file could not be decoded"""

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class UnreadableFileError(AudioReadError):
    """File does not exist or cannot be opened"""


class UnsupportedCodecError(AudioReadError):
    """File is not a WAV file, or uses a sample format we do not read"""


class TruncatedDataError(AudioReadError):
    """Data chunk is shorter than the header claims"""


class AudioWriteError(AudioError):
    """Audio file could not be written"""


class ChannelError(AudioError, IndexError):
    """Channel index out of range"""


class AlignmentError(AudioError):
    """Clips differ in length or sample rate where they must match"""


class VocabularyError(S5KitError, KeyError):
    """Label is not part of the class vocabulary"""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class EvaluationError(S5KitError):
    """Base class for evaluation errors"""


class NothingToEvaluateError(EvaluationError):
    """Neither reference nor estimated stems were given"""


class BackendError(S5KitError):
    """Base class for tagger and separator failures"""

    exit_code = EXIT_BACKEND


class BackendSpawnError(BackendError):
    """External backend process could not be started"""


class ProtocolError(BackendError):
    """External backend broke the wire protocol"""


class BackendTimeoutError(BackendError):
    """External backend did not answer in time"""


class BackendValidationError(BackendError):
    """Backend answer violates score or stem invariants"""


class UnknownClipError(BackendError, KeyError):
    """Oracle backend was asked about a clip it has no ground truth for"""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class LabelCorrectionError(BackendError):
    """Backend failure while verifying a candidate label"""

    def __init__(self, label, cause):
        self.label = label
        self.cause = cause
        where = f"label '{label}'" if label is not None else "mixture tagging"
        super().__init__(f"{where}: {cause}")


class DatasetError(S5KitError):
    """Base class for dataset handling errors"""


class ManifestError(DatasetError):
    """Malformed manifest, record or flag file"""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class PoolError(DatasetError):
    """Source pool cannot satisfy the requested corpus"""


class MixtureError(DatasetError):
    """Mixture plan cannot be synthesized"""
