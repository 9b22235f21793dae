"""
Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to:
0 success, 1 internal error, 2 bad input or configuration.
"""

from typing import Optional

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_BAD_INPUT = 2


class BackdoorCertError(Exception):
    """Base class for all errors raised by backdoor_cert"""

    exit_code = EXIT_INTERNAL


class DomainError(BackdoorCertError, ValueError):
    """An argument lies outside the domain of the operation"""

    exit_code = EXIT_BAD_INPUT


class DimensionError(DomainError):
    """Lengths or shapes of the operands do not agree"""


class SymbolDomainError(DomainError):
    """Domain sizes disagree or a symbol is out of range"""


class FormatError(BackdoorCertError):
    """A binary container (IDX file, ensemble file) is malformed"""

    exit_code = EXIT_BAD_INPUT

    def __init__(self, message: str, path: Optional[str] = None, offset: Optional[int] = None):
        self.path = path
        self.offset = offset
        details = []
        if path is not None:
            details.append(f"path={path}")
        if offset is not None:
            details.append(f"offset={offset}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class DataError(BackdoorCertError):
    """Input data is missing or insufficient for the request"""

    exit_code = EXIT_BAD_INPUT


class ConfigurationError(BackdoorCertError):
    """The run configuration cannot be honoured"""

    exit_code = EXIT_BAD_INPUT


class FingerprintMismatchError(ConfigurationError):
    """The ensemble was trained on a different dataset or hyperparameters"""


class TrainingDivergedError(BackdoorCertError):
    """Training produced a non-finite loss"""

    exit_code = EXIT_INTERNAL

    def __init__(self, epoch: int, classifier_index: Optional[int] = None):
        self.epoch = epoch
        self.classifier_index = classifier_index
        message = f"Training diverged at epoch {epoch}"
        if classifier_index is not None:
            message = f"Classifier {classifier_index}: {message.lower()}"
        super().__init__(message)
