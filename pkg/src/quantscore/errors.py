"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented process exit status without a lookup table.
"""


class QuantScoreError(Exception):
    exit_code = 1


class DomainError(QuantScoreError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(QuantScoreError, ValueError):
    exit_code = 1


class ShapeError(QuantScoreError, ValueError):
    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)
        self.layer = layer


class IdxFormatError(QuantScoreError):
    exit_code = 2

    def __init__(self, path, message, expected=None, actual=None):
        detail = message
        if expected is not None or actual is not None:
            detail = f"{message} (expected {expected}, got {actual})"
        super().__init__(f"{path}: {detail}")
        self.path = str(path)
        self.expected = expected
        self.actual = actual


class WeightFormatError(QuantScoreError):
    exit_code = 2

    def __init__(self, message, expected=None, actual=None):
        if expected is not None or actual is not None:
            message = f"{message} (expected {expected}, got {actual})"
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class TrainingError(QuantScoreError):
    def __init__(self, message, epoch):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


class ProtocolError(QuantScoreError):
    """The latency harness could not honour its timing discipline."""


class EvaluationError(QuantScoreError):
    def __init__(self, genome, cause):
        label = "-".join(str(b) for b in genome)
        super().__init__(f"evaluating genome {label} failed: {cause}")
        self.genome = tuple(genome)


class SearchSpaceTooLarge(DomainError):
    pass


class IntegrityError(QuantScoreError):
    exit_code = 3
