"""Exception hierarchy shared across the memory engine."""


class MemoryEngineError(Exception):
    """Base class for all engine errors."""


class ShapeError(MemoryEngineError, ValueError):
    pass


class TooShortError(MemoryEngineError, ValueError):
    pass


class DomainError(MemoryEngineError, ValueError):
    """Input is outside the mathematical domain of an operation."""


class ContractError(MemoryEngineError, ValueError):
    """A caller or adapter violated a documented precondition."""


class InvalidActionError(MemoryEngineError, ValueError):
    pass


class ConsolidationError(MemoryEngineError):
    def __init__(self, message: str, item_index: int):
        super().__init__(f"item {item_index}: {message}")
        self.item_index = item_index


class ParseError(MemoryEngineError, ValueError):
    pass


class NumericError(MemoryEngineError, ArithmeticError):
    pass


class TrainingError(MemoryEngineError):
    def __init__(self, message: str, epoch: int):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


class AdapterError(MemoryEngineError):
    """A model adapter failed; ``context`` says where in the pipeline."""

    def __init__(self, message: str, context: str = ""):
        super().__init__(f"{context}: {message}" if context else message)
        self.context = context


class TransportError(AdapterError):
    pass


class ProtocolError(AdapterError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class RetryExhaustedError(TransportError):
    def __init__(self, attempts: list[BaseException]):
        summary = "; ".join(f"{type(e).__name__}: {e}" for e in attempts)
        super().__init__(f"gave up after {len(attempts)} attempts ({summary})")
        self.attempts = attempts


class CorruptionError(MemoryEngineError):
    def __init__(self, message: str, path: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ConsistencyError(MemoryEngineError):
    pass
