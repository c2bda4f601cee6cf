"""Exception hierarchy shared by all modules."""


class BdsError(Exception):
    """Base class for every error raised by bdsim."""


class NegativeEntry(BdsError, ValueError):
    def __init__(self, index, value):
        super().__init__(f"entry {index} is negative: {value!r}")
        self.index = index
        self.value = value


class SumNotOne(BdsError, ValueError):
    def __init__(self, total, deviation):
        super().__init__(f"entries sum to {total!r} (deviation {deviation:.3e})")
        self.total = total
        self.deviation = deviation


class DimensionMismatch(BdsError, ValueError):
    pass


class ShapeMismatch(BdsError, ValueError):
    pass


class EmptyInput(BdsError, ValueError):
    pass


class TooFewSamples(BdsError, ValueError):
    pass


class TooFewClients(BdsError, ValueError):
    pass


class ArchTooLarge(BdsError, ValueError):
    pass


class NonFiniteLoss(BdsError, FloatingPointError):
    def __init__(self, message, round_index=None):
        super().__init__(message if round_index is None else f"round {round_index}: {message}")
        self.round_index = round_index


class ConfigInvalid(BdsError, ValueError):
    pass


class PlanInfeasible(BdsError, ValueError):
    pass


class ParseError(BdsError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
