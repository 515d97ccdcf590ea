"""Exception types shared across the package."""


class SilkStageError(Exception):
    pass


class InvalidParameterError(SilkStageError, ValueError):
    pass


class NumericDivergenceError(SilkStageError, ArithmeticError):
    def __init__(self, node: int, message: str = ""):
        self.node = node
        text = f"non-finite force at node {node}" if node >= 0 else "numeric divergence"
        super().__init__(f"{text}: {message}" if message else text)


class InvalidPrimitiveError(SilkStageError, ValueError):
    pass


class OutOfOrderError(SilkStageError, ValueError):
    pass


class InvalidWindowError(SilkStageError, ValueError):
    pass


class AttributionError(SilkStageError):
    pass


class InvalidPolicyError(SilkStageError, ValueError):
    pass


class TrainingFailedError(SilkStageError):
    def __init__(self, generation: int, message: str = "all candidate evaluations diverged"):
        self.generation = generation
        super().__init__(f"generation {generation}: {message}")


class ConfigError(SilkStageError, ValueError):
    pass


class TraceFormatError(SilkStageError, ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class IncompatibleTraceError(SilkStageError, ValueError):
    pass


class InconsistentTraceError(SilkStageError, ValueError):
    def __init__(self, report):
        self.report = report
        super().__init__(f"trace failed replay with {len(report.mismatches)} mismatches")
