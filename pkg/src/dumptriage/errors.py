"""Exception types shared across the pipeline."""


class TriageError(Exception):
    """Base class for every error raised by this package."""


class ParseError(TriageError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")


class ValidationError(TriageError):
    def __init__(self, code, detail=""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


class MissingExternal(TriageError):
    def __init__(self, instr_index):
        self.instr_index = instr_index
        super().__init__(f"no external value for SETX at instruction {instr_index}")


class UnknownBlock(TriageError):
    def __init__(self, block_id):
        self.block_id = block_id
        super().__init__(f"unknown block id {block_id}")


class NoRootVariable(TriageError):
    """Every address operand of the fault instruction holds a legal address."""


class ZeroEvidence(TriageError):
    """The observations have probability zero under the network."""


class AllPathsExcluded(TriageError):
    """No (path, error class) hypothesis has nonzero likelihood."""


class ModelError(TriageError):
    def __init__(self, row, reason):
        self.row = row
        self.reason = reason
        super().__init__(f"{row}: {reason}")


class NoCompatibleSite(TriageError):
    def __init__(self, error_class):
        self.error_class = error_class
        super().__init__(f"program has no site compatible with {error_class}")


class InjectionFailed(TriageError):
    """Sites exist but no grid externals make the mutant fault as required."""


class PipelineError(TriageError):
    def __init__(self, entry, stage, cause=None):
        self.entry = entry
        self.stage = stage
        self.cause = cause
        super().__init__(f"entry {entry} failed at {stage}: {cause}")
