class LabBaseException(Exception):
    """Base class for laboratory errors"""

    pass


class GridError(LabBaseException, ValueError):
    """Grid or sample array does not fit the periodic grid contract"""

    def __init__(self, operation: str, details: str):
        self.operation = operation
        self.message = f"Grid error in {operation}: {details}"
        super().__init__(self.message)


class PartitionError(LabBaseException, ValueError):
    """Dyadic partition cannot be built or a shell index is out of range"""

    def __init__(self, operation: str, details: str):
        self.operation = operation
        self.message = f"Partition error in {operation}: {details}"
        super().__init__(self.message)


class ProfileError(LabBaseException, ValueError):
    """Profile values are not admissible"""

    def __init__(self, details: str):
        self.message = f"Invalid profile: {details}"
        super().__init__(self.message)


class AcousticError(LabBaseException, ValueError):
    """Invalid acoustic propagation request"""

    def __init__(self, operation: str, details: str):
        self.operation = operation
        self.message = f"Acoustic error in {operation}: {details}"
        super().__init__(self.message)


class BlowupError(LabBaseException):
    """Solver left the resolved regime; carries the partial ledger"""

    def __init__(self, time: float, reason: str, ledger=None):
        self.time = time
        self.reason = reason
        self.ledger = ledger
        self.message = f"Blowup at t={time:.6g}: {reason}"
        super().__init__(self.message)


class LedgerError(LabBaseException, ValueError):
    """Ledger content does not support the requested operation"""

    def __init__(self, operation: str, details: str):
        self.operation = operation
        self.message = f"Ledger error in {operation}: {details}"
        super().__init__(self.message)


class BoundsError(LabBaseException, ValueError):
    """Argument outside the range where a bound is defined"""

    def __init__(self, operation: str, details: str):
        self.operation = operation
        self.message = f"Bounds error in {operation}: {details}"
        super().__init__(self.message)


class ConfigError(LabBaseException, ValueError):
    """Experiment configuration error, reported at its first offending line"""

    def __init__(self, line: int, details: str):
        self.line = line
        self.details = details
        if line > 0:
            self.message = f"Config error at line {line}: {details}"
        else:
            self.message = f"Config error: {details}"
        super().__init__(self.message)


class RunNotFoundException(LabBaseException):
    """Requested run directory or ledger does not exist"""

    def __init__(self, run_id: str):
        self.run_id = run_id
        self.message = f"Run {run_id} not found"
        super().__init__(self.message)
