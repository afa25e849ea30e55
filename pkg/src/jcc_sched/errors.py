"""Exception types shared across the package."""


class JccSchedError(Exception):
    """Base class for all package errors."""


class CaseFormatError(JccSchedError):
    """Case file violates the JSON schema. Carries field/row context."""

    def __init__(self, message, field=None, row=None):
        self.field = field
        self.row = row
        parts = [message]
        if field is not None:
            parts.append(f"field={field!r}")
        if row is not None:
            parts.append(f"row={row}")
        super().__init__("; ".join(parts))


class TopologyError(JccSchedError):
    """Bus parent links do not form a tree rooted at the slack bus."""

    def __init__(self, message, cycle=None):
        self.cycle = list(cycle) if cycle is not None else None
        if self.cycle:
            message = f"{message}; cycle: {' -> '.join(map(str, self.cycle))}"
        super().__init__(message)


class SampleFormatError(JccSchedError):
    """Sample CSV is ragged, non-numeric, empty, or dimensionally wrong."""


class ConfigError(JccSchedError):
    """Run configuration is invalid."""


class SolverError(JccSchedError):
    """Conic backend failed or returned an unusable status."""

    def __init__(self, message, status=None):
        self.status = status
        super().__init__(message)


class InfeasibleProblemError(SolverError):
    """Problem proved infeasible; carries tags of conflicting rows."""

    def __init__(self, message, conflicting_rows=None):
        super().__init__(message, status="infeasible")
        self.conflicting_rows = list(conflicting_rows or [])
