"""Exception types. Every error carries a machine-readable ``code``."""

from __future__ import annotations


class AipiError(Exception):
    def __init__(self, code: str, message: str = ""):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}" if message else code)


class DatasetError(AipiError):
    """Raised by parsing when one or more violations block the dataset.

    ``violations`` holds every problem found, not only the first one.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        first = self.violations[0]
        extra = f" (+{len(self.violations) - 1} more)" if len(self.violations) > 1 else ""
        super().__init__(first.code, f"{first.location()}: {first.message}{extra}")
