"""Shared exception types."""


class MeshError(ValueError):
    """Invalid mesh construction parameters or broken mesh invariants."""


class HypothesisViolation(ValueError):
    """A structural hypothesis on the problem data failed.

    ``hypothesis`` names the violated condition (e.g. "H(beta)", "H(f)(iv)").
    """

    def __init__(self, hypothesis: str, message: str):
        super().__init__(f"{hypothesis}: {message}")
        self.hypothesis = hypothesis


class SpectralStructureError(RuntimeError):
    """A structural property of the computed spectrum failed.

    ``prop`` names the property ("simple first eigenvalue", "fixed sign", ...).
    """

    def __init__(self, prop: str, message: str):
        super().__init__(f"{prop}: {message}")
        self.prop = prop


class CertificateError(RuntimeError):
    """A numerical certificate came out with the wrong sign."""


class SolveStageError(RuntimeError):
    """A pipeline stage aborted. Carries the stage name and a diagnostic payload."""

    def __init__(self, stage: str, message: str, payload=None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.payload = payload if payload is not None else {}


class ConfigError(ValueError):
    """Configuration text failed to parse or validate.

    ``line`` is the 1-based line number when known, ``key`` the offending key.
    """

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        loc = f"line {line}: " if line is not None else ""
        super().__init__(f"{loc}{message}")
        self.line = line
        self.key = key
