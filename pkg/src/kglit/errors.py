"""Exception hierarchy. Each class carries the CLI exit code for its category."""


class KGLitError(Exception):
    exit_code = 3
    category = "domain"


class ParseError(KGLitError):
    """Malformed input file; the message names the file and line."""

    exit_code = 4
    category = "parse"

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class UnknownSymbolError(KGLitError):
    category = "unknown-symbol"


class ConfigError(KGLitError):
    category = "config"


class InfeasibleAblationError(KGLitError):
    """Requested relational reduction would violate the coverage constraints."""

    category = "infeasible"

    def __init__(self, alpha, max_alpha, cover_size, n_triples):
        self.alpha = alpha
        self.max_alpha = max_alpha
        self.cover_size = cover_size
        self.n_triples = n_triples
        super().__init__(
            f"alpha={alpha} infeasible: coverage needs {cover_size} of {n_triples} "
            f"training triples, feasibility limit alpha <= {max_alpha:.6f}"
        )


class NumericalError(KGLitError):
    """Non-finite loss or parameters; ``batch`` holds the offending input."""

    exit_code = 5
    category = "numerical"

    def __init__(self, message, batch=None):
        self.batch = batch
        super().__init__(message)


class CheckpointMismatchError(KGLitError):
    category = "checkpoint-mismatch"
