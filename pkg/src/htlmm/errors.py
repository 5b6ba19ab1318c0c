class BudgetExceededError(MemoryError):
    """A dense object would exceed the configured entry budget."""

    def __init__(self, required: int, budget: int, what: str = "dense tensor"):
        self.required = int(required)
        self.budget = int(budget)
        super().__init__(
            f"{what} needs {self.required:,} entries, over the budget of {self.budget:,}"
        )


class ConfigError(ValueError):
    """Malformed experiment configuration; carries the offending line when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
