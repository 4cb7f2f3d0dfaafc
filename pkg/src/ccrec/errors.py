"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed or inconsistent input data (files, interaction logs)."""


class FormatError(DataError):
    """Binary container violates the documented byte layout."""


class ConfigError(ValueError):
    """Invalid configuration; message may carry several problems at once."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
