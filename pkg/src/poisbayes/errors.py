"""Exception hierarchy shared across the package."""


class PoisBayesError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PoisBayesError):
    """Invalid run configuration or command-line arguments (CLI exit code 2)."""


class DataError(PoisBayesError):
    """Malformed input data, with row/column coordinates where known (CLI exit code 3)."""


class NumericError(PoisBayesError):
    """Numerical linear-algebra failure that survived the retry policy (CLI exit code 4)."""


class EstimationError(PoisBayesError):
    """An estimator could not produce a usable result, e.g. all importance weights underflowed."""


class GenerationError(PoisBayesError):
    """Synthetic data generation could not satisfy its constraints."""
