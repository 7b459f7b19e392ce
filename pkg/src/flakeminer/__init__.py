"""Mine flaky tests by re-running project test suites in fresh environments."""

__version__ = "0.1.0"
