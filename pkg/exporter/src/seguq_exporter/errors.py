class ExporterError(Exception):
    """Base class for exporter failures."""


class SetupError(ExporterError):
    """A checkpoint or dataset is missing; the message says how to get it."""


class ScenarioError(ExporterError):
    """A scenario configuration is invalid or unsupported by the model."""
