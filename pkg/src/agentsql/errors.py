"""Exception hierarchy shared across the harness."""


class AgentSQLError(Exception):
    """Base class for all harness errors."""


class DatasetError(AgentSQLError):
    """Missing files, malformed records, duplicate ids."""


class SchemaError(AgentSQLError):
    """Database file missing or unreadable."""


class RenderError(AgentSQLError):
    """Prompt template slot mismatch."""


class ExtractionError(AgentSQLError):
    """No SQL statement could be pulled out of a completion."""


class BackendError(AgentSQLError):
    """Hard model-backend failure after retries."""


class ContextOverflowError(BackendError):
    """Server reported the request exceeds the model context window."""


class TimingError(AgentSQLError):
    """A timing repetition failed or timed out."""


class ConfigError(AgentSQLError):
    """Invalid or unresolvable experiment configuration."""


class ResumeError(AgentSQLError):
    """Run directory cannot be resumed (e.g. config hash mismatch)."""
