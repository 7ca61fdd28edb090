# graphids/errors.py - Structured error types shared by services and CLI
from typing import Any, Dict, Optional


class GraphIdsError(Exception):
    """Base error carrying a structured payload"""

    code = "graph_ids_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = {k: v for k, v in details.items() if v is not None}

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.code, "message": self.message, **self.details}


class ConfigError(GraphIdsError, ValueError):
    code = "config_error"


class DatasetError(GraphIdsError, ValueError):
    """Problem with a connection table: missing column or bad record"""

    code = "dataset_error"

    def __init__(self, message: str, column: Optional[str] = None,
                 line: Optional[int] = None, source: Optional[str] = None):
        super().__init__(message, column=column, line=line, source=source)
        self.column = column
        self.line = line
        self.source = source


class GraphError(GraphIdsError, KeyError):
    code = "graph_error"

    def __str__(self) -> str:
        # KeyError would repr() the message
        return self.message


class ScheduleError(GraphIdsError, ValueError):
    code = "schedule_error"


class DerivedFormatError(GraphIdsError, ValueError):
    code = "derived_format_error"

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message, line=line)
        self.line = line


class LearnerError(GraphIdsError, ValueError):
    code = "learner_error"


class ModelFormatError(GraphIdsError, ValueError):
    code = "model_format_error"


class SelectionError(GraphIdsError, ValueError):
    code = "selection_error"


__all__ = [
    "GraphIdsError",
    "ConfigError",
    "DatasetError",
    "GraphError",
    "ScheduleError",
    "DerivedFormatError",
    "LearnerError",
    "ModelFormatError",
    "SelectionError",
]
