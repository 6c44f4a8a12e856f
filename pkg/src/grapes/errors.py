"""Exception types shared across the package."""

from __future__ import annotations


class GrapesError(Exception):
    """Base class for every error raised by this package."""

    kind = "error"

    def to_record(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class GraphInputError(GrapesError, ValueError):
    kind = "graph_input"


class ShapeError(GrapesError, ValueError):
    kind = "shape"


class ConfigError(GrapesError, ValueError):
    kind = "config"


class ContractViolation(GrapesError, ValueError):
    kind = "contract"


class DatasetError(GrapesError, ValueError):
    """A dataset bundle failed to parse; carries the offending file and line."""

    kind = "dataset"

    def __init__(self, file: str, line: int | None, message: str):
        self.file = file
        self.line = line
        where = f"{file}:{line}" if line is not None else file
        super().__init__(f"{where}: {message}")

    def to_record(self) -> dict:
        rec = super().to_record()
        rec["file"] = self.file
        rec["line"] = self.line
        return rec
