"""Run manifest schemas."""

from typing import Any, Literal

from pydantic import BaseModel, Field


Command = Literal["simulate", "estimate", "fit", "study"]


class FileRecord(BaseModel):
    """A file read or written by a run."""

    path: str
    sha256: str
    size_bytes: int


class RunManifest(BaseModel):
    """Everything needed to reproduce one command run."""

    command: Command
    arguments: dict[str, Any] = Field(..., description="Resolved command arguments, replayable as is")
    config: dict[str, Any] = Field(default_factory=dict, description="Resolved configuration echo")
    inputs: list[FileRecord] = Field(default_factory=list)
    outputs: list[FileRecord] = Field(default_factory=list)
    version: str
