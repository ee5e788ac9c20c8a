"""
Exceptions raised by the attribution pipeline.

Commands translate InputError (and its subclasses) to exit code 1; anything
else escaping a command is an internal error (exit code 2).
"""


class ScamGraphError(Exception):
    """Base class for pipeline errors."""


class InputError(ScamGraphError):
    """Input that cannot be processed: unreadable stream, bad URL, bad file."""


class DecodeError(InputError):
    """A Cloudflare email-protection payload that does not decode."""


class ConfigError(InputError):
    """A configuration that is valid field-by-field but infeasible as a whole."""


class EvaluationError(InputError):
    """Predicted partition inconsistent with the ground truth."""


class MissingArtifactError(InputError):
    """An upstream artifact is absent from the output directory."""

    def __init__(self, artifact, command):
        self.artifact = artifact
        self.command = command
        super().__init__(
            f"Required artifact '{artifact}' not found; run `ecattrib {command}` first."
        )
