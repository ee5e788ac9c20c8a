"""
Fake EC Attribution Pipeline Configuration Models

This module defines Pydantic models for validating and loading pipeline
configurations. Use PipelineConfig.from_file() to load a configuration from disk.

Supports both JSON and YAML formats. When reading, the format is auto-detected
from the file contents. When writing, JSON is used by default.

Example:
    config = PipelineConfig.from_file("path/to/pipeline.yaml")
    config.to_file("path/to/pipeline.json")  # Writes as JSON (default)
    config.to_file("path/to/pipeline.yaml", format="yaml")  # Writes as YAML
"""

from __future__ import annotations

import calendar
import hashlib
import json
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import (
    BaseModel,
    Field,
    field_validator,
    model_validator,
    ConfigDict,
)


# =============================================================================
# Enums
# =============================================================================

class EntityKind(str, Enum):
    """Node kinds of the entity-link graph."""
    DOMAIN = "domain"
    EMAIL = "email"
    MATOMO = "matomo"
    LA51 = "la51"


class InputFormat(str, Enum):
    """Supported observation record formats."""
    JSONL = "jsonl"
    CSV = "csv"


class FileFormat(str, Enum):
    """Supported configuration file formats."""
    JSON = "json"
    YAML = "yaml"


class GroupLevel(str, Enum):
    """Which partition downstream commands read."""
    AUTO = "auto"
    PRELIMINARY = "preliminary"
    REFINED = "refined"


# =============================================================================
# Format Detection Utilities
# =============================================================================

def detect_format(content: str) -> FileFormat:
    """
    Detect whether content is JSON or YAML based on its structure.

    Args:
        content: The file content as a string.

    Returns:
        FileFormat.JSON or FileFormat.YAML
    """
    stripped = content.strip()

    # JSON objects start with { and JSON arrays start with [
    if stripped.startswith('{') or stripped.startswith('['):
        try:
            json.loads(content)
            return FileFormat.JSON
        except json.JSONDecodeError:
            pass

    return FileFormat.YAML


def parse_content(content: str) -> dict[str, Any]:
    """
    Parse content as either JSON or YAML based on auto-detection.

    Args:
        content: The file content as a string.

    Returns:
        Parsed dictionary.

    Raises:
        ValueError: If content cannot be parsed as either format.
    """
    detected_format = detect_format(content)

    if detected_format == FileFormat.JSON:
        try:
            return json.loads(content)
        except json.JSONDecodeError as e:
            raise ValueError(f"Failed to parse as JSON: {e}")
    else:
        try:
            result = yaml.safe_load(content)
            if result is None:
                return {}
            if not isinstance(result, dict):
                raise ValueError("YAML content must be a mapping/dictionary at the root level")
            return result
        except yaml.YAMLError as e:
            raise ValueError(f"Failed to parse as YAML: {e}")


def serialize_content(data: Any, format: FileFormat = FileFormat.JSON) -> str:
    """
    Serialize data to JSON or YAML format.

    Dates, datetimes, paths and enums are converted to strings so the output
    is stable across runs.

    Args:
        data: The data to serialize.
        format: The output format (default: JSON).

    Returns:
        Serialized string, newline-terminated.
    """
    def convert(obj):
        if isinstance(obj, dict):
            return {str(k): convert(v) for k, v in obj.items()}
        elif isinstance(obj, (list, tuple)):
            return [convert(item) for item in obj]
        elif isinstance(obj, (set, frozenset)):
            return sorted(convert(item) for item in obj)
        elif isinstance(obj, (datetime, date)):
            return obj.isoformat()
        elif isinstance(obj, Enum):
            return obj.value
        elif isinstance(obj, Path):
            return str(obj)
        return obj

    data = convert(data)

    if format == FileFormat.JSON:
        return json.dumps(data, indent=2, ensure_ascii=False) + "\n"
    else:
        return yaml.dump(data, default_flow_style=False, sort_keys=False, allow_unicode=True)


# =============================================================================
# Collection Window
# =============================================================================

class CollectionWindow(BaseModel):
    """Calendar window the observation records were collected in (UTC days)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    start_date: date = Field(
        default=date(2022, 5, 20),
        description="First collection day (inclusive)"
    )
    end_date: date = Field(
        default=date(2024, 12, 31),
        description="Last collection day (inclusive)"
    )

    @model_validator(mode="after")
    def validate_order(self) -> "CollectionWindow":
        """Ensure the window is not inverted."""
        if self.start_date > self.end_date:
            raise ValueError(
                f"start_date {self.start_date} is after end_date {self.end_date}"
            )
        return self

    def contains(self, day: date) -> bool:
        return self.start_date <= day <= self.end_date

    @property
    def starts_on_month_boundary(self) -> bool:
        return self.start_date.day == 1

    @property
    def ends_on_month_boundary(self) -> bool:
        last_day = calendar.monthrange(self.end_date.year, self.end_date.month)[1]
        return self.end_date.day == last_day


# =============================================================================
# Grouping and Refinement Models
# =============================================================================

class FilterConfig(BaseModel):
    """Size gate applied to preliminary groups."""

    model_config = ConfigDict(extra="forbid")

    min_domains: int = Field(
        default=200,
        ge=1,
        description="Groups with fewer domains are dropped"
    )
    min_sites: int = Field(
        default=2000,
        ge=1,
        description="Groups with fewer sites (distinct hostnames) are dropped"
    )
    name_before_site_filter: bool = Field(
        default=False,
        description=(
            "Number groups after the domain gate only, so groups removed by "
            "the site gate leave gaps in the G-numbering"
        )
    )


class SplitPolicy(BaseModel):
    """Cut-entity refinement policy."""

    model_config = ConfigDict(extra="forbid")

    excluded_kinds: list[EntityKind] = Field(
        default_factory=lambda: [EntityKind.MATOMO],
        description="Entity kinds never considered as cut entities"
    )
    min_domains: int = Field(
        default=200,
        ge=1,
        description="First-stage gate: components below this are discarded fragments"
    )
    min_sites: int = Field(
        default=2000,
        ge=1,
        description="Second-stage gate applied to named subgroups"
    )

    @field_validator("excluded_kinds")
    @classmethod
    def normalize_kinds(cls, value: list[EntityKind]) -> list[EntityKind]:
        """Deduplicate and order the excluded kinds."""
        order = list(EntityKind)
        return sorted(set(value), key=order.index)

    def excludes(self, kind: EntityKind) -> bool:
        return kind in self.excluded_kinds


# =============================================================================
# Synthetic Generator Models
# =============================================================================

class CountDistribution(BaseModel):
    """Integer-valued sampling distribution."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["fixed", "uniform", "pareto"] = Field(
        default="fixed",
        description="fixed -> minimum; uniform -> [minimum, maximum]; pareto -> heavy tail from minimum"
    )
    minimum: int = Field(default=1, ge=0)
    maximum: int = Field(default=1, ge=0)
    alpha: float = Field(
        default=1.5,
        gt=0.0,
        description="Pareto shape parameter (smaller means heavier tail)"
    )

    @model_validator(mode="after")
    def validate_bounds(self) -> "CountDistribution":
        if self.kind != "fixed" and self.maximum < self.minimum:
            raise ValueError("maximum must be >= minimum")
        return self


class ActorTier(BaseModel):
    """A population of synthetic actors sharing generation parameters."""

    model_config = ConfigDict(extra="forbid")

    count: int = Field(default=10, ge=0, description="Number of actors in the tier")
    label_prefix: str = Field(
        default="A",
        pattern=r"^[A-Z]+$",
        description="Prefix of the planted actor labels (A0001, A0002, ...)"
    )
    domains_per_actor: CountDistribution = Field(
        default_factory=lambda: CountDistribution(kind="uniform", minimum=5, maximum=20)
    )
    domain_counts: list[int] | None = Field(
        default=None,
        description="Explicit domain count per actor; overrides domains_per_actor"
    )
    sites_per_domain: CountDistribution = Field(
        default_factory=lambda: CountDistribution(kind="uniform", minimum=1, maximum=4)
    )
    emails_per_actor: int = Field(
        default=4,
        ge=1,
        description="Size of the actor's reused contact email pool"
    )
    email_reuse_prob: float = Field(
        default=0.7,
        ge=0.0,
        le=1.0,
        description="Probability a domain draws an extra email from the pool instead of a fresh one"
    )
    matomo_adoption_prob: float = Field(
        default=0.3,
        ge=0.0,
        le=1.0,
        description="Probability that an actor runs its own Matomo servers"
    )
    matomo_servers_per_actor: int = Field(default=2, ge=0)
    la51_adoption_prob: float = Field(
        default=0.2,
        ge=0.0,
        le=1.0,
        description="Probability that a domain carries a 51.la tracking ID"
    )
    la51_reuse_prob: float = Field(
        default=0.5,
        ge=0.0,
        le=1.0,
        description="Probability that a 51.la ID is reused from the actor's earlier IDs"
    )

    @model_validator(mode="after")
    def validate_domain_counts(self) -> "ActorTier":
        if self.domain_counts is not None:
            if len(self.domain_counts) != self.count:
                raise ValueError("domain_counts must list exactly one entry per actor")
            if any(n < 1 for n in self.domain_counts):
                raise ValueError("domain_counts entries must be >= 1")
        return self


class SynthConfig(BaseModel):
    """
    Synthetic scam ecosystem configuration.

    The flat actor fields describe the primary tier; extra_tiers adds further
    populations (e.g. the long tail of small actors). The seed fully determines
    the generated records.
    """

    model_config = ConfigDict(extra="forbid")

    actor_count: int = Field(default=10, ge=0)
    domains_per_actor: CountDistribution = Field(
        default_factory=lambda: CountDistribution(kind="uniform", minimum=5, maximum=20)
    )
    domain_counts: list[int] | None = Field(default=None)
    sites_per_domain: CountDistribution = Field(
        default_factory=lambda: CountDistribution(kind="uniform", minimum=1, maximum=4)
    )
    emails_per_actor: int = Field(default=4, ge=1)
    email_reuse_prob: float = Field(default=0.7, ge=0.0, le=1.0)
    matomo_adoption_prob: float = Field(default=0.3, ge=0.0, le=1.0)
    matomo_servers_per_actor: int = Field(default=2, ge=0)
    la51_adoption_prob: float = Field(default=0.2, ge=0.0, le=1.0)
    la51_reuse_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    extra_tiers: list[ActorTier] = Field(default_factory=list)
    cross_actor_bridge_count: int = Field(
        default=0,
        ge=0,
        description="Planted single-entity bridges between distinct actor pairs"
    )
    cf_encoded_prob: float = Field(
        default=0.0,
        ge=0.0,
        le=1.0,
        description="Fraction of emails emitted in Cloudflare-encoded form"
    )
    start_date: date = Field(default=date(2022, 5, 20))
    end_date: date = Field(default=date(2024, 12, 31))
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def validate_consistency(self) -> "SynthConfig":
        if self.start_date > self.end_date:
            raise ValueError("start_date must not be after end_date")
        if self.domain_counts is not None:
            if len(self.domain_counts) != self.actor_count:
                raise ValueError("domain_counts must list exactly one entry per actor")
            if any(n < 1 for n in self.domain_counts):
                raise ValueError("domain_counts entries must be >= 1")
        return self

    @property
    def tiers(self) -> list[ActorTier]:
        """All actor tiers, primary first."""
        primary = ActorTier(
            count=self.actor_count,
            label_prefix="A",
            domains_per_actor=self.domains_per_actor,
            domain_counts=self.domain_counts,
            sites_per_domain=self.sites_per_domain,
            emails_per_actor=self.emails_per_actor,
            email_reuse_prob=self.email_reuse_prob,
            matomo_adoption_prob=self.matomo_adoption_prob,
            matomo_servers_per_actor=self.matomo_servers_per_actor,
            la51_adoption_prob=self.la51_adoption_prob,
            la51_reuse_prob=self.la51_reuse_prob,
        )
        return [primary, *self.extra_tiers]

    @property
    def total_actors(self) -> int:
        return sum(tier.count for tier in self.tiers)

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> "SynthConfig":
        """
        Build a bundled preset.

        Args:
            name: "toy" or "jc3-shape".
            overrides: Field values replacing the preset's.

        Raises:
            KeyError: If the preset name is unknown.
        """
        data = dict(SYNTH_PRESETS[name])
        data.update(overrides)
        return cls.model_validate(data)

    @classmethod
    def from_file(cls, path: str | Path) -> "SynthConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Synth configuration file not found: {path}")
        return cls.model_validate(parse_content(path.read_text(encoding="utf-8")))


# The jc3-shape preset follows the proportions of the reference crawl: the
# eight large groups keep their observed domain counts (the two smallest in
# their own tier with denser sites so both clear the default site gate), the
# long tail holds ~1,110 small actors that never reach the domain gate.
SYNTH_PRESETS: dict[str, dict[str, Any]] = {
    "toy": {
        "actor_count": 10,
        "domains_per_actor": {"kind": "uniform", "minimum": 5, "maximum": 12},
        "sites_per_domain": {"kind": "uniform", "minimum": 1, "maximum": 3},
        "emails_per_actor": 3,
        "seed": 7,
    },
    "jc3-shape": {
        "actor_count": 6,
        "domain_counts": [38698, 37665, 4897, 1587, 1361, 1343],
        "sites_per_domain": {"kind": "uniform", "minimum": 4, "maximum": 9},
        "emails_per_actor": 1000,
        "email_reuse_prob": 0.97,
        "matomo_adoption_prob": 1.0,
        "matomo_servers_per_actor": 5,
        "la51_adoption_prob": 0.08,
        "la51_reuse_prob": 0.45,
        "extra_tiers": [
            {
                "count": 2,
                "label_prefix": "B",
                "domain_counts": [352, 260],
                "sites_per_domain": {"kind": "uniform", "minimum": 8, "maximum": 12},
                "emails_per_actor": 40,
                "email_reuse_prob": 0.95,
                "matomo_adoption_prob": 0.5,
                "matomo_servers_per_actor": 1,
                "la51_adoption_prob": 0.1,
                "la51_reuse_prob": 0.5,
            },
            {
                "count": 1110,
                "label_prefix": "S",
                "domains_per_actor": {"kind": "pareto", "minimum": 4, "maximum": 190, "alpha": 1.2},
                "sites_per_domain": {"kind": "pareto", "minimum": 3, "maximum": 60, "alpha": 1.8},
                "emails_per_actor": 2,
                "email_reuse_prob": 0.95,
                "matomo_adoption_prob": 0.003,
                "matomo_servers_per_actor": 1,
                "la51_adoption_prob": 0.1,
                "la51_reuse_prob": 0.3,
            },
        ],
        "cross_actor_bridge_count": 0,
        "seed": 20220520,
    },
}


# =============================================================================
# Root Pipeline Configuration
# =============================================================================

PARTITION_PARAMETERS = frozenset({"version", "input_format", "filter", "split", "window"})
ANALYSIS_PARAMETERS = PARTITION_PARAMETERS | {"defang", "timeseries_metric"}


class PipelineConfig(BaseModel):
    """
    Complete pipeline configuration.

    This is the root model shared by every command. Use
    PipelineConfig.from_file() to load from disk.

    Supports both JSON and YAML formats. Format is auto-detected when reading.
    JSON is used by default when writing.
    """

    model_config = ConfigDict(extra="forbid")

    version: str = Field(
        default="1.0.0",
        pattern=r"^\d+\.\d+\.\d+$",
        description="Configuration schema version"
    )
    inputs: list[Path] = Field(
        default_factory=list,
        description="Observation record files"
    )
    input_format: InputFormat = Field(
        default=InputFormat.JSONL,
        description="Format of the observation record files"
    )
    suffix_snapshot: Path | None = Field(
        default=None,
        description="Local public-suffix list file; the bundled snapshot is used when unset"
    )
    filter: FilterConfig = Field(default_factory=FilterConfig)
    split: SplitPolicy = Field(default_factory=SplitPolicy)
    window: CollectionWindow = Field(default_factory=CollectionWindow)
    output_dir: Path = Field(
        default=Path("ecattrib-out"),
        description="Directory receiving every artifact"
    )
    seed: int = Field(default=0, ge=0, description="Seed for synthetic generation")
    defang: bool = Field(
        default=True,
        description="Neutralize URLs and hosts in human-facing outputs"
    )
    timeseries_metric: EntityKind = Field(
        default=EntityKind.DOMAIN,
        description="Entity kind counted per month by the timeseries command"
    )
    ingest_workers: int = Field(
        default=0,
        ge=0,
        description="Worker processes for parsing large JSONL files; 0 uses the CPU count, 1 parses in-process"
    )

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        """
        Load and validate a configuration from a JSON or YAML file.

        The format is auto-detected from the file contents, not the extension.

        Args:
            path: Path to the configuration file.

        Returns:
            Validated PipelineConfig instance.

        Raises:
            FileNotFoundError: If the file doesn't exist.
            ValueError: If the file cannot be parsed.
            pydantic.ValidationError: If the configuration is invalid.
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Configuration file not found: {path}")

        with open(path, "r", encoding="utf-8") as f:
            content = f.read()

        return cls.model_validate(parse_content(content))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        return cls.model_validate(data)

    def to_file(
        self,
        path: str | Path,
        format: FileFormat | str = FileFormat.JSON
    ) -> None:
        """
        Save the configuration to a file.

        Args:
            path: Path to save the configuration to.
            format: Output format - "json" (default) or "yaml".
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)

        if isinstance(format, str):
            format = FileFormat(format.lower())

        data = self.model_dump(mode="json")
        with open(path, "w", encoding="utf-8") as f:
            f.write(serialize_content(data, format))

    def to_json(self) -> str:
        return serialize_content(self.model_dump(mode="json"), FileFormat.JSON)

    def check_paths(self) -> list[Path]:
        """
        Return referenced input paths that do not exist.
        """
        missing = [p for p in self.inputs if not p.exists()]
        if self.suffix_snapshot is not None and not self.suffix_snapshot.exists():
            missing.append(self.suffix_snapshot)
        return missing

    def fingerprint(self, suffix_version: str | None = None, parameters=ANALYSIS_PARAMETERS) -> str:
        """
        Hash of the analysis parameters.

        Paths, the output directory and worker counts are excluded; the suffix
        snapshot enters through its version string.

        Args:
            suffix_version: Version of the loaded public-suffix snapshot.
            parameters: Top-level fields to hash.

        Returns:
            "sha256:" followed by the first 16 hex digits.
        """
        payload = self.model_dump(
            mode="json",
            include=set(parameters),
        )
        payload["suffix_snapshot"] = suffix_version
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def partition_fingerprint(self, suffix_version: str | None = None) -> str:
        """Hash of the parameters that decide records, groups and subgroups."""
        return self.fingerprint(suffix_version, PARTITION_PARAMETERS)


# =============================================================================
# Example Usage
# =============================================================================

if __name__ == "__main__":
    import sys

    if len(sys.argv) < 2:
        print("Usage: python pipeline_config.py <config_file>")
        print("\nThis will validate the configuration and print a summary.")
        print("Supports both JSON and YAML formats (auto-detected).")
        sys.exit(1)

    config_path = sys.argv[1]

    try:
        config = PipelineConfig.from_file(config_path)
        print(f"[OK] Configuration loaded from '{config_path}'")
        print(f"\n  Version: {config.version}")
        print(f"  Inputs: {len(config.inputs)} ({config.input_format.value})")
        print(f"  Window: {config.window.start_date} .. {config.window.end_date}")
        print(f"  Group gate: {config.filter.min_domains} domains / {config.filter.min_sites} sites")
        print(f"  Subgroup gate: {config.split.min_domains} domains / {config.split.min_sites} sites")
        print(f"  Output directory: {config.output_dir}")
        print(f"  Fingerprint: {config.fingerprint()}")

    except FileNotFoundError as e:
        print(f"[ERROR] {e}")
        sys.exit(1)
    except ValueError as e:
        print(f"[ERROR] Parse error: {e}")
        sys.exit(1)
    except Exception as e:
        print(f"[ERROR] Validation error: {e}")
        sys.exit(1)
