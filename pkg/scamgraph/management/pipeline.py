"""
Shared plumbing for the pipeline management commands.

Every subcommand accepts the global flags, resolves the configuration
(defaults < config file < ECATTRIB_* environment < flags), loads the
public-suffix snapshot and opens the output directory's ArtifactStore.
Errors map to exit codes: 1 for input problems, 2 for anything else.
"""
import argparse
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from pydantic import ValidationError

from bootstrap.pipeline_config import GroupLevel, PipelineConfig
from scamgraph.artifacts import ArtifactStore
from scamgraph.exceptions import ConfigError, InputError
from scamgraph.reports import report_meta
from scamgraph.suffixes import SuffixSnapshot

logger = logging.getLogger(__name__)

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

VERBOSITY_LEVELS = {2: logging.INFO, 3: logging.DEBUG}


def parse_env_bool(name, value):
    if value.strip().lower() in _TRUE:
        return True
    if value.strip().lower() in _FALSE:
        return False
    raise ConfigError(f"ECATTRIB_{name.upper()} must be one of 1/0/true/false, got {value!r}")


def parse_env_int(name, value):
    try:
        return int(value)
    except ValueError as e:
        raise ConfigError(f"ECATTRIB_{name.upper()} must be an integer, got {value!r}") from e


class PipelineCommand(BaseCommand):
    """
    Base class of the scamgraph commands.

    Subclasses implement add_command_arguments() and run(**options); run()
    returns the one-line summary printed on stdout.
    """

    requires_system_checks = []

    def add_arguments(self, parser):
        group = parser.add_argument_group("pipeline options")
        group.add_argument("--config", help="Pipeline configuration file (JSON or YAML)")
        group.add_argument("--out", help="Output directory for artifacts")
        group.add_argument("--min-domains", type=int, help="Domain gate for groups and subgroups")
        group.add_argument("--min-sites", type=int, help="Site gate for groups and subgroups")
        group.add_argument("--seed", type=int, help="Seed for synthetic generation")
        group.add_argument("--defang", action=argparse.BooleanOptionalAction, default=None,
                           help="Neutralize URLs in outputs (default: on)")
        group.add_argument("--suffix-snapshot", help="Public-suffix list file (default: bundled snapshot)")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def config_overrides(self, options) -> dict:
        """Command-specific top-level configuration overrides."""
        return {}

    def run(self, **options) -> str:
        raise NotImplementedError

    # -------------------------------------------------------------------------

    def load_config(self, options) -> PipelineConfig:
        """
        Raises:
            InputError: If the configuration file is missing or unparseable.
            ConfigError: If an environment override is malformed.
            ValidationError: If the merged configuration is invalid.
        """
        env = settings.ECATTRIB_ENV
        path = options.get("config") or env.get("config")
        if path:
            try:
                config = PipelineConfig.from_file(path)
            except FileNotFoundError as e:
                raise InputError(str(e)) from e
            except ValueError as e:
                if isinstance(e, ValidationError):
                    raise
                raise InputError(f"cannot parse {path}: {e}") from e
        else:
            config = PipelineConfig()
        self.explicit_seed = "seed" in config.model_fields_set
        data = config.model_dump(mode="json")

        layers = [
            {
                "out": env.get("out"),
                "min_domains": env.get("min_domains") and parse_env_int("min_domains", env["min_domains"]),
                "min_sites": env.get("min_sites") and parse_env_int("min_sites", env["min_sites"]),
                "seed": env.get("seed") and parse_env_int("seed", env["seed"]),
                "defang": env.get("defang") and parse_env_bool("defang", env["defang"]),
                "suffix_snapshot": env.get("suffix_snapshot"),
            },
            {name: options.get(name) for name in
             ("out", "min_domains", "min_sites", "seed", "defang", "suffix_snapshot")},
        ]
        for layer in layers:
            if layer["out"]:
                data["output_dir"] = layer["out"]
            for gate in ("min_domains", "min_sites"):
                if layer[gate] is not None and layer[gate] != "":
                    data["filter"][gate] = layer[gate]
                    data["split"][gate] = layer[gate]
            if layer["seed"] is not None and layer["seed"] != "":
                data["seed"] = layer["seed"]
                self.explicit_seed = True
            if layer["defang"] is not None and layer["defang"] != "":
                data["defang"] = layer["defang"]
            if layer["suffix_snapshot"]:
                data["suffix_snapshot"] = layer["suffix_snapshot"]
        data.update(self.config_overrides(options))

        config = PipelineConfig.model_validate(data)
        if not config.output_dir.is_absolute():
            config = config.model_copy(update={"output_dir": Path(settings.WORKING_DIR) / config.output_dir})
        return config

    def resolve_groups(self, graph, level):
        """
        Named cells for downstream commands at the requested level.

        auto uses refined subgroups when refine has run, else preliminary groups.
        """
        level = GroupLevel(level or GroupLevel.AUTO)
        if level == GroupLevel.AUTO:
            level = GroupLevel.REFINED if self.store.exists("subgroups") else GroupLevel.PRELIMINARY
        if level == GroupLevel.REFINED:
            return self.store.load_subgroups(graph), level
        kept, _ = self.store.load_groups(graph)
        return kept, level

    def add_level_argument(self, parser):
        parser.add_argument("--level", choices=[level.value for level in GroupLevel], default="auto",
                            help="Partition to use: refined subgroups, preliminary groups, or auto")

    def handle(self, *args, **options):
        scamgraph_logger = logging.getLogger("scamgraph")
        previous_level = scamgraph_logger.level
        if options.get("verbosity", 1) in VERBOSITY_LEVELS:
            scamgraph_logger.setLevel(VERBOSITY_LEVELS[options["verbosity"]])
        self.verbosity = options.get("verbosity", 1)

        try:
            self.config = self.load_config(options)
            self.suffixes = SuffixSnapshot.load(self.config.suffix_snapshot)
            fingerprint = self.config.fingerprint(self.suffixes.version)
            self.store = ArtifactStore(self.config.output_dir, fingerprint, self.suffixes.version,
                                       self.config.partition_fingerprint(self.suffixes.version))
            self.meta = report_meta(self.config, fingerprint, self.suffixes.version)
            summary = self.run(**options)
        except (InputError, ValidationError) as e:
            raise CommandError(str(e), returncode=1) from e
        except CommandError:
            raise
        except Exception as e:
            logger.exception("internal error")
            raise CommandError(f"internal error: {e}", returncode=2) from e
        finally:
            scamgraph_logger.setLevel(previous_level)

        if summary:
            self.stdout.write(summary)
