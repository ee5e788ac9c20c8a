"""ecattrib ingest: parse observation records into records.json and stats.json."""
import logging

from bootstrap.pipeline_config import FileFormat, InputFormat, serialize_content
from scamgraph.exceptions import InputError
from scamgraph.graph import build_graph, stats
from scamgraph.ingest import canonical_order, parse_files
from scamgraph.management.pipeline import PipelineCommand
from scamgraph.reports import stats_report

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Parse observation records, normalize sites and domains, and write records.json."

    def add_command_arguments(self, parser):
        parser.add_argument("inputs", nargs="*", help="Record files (replace the configured inputs)")
        parser.add_argument("--format", choices=[f.value for f in InputFormat],
                            help="Record format (default: from config, jsonl)")

    def config_overrides(self, options):
        overrides = {}
        if options.get("inputs"):
            overrides["inputs"] = options["inputs"]
        if options.get("format"):
            overrides["input_format"] = options["format"]
        return overrides

    def run(self, **options):
        config = self.config
        if not config.inputs:
            raise InputError("no input files; pass them as arguments or list them under 'inputs'")
        missing = config.check_paths()
        if missing:
            raise InputError("missing input: " + ", ".join(str(p) for p in missing))

        result = parse_files(config.inputs, config.input_format, self.suffixes, config.window,
                             workers=config.ingest_workers)
        records = canonical_order(result.records)
        dataset = stats(build_graph(records))

        self.store.write_records(records)
        self.store.write_json("stats", {
            "record_count": len(records),
            "rejected_count": len(result.errors),
            "warning_count": len(result.warnings),
            "stats": dataset.model_dump(mode="json"),
        })
        self.store.write_text("ingest_issues.json", self._issues_json(result))
        self.store.write_text("report_stats.md", stats_report(
            self.meta, dataset, config.window, result.errors, result.warnings
        ))

        return (f"ingest: {len(records)} records, {dataset.domains} domains, "
                f"{dataset.total_entities} entities, {dataset.total_sites} sites, "
                f"{len(result.errors)} rejected lines")

    def _issues_json(self, result):
        return serialize_content({
            **self.store.header("ingest_issues"),
            "errors": [issue.model_dump(mode="json") for issue in result.errors],
            "warnings": [issue.model_dump(mode="json") for issue in result.warnings],
        }, FileFormat.JSON)
