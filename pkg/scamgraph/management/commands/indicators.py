"""ecattrib indicators: per-group Matomo servers and 51.la IDs."""
import io

from scamgraph.attribution import matomo_indicators, presented_indicators, write_indicator_csv
from scamgraph.management.pipeline import PipelineCommand
from scamgraph.reports import indicators_report


class Command(PipelineCommand):
    help = "Export per-group infrastructure indicators as indicators.json and indicators.csv."

    def add_command_arguments(self, parser):
        self.add_level_argument(parser)

    def run(self, level="auto", **options):
        graph = self.store.load_graph()
        groups, level = self.resolve_groups(graph, level)
        reports = matomo_indicators(graph, groups)
        presented = [presented_indicators(report, self.config.defang) for report in reports]

        buffer = io.StringIO()
        rows = write_indicator_csv(reports, buffer, self.config.defang)
        self.store.write_text("indicators.csv", buffer.getvalue())
        self.store.write_json("indicators", {
            "level": level.value,
            "defanged": self.config.defang,
            "groups": [report.model_dump(mode="json") for report in presented],
        })
        self.store.write_text("report_indicators.md", indicators_report(self.meta, presented))

        shared = sum(1 for report in reports if report.shared_matomo_hosts)
        return f"indicators: {len(reports)} {level.value} groups, {rows} indicators, {shared} groups sharing Matomo hosts"
