"""ecattrib timeseries: monthly activity per group."""
import io

from bootstrap.pipeline_config import EntityKind
from scamgraph.graph import build_graph
from scamgraph.management.pipeline import PipelineCommand
from scamgraph.timeseries import (
    bucket_by_month,
    domain_membership,
    plot_data,
    succession_hints,
    summarize_activity,
    trim_partial_months,
    write_csv,
)


class Command(PipelineCommand):
    help = "Count distinct entities per group and month; write timeseries.csv and timeseries.json."

    def add_command_arguments(self, parser):
        self.add_level_argument(parser)
        parser.add_argument("--metric", choices=[kind.value for kind in EntityKind],
                            help="Entity kind to count (default: from config, domain)")
        parser.add_argument("--keep-partial", action="store_true",
                            help="Keep the first/last month even when the window covers them partially")
        parser.add_argument("--succession-gap", type=int, default=2,
                            help="Months between one group ending and another starting to report a hint")

    def config_overrides(self, options):
        return {"timeseries_metric": options["metric"]} if options.get("metric") else {}

    def run(self, level="auto", keep_partial=False, succession_gap=2, **options):
        records = self.store.load_records()
        graph = build_graph(records)
        groups, level = self.resolve_groups(graph, level)
        window = self.config.window
        metric = self.config.timeseries_metric

        series = bucket_by_month(records, domain_membership(graph, groups), window, metric)
        if not keep_partial:
            series = [trim_partial_months(item, window) for item in series]
        activity = [summarize_activity(item) for item in series]
        hints = succession_hints(activity, succession_gap)

        buffer = io.StringIO()
        rows = write_csv(series, buffer, metric)
        self.store.write_text("timeseries.csv", buffer.getvalue())
        self.store.write_json("timeseries", {
            "level": level.value,
            "trimmed": not keep_partial,
            "plot": plot_data(series, metric),
            "activity": [item.model_dump(mode="json") for item in activity],
            "succession_hints": [hint.model_dump(mode="json") for hint in hints],
        })
        return f"timeseries: {len(series)} {level.value} groups, {rows} rows, {len(hints)} succession hints"
