"""ecattrib group: preliminary groups (connected components), filtered and named."""
import logging

from scamgraph.artifacts import group_to_row
from scamgraph.exceptions import ScamGraphError
from scamgraph.graph import stats
from scamgraph.grouping import (
    connected_components,
    dropped_summary,
    naive_fixpoint_components,
    select_groups,
    summarize_groups,
)
from scamgraph.management.pipeline import PipelineCommand
from scamgraph.reports import groups_report

logger = logging.getLogger(__name__)

NAIVE_NODE_WARNING = 20000


class Command(PipelineCommand):
    help = "Detect preliminary groups, apply the domain/site gates and name them G1, G2, ..."

    def add_command_arguments(self, parser):
        parser.add_argument("--verify", action="store_true",
                            help="Cross-check the components against the naive fixpoint closure")

    def run(self, verify=False, **options):
        graph = self.store.load_graph()
        partition = connected_components(graph)

        if verify:
            if len(graph) > NAIVE_NODE_WARNING:
                logger.warning("naive closure over %d nodes is quadratic and will be slow", len(graph))
            if naive_fixpoint_components(graph).node_sets() != partition.node_sets():
                raise ScamGraphError("connected components disagree with the naive fixpoint closure")
            logger.info("verified %d components against the naive closure", len(partition))

        kept, dropped = select_groups(partition, self.config.filter)
        summary = summarize_groups(kept, stats(graph))
        dropped_totals = dropped_summary(dropped)

        self.store.write_json("groups", {
            "filter": self.config.filter.model_dump(mode="json"),
            "component_count": len(partition),
            "summary": summary.model_dump(mode="json"),
            "dropped_summary": dropped_totals.model_dump(mode="json"),
            "groups": [group_to_row(graph, group) for group in kept],
            "dropped": [group_to_row(graph, group) for group in dropped],
        })
        self.store.write_text("report_groups.md", groups_report(self.meta, kept, summary, dropped_totals))

        verified = " (verified)" if verify else ""
        return f"group: {len(partition)} components, {len(kept)} groups kept, {len(dropped)} dropped{verified}"
