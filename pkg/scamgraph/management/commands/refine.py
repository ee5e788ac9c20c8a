"""ecattrib refine: split preliminary groups at cut entities into named subgroups."""
import logging

from scamgraph.artifacts import group_to_row
from scamgraph.exceptions import ScamGraphError
from scamgraph.management.pipeline import PipelineCommand
from scamgraph.refine import exhaustive_cut_entities, find_cut_entities, refine_groups
from scamgraph.reports import subgroups_report

logger = logging.getLogger(__name__)

# exhaustive removal is quadratic; larger groups are not cross-checked
VERIFY_NODE_LIMIT = 3000


class Command(PipelineCommand):
    help = "Split groups by single-entity removal, name subgroups Gk-N and apply the site gate."

    def add_command_arguments(self, parser):
        parser.add_argument("--verify", action="store_true",
                            help="Cross-check cut entities against exhaustive single removal")

    def run(self, verify=False, **options):
        graph = self.store.load_graph()
        groups, _ = self.store.load_groups(graph)
        policy = self.config.split

        if verify:
            for group in groups:
                if len(group.member_node_ids) > VERIFY_NODE_LIMIT:
                    logger.warning("%s has %d nodes; skipping exhaustive verification",
                                   group.group_id, len(group.member_node_ids))
                    continue
                fast = find_cut_entities(graph, group.member_node_ids, policy)
                slow = exhaustive_cut_entities(graph, group.member_node_ids, policy)
                if fast != slow:
                    raise ScamGraphError(f"{group.group_id}: cut entities disagree with exhaustive removal")

        results = refine_groups(graph, groups, policy)

        self.store.write_json("subgroups", {
            "split": policy.model_dump(mode="json"),
            "parents": [
                {
                    "parent_id": result.parent_id,
                    "removed_cut_entities": [node.label for node in result.removed_cut_entities],
                    "dropped_fragments": result.dropped_fragments.model_dump(mode="json"),
                    "kept": [sub.group_id for sub in result.kept],
                    "subgroups": [group_to_row(graph, sub) for sub in result.subgroups],
                }
                for result in results
            ],
        })
        self.store.write_text("report_subgroups.md", subgroups_report(self.meta, results))

        total = sum(len(r.subgroups) for r in results)
        kept = sum(len(r.kept) for r in results)
        cuts = sum(len(r.removed_cut_entities) for r in results)
        return f"refine: {len(results)} groups -> {total} subgroups, {kept} kept, {cuts} cut entities"
