"""ecattrib export: GraphML and CSV edge list for external visualization."""
import io

from scamgraph.exceptions import InputError
from scamgraph.export import export_graphml, write_edge_csv
from scamgraph.management.pipeline import PipelineCommand


class Command(PipelineCommand):
    help = "Export the entity graph, or one group's slice of it, as GraphML and a CSV edge list."

    def add_command_arguments(self, parser):
        self.add_level_argument(parser)
        parser.add_argument("--group", help="Export only this group or subgroup (e.g. G1 or G1-2)")

    def run(self, level="auto", group=None, **options):
        graph = self.store.load_graph()

        groups = []
        if group or self.store.exists("groups"):
            groups, level = self.resolve_groups(graph, level)
        group_of = {node_id: item.group_id for item in groups for node_id in item.member_node_ids}

        members = None
        suffix = ""
        if group:
            selected = next((item for item in groups if item.group_id == group), None)
            if selected is None:
                raise InputError(f"no {level.value} group named {group}")
            members = selected.member_node_ids
            suffix = f"_{group}"

        graphml = self.store.path(f"graph{suffix}.graphml")
        try:
            self.store.out_dir.mkdir(parents=True, exist_ok=True)
            nodes, edges = export_graphml(graph, graphml, members, group_of)
        except OSError as e:
            raise InputError(f"cannot write {graphml}: {e}") from e

        buffer = io.StringIO()
        write_edge_csv(graph, buffer, members)
        self.store.write_text(f"edges{suffix}.csv", buffer.getvalue())

        scope = group or "full graph"
        return f"export: {scope}, {nodes} nodes, {edges} edges -> {graphml.name}"
