"""ecattrib evaluate: pairwise recovery scores against a planted truth."""
from pathlib import Path

from scamgraph.exceptions import InputError
from scamgraph.management.pipeline import PipelineCommand
from scamgraph.synth import SynthGroundTruth, evaluate


class Command(PipelineCommand):
    help = "Score the detected partition against truth.jsonl; write evaluation.json."

    def add_command_arguments(self, parser):
        self.add_level_argument(parser)
        parser.add_argument("--truth", help="Ground truth JSONL (default: truth.jsonl in the output directory)")

    def run(self, level="auto", truth=None, **options):
        truth_path = Path(truth) if truth else self.store.path("truth.jsonl")
        try:
            with open(truth_path, encoding="utf-8") as f:
                ground_truth = SynthGroundTruth.from_jsonl(f)
        except OSError as e:
            raise InputError(f"cannot read ground truth {truth_path}: {e}") from e

        graph = self.store.load_graph()
        groups, level = self.resolve_groups(graph, level)
        predicted = [
            sorted(graph.nodes[node_id].key for node_id in group.member_node_ids if graph.is_domain(node_id))
            for group in groups
        ]
        report = evaluate(predicted, ground_truth)

        self.store.write_json("evaluation", {
            "level": level.value,
            "groups": len(groups),
            **report.model_dump(mode="json"),
        })
        exact = "exact match" if report.exact_match else "not exact"
        return (f"evaluate: {level.value} P={report.pairwise_precision:.4f} "
                f"R={report.pairwise_recall:.4f} F1={report.pairwise_f1:.4f} ({exact})")
