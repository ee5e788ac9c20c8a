"""ecattrib synth: synthetic observation records with planted actors."""
import json

from bootstrap.pipeline_config import SYNTH_PRESETS, FileFormat, SynthConfig, serialize_content
from scamgraph.exceptions import InputError
from scamgraph.management.pipeline import PipelineCommand
from scamgraph.synth import generate, to_input_rows


class Command(PipelineCommand):
    help = "Generate synth_records.jsonl and truth.jsonl from a preset or a synth configuration file."

    def add_command_arguments(self, parser):
        parser.add_argument("--preset", choices=sorted(SYNTH_PRESETS), default="toy",
                            help="Bundled generator preset (ignored with --synth-config)")
        parser.add_argument("--synth-config", help="Synth configuration file (JSON or YAML)")
        parser.add_argument("--actors", type=int, help="Override the primary tier's actor count")
        parser.add_argument("--bridges", type=int, help="Planted cross-actor bridge entities")
        parser.add_argument("--cf-encoded-prob", type=float,
                            help="Fraction of emails written in Cloudflare-encoded form")

    def synth_config(self, preset="toy", synth_config=None, actors=None, bridges=None,
                     cf_encoded_prob=None) -> SynthConfig:
        """
        Raises:
            InputError: If the synth configuration file is missing or unparseable.
        """
        if synth_config:
            try:
                data = SynthConfig.from_file(synth_config).model_dump(mode="json")
            except FileNotFoundError as e:
                raise InputError(str(e)) from e
        else:
            data = dict(SYNTH_PRESETS[preset])

        if actors is not None:
            data["actor_count"] = actors
            data["domain_counts"] = None
        if bridges is not None:
            data["cross_actor_bridge_count"] = bridges
        if cf_encoded_prob is not None:
            data["cf_encoded_prob"] = cf_encoded_prob
        if self.explicit_seed:
            data["seed"] = self.config.seed
        return SynthConfig.model_validate(data)

    def run(self, preset="toy", synth_config=None, actors=None, bridges=None, cf_encoded_prob=None, **options):
        cfg = self.synth_config(preset, synth_config, actors, bridges, cf_encoded_prob)
        records, truth = generate(cfg)

        self.store.write_chunks("synth_records.jsonl", (
            json.dumps(row, separators=(",", ":"), ensure_ascii=False) + "\n"
            for row in to_input_rows(records, cfg)
        ))
        self.store.write_text("truth.jsonl", truth.to_jsonl())
        self.store.write_text("synth_config.json", serialize_content({
            **self.store.header("synth_config"),
            "preset": None if synth_config else preset,
            "config": cfg.model_dump(mode="json"),
            "planted_bridges": [bridge.model_dump(mode="json") for bridge in truth.bridges],
        }, FileFormat.JSON))

        return (f"synth: {cfg.total_actors} actors, {len(truth.domain_actor)} domains, "
                f"{len(records)} sites, {len(truth.bridges)} bridges (seed {cfg.seed})")
