#!/usr/bin/env python
"""
Tests for the pipeline and synth configuration models.
"""
import os
import tempfile
from datetime import date
from pathlib import Path

import django

# Setup Django
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'ecattrib.settings')
django.setup()

from django.test import SimpleTestCase
from pydantic import ValidationError

from bootstrap.pipeline_config import (
    CollectionWindow,
    EntityKind,
    FileFormat,
    PipelineConfig,
    SplitPolicy,
    SynthConfig,
    detect_format,
    parse_content,
)

FIXTURES = Path(__file__).resolve().parent / "scamgraph" / "fixtures"
SAMPLE_CONFIG = Path(__file__).resolve().parent / "sample-pipeline.json"


class FormatTests(SimpleTestCase):

    def test_detect_format(self):
        self.assertEqual(detect_format('{"seed": 1}'), FileFormat.JSON)
        self.assertEqual(detect_format("seed: 1\n"), FileFormat.YAML)
        # flow-style YAML that is not valid JSON
        self.assertEqual(detect_format("{seed: 1}"), FileFormat.YAML)

    def test_parse_content(self):
        self.assertEqual(parse_content(""), {})
        with self.assertRaises(ValueError):
            parse_content("- just\n- a list\n")
        with self.assertRaises(ValueError):
            parse_content("seed: [1\n")


class PipelineConfigTests(SimpleTestCase):

    def test_defaults(self):
        config = PipelineConfig()
        self.assertEqual((config.filter.min_domains, config.filter.min_sites), (200, 2000))
        self.assertEqual((config.split.min_domains, config.split.min_sites), (200, 2000))
        self.assertEqual(config.split.excluded_kinds, [EntityKind.MATOMO])
        self.assertEqual(config.window, CollectionWindow(start_date=date(2022, 5, 20), end_date=date(2024, 12, 31)))
        self.assertTrue(config.defang)

    def test_toy_fixture(self):
        config = PipelineConfig.from_file(FIXTURES / "toy_pipeline.yaml")
        self.assertEqual((config.filter.min_domains, config.filter.min_sites), (2, 3))
        self.assertEqual((config.split.min_domains, config.split.min_sites), (2, 4))
        self.assertEqual(config.split.excluded_kinds, [EntityKind.MATOMO])
        self.assertEqual(config.window.start_date, date(2024, 8, 20))

    def test_sample_config_loads(self):
        config = PipelineConfig.from_file(SAMPLE_CONFIG)
        self.assertEqual(config.timeseries_metric, EntityKind.DOMAIN)

    def test_file_round_trip(self):
        config = PipelineConfig.from_file(FIXTURES / "toy_pipeline.yaml")
        with tempfile.TemporaryDirectory() as tmp:
            for fmt in ("json", "yaml"):
                path = Path(tmp) / f"pipeline.{fmt}"
                config.to_file(path, format=fmt)
                self.assertEqual(PipelineConfig.from_file(path), config)

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            PipelineConfig.from_file("/nonexistent/pipeline.yaml")

    def test_invalid_values(self):
        for data in (
            {"filter": {"min_domains": 0}},
            {"window": {"start_date": "2024-12-31", "end_date": "2024-01-01"}},
            {"split": {"excluded_kinds": ["website"]}},
            {"unknown_field": 1},
            {"version": "one"},
        ):
            with self.subTest(data=data), self.assertRaises(ValidationError):
                PipelineConfig.from_dict(data)

    def test_excluded_kinds_are_normalized(self):
        policy = SplitPolicy(excluded_kinds=["la51", "matomo", "la51"])
        self.assertEqual(policy.excluded_kinds, [EntityKind.MATOMO, EntityKind.LA51])
        self.assertTrue(policy.excludes(EntityKind.LA51))
        self.assertFalse(policy.excludes(EntityKind.EMAIL))

    def test_fingerprint(self):
        base = PipelineConfig()
        moved = PipelineConfig(inputs=["a.jsonl"], output_dir="elsewhere", seed=9)
        self.assertEqual(base.fingerprint("v1"), moved.fingerprint("v1"))
        self.assertNotEqual(base.fingerprint("v1"), base.fingerprint("v2"))
        gated = PipelineConfig(filter={"min_sites": 1000})
        self.assertNotEqual(base.fingerprint("v1"), gated.fingerprint("v1"))
        self.assertRegex(base.fingerprint("v1"), r"^sha256:[0-9a-f]{16}$")

    def test_partition_fingerprint_covers_records_and_gates_only(self):
        base = PipelineConfig()
        for other in (PipelineConfig(defang=False), PipelineConfig(timeseries_metric="email"),
                      PipelineConfig(ingest_workers=4)):
            self.assertEqual(base.partition_fingerprint("v1"), other.partition_fingerprint("v1"))
        self.assertNotEqual(base.fingerprint("v1"), PipelineConfig(defang=False).fingerprint("v1"))
        self.assertNotEqual(base.partition_fingerprint("v1"),
                            PipelineConfig(split={"min_sites": 10}).partition_fingerprint("v1"))
        self.assertNotEqual(base.partition_fingerprint("v1"), base.partition_fingerprint("v2"))

    def test_ingest_workers(self):
        self.assertEqual(PipelineConfig().ingest_workers, 0)
        self.assertEqual(PipelineConfig(ingest_workers=1).ingest_workers, 1)
        with self.assertRaises(ValidationError):
            PipelineConfig(ingest_workers=-1)

    def test_check_paths(self):
        config = PipelineConfig(inputs=[FIXTURES / "toy_records.jsonl", "missing.jsonl"])
        self.assertEqual(config.check_paths(), [Path("missing.jsonl")])

    def test_window_boundaries(self):
        window = CollectionWindow(start_date=date(2024, 2, 1), end_date=date(2024, 2, 29))
        self.assertTrue(window.starts_on_month_boundary and window.ends_on_month_boundary)
        self.assertFalse(CollectionWindow(end_date=date(2024, 2, 28)).ends_on_month_boundary)


class SynthConfigTests(SimpleTestCase):

    def test_preset_overrides(self):
        cfg = SynthConfig.preset("toy", seed=99, cross_actor_bridge_count=3)
        self.assertEqual((cfg.seed, cfg.cross_actor_bridge_count, cfg.actor_count), (99, 3, 10))
        with self.assertRaises(KeyError):
            SynthConfig.preset("nope")

    def test_domain_counts_must_match_actors(self):
        with self.assertRaises(ValidationError):
            SynthConfig(actor_count=3, domain_counts=[1, 2])
        with self.assertRaises(ValidationError):
            SynthConfig(actor_count=2, domain_counts=[1, 0], extra_tiers=[])
        with self.assertRaises(ValidationError):
            SynthConfig(extra_tiers=[{"count": 2, "domain_counts": [3]}])

    def test_distribution_bounds(self):
        with self.assertRaises(ValidationError):
            SynthConfig(domains_per_actor={"kind": "uniform", "minimum": 9, "maximum": 3})

    def test_from_yaml_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "synth.yaml"
            path.write_text("actor_count: 4\ncross_actor_bridge_count: 1\nseed: 5\n", encoding="utf-8")
            cfg = SynthConfig.from_file(path)
        self.assertEqual((cfg.actor_count, cfg.cross_actor_bridge_count, cfg.seed), (4, 1, 5))
        self.assertEqual(len(cfg.tiers), 1)


if __name__ == '__main__':
    import unittest
    unittest.main()
