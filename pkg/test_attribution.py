#!/usr/bin/env python
"""
Tests for URL attribution and per-group indicators, on the toy fixture.
"""
import io
import os
from datetime import date
from pathlib import Path

import django

# Setup Django
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'ecattrib.settings')
django.setup()

from django.test import SimpleTestCase
from pydantic import ValidationError

from bootstrap.pipeline_config import CollectionWindow, FilterConfig, GroupLevel, SplitPolicy
from scamgraph.attribution import (
    AttributionIndex,
    AttributionResult,
    MatchLevel,
    attribute_url,
    indicator_rows,
    matomo_indicators,
    presented_indicators,
    write_indicator_csv,
)
from scamgraph.exceptions import InputError
from scamgraph.graph import build_graph
from scamgraph.grouping import Group, connected_components, select_groups
from scamgraph.ingest import parse_files
from scamgraph.refine import refine_groups
from scamgraph.suffixes import SuffixSnapshot

FIXTURES = Path(__file__).resolve().parent / "scamgraph" / "fixtures"
SUFFIXES = SuffixSnapshot.bundled()


def toy_partitions():
    window = CollectionWindow(start_date=date(2024, 8, 20), end_date=date(2024, 12, 31))
    records = parse_files([FIXTURES / "toy_records.jsonl"], "jsonl", SUFFIXES, window).records
    graph = build_graph(records)
    groups, _ = select_groups(connected_components(graph), FilterConfig(min_domains=2, min_sites=3))
    results = refine_groups(graph, groups, SplitPolicy(min_domains=2, min_sites=4))
    subgroups = [sub for result in results for sub in result.kept]
    return graph, groups, subgroups


class AttributionTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.graph, cls.groups, cls.subgroups = toy_partitions()
        cls.index = AttributionIndex(cls.graph, cls.subgroups, GroupLevel.REFINED, SUFFIXES)

    def test_refined_partition(self):
        self.assertEqual([g.group_id for g in self.groups], ["G1", "G2"])
        self.assertEqual([s.group_id for s in self.subgroups], ["G1-1", "G2-1"])

    def test_domain_match(self):
        result = attribute_url("rdpgk[.]minimumrisk[.]shop", self.index)
        self.assertEqual(
            (result.match_level, result.group_id, result.matched_key, result.evidence_count, result.first_seen),
            (MatchLevel.DOMAIN, "G1-1", "minimumrisk.shop", 3, date(2024, 8, 25)),
        )
        self.assertEqual(result.level, GroupLevel.REFINED)

    def test_site_match_wins(self):
        result = self.index.attribute("https://oggi.ayzgyonsale.shop/item/1")
        self.assertEqual(
            (result.match_level, result.group_id, result.matched_key, result.evidence_count, result.first_seen),
            (MatchLevel.SITE, "G2-1", "oggi.ayzgyonsale.shop", 2, date(2024, 10, 31)),
        )

    def test_subdomain_of_known_domain(self):
        result = self.index.attribute("madrk[.]cnhmxbest[.]shop")
        self.assertEqual((result.match_level, result.group_id, result.evidence_count),
                         (MatchLevel.DOMAIN, "G2-1", 1))

    def test_unknown_domain(self):
        result = self.index.attribute("https://unknown.example/")
        self.assertEqual((result.match_level, result.group_id, result.in_dataset), (MatchLevel.NONE, None, False))

    def test_known_but_ungrouped_domain(self):
        for url in ("https://lonely.shop/", "betaoutlet.top"):
            result = self.index.attribute(url)
            self.assertEqual((result.match_level, result.in_dataset), (MatchLevel.NONE, True))

    def test_preliminary_level(self):
        index = AttributionIndex(self.graph, self.groups, GroupLevel.PRELIMINARY, SUFFIXES)
        result = index.attribute("sale.betaoutlet.top")
        self.assertEqual((result.match_level, result.group_id, result.level),
                         (MatchLevel.SITE, "G1", GroupLevel.PRELIMINARY))

    def test_invalid_url(self):
        with self.assertRaises(InputError):
            self.index.attribute("https:///nothing")

    def test_presented_defangs(self):
        result = self.index.attribute("https://oggi.ayzgyonsale.shop/")
        shown = result.presented(True)
        self.assertEqual(shown.query_url, "https://oggi[.]ayzgyonsale[.]shop/")
        self.assertEqual(shown.matched_key, "oggi[.]ayzgyonsale[.]shop")
        self.assertEqual(result.presented(False).query_url, "https://oggi.ayzgyonsale.shop/")

    def test_none_requires_no_group(self):
        with self.assertRaises(ValidationError):
            AttributionResult(query_url="x.shop", match_level=MatchLevel.NONE, group_id="G1")
        with self.assertRaises(ValidationError):
            AttributionResult(query_url="x.shop", match_level=MatchLevel.SITE)


class IndicatorTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.graph, cls.groups, cls.subgroups = toy_partitions()

    def test_toy_indicators(self):
        reports = matomo_indicators(self.graph, self.subgroups)
        self.assertEqual([r.group_id for r in reports], ["G1-1", "G2-1"])
        self.assertEqual(reports[0].matomo_urls, [])
        self.assertEqual(reports[1].matomo_urls, ["https://stat.la51.xyz/matomo.php"])
        self.assertEqual(reports[1].matomo_hosts, ["stat.la51.xyz"])
        self.assertEqual(reports[1].la51_ids, ["21345678"])
        self.assertTrue(reports[1].la51_low_confidence)

    def test_csv_rows_and_confidence(self):
        buffer = io.StringIO()
        rows = write_indicator_csv(matomo_indicators(self.graph, self.subgroups), buffer)
        self.assertEqual(rows, 3)
        self.assertEqual(buffer.getvalue().splitlines(), [
            "group_id,indicator_type,value,confidence",
            "G2-1,matomo_url,https://stat[.]la51[.]xyz/matomo.php,high",
            "G2-1,matomo_host,stat[.]la51[.]xyz,high",
            "G2-1,la51_id,21345678,low",
        ])

    def test_rows_without_defang(self):
        rows = list(indicator_rows(matomo_indicators(self.graph, self.subgroups), defanged=False))
        self.assertIn(("G2-1", "matomo_host", "stat.la51.xyz", "high"), rows)

    def test_shared_hosts_are_annotated(self):
        matomo = [n for n in self.graph.nodes if n.label.startswith("matomo:")][0]
        a = Group(group_id="G10", member_node_ids=(matomo.id,))
        b = Group(group_id="G2", member_node_ids=(matomo.id,))
        reports = matomo_indicators(self.graph, [a, b])
        self.assertEqual([r.group_id for r in reports], ["G2", "G10"])
        self.assertEqual(reports[0].shared_matomo_hosts, {"stat.la51.xyz": ["G10"]})
        shown = presented_indicators(reports[0], True)
        self.assertEqual(shown.shared_matomo_hosts, {"stat[.]la51[.]xyz": ["G10"]})


if __name__ == '__main__':
    import unittest
    unittest.main()
