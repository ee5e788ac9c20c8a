#!/usr/bin/env python
"""
Tests for record ingestion: URL normalization, email decoding and
line-level error reporting.
"""
import io
import json
import os
import random
import tempfile
from unittest import mock
from datetime import date
from pathlib import Path

import django

# Setup Django
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'ecattrib.settings')
django.setup()

from django.test import SimpleTestCase
from pydantic import ValidationError

from bootstrap.pipeline_config import CollectionWindow
from scamgraph.exceptions import DecodeError, InputError
from scamgraph.ingest import (
    SiteRecord,
    canonical_order,
    decode_cf_email,
    defang,
    normalize_email,
    normalize_matomo_url,
    normalize_site,
    parse_files,
    parse_jsonl_parallel,
    parse_observed_at,
    parse_records,
    refang,
)
from scamgraph.suffixes import SuffixSnapshot

FIXTURES = Path(__file__).resolve().parent / "scamgraph" / "fixtures"
SUFFIXES = SuffixSnapshot.bundled()


def jsonl(*lines):
    return io.BytesIO("\n".join(lines).encode("utf-8") + b"\n")


def encode(email, key):
    """Reference encoder written independently of the synth module."""
    data = bytearray([key])
    data.extend(b ^ key for b in email.encode("utf-8"))
    return data.hex()


class DefangTests(SimpleTestCase):

    def test_defang_touches_only_the_host(self):
        self.assertEqual(defang("https://a.b.shop/x.html?q=1.2"), "https://a[.]b[.]shop/x.html?q=1.2")

    def test_refang_inverts_defang(self):
        for url in ("https://a.b.shop/x.html", "shop.example.top", "http://h.xyz:8080/m.php"):
            self.assertEqual(refang(defang(url)), url)

    def test_refang_inverts_defang_for_random_hostnames(self):
        rng = random.Random(2024)
        alphabet = "abcdefghijklmnopqrstuvwxyz0123456789-"
        for _ in range(1000):
            labels = [
                "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12))).strip("-") or "x"
                for _ in range(rng.randint(1, 5))
            ]
            host = ".".join(labels)
            for value in (host, f"https://{host}/p.html", f"http://{host}:8080/a.b?c=d.e"):
                self.assertEqual(refang(defang(value)), value)

    def test_empty_string(self):
        self.assertEqual(defang(""), "")
        self.assertEqual(refang(""), "")

    def test_protocol_relative_url(self):
        self.assertEqual(defang("//shop.example.top/a"), "//shop[.]example[.]top/a")
        self.assertEqual(refang("//shop[.]example[.]top/a"), "//shop.example.top/a")

    def test_userinfo_is_left_alone(self):
        url = "https://user.name@shop.example.top/"
        self.assertEqual(defang(url), "https://user.name@shop[.]example[.]top/")
        self.assertEqual(refang(defang(url)), url)


class NormalizeSiteTests(SimpleTestCase):

    def test_multi_label_suffix(self):
        site = normalize_site("https://Shop.Example.co.uk/path?x=1", SUFFIXES)
        self.assertEqual((site.site_host, site.domain, site.suffix_fallback),
                         ("shop.example.co.uk", "example.co.uk", False))

    def test_defanged_host(self):
        site = normalize_site("qbague[.]voidnetwork[.]shop", SUFFIXES)
        self.assertEqual((site.site_host, site.domain), ("qbague.voidnetwork.shop", "voidnetwork.shop"))

    def test_trailing_dot_and_port(self):
        site = normalize_site("http://www.alphamart.shop.:8080/", SUFFIXES)
        self.assertEqual((site.site_host, site.domain), ("www.alphamart.shop", "alphamart.shop"))

    def test_ip_literal_falls_back_to_host(self):
        site = normalize_site("http://203.0.113.7/shop", SUFFIXES)
        self.assertEqual((site.site_host, site.domain, site.suffix_fallback), ("203.0.113.7", "203.0.113.7", True))

    def test_unknown_suffix_falls_back_to_host(self):
        site = normalize_site("https://store.example.notarealtld/", SUFFIXES)
        self.assertEqual(site.domain, "store.example.notarealtld")
        self.assertTrue(site.suffix_fallback)

    def test_no_hostname(self):
        for url in ("", "   ", "https:///path-only", "https://bad host.shop/"):
            with self.assertRaises(InputError):
                normalize_site(url, SUFFIXES)


class EmailTests(SimpleTestCase):

    def test_normalize_email(self):
        self.assertEqual(normalize_email(" Sales@X1mail[.]test "), "sales@x1mail.test")
        self.assertIsNone(normalize_email("no-at-sign"))
        self.assertIsNone(normalize_email("two@@signs.test"))

    def test_decode_known_payload(self):
        self.assertEqual(decode_cf_email("017641766c60686d2f75647275"), "w@wmail.test")
        self.assertEqual(decode_cf_email("006140622e63"), "a@b.c")

    def test_decode_matches_reference_encoder(self):
        rng = random.Random(5)
        alphabet = "abcdefghijklmnopqrstuvwxyz0123456789._-"
        for _ in range(1000):
            local = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
            email = f"{local}@{rng.choice(['x1mail', 'relay', 'shop'])}.test"
            key = rng.randrange(256)
            self.assertEqual(decode_cf_email(encode(email, key)), email)

    def test_decode_rejects_malformed_payloads(self):
        for payload in ("", "01", "0176417", "zz7641766c", "01" + "ff" * 3):
            with self.assertRaises(DecodeError):
                decode_cf_email(payload)


class MatomoUrlTests(SimpleTestCase):

    def test_canonical_form(self):
        self.assertEqual(
            normalize_matomo_url("HTTPS://Stat.Example.xyz:443/matomo.php/?idsite=3#x"),
            "https://stat.example.xyz/matomo.php",
        )

    def test_missing_scheme_means_https(self):
        self.assertEqual(normalize_matomo_url("stat.la51[.]xyz/matomo.php"), "https://stat.la51.xyz/matomo.php")
        self.assertEqual(normalize_matomo_url("//stat.la51.xyz/"), "https://stat.la51.xyz")

    def test_non_default_port_is_kept(self):
        self.assertEqual(normalize_matomo_url("http://stat.la51.xyz:8080/m.php"), "http://stat.la51.xyz:8080/m.php")

    def test_unusable_values(self):
        self.assertIsNone(normalize_matomo_url(""))
        self.assertIsNone(normalize_matomo_url("https:///matomo.php"))


class ObservedAtTests(SimpleTestCase):

    def test_date(self):
        self.assertEqual(parse_observed_at("2024-10-02"), date(2024, 10, 2))

    def test_timestamp_is_truncated_in_utc(self):
        self.assertEqual(parse_observed_at("2024-10-02T23:30:00-05:00"), date(2024, 10, 3))
        self.assertEqual(parse_observed_at("2024-10-02T23:30:00"), date(2024, 10, 2))

    def test_invalid(self):
        with self.assertRaises(ValueError):
            parse_observed_at("2024-13-45")


class SiteRecordTests(SimpleTestCase):

    def test_entity_lists_become_sorted_sets(self):
        record = SiteRecord(site_url="https://a.b.shop/", site_host="a.b.shop", domain="b.shop",
                            emails=["z@x.test", "a@x.test", "z@x.test"], observed_at=date(2024, 1, 1))
        self.assertEqual(record.emails, ("a@x.test", "z@x.test"))

    def test_domain_must_be_a_suffix_of_the_host(self):
        with self.assertRaises(ValidationError):
            SiteRecord(site_url="x", site_host="a.b.shop", domain="ab.shop", observed_at=date(2024, 1, 1))

    def test_input_row_round_trip(self):
        record = SiteRecord(site_url="https://a.b.shop/", site_host="a.b.shop", domain="b.shop",
                            emails=["a@x.test"], la51_ids=["2134"], observed_at=date(2024, 1, 1))
        row = record.to_input_row()
        parsed = parse_records(jsonl(json.dumps(row)), "jsonl", SUFFIXES)
        self.assertEqual(parsed.records, [record])


class ParseRecordsTests(SimpleTestCase):

    def test_line_issues(self):
        stream = jsonl(
            '{"url": "https://a.alpha.shop/", "emails": ["A@x.test"], "observed_at": "2024-09-01"}',
            '{"url": "https://b.alpha.shop/", "observed_at": ',
            '{"emails": ["a@x.test"], "observed_at": "2024-09-01"}',
            '{"url": "https://c.alpha.shop/", "observed_at": "2024-02-30"}',
            '{"url": "https://d.alpha.shop/", "observed_at": "2023-01-01"}',
            '{"url": "https://e.alpha.shop/", "emails": ["nope", "b@x.test"], "observed_at": "2024-09-02"}',
            '{"url": "https://f.alpha.shop/", "emails_cfencoded": ["0g"], "observed_at": "2024-09-03"}',
            '{"url": "https://g.alpha.shop/", "emails": "a@x.test", "observed_at": "2024-09-03"}',
            '["not", "an", "object"]',
        )
        window = CollectionWindow(start_date=date(2024, 1, 1), end_date=date(2024, 12, 31))
        result = parse_records(stream, "jsonl", SUFFIXES, window, source="t.jsonl")

        self.assertEqual([r.site_host for r in result.records], ["a.alpha.shop", "e.alpha.shop", "f.alpha.shop"])
        self.assertEqual(
            [(issue.line, issue.reason) for issue in result.errors],
            [(2, "bad_json"), (3, "missing_field"), (4, "bad_date"), (5, "out_of_window"),
             (8, "bad_field"), (9, "bad_json")],
        )
        self.assertEqual([(issue.line, issue.reason) for issue in result.warnings],
                         [(6, "bad_email"), (7, "bad_cf_email")])
        self.assertTrue(all(issue.source == "t.jsonl" for issue in result.errors))

    def test_blank_lines_are_skipped(self):
        stream = jsonl('{"url": "a.alpha.shop", "observed_at": "2024-09-01"}', "", "   ")
        result = parse_records(stream, "jsonl", SUFFIXES)
        self.assertEqual(len(result.records), 1)
        self.assertEqual(result.errors, [])

    def test_csv(self):
        stream = io.BytesIO(
            b"url,emails,matomo_urls,la51_ids,observed_at\n"
            b"https://a.alpha.shop/,a@x.test;b@x.test,stat.alpha.xyz/matomo.php,,2024-09-01\n"
            b"https://b.alpha.shop/,,,2134,2024-09-02,extra\n"
        )
        result = parse_records(stream, "csv", SUFFIXES)
        self.assertEqual(len(result.records), 1)
        record = result.records[0]
        self.assertEqual(record.emails, ("a@x.test", "b@x.test"))
        self.assertEqual(record.matomo_urls, ("https://stat.alpha.xyz/matomo.php",))
        self.assertEqual([(issue.line, issue.reason) for issue in result.errors], [(3, "bad_row")])

    def test_csv_without_required_columns(self):
        with self.assertRaises(InputError):
            parse_records(io.BytesIO(b"site,when\nx,y\n"), "csv", SUFFIXES)

    def test_csv_line_with_invalid_utf8_is_rejected_alone(self):
        stream = io.BytesIO(
            b"url,emails,observed_at\n"
            b"https://a.alpha.shop/,a@x.test,2024-09-01\n"
            b"https://b.alpha.shop/,\xff\xfe@x.test,2024-09-01\n"
            b"https://c.alpha.shop/,c@x.test,2024-09-02\n"
        )
        result = parse_records(stream, "csv", SUFFIXES, source="t.csv")
        self.assertEqual([(r.site_host, r.domain) for r in result.records],
                         [("a.alpha.shop", "alpha.shop"), ("c.alpha.shop", "alpha.shop")])
        self.assertEqual([(issue.line, issue.reason) for issue in result.errors], [(3, "bad_row")])

    def test_parsed_records_pass_model_validation(self):
        result = parse_files([FIXTURES / "toy_records.jsonl"], "jsonl", SUFFIXES)
        for record in result.records:
            self.assertEqual(SiteRecord.model_validate(record.to_artifact_row()), record)

    def test_toy_fixture(self):
        window = CollectionWindow(start_date=date(2024, 8, 20), end_date=date(2024, 12, 31))
        result = parse_files([FIXTURES / "toy_records.jsonl"], "jsonl", SUFFIXES, window)
        self.assertEqual(len(result.records), 18)
        self.assertEqual([(issue.line, issue.reason) for issue in result.errors], [(18, "bad_date")])
        w2 = next(r for r in result.records if r.site_host == "w2.shop")
        self.assertEqual(w2.emails, ("w@wmail.test",))

    def test_missing_file(self):
        with self.assertRaises(InputError):
            parse_files([Path(tempfile.gettempdir()) / "no-such-records.jsonl"], "jsonl", SUFFIXES)

    def test_canonical_order_ignores_input_order(self):
        lines = (FIXTURES / "toy_records.jsonl").read_text(encoding="utf-8").splitlines()
        shuffled = list(lines)
        random.Random(3).shuffle(shuffled)
        first = parse_records(jsonl(*lines), "jsonl", SUFFIXES).records
        second = parse_records(jsonl(*shuffled), "jsonl", SUFFIXES).records
        self.assertEqual(canonical_order(first), canonical_order(second))


class ParallelParseTests(SimpleTestCase):

    def setUp(self):
        self.window = CollectionWindow(start_date=date(2024, 8, 20), end_date=date(2024, 12, 31))

    def test_chunks_merge_in_input_order(self):
        path = FIXTURES / "toy_records.jsonl"
        with open(path, "rb") as stream:
            sequential = parse_records(stream, "jsonl", SUFFIXES, self.window, source="toy")
        with open(path, "rb") as stream:
            parallel = parse_jsonl_parallel(stream, SUFFIXES, self.window, source="toy", workers=2, chunk_lines=4)
        self.assertEqual(parallel.records, sequential.records)
        self.assertEqual(parallel.errors, sequential.errors)
        self.assertEqual(parallel.warnings, sequential.warnings)
        self.assertEqual([(issue.line, issue.reason) for issue in parallel.errors], [(18, "bad_date")])

    def test_parse_files_uses_workers_for_long_files(self):
        path = FIXTURES / "toy_records.jsonl"
        sequential = parse_files([path], "jsonl", SUFFIXES, self.window, workers=1)
        with mock.patch("scamgraph.ingest.PARALLEL_CHUNK_LINES", 5):
            parallel = parse_files([path], "jsonl", SUFFIXES, self.window, workers=2)
        self.assertEqual(parallel.records, sequential.records)
        self.assertEqual(parallel.errors, sequential.errors)


class SuffixSnapshotTests(SimpleTestCase):

    RULES = (
        "// local test list\n"
        "com\nuk\nco.uk\njp\n*.kawasaki.jp\n!city.kawasaki.jp\nshop\ntop\n"
    )

    def longest_rule(self, host, rules):
        """Registrable domain by direct longest-rule matching over the list text."""
        labels = host.split(".")

        def matches(rule):
            parts = rule.split(".")
            return len(parts) <= len(labels) and all(
                part in ("*", label) for part, label in zip(parts, labels[-len(parts):])
            )

        exception = next((rule[1:] for rule in rules if rule.startswith("!") and matches(rule[1:])), None)
        if exception is not None:
            depth = len(exception.split(".")) - 1
        else:
            depths = [len(rule.split(".")) for rule in rules if not rule.startswith("!") and matches(rule)]
            if not depths:
                return host, True
            depth = max(depths)
        if depth >= len(labels):
            return host, True
        return ".".join(labels[-(depth + 1):]), False

    def test_bundled_version(self):
        self.assertTrue(SUFFIXES.version.startswith("tldextract-"))
        self.assertEqual(SUFFIXES.registrable_domain("a.b.example.com"), ("example.com", False))

    def test_registrable_domain_matches_longest_rule(self):
        rules = [line for line in self.RULES.splitlines() if line and not line.startswith("//")]
        rng = random.Random(7)
        prefixes = ["a", "b", "x", "co", "city", "kawasaki", "www", "shop"]
        tails = ["com", "uk", "co.uk", "jp", "kawasaki.jp", "city.kawasaki.jp", "x.kawasaki.jp", "shop", "top", "zz"]
        hosts = [
            ".".join([rng.choice(prefixes) for _ in range(rng.randint(1, 3))] + [rng.choice(tails)])
            for _ in range(1000)
        ]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "suffixes.dat"
            path.write_text(self.RULES, encoding="utf-8")
            snapshot = SuffixSnapshot.from_path(path)
            for host in hosts:
                self.assertEqual(snapshot.registrable_domain(host), self.longest_rule(host, rules), host)
            # answers do not depend on which hosts were resolved first
            shuffled = list(hosts)
            rng.shuffle(shuffled)
            fresh = SuffixSnapshot.from_path(path)
            for host in shuffled:
                self.assertEqual(fresh.registrable_domain(host), self.longest_rule(host, rules), host)

    def test_wildcard_and_exception_rules(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "suffixes.dat"
            path.write_text(self.RULES, encoding="utf-8")
            snapshot = SuffixSnapshot.from_path(path)
            self.assertEqual(snapshot.registrable_domain("a.b.x.kawasaki.jp"), ("b.x.kawasaki.jp", False))
            self.assertEqual(snapshot.registrable_domain("a.city.kawasaki.jp"), ("city.kawasaki.jp", False))
            self.assertEqual(snapshot.registrable_domain("x.kawasaki.jp"), ("x.kawasaki.jp", True))
            self.assertIn("kawasaki.jp", snapshot.rule_names)
            self.assertIn("city.kawasaki.jp", snapshot.rule_names)

    def test_local_list(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "suffixes.dat"
            path.write_text("// local test list\nshop\nmall.shop\n", encoding="utf-8")
            snapshot = SuffixSnapshot.from_path(path)
            self.assertTrue(snapshot.version.startswith("psl-sha256-"))
            self.assertEqual(snapshot.registrable_domain("a.b.mall.shop"), ("b.mall.shop", False))
            self.assertEqual(snapshot.registrable_domain("a.b.shop"), ("b.shop", False))

    def test_missing_list(self):
        with self.assertRaises(InputError):
            SuffixSnapshot.from_path(Path(tempfile.gettempdir()) / "no-such-suffixes.dat")


if __name__ == '__main__':
    import unittest
    unittest.main()
