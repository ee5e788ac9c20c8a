"""
URL attribution and per-group infrastructure indicators.

An AttributionIndex answers "which group does this URL belong to" by exact
site match first and registrable-domain match second. Indicators list each
group's Matomo servers (full URLs plus hosts) and its 51.la IDs, the latter
flagged as low confidence.
"""
import csv
import logging
from collections import defaultdict
from datetime import date
from enum import Enum
from typing import Iterable
from urllib.parse import urlsplit

from pydantic import BaseModel, Field, model_validator

from bootstrap.pipeline_config import EntityKind, GroupLevel
from .graph import EntityGraph
from .ingest import defang, normalize_site, refang
from .timeseries import group_sort_key

logger = logging.getLogger(__name__)


class MatchLevel(str, Enum):
    SITE = "Site"
    DOMAIN = "Domain"
    NONE = "None"


class Confidence(str, Enum):
    HIGH = "high"
    LOW = "low"


class AttributionResult(BaseModel):
    query_url: str
    match_level: MatchLevel
    group_id: str | None = None
    matched_key: str | None = None
    evidence_count: int = Field(default=0, ge=0, description="Known sites under the matched domain")
    first_seen: date | None = None
    in_dataset: bool = Field(default=False, description="Domain is in the graph, grouped or not")
    level: GroupLevel | None = None

    @model_validator(mode="after")
    def validate_match(self) -> "AttributionResult":
        if (self.match_level == MatchLevel.NONE) != (self.group_id is None):
            raise ValueError("match_level None must coincide with an absent group_id")
        return self

    def presented(self, defanged: bool) -> "AttributionResult":
        """Copy with URL fields defanged (or refanged) for output."""
        convert = defang if defanged else (lambda value: value)
        update = {"query_url": convert(refang(self.query_url))}
        if self.matched_key is not None:
            update["matched_key"] = convert(self.matched_key)
        return self.model_copy(update=update)


class AttributionIndex:
    """
    Lookup structure over one partition snapshot.

    Only domains of named cells are attributable; hosts of other domains
    report in_dataset without a group.
    """

    def __init__(self, graph: EntityGraph, groups: Iterable, level: GroupLevel, suffixes):
        self.graph = graph
        self.level = GroupLevel(level)
        self.suffixes = suffixes
        self.domain_group = {}
        for group in groups:
            for node_id in group.member_node_ids:
                node = graph.nodes[node_id]
                if node.kind == EntityKind.DOMAIN:
                    self.domain_group[node.key] = group.group_id

    def attribute(self, url: str) -> AttributionResult:
        """
        Raises:
            InputError: If the URL has no valid hostname.
        """
        site = normalize_site(url, self.suffixes)
        node = self.graph.find(EntityKind.DOMAIN, site.domain)
        group_id = self.domain_group.get(site.domain)
        if node is None or group_id is None:
            return AttributionResult(query_url=url, match_level=MatchLevel.NONE, in_dataset=node is not None)

        sites = self.graph.sites(node.id)
        if site.site_host in sites:
            level, key, first_seen = MatchLevel.SITE, site.site_host, sites[site.site_host][0]
        else:
            level, key, first_seen = MatchLevel.DOMAIN, site.domain, self.graph.first_seen(site.domain)
        return AttributionResult(
            query_url=url,
            match_level=level,
            group_id=group_id,
            matched_key=key,
            evidence_count=len(sites),
            first_seen=first_seen,
            in_dataset=True,
            level=self.level,
        )


def attribute_url(url: str, index: AttributionIndex) -> AttributionResult:
    return index.attribute(url)


# =============================================================================
# Indicators
# =============================================================================

class GroupIndicators(BaseModel):
    group_id: str
    matomo_urls: list[str] = Field(default_factory=list)
    matomo_hosts: list[str] = Field(default_factory=list)
    la51_ids: list[str] = Field(default_factory=list)
    la51_low_confidence: bool = Field(
        default=True,
        description="51.la IDs are per-site and keep growing; weak evidence on their own"
    )
    shared_matomo_hosts: dict[str, list[str]] = Field(
        default_factory=dict,
        description="Matomo host -> other groups using it (possible relationship)"
    )


def matomo_host(url: str) -> str:
    return urlsplit(url).hostname or url


def matomo_indicators(graph: EntityGraph, groups: Iterable) -> list[GroupIndicators]:
    """
    Indicator report per group, in group order; groups without indicators
    still get an (empty) entry.
    """
    reports = []
    host_groups = defaultdict(set)
    for group in sorted(groups, key=lambda g: group_sort_key(g.group_id)):
        urls, la51 = [], []
        for node_id in group.member_node_ids:
            node = graph.nodes[node_id]
            if node.kind == EntityKind.MATOMO:
                urls.append(node.key)
            elif node.kind == EntityKind.LA51:
                la51.append(node.key)
        hosts = sorted({matomo_host(url) for url in urls})
        for host in hosts:
            host_groups[host].add(group.group_id)
        reports.append(GroupIndicators(
            group_id=group.group_id,
            matomo_urls=sorted(urls),
            matomo_hosts=hosts,
            la51_ids=sorted(la51),
        ))

    for report in reports:
        shared = {
            host: sorted(host_groups[host] - {report.group_id}, key=group_sort_key)
            for host in report.matomo_hosts
            if len(host_groups[host]) > 1
        }
        if shared:
            report.shared_matomo_hosts = shared
            logger.info("%s shares Matomo hosts with other groups: %s", report.group_id, ", ".join(shared))
    return reports


def indicator_rows(reports: Iterable[GroupIndicators], defanged: bool = True):
    """(group_id, indicator_type, value, confidence) tuples."""
    convert = defang if defanged else (lambda value: value)
    for report in reports:
        for url in report.matomo_urls:
            yield report.group_id, "matomo_url", convert(url), Confidence.HIGH.value
        for host in report.matomo_hosts:
            yield report.group_id, "matomo_host", convert(host), Confidence.HIGH.value
        for la51_id in report.la51_ids:
            yield report.group_id, "la51_id", la51_id, Confidence.LOW.value


def write_indicator_csv(reports: Iterable[GroupIndicators], stream, defanged: bool = True) -> int:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["group_id", "indicator_type", "value", "confidence"])
    rows = 0
    for row in indicator_rows(reports, defanged):
        writer.writerow(row)
        rows += 1
    return rows


def presented_indicators(report: GroupIndicators, defanged: bool) -> GroupIndicators:
    if not defanged:
        return report
    return report.model_copy(update={
        "matomo_urls": [defang(url) for url in report.matomo_urls],
        "matomo_hosts": [defang(host) for host in report.matomo_hosts],
        "shared_matomo_hosts": {defang(host): groups for host, groups in report.shared_matomo_hosts.items()},
    })
