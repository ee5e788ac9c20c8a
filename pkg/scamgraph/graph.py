"""
The typed entity-link graph.

Domain nodes connect to Email (link1), MatomoServer (link2) and 51.la ID
(link3) nodes by co-occurrence in observation records. Node ids are interned
in (kind, key) order so that a graph built from any permutation of the same
records is identical.
"""
import logging
from collections import defaultdict
from datetime import date
from enum import Enum
from typing import Iterable, Iterator, NamedTuple

from pydantic import BaseModel, ConfigDict

from bootstrap.pipeline_config import EntityKind

logger = logging.getLogger(__name__)


class LinkKind(str, Enum):
    DOMAIN_EMAIL = "link1"
    DOMAIN_MATOMO = "link2"
    DOMAIN_LA51 = "link3"


KIND_ORDER = (EntityKind.DOMAIN, EntityKind.EMAIL, EntityKind.MATOMO, EntityKind.LA51)

LINK_KIND_BY_ENTITY = {
    EntityKind.EMAIL: LinkKind.DOMAIN_EMAIL,
    EntityKind.MATOMO: LinkKind.DOMAIN_MATOMO,
    EntityKind.LA51: LinkKind.DOMAIN_LA51,
}


class EntityNode(NamedTuple):
    kind: EntityKind
    key: str
    id: int

    @property
    def label(self) -> str:
        """Member notation used in artifacts, e.g. email:sales@x1mail.test."""
        return f"{self.kind.value}:{self.key}"


class DatasetStats(BaseModel):
    """Dataset totals in the shape of the dataset overview table."""

    model_config = ConfigDict(frozen=True)

    domains: int = 0
    emails: int = 0
    matomo_servers: int = 0
    la51_ids: int = 0
    total_entities: int = 0
    total_sites: int = 0


class EntityGraph:
    """
    Immutable adjacency structure over interned EntityNodes.

    Attributes:
        nodes: EntityNodes indexed by id.
        site_index: domain node id -> {site_host: sorted observation dates}.
    """

    __slots__ = ("nodes", "site_index", "_adjacency", "_lookup")

    def __init__(self, nodes, adjacency, site_index):
        self.nodes = tuple(nodes)
        self.site_index = site_index
        self._adjacency = tuple(adjacency)
        self._lookup = {(node.kind, node.key): node for node in self.nodes}

    def __len__(self):
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return sum(len(adj) for adj in self._adjacency) // 2

    def neighbors(self, node_id: int) -> tuple[int, ...]:
        """Sorted neighbor ids."""
        return self._adjacency[node_id]

    def degree(self, node_id: int) -> int:
        return len(self._adjacency[node_id])

    def find(self, kind: EntityKind, key: str) -> EntityNode | None:
        return self._lookup.get((EntityKind(kind), key))

    def is_domain(self, node_id: int) -> bool:
        return self.nodes[node_id].kind == EntityKind.DOMAIN

    def domain_ids(self) -> Iterator[int]:
        return (node.id for node in self.nodes if node.kind == EntityKind.DOMAIN)

    def edges(self) -> Iterator[tuple[int, int, LinkKind]]:
        """Each edge once as (domain id, entity id, link kind), in id order."""
        for node in self.nodes:
            if node.kind != EntityKind.DOMAIN:
                continue
            for other in self._adjacency[node.id]:
                yield node.id, other, LINK_KIND_BY_ENTITY[self.nodes[other].kind]

    def sites(self, domain_id: int) -> dict[str, tuple[date, ...]]:
        return self.site_index.get(domain_id, {})

    def site_count(self, domain_id: int) -> int:
        return len(self.site_index.get(domain_id, ()))

    def first_seen(self, domain: str, site_host: str | None = None) -> date | None:
        """
        Earliest observation of a domain, or of one of its sites.

        Returns None when the domain (or the site) is unknown.
        """
        node = self.find(EntityKind.DOMAIN, domain)
        if node is None:
            return None
        sites = self.sites(node.id)
        if site_host is not None:
            dates = sites.get(site_host)
            return dates[0] if dates else None
        return min((dates[0] for dates in sites.values() if dates), default=None)

    @classmethod
    def from_edges(cls, edges: Iterable[tuple], domains: Iterable[str] = ()) -> "EntityGraph":
        """
        Rebuild a graph from an edge list.

        Args:
            edges: (source_kind, source_key, target_kind, target_key) tuples
                where one endpoint is a domain.
            domains: Extra domains to include as isolated nodes.

        Raises:
            ValueError: If an edge does not join a domain to a non-domain.
        """
        sites = {domain: {} for domain in domains}
        links = {kind: set() for kind in LINK_KIND_BY_ENTITY}
        for source_kind, source_key, target_kind, target_key in edges:
            source_kind, target_kind = EntityKind(source_kind), EntityKind(target_kind)
            if source_kind != EntityKind.DOMAIN:
                source_kind, source_key, target_kind, target_key = target_kind, target_key, source_kind, source_key
            if source_kind != EntityKind.DOMAIN or target_kind == EntityKind.DOMAIN:
                raise ValueError(f"edge {source_key} - {target_key} does not join a domain to an entity")
            sites.setdefault(source_key, {})
            links[target_kind].add((target_key, source_key))
        return _assemble(sites, links)


def _assemble(domain_sites: dict, links: dict) -> EntityGraph:
    """
    Intern nodes in (kind, key) order and wire the adjacency.

    Args:
        domain_sites: domain -> {site_host: observation dates}.
        links: entity kind -> set of (entity key, domain) pairs.
    """
    domain_keys = set(domain_sites)
    for pairs in links.values():
        domain_keys.update(domain for _, domain in pairs)

    nodes = []
    ids = {}
    for kind in KIND_ORDER:
        keys = domain_keys if kind == EntityKind.DOMAIN else {key for key, _ in links.get(kind, ())}
        ids[kind] = kind_ids = {}
        for key in sorted(keys):
            kind_ids[key] = len(nodes)
            nodes.append(EntityNode(kind, key, len(nodes)))
    domain_ids = ids[EntityKind.DOMAIN]

    adjacency = [set() for _ in nodes]
    for kind, pairs in links.items():
        entity_ids = ids[kind]
        for key, domain in pairs:
            entity_id, domain_id = entity_ids[key], domain_ids[domain]
            adjacency[entity_id].add(domain_id)
            adjacency[domain_id].add(entity_id)

    site_index = {}
    for domain, hosts in domain_sites.items():
        if hosts:
            site_index[domain_ids[domain]] = {
                host: tuple(sorted(dates)) for host, dates in sorted(hosts.items())
            }

    return EntityGraph(nodes, (tuple(sorted(adj)) for adj in adjacency), site_index)


class _GraphBuilder:
    """Collects sites and (entity, domain) links one observation at a time."""

    def __init__(self):
        self.domain_sites = defaultdict(lambda: defaultdict(set))
        self.email_links = set()
        self.matomo_links = set()
        self.la51_links = set()
        self.count = 0

    def add(self, domain, site_host, observed_at, emails, matomo_urls, la51_ids):
        self.count += 1
        self.domain_sites[domain][site_host].add(observed_at)
        self.email_links.update((email, domain) for email in emails)
        self.matomo_links.update((url, domain) for url in matomo_urls)
        self.la51_links.update((la51_id, domain) for la51_id in la51_ids)

    def build(self) -> EntityGraph:
        graph = _assemble(self.domain_sites, {
            EntityKind.EMAIL: self.email_links,
            EntityKind.MATOMO: self.matomo_links,
            EntityKind.LA51: self.la51_links,
        })
        logger.info("built graph from %d records: %d nodes, %d edges", self.count, len(graph), graph.edge_count)
        return graph


def build_graph(records: Iterable) -> EntityGraph:
    """
    Build the entity-link graph from SiteRecords.

    One Domain node per distinct domain, one node per distinct email, Matomo
    URL and 51.la ID, and one edge per distinct (domain, entity) pair.
    """
    builder = _GraphBuilder()
    for record in records:
        builder.add(record.domain, record.site_host, record.observed_at,
                    record.emails, record.matomo_urls, record.la51_ids)
    return builder.build()


def build_graph_from_rows(rows: Iterable[dict]) -> EntityGraph:
    """The same graph as build_graph, from records.json rows."""
    builder = _GraphBuilder()
    days = {}
    for row in rows:
        observed = row["observed_at"]
        day = days.get(observed)
        if day is None:
            day = days[observed] = date.fromisoformat(observed)
        builder.add(row["domain"], row["site_host"], day,
                    row.get("emails", ()), row.get("matomo_urls", ()), row.get("la51_ids", ()))
    return builder.build()


def stats(graph: EntityGraph) -> DatasetStats:
    """Distinct entity counts per kind and the number of distinct sites."""
    counts = {kind: 0 for kind in KIND_ORDER}
    for node in graph.nodes:
        counts[node.kind] += 1
    return DatasetStats(
        domains=counts[EntityKind.DOMAIN],
        emails=counts[EntityKind.EMAIL],
        matomo_servers=counts[EntityKind.MATOMO],
        la51_ids=counts[EntityKind.LA51],
        total_entities=len(graph),
        total_sites=sum(len(hosts) for hosts in graph.site_index.values()),
    )
