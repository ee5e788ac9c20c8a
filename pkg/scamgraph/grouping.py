"""
Preliminary group detection, threshold filtering and group naming.

connected_components is the production path (array union-find over the edge
list); naive_fixpoint_components is a literal transcription of the original
set-growing procedure, kept as the equivalence oracle.
"""
import logging
from typing import Iterable

from pydantic import BaseModel, ConfigDict, Field

from bootstrap.pipeline_config import EntityKind, FilterConfig
from .graph import DatasetStats, EntityGraph

logger = logging.getLogger(__name__)


class UnionFind:
    """Disjoint sets over 0..n-1 with union by rank and path halving."""

    def __init__(self, size: int):
        self.parent = list(range(size))
        self.rank = [0] * size

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, x: int, y: int) -> bool:
        """Merge the sets of x and y; False if they were already one set."""
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if self.rank[rx] < self.rank[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        if self.rank[rx] == self.rank[ry]:
            self.rank[rx] += 1
        return True

    def components(self) -> list[list[int]]:
        """Sets as ascending id lists, ordered by their smallest member."""
        by_root = {}
        for x in range(len(self.parent)):
            by_root.setdefault(self.find(x), []).append(x)
        return list(by_root.values())


class Group(BaseModel):
    """A partition cell with its entity counts."""

    model_config = ConfigDict(frozen=True)

    group_id: str | None = None
    member_node_ids: tuple[int, ...]
    domain_count: int = Field(default=0, ge=0)
    site_count: int = Field(default=0, ge=0)
    email_count: int = Field(default=0, ge=0)
    matomo_count: int = Field(default=0, ge=0)
    la51_count: int = Field(default=0, ge=0)
    first_domain: str | None = Field(default=None, description="Lexicographically smallest member domain")

    def named(self, group_id: str) -> "Group":
        return self.model_copy(update={"group_id": group_id})

    def rank_key(self):
        """Naming order: most domains, then most sites, then smallest domain."""
        return (-self.domain_count, -self.site_count, self.first_domain or "")


class GroupPartition(BaseModel):
    cells: list[Group] = Field(default_factory=list)

    def __len__(self):
        return len(self.cells)

    def domain_sets(self, graph: EntityGraph) -> set[frozenset[str]]:
        """The partition restricted to domain keys, for comparisons."""
        return {
            frozenset(graph.nodes[i].key for i in cell.member_node_ids if graph.is_domain(i))
            for cell in self.cells
        }

    def node_sets(self) -> set[frozenset[int]]:
        return {frozenset(cell.member_node_ids) for cell in self.cells}


class GroupSummary(BaseModel):
    """Subtotal of kept groups and their coverage of the dataset totals."""

    group_count: int
    domains: int
    sites: int
    emails: int
    matomo_servers: int
    la51_ids: int
    coverage: dict[str, float]


class DroppedSummary(BaseModel):
    """Totals of the groups removed by the filter and their analyzer preference."""

    group_count: int
    domains: int
    sites: int
    groups_with_matomo: int
    groups_with_la51: int
    matomo_servers: int
    la51_ids: int
    la51_share: float = Field(description="51.la IDs as a fraction of all analyzer IDs")


def describe_cell(graph: EntityGraph, member_ids: Iterable[int], group_id: str | None = None) -> Group:
    """Group for a set of node ids, with counts taken from the graph."""
    members = tuple(sorted(member_ids))
    counts = {kind: 0 for kind in EntityKind}
    sites = 0
    first_domain = None
    for node_id in members:
        node = graph.nodes[node_id]
        counts[node.kind] += 1
        if node.kind == EntityKind.DOMAIN:
            sites += graph.site_count(node_id)
            if first_domain is None or node.key < first_domain:
                first_domain = node.key
    return Group(
        group_id=group_id,
        member_node_ids=members,
        domain_count=counts[EntityKind.DOMAIN],
        site_count=sites,
        email_count=counts[EntityKind.EMAIL],
        matomo_count=counts[EntityKind.MATOMO],
        la51_count=counts[EntityKind.LA51],
        first_domain=first_domain,
    )


def connected_components(graph: EntityGraph) -> GroupPartition:
    """
    Partition the graph into connected components.

    Every node lands in exactly one cell; isolated domains form singletons.
    Cells are ordered by their smallest node id.
    """
    uf = UnionFind(len(graph))
    for domain_id, entity_id, _ in graph.edges():
        uf.union(domain_id, entity_id)
    partition = GroupPartition(cells=[describe_cell(graph, cell) for cell in uf.components()])
    logger.info("found %d connected components", len(partition))
    return partition


def naive_fixpoint_components(graph: EntityGraph) -> GroupPartition:
    """
    Quadratic set-growing closure, for small graphs only.

    Starting from the first remaining node, repeatedly absorb the neighbor
    sets of every member until the set stops growing, then delete its nodes
    from the link table and start over.
    """
    links = {node.id: set(graph.neighbors(node.id)) for node in graph.nodes}

    def detect_one_group(key):
        group = {key}
        prev_len = 0
        while prev_len < len(group):
            prev_len = len(group)
            grown = set(group)
            for src, dsts in links.items():
                if src in group:
                    grown |= dsts
            group = grown
        return group

    detected = []
    while links:
        key = next(iter(links))
        group = detect_one_group(key)
        for k in group:
            del links[k]
        detected.append(group)

    return GroupPartition(cells=[describe_cell(graph, cell) for cell in detected])


def filter_groups(partition: GroupPartition, cfg: FilterConfig) -> tuple[list[Group], list[Group]]:
    """
    Split cells into kept and dropped by the inclusive domain and site gates.

    Returns:
        (kept, dropped), each in partition order.
    """
    kept, dropped = [], []
    for cell in partition.cells:
        if cell.domain_count >= cfg.min_domains and cell.site_count >= cfg.min_sites:
            kept.append(cell)
        else:
            dropped.append(cell)
    return kept, dropped


def assign_group_ids(kept: list[Group], prefix: str = "G") -> list[Group]:
    """Sort by rank_key and name the groups G1, G2, ..."""
    ranked = sorted(kept, key=Group.rank_key)
    return [group.named(f"{prefix}{rank}") for rank, group in enumerate(ranked, start=1)]


def select_groups(partition: GroupPartition, cfg: FilterConfig) -> tuple[list[Group], list[Group]]:
    """
    Filter and name in the order the configuration asks for.

    With name_before_site_filter, groups are numbered after the domain gate
    only, so groups later removed by the site gate leave gaps in the names.
    """
    if not cfg.name_before_site_filter:
        kept, dropped = filter_groups(partition, cfg)
        return assign_group_ids(kept), dropped

    passed = [cell for cell in partition.cells if cell.domain_count >= cfg.min_domains]
    named = assign_group_ids(passed)
    kept = [group for group in named if group.site_count >= cfg.min_sites]
    dropped = [cell for cell in partition.cells if cell.domain_count < cfg.min_domains]
    dropped.extend(group for group in named if group.site_count < cfg.min_sites)
    return kept, dropped


def summarize_groups(kept: list[Group], totals: DatasetStats) -> GroupSummary:
    subtotal = {
        "domains": sum(g.domain_count for g in kept),
        "sites": sum(g.site_count for g in kept),
        "emails": sum(g.email_count for g in kept),
        "matomo_servers": sum(g.matomo_count for g in kept),
        "la51_ids": sum(g.la51_count for g in kept),
    }
    denominators = {
        "domains": totals.domains,
        "sites": totals.total_sites,
        "emails": totals.emails,
        "matomo_servers": totals.matomo_servers,
        "la51_ids": totals.la51_ids,
    }
    coverage = {
        name: round(subtotal[name] / denominators[name], 4) if denominators[name] else 0.0
        for name in subtotal
    }
    return GroupSummary(group_count=len(kept), coverage=coverage, **subtotal)


def dropped_summary(dropped: list[Group]) -> DroppedSummary:
    matomo = sum(g.matomo_count for g in dropped)
    la51 = sum(g.la51_count for g in dropped)
    return DroppedSummary(
        group_count=len(dropped),
        domains=sum(g.domain_count for g in dropped),
        sites=sum(g.site_count for g in dropped),
        groups_with_matomo=sum(1 for g in dropped if g.matomo_count),
        groups_with_la51=sum(1 for g in dropped if g.la51_count),
        matomo_servers=matomo,
        la51_ids=la51,
        la51_share=round(la51 / (matomo + la51), 4) if matomo + la51 else 0.0,
    )
