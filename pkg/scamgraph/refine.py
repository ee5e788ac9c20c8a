"""
Subgroup refinement by single-entity removal.

A cut entity is a node (of a kind the SplitPolicy does not exclude) whose
removal leaves at least two components with at least min_domains domains.
Groups are split recursively at the best cut entity; fragments below the
domain gate are dropped, and cut entities join no subgroup.
"""
import logging
from collections import deque
from typing import Iterable, NamedTuple

from pydantic import BaseModel, Field

from bootstrap.pipeline_config import SplitPolicy
from .graph import KIND_ORDER, EntityGraph, EntityNode
from .grouping import Group, describe_cell

logger = logging.getLogger(__name__)


class CutEntity(NamedTuple):
    node: EntityNode
    qualifying_count: int
    largest_domain_count: int

    def preference(self):
        """Sort key of the split choice: min() of this picks the cut."""
        return (
            -self.qualifying_count,
            self.largest_domain_count,
            self.node.key,
            KIND_ORDER.index(self.node.kind),
        )


class Subgroup(Group):
    """A refined cell of one preliminary group, named "Gk-N"."""

    parent_id: str
    removed_cut_entities: tuple[EntityNode, ...] = Field(
        default=(),
        description="Cut entities removed on the way from the parent to this subgroup"
    )


class FragmentTotals(BaseModel):
    count: int = 0
    domains: int = 0
    sites: int = 0


class SplitResult(BaseModel):
    """Everything one parent group turned into."""

    parent_id: str
    subgroups: list[Subgroup] = Field(default_factory=list, description="All named subgroups")
    kept: list[Subgroup] = Field(default_factory=list, description="Subgroups passing the site gate")
    removed_cut_entities: tuple[EntityNode, ...] = ()
    dropped_fragments: FragmentTotals = Field(default_factory=FragmentTotals)

    @property
    def was_split(self) -> bool:
        return bool(self.removed_cut_entities)


def _domain_count(graph: EntityGraph, members: Iterable[int]) -> int:
    return sum(1 for node_id in members if graph.is_domain(node_id))


def _removal_components(graph: EntityGraph, members, removed: int | None) -> list[frozenset[int]]:
    """Connected components of members minus removed, ordered by smallest id."""
    seen = {removed} if removed is not None else set()
    components = []
    for start in sorted(members):
        if start in seen:
            continue
        seen.add(start)
        component = [start]
        queue = deque([start])
        while queue:
            for other in graph.neighbors(queue.popleft()):
                if other in members and other not in seen:
                    seen.add(other)
                    component.append(other)
                    queue.append(other)
        components.append(frozenset(component))
    return components


def find_cut_entities(graph: EntityGraph, members: Iterable[int], policy: SplitPolicy) -> list[CutEntity]:
    """
    Cut entities of a connected member set, in node id order.

    One iterative depth-first pass computes discovery order, low points and
    subtree domain counts. The components of (members - v) are the subtrees
    of children c with low[c] >= disc[v], plus the rest of the tree when v is
    not the root, so every candidate is scored without recomputation.

    Raises:
        ValueError: If the member set is not connected.
    """
    members = members if isinstance(members, (set, frozenset)) else set(members)
    if not members:
        return []

    root = min(members)
    is_domain = {node_id: int(graph.is_domain(node_id)) for node_id in members}
    disc = {root: 0}
    low = {root: 0}
    subtree = {root: is_domain[root]}
    parent = {root: None}
    separated = {node_id: [] for node_id in members}
    stack = [(root, iter(graph.neighbors(root)))]

    while stack:
        v, neighbors = stack[-1]
        descended = False
        for w in neighbors:
            if w not in members:
                continue
            if w not in disc:
                parent[w] = v
                disc[w] = low[w] = len(disc)
                subtree[w] = is_domain[w]
                stack.append((w, iter(graph.neighbors(w))))
                descended = True
                break
            if w != parent[v]:
                low[v] = min(low[v], disc[w])
        if descended:
            continue
        stack.pop()
        if stack:
            p = stack[-1][0]
            low[p] = min(low[p], low[v])
            subtree[p] += subtree[v]
            if low[v] >= disc[p]:
                separated[p].append(subtree[v])

    if len(disc) != len(members):
        raise ValueError("member set is not connected")

    total = subtree[root]
    cuts = []
    for node_id in sorted(members):
        node = graph.nodes[node_id]
        if policy.excludes(node.kind):
            continue
        sizes = list(separated[node_id])
        if node_id != root:
            sizes.append(total - is_domain[node_id] - sum(sizes))
        qualifying = sum(1 for size in sizes if size >= policy.min_domains)
        if qualifying >= 2:
            cuts.append(CutEntity(node, qualifying, max(sizes)))
    return cuts


def exhaustive_cut_entities(graph: EntityGraph, members: Iterable[int], policy: SplitPolicy) -> list[CutEntity]:
    """
    Cut entities by removing every eligible node in turn and recounting.

    Quadratic; this is the reference find_cut_entities must agree with.
    """
    members = frozenset(members)
    cuts = []
    for node_id in sorted(members):
        node = graph.nodes[node_id]
        if policy.excludes(node.kind):
            continue
        sizes = [_domain_count(graph, c) for c in _removal_components(graph, members, node_id)]
        qualifying = sum(1 for size in sizes if size >= policy.min_domains)
        if qualifying >= 2:
            cuts.append(CutEntity(node, qualifying, max(sizes)))
    return cuts


def assign_subgroup_ids(parent_id: str, subgroups: list[Subgroup]) -> list[Subgroup]:
    """Name subgroups "<parent>-1", "<parent>-2", ... by rank."""
    ranked = sorted(subgroups, key=Group.rank_key)
    return [sub.named(f"{parent_id}-{rank}") for rank, sub in enumerate(ranked, start=1)]


def second_stage_filter(subgroups: list[Subgroup], policy: SplitPolicy) -> list[Subgroup]:
    """Keep subgroups with at least min_sites sites; names are not changed."""
    return [sub for sub in subgroups if sub.site_count >= policy.min_sites]


def split_group(graph: EntityGraph, group: Group, policy: SplitPolicy) -> SplitResult:
    """
    Recursively split a group at its cut entities.

    Each step removes the cut entity with the most qualifying components
    (ties: smallest largest-component domain count, then smallest key),
    continues into the qualifying components and drops the others. A member
    set without cut entities becomes one subgroup.
    """
    parent_id = group.group_id or "G?"
    leaves = []
    removed = []
    fragments = FragmentTotals()
    worklist = [(frozenset(group.member_node_ids), ())]

    while worklist:
        members, path = worklist.pop()
        cuts = find_cut_entities(graph, members, policy)
        if not cuts:
            leaves.append((members, path))
            continue
        best = min(cuts, key=CutEntity.preference)
        removed.append(best.node)
        logger.debug("%s: removing %s (%d qualifying components)", parent_id, best.node.label,
                     best.qualifying_count)
        for component in _removal_components(graph, members, best.node.id):
            cell = describe_cell(graph, component)
            if cell.domain_count >= policy.min_domains:
                worklist.append((component, path + (best.node,)))
            else:
                fragments.count += 1
                fragments.domains += cell.domain_count
                fragments.sites += cell.site_count

    subgroups = []
    for members, path in leaves:
        cell = describe_cell(graph, members)
        subgroups.append(Subgroup(parent_id=parent_id, removed_cut_entities=path, **cell.model_dump()))
    named = assign_subgroup_ids(parent_id, subgroups)

    return SplitResult(
        parent_id=parent_id,
        subgroups=named,
        kept=second_stage_filter(named, policy),
        removed_cut_entities=tuple(sorted(removed, key=lambda node: node.id)),
        dropped_fragments=fragments,
    )


def refine_groups(graph: EntityGraph, groups: list[Group], policy: SplitPolicy) -> list[SplitResult]:
    """Split every named group; results follow the group order."""
    results = []
    for group in groups:
        result = split_group(graph, group, policy)
        logger.info("%s: %d subgroups, %d kept, %d cut entities", result.parent_id,
                    len(result.subgroups), len(result.kept), len(result.removed_cut_entities))
        results.append(result)
    return results
