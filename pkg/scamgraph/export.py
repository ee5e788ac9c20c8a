"""
Graph export for external visualization tools.

GraphML (node attributes kind/key/group_id, edge attribute link_kind) and a
plain CSV edge list. Both can be restricted to one group's members.
"""
import csv
import logging
from typing import Iterable, Mapping

import networkx as nx

from .graph import EntityGraph

logger = logging.getLogger(__name__)

EDGE_CSV_HEADER = ["source_key", "source_kind", "target_key", "target_kind", "link_kind"]


def _selected_edges(graph: EntityGraph, members: frozenset | None):
    for domain_id, entity_id, link_kind in graph.edges():
        if members is None or (domain_id in members and entity_id in members):
            yield domain_id, entity_id, link_kind


def to_networkx(
    graph: EntityGraph,
    members: Iterable[int] | None = None,
    group_of: Mapping[int, str] | None = None,
) -> nx.Graph:
    """
    networkx view of the graph (or of a member slice), nodes "n<id>" in id order.

    Args:
        members: Node ids to keep; None keeps all.
        group_of: node id -> group id for the group_id attribute.
    """
    members = frozenset(members) if members is not None else None
    group_of = group_of or {}
    result = nx.Graph()
    for node in graph.nodes:
        if members is None or node.id in members:
            result.add_node(f"n{node.id}", kind=node.kind.value, key=node.key,
                            group_id=group_of.get(node.id, ""))
    for domain_id, entity_id, link_kind in _selected_edges(graph, members):
        result.add_edge(f"n{domain_id}", f"n{entity_id}", link_kind=link_kind.value)
    return result


def export_graphml(graph: EntityGraph, path, members=None, group_of=None) -> tuple[int, int]:
    """
    Write GraphML; returns (node count, edge count).

    Raises:
        OSError: If the path is not writable.
    """
    view = to_networkx(graph, members, group_of)
    nx.write_graphml_xml(view, str(path), encoding="utf-8", prettyprint=True)
    logger.info("wrote %s: %d nodes, %d edges", path, view.number_of_nodes(), view.number_of_edges())
    return view.number_of_nodes(), view.number_of_edges()


def write_edge_csv(graph: EntityGraph, stream, members=None) -> int:
    """Write the (sliced) edge list with the domain as source; returns the row count."""
    members = frozenset(members) if members is not None else None
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(EDGE_CSV_HEADER)
    rows = 0
    for domain_id, entity_id, link_kind in _selected_edges(graph, members):
        source, target = graph.nodes[domain_id], graph.nodes[entity_id]
        writer.writerow([source.key, source.kind.value, target.key, target.kind.value, link_kind.value])
        rows += 1
    return rows


def read_edge_csv(stream) -> EntityGraph:
    """
    Rebuild a graph from an edge list written by write_edge_csv.

    Isolated domains do not appear in an edge list and are not restored.

    Raises:
        ValueError: On a wrong header or an edge not joining a domain to an entity.
    """
    reader = csv.reader(stream)
    header = next(reader, None)
    if header != EDGE_CSV_HEADER:
        raise ValueError(f"unexpected edge list header {header!r}")
    return EntityGraph.from_edges(
        (source_kind, source_key, target_kind, target_key)
        for source_key, source_kind, target_key, target_kind, _ in reader
    )
