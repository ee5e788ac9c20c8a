"""
Versioned JSON artifacts in the output directory.

Every artifact starts with the same header (schema version, artifact name,
configuration fingerprint, suffix snapshot version) and never embeds a wall
clock, so identical inputs give byte-identical files.
"""
import json
import logging
from pathlib import Path
from typing import Iterable, Iterator

from bootstrap.pipeline_config import EntityKind, FileFormat, serialize_content
from .exceptions import InputError, MissingArtifactError
from .graph import EntityGraph, build_graph_from_rows
from .grouping import Group
from .ingest import SiteRecord
from .refine import Subgroup

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# artifact name -> (file name, producing command)
ARTIFACTS = {
    "records": ("records.json", "ingest"),
    "stats": ("stats.json", "ingest"),
    "groups": ("groups.json", "group"),
    "subgroups": ("subgroups.json", "refine"),
    "timeseries": ("timeseries.json", "timeseries"),
    "attribution": ("attribution.json", "attribute"),
    "indicators": ("indicators.json", "indicators"),
    "evaluation": ("evaluation.json", "evaluate"),
}


def node_from_label(graph: EntityGraph, label: str) -> int:
    """
    Raises:
        InputError: If the label names no node of the graph.
    """
    kind, _, key = label.partition(":")
    try:
        node = graph.find(EntityKind(kind), key)
    except ValueError:
        node = None
    if node is None:
        raise InputError(f"artifact member {label!r} is not in the records graph")
    return node.id


def group_to_row(graph: EntityGraph, group: Group) -> dict:
    row = {
        "group_id": group.group_id,
        "domain_count": group.domain_count,
        "site_count": group.site_count,
        "email_count": group.email_count,
        "matomo_count": group.matomo_count,
        "la51_count": group.la51_count,
        "first_domain": group.first_domain,
    }
    if isinstance(group, Subgroup):
        row["parent_id"] = group.parent_id
        row["removed_cut_entities"] = [node.label for node in group.removed_cut_entities]
    row["members"] = [graph.nodes[node_id].label for node_id in group.member_node_ids]
    return row


def group_from_row(graph: EntityGraph, row: dict) -> Group:
    members = tuple(sorted(node_from_label(graph, label) for label in row["members"]))
    fields = {
        "group_id": row["group_id"],
        "member_node_ids": members,
        "domain_count": row["domain_count"],
        "site_count": row["site_count"],
        "email_count": row["email_count"],
        "matomo_count": row["matomo_count"],
        "la51_count": row["la51_count"],
        "first_domain": row.get("first_domain"),
    }
    if "parent_id" not in row:
        return Group(**fields)
    removed = tuple(graph.nodes[node_from_label(graph, label)] for label in row.get("removed_cut_entities", ()))
    return Subgroup(parent_id=row["parent_id"], removed_cut_entities=removed, **fields)


def _record_line(record: SiteRecord) -> str:
    return json.dumps(record.to_artifact_row(), separators=(",", ":"))


class ArtifactStore:
    """
    Reads and writes the artifacts of one output directory.

    Args:
        out_dir: Output directory (created on first write).
        fingerprint: Configuration fingerprint stamped into every header.
        suffix_version: Public-suffix snapshot version stamped into every header.
        partition_fingerprint: Fingerprint of the record and gate parameters;
            an upstream artifact written under another one is reported.
    """

    def __init__(self, out_dir, fingerprint: str, suffix_version: str, partition_fingerprint: str | None = None):
        self.out_dir = Path(out_dir)
        self.fingerprint = fingerprint
        self.suffix_version = suffix_version
        self.partition_fingerprint = partition_fingerprint or fingerprint

    def path(self, filename: str) -> Path:
        return self.out_dir / filename

    def header(self, artifact: str) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "artifact": artifact,
            "config_fingerprint": self.fingerprint,
            "partition_fingerprint": self.partition_fingerprint,
            "suffix_snapshot": self.suffix_version,
        }

    def write_chunks(self, filename: str, chunks: Iterable[str]) -> Path:
        """
        Write chunks to a temporary file and move it into place.

        Raises:
            InputError: If the output directory or file cannot be written.
        """
        target = self.path(filename)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            temp = target.with_name(target.name + ".tmp")
            with open(temp, "w", encoding="utf-8", newline="\n") as f:
                f.writelines(chunks)
            temp.replace(target)
        except OSError as e:
            raise InputError(f"cannot write {target}: {e}") from e
        logger.debug("wrote %s", target)
        return target

    def write_text(self, filename: str, content: str) -> Path:
        return self.write_chunks(filename, (content,))

    def write_json(self, artifact: str, payload: dict) -> Path:
        filename, _ = ARTIFACTS[artifact]
        return self.write_text(filename, serialize_content({**self.header(artifact), **payload}, FileFormat.JSON))

    def write_records(self, records: Iterable[SiteRecord]) -> Path:
        """records.json, one compact record per line inside the records array."""
        filename, _ = ARTIFACTS["records"]
        return self.write_chunks(filename, self._records_chunks(records))

    def _records_chunks(self, records):
        head = json.dumps(self.header("records"), indent=2)[:-2]
        rows = iter(records)
        first = next(rows, None)
        if first is None:
            yield f'{head},\n  "records": []\n}}\n'
            return
        yield f'{head},\n  "records": [\n    {_record_line(first)}'
        for record in rows:
            yield f",\n    {_record_line(record)}"
        yield "\n  ]\n}\n"

    def exists(self, artifact: str) -> bool:
        return self.path(ARTIFACTS[artifact][0]).exists()

    def _existing_path(self, artifact: str) -> Path:
        filename, producer = ARTIFACTS[artifact]
        path = self.path(filename)
        if not path.exists():
            raise MissingArtifactError(filename, producer)
        return path

    def _check_header(self, artifact: str, path: Path, data) -> None:
        if not isinstance(data, dict) or data.get("artifact") != artifact:
            raise InputError(f"{path} is not a {artifact} artifact")
        if data.get("schema_version", 0) > SCHEMA_VERSION:
            raise InputError(f"{path} has schema version {data['schema_version']}; "
                             f"this release reads up to {SCHEMA_VERSION}")
        if data.get("suffix_snapshot") != self.suffix_version:
            logger.warning("%s was produced with suffix snapshot %s, current is %s",
                           path.name, data.get("suffix_snapshot"), self.suffix_version)
        if data.get("partition_fingerprint", self.partition_fingerprint) != self.partition_fingerprint:
            logger.warning("%s was produced with other record or gate settings (%s, current %s); "
                           "re-run `ecattrib %s` to apply the current ones",
                           path.name, data["partition_fingerprint"], self.partition_fingerprint,
                           ARTIFACTS[artifact][1])

    def read_json(self, artifact: str) -> dict:
        """
        Raises:
            MissingArtifactError: If the file is absent.
            InputError: If it is unreadable, not JSON, or of another schema.
        """
        path = self._existing_path(artifact)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"cannot read {path}: {e}") from e
        self._check_header(artifact, path, data)
        return data

    def iter_record_rows(self) -> Iterator[dict]:
        """
        records.json rows, one at a time.

        Files in the layout write_records produces are read line by line;
        any other layout is read whole through read_json.

        Raises:
            MissingArtifactError: If the file is absent.
            InputError: If it is unreadable or not a records artifact.
        """
        path = self._existing_path("records")
        try:
            with open(path, encoding="utf-8") as f:
                head = []
                for line in f:
                    if line.startswith('  "records": ['):
                        break
                    head.append(line)
                else:
                    line = ""
                if line.rstrip() not in ('  "records": [', '  "records": []') or not head:
                    yield from self.read_json("records")["records"]
                    return
                try:
                    header = json.loads("".join(head).rstrip().rstrip(",") + "\n}")
                except json.JSONDecodeError:
                    yield from self.read_json("records")["records"]
                    return
                self._check_header("records", path, header)
                if line.rstrip().endswith("[]"):
                    return
                for line in f:
                    row = line.strip()
                    if row == "]":
                        return
                    yield json.loads(row.rstrip(","))
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"cannot read {path}: {e}") from e
        raise InputError(f"{path} ends inside the records array")

    def load_records(self) -> list[SiteRecord]:
        return [SiteRecord.from_artifact(row) for row in self.iter_record_rows()]

    def load_graph(self) -> EntityGraph:
        """The entity graph of records.json, built without SiteRecord instances."""
        return build_graph_from_rows(self.iter_record_rows())

    def load_groups(self, graph: EntityGraph) -> tuple[list[Group], list[Group]]:
        data = self.read_json("groups")
        kept = [group_from_row(graph, row) for row in data["groups"]]
        dropped = [group_from_row(graph, row) for row in data["dropped"]]
        return kept, dropped

    def load_subgroups(self, graph: EntityGraph) -> list[Subgroup]:
        """Kept subgroups of every parent, in parent then name order."""
        data = self.read_json("subgroups")
        return [
            group_from_row(graph, row)
            for parent in data["parents"]
            for row in parent["subgroups"]
            if row["group_id"] in parent["kept"]
        ]
