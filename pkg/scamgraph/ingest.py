"""
Observation record ingestion.

Turns line-delimited JSONL or CSV observation records into validated
SiteRecords: URLs are refanged and reduced to a site hostname and its
registrable domain, Cloudflare-protected emails are decoded, and every
rejected or degraded line is reported as a RecordIssue with its line number.
"""
import csv
import io
import ipaddress
import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from datetime import date, datetime, timezone
from functools import lru_cache
from itertools import islice
from typing import BinaryIO, Iterable, NamedTuple
from urllib.parse import urlsplit

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from bootstrap.pipeline_config import CollectionWindow, InputFormat
from .exceptions import DecodeError, InputError
from .suffixes import SuffixSnapshot

logger = logging.getLogger(__name__)

DEFANG_MARKER = "[.]"

# Deliberately permissive: one "@", non-empty local and domain parts.
EMAIL_PATTERN = re.compile(r"^[^@\s]+@[^@\s]+$")

_URL_PARTS = re.compile(
    r"^(?P<scheme>(?:[A-Za-z][A-Za-z0-9+\-]*:)?//)?(?P<userinfo>[^/?#@]*@)?(?P<host>[^/?#]*)(?P<rest>.*)$",
    re.DOTALL,
)
_HEX = re.compile(r"^[0-9A-Fa-f]+$")
_LABEL = re.compile(r"^[a-z0-9_](?:[a-z0-9_-]{0,61}[a-z0-9_])?$")
_DEFAULT_PORTS = {"http": 80, "https": 443}

LIST_FIELDS = ("emails", "emails_cfencoded", "matomo_urls", "la51_ids")
CSV_LIST_SEPARATOR = ";"


# =============================================================================
# Record Models
# =============================================================================

class SiteRecord(BaseModel):
    """One observation of a fake EC site."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    site_url: str = Field(..., min_length=1, description="URL or hostname as observed")
    site_host: str = Field(..., min_length=1, description="Lowercase hostname")
    domain: str = Field(..., min_length=1, description="Registrable domain of site_host")
    emails: tuple[str, ...] = ()
    matomo_urls: tuple[str, ...] = ()
    la51_ids: tuple[str, ...] = ()
    observed_at: date
    suffix_fallback: bool = Field(
        default=False,
        description="True when the domain fell back to the host (IP literal or unknown suffix)"
    )

    @field_validator("emails", "matomo_urls", "la51_ids", mode="before")
    @classmethod
    def as_sorted_set(cls, value):
        if isinstance(value, str):
            raise ValueError("expected a list of strings")
        return tuple(sorted(set(value)))

    @field_validator("emails")
    @classmethod
    def validate_emails(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        for email in value:
            if email != email.lower() or not EMAIL_PATTERN.match(email):
                raise ValueError(f"invalid email {email!r}")
        return value

    @model_validator(mode="after")
    def validate_domain_suffix(self) -> "SiteRecord":
        """domain must be a dot-boundary suffix of site_host."""
        if self.site_host != self.domain and not self.site_host.endswith("." + self.domain):
            raise ValueError(f"{self.domain!r} is not a suffix of {self.site_host!r}")
        return self

    @classmethod
    def from_artifact(cls, row: dict) -> "SiteRecord":
        """
        Rebuild a record from a records.json row written by this package.

        Rows were validated at ingest time, so validation is skipped.
        """
        return cls.model_construct(
            site_url=row["site_url"],
            site_host=row["site_host"],
            domain=row["domain"],
            emails=tuple(row.get("emails", ())),
            matomo_urls=tuple(row.get("matomo_urls", ())),
            la51_ids=tuple(row.get("la51_ids", ())),
            observed_at=date.fromisoformat(row["observed_at"]),
            suffix_fallback=row.get("suffix_fallback", False),
        )

    def to_artifact_row(self) -> dict:
        """The records.json row read back by from_artifact."""
        return {
            "site_url": self.site_url,
            "site_host": self.site_host,
            "domain": self.domain,
            "emails": list(self.emails),
            "matomo_urls": list(self.matomo_urls),
            "la51_ids": list(self.la51_ids),
            "observed_at": self.observed_at.isoformat(),
            "suffix_fallback": self.suffix_fallback,
        }

    def to_input_row(self) -> dict:
        """The record in the JSONL input schema."""
        return {
            "url": self.site_url,
            "emails": list(self.emails),
            "emails_cfencoded": [],
            "matomo_urls": list(self.matomo_urls),
            "la51_ids": list(self.la51_ids),
            "observed_at": self.observed_at.isoformat(),
        }

    def sort_key(self):
        return (
            self.domain, self.site_host, self.observed_at, self.site_url,
            self.emails, self.matomo_urls, self.la51_ids,
        )


class RecordIssue(BaseModel):
    """A rejected line (error) or a degraded one (warning)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    line: int = Field(..., ge=1)
    reason: str
    detail: str = ""
    source: str = ""


class ParseResult(BaseModel):
    """Outcome of parsing one or more record streams."""

    records: list[SiteRecord] = Field(default_factory=list)
    errors: list[RecordIssue] = Field(default_factory=list)
    warnings: list[RecordIssue] = Field(default_factory=list)

    def extend(self, other: "ParseResult") -> None:
        self.records.extend(other.records)
        self.errors.extend(other.errors)
        self.warnings.extend(other.warnings)


class SiteName(NamedTuple):
    site_host: str
    domain: str
    suffix_fallback: bool


# =============================================================================
# Defanging
# =============================================================================

def _replace_in_host(url: str, old: str, new: str) -> str:
    match = _URL_PARTS.match(url)
    head = (match["scheme"] or "") + (match["userinfo"] or "")
    return f"{head}{match['host'].replace(old, new)}{match['rest']}"


def defang(url: str) -> str:
    """
    Replace every "." in the hostname part of url with "[.]".

    A leading "//" counts as a scheme; userinfo, path, query and fragment
    are left as they are.
    """
    return _replace_in_host(url, ".", DEFANG_MARKER)


def refang(url: str) -> str:
    """Inverse of defang: restore "[.]" markers in the hostname part to "."."""
    if DEFANG_MARKER not in url:
        return url
    return _replace_in_host(url, DEFANG_MARKER, ".")


# =============================================================================
# Normalization
# =============================================================================

def _clean_host(host: str) -> str:
    host = host.rstrip(".")
    if not host.isascii():
        try:
            host = host.encode("idna").decode("ascii")
        except UnicodeError as e:
            raise InputError(f"invalid hostname {host!r}: {e}") from e
    if not host or len(host) > 253:
        raise InputError(f"invalid hostname {host!r}")
    return host


def _is_ip_literal(host: str) -> bool:
    if ":" not in host and not host.rpartition(".")[2].isdigit():
        return False
    try:
        ipaddress.ip_address(host)
    except ValueError:
        return False
    return True


def normalize_site(url: str, suffixes) -> SiteName:
    """
    Reduce a (possibly defanged) URL or hostname to its site host and domain.

    Args:
        url: Full URL or bare hostname; "[.]" markers are accepted.
        suffixes: SuffixSnapshot used for the registrable-domain lookup.

    Returns:
        SiteName(site_host, domain, suffix_fallback). suffix_fallback is True
        when the host is an IP literal or has no known suffix, in which case
        domain equals site_host.

    Raises:
        InputError: If no valid hostname can be extracted.
    """
    text = refang(url.strip())
    if not text:
        raise InputError("empty URL")
    try:
        split = urlsplit(text if "://" in text else "//" + text)
        host = split.hostname
    except ValueError as e:
        raise InputError(f"unparseable URL {url!r}: {e}") from e
    if not host:
        raise InputError(f"no hostname in {url!r}")

    host = _clean_host(host)
    if _is_ip_literal(host):
        return SiteName(host, host, True)
    if not all(_LABEL.match(label) for label in host.split(".")):
        raise InputError(f"invalid hostname {host!r}")

    domain, fallback = suffixes.registrable_domain(host)
    return SiteName(host, domain, fallback)


def normalize_email(value: str) -> str | None:
    """Lowercased, refanged email, or None when it fails the syntax check."""
    email = value.strip().replace(DEFANG_MARKER, ".").lower()
    return email if EMAIL_PATTERN.match(email) else None


@lru_cache(maxsize=65536)
def normalize_matomo_url(value: str) -> str | None:
    """
    Canonical Matomo server URL: scheme://host[:port]/path.

    Query and fragment are dropped, host is lowercased, a trailing slash is
    removed and default ports are elided. A missing scheme means https.
    """
    text = refang(value.strip())
    if not text:
        return None
    if text.startswith("//"):
        text = "https:" + text
    elif "://" not in text:
        text = "https://" + text
    try:
        split = urlsplit(text)
        host = split.hostname
        port = split.port
    except ValueError:
        return None
    if not host:
        return None
    try:
        host = _clean_host(host)
    except InputError:
        return None
    scheme = split.scheme.lower()
    port_part = f":{port}" if port and port != _DEFAULT_PORTS.get(scheme) else ""
    return f"{scheme}://{host}{port_part}{split.path.rstrip('/')}"


def decode_cf_email(hex_payload: str) -> str:
    """
    Decode a Cloudflare email-protection payload.

    The first byte is the XOR key; every following byte XOR the key is one
    byte of the UTF-8 encoded address.

    Raises:
        DecodeError: On odd length, length < 4, non-hex characters or invalid
            UTF-8 after decoding.
    """
    payload = hex_payload.strip()
    if len(payload) < 4 or len(payload) % 2:
        raise DecodeError(f"payload length {len(payload)} is not an even number >= 4")
    if not _HEX.match(payload):
        raise DecodeError("payload contains non-hex characters")

    raw = bytes.fromhex(payload)
    key = raw[0]
    try:
        return bytes(b ^ key for b in raw[1:]).decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecodeError(f"decoded bytes are not UTF-8: {e}") from e


def parse_observed_at(value: str) -> date:
    """
    ISO 8601 date, or a timestamp truncated to its UTC calendar day.

    Raises:
        ValueError: If the value is not ISO 8601.
    """
    text = value.strip()
    if len(text) == 10:
        return date.fromisoformat(text)
    moment = datetime.fromisoformat(text)
    if moment.tzinfo is not None:
        moment = moment.astimezone(timezone.utc)
    return moment.date()


# =============================================================================
# Line Parsing
# =============================================================================

class _Rejected(Exception):
    def __init__(self, reason, detail):
        super().__init__(detail)
        self.reason = reason
        self.detail = detail


def _string_list(row: dict, name: str) -> list[str]:
    value = row.get(name)
    if value is None:
        return []
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise _Rejected("bad_field", f"{name} must be a list of strings")
    return value


def _record_from_row(row: dict, suffixes) -> tuple[SiteRecord, list[tuple[str, str]]]:
    notes = []

    url = row.get("url")
    if not isinstance(url, str) or not url.strip():
        raise _Rejected("missing_field", "url is missing or empty")
    observed = row.get("observed_at")
    if not isinstance(observed, str) or not observed.strip():
        raise _Rejected("missing_field", "observed_at is missing or empty")
    try:
        observed_at = parse_observed_at(observed)
    except ValueError:
        raise _Rejected("bad_date", f"unparseable date {observed!r}")

    lists = {name: _string_list(row, name) for name in LIST_FIELDS}

    try:
        site = normalize_site(url, suffixes)
    except InputError as e:
        raise _Rejected("bad_url", str(e))
    if site.suffix_fallback:
        notes.append(("suffix_fallback", f"{site.site_host} has no known public suffix"))

    emails = set()
    for value in lists["emails"]:
        email = normalize_email(value)
        if email is None:
            notes.append(("bad_email", f"dropped email {value!r}"))
        else:
            emails.add(email)
    for payload in lists["emails_cfencoded"]:
        try:
            decoded = decode_cf_email(payload)
        except DecodeError as e:
            notes.append(("bad_cf_email", f"dropped payload {payload!r}: {e}"))
            continue
        email = normalize_email(decoded)
        if email is None:
            notes.append(("bad_email", f"decoded payload {payload!r} is not an email"))
        else:
            emails.add(email)

    matomo_urls = set()
    for value in lists["matomo_urls"]:
        normalized = normalize_matomo_url(value)
        if normalized is None:
            notes.append(("bad_matomo_url", f"dropped Matomo URL {value!r}"))
        else:
            matomo_urls.add(normalized)

    la51_ids = {value.strip() for value in lists["la51_ids"] if value.strip()}

    # Every field has been checked above, so the model validators are skipped.
    record = SiteRecord.model_construct(
        site_url=url.strip(),
        site_host=site.site_host,
        domain=site.domain,
        emails=tuple(sorted(emails)),
        matomo_urls=tuple(sorted(matomo_urls)),
        la51_ids=tuple(sorted(la51_ids)),
        observed_at=observed_at,
        suffix_fallback=site.suffix_fallback,
    )
    return record, notes


def _iter_jsonl(stream: Iterable[bytes], first_line: int = 1):
    try:
        for line_no, raw in enumerate(stream, start=first_line):
            if not raw.strip():
                continue
            try:
                row = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                yield line_no, _Rejected("bad_json", str(e))
                continue
            if not isinstance(row, dict):
                yield line_no, _Rejected("bad_json", "line is not a JSON object")
                continue
            yield line_no, row
    except OSError as e:
        raise InputError(f"unreadable input stream: {e}") from e


def _undecodable(values) -> bool:
    """True when a value still holds bytes that were not valid UTF-8."""
    try:
        "".join(values).encode("utf-8")
    except UnicodeEncodeError:
        return True
    return False


def _iter_csv(stream: BinaryIO):
    # surrogateescape keeps undecodable bytes on their own row
    text = io.TextIOWrapper(stream, encoding="utf-8", errors="surrogateescape", newline="")
    try:
        reader = csv.DictReader(text)
        missing = {"url", "observed_at"} - set(reader.fieldnames or ())
        if missing:
            raise InputError(f"CSV header lacks required columns: {', '.join(sorted(missing))}")
        for row in reader:
            if None in row or any(value is None for value in row.values()):
                yield reader.line_num, _Rejected("bad_row", "column count does not match the header")
                continue
            if _undecodable(row.values()):
                yield reader.line_num, _Rejected("bad_row", "line is not valid UTF-8")
                continue
            for name in LIST_FIELDS:
                if name in row:
                    row[name] = [v for v in row[name].split(CSV_LIST_SEPARATOR) if v.strip()]
            yield reader.line_num, row
    except (OSError, csv.Error) as e:
        raise InputError(f"unreadable input stream: {e}") from e
    finally:
        text.detach()


def _parse_rows(rows, suffixes, window, source) -> ParseResult:
    result = ParseResult()
    for line_no, row in rows:
        if isinstance(row, _Rejected):
            result.errors.append(RecordIssue(line=line_no, reason=row.reason, detail=row.detail, source=source))
            continue
        try:
            record, notes = _record_from_row(row, suffixes)
        except _Rejected as rejected:
            result.errors.append(
                RecordIssue(line=line_no, reason=rejected.reason, detail=rejected.detail, source=source)
            )
            continue
        if window is not None and not window.contains(record.observed_at):
            result.errors.append(RecordIssue(
                line=line_no,
                reason="out_of_window",
                detail=f"{record.observed_at} outside {window.start_date}..{window.end_date}",
                source=source,
            ))
            continue
        result.records.append(record)
        result.warnings.extend(
            RecordIssue(line=line_no, reason=reason, detail=detail, source=source)
            for reason, detail in notes
        )
    return result


def _log_outcome(result: ParseResult, source: str) -> None:
    if result.errors:
        logger.warning("%s: rejected %d of %d lines", source or "input", len(result.errors),
                       len(result.errors) + len(result.records))
    fallbacks = sum(1 for issue in result.warnings if issue.reason == "suffix_fallback")
    if fallbacks:
        logger.warning("%s: %d records use the host as domain (no known suffix)", source or "input", fallbacks)


def parse_records(
    stream: BinaryIO,
    format: InputFormat | str,
    suffixes,
    window: CollectionWindow | None = None,
    source: str = "",
) -> ParseResult:
    """
    Parse one line-delimited record stream.

    Every well-formed line yields exactly one SiteRecord, in input order.
    Malformed lines yield an error RecordIssue and parsing continues; lines
    that were accepted after dropping a value yield a warning.

    Args:
        stream: Binary stream of JSONL lines or CSV rows.
        format: "jsonl" or "csv".
        suffixes: SuffixSnapshot for registrable-domain extraction.
        window: When given, records observed outside it are rejected.
        source: Label attached to issues (typically the file name).

    Raises:
        InputError: If the stream itself cannot be read.
    """
    format = InputFormat(format)
    rows = _iter_jsonl(stream) if format == InputFormat.JSONL else _iter_csv(stream)
    result = _parse_rows(rows, suffixes, window, source)
    _log_outcome(result, source)
    return result


# =============================================================================
# Parallel JSONL Parsing
# =============================================================================

PARALLEL_CHUNK_LINES = 50_000

_worker_snapshots = {}


def _parse_chunk(task) -> ParseResult:
    """Worker entry point: parse one chunk of JSONL lines."""
    lines, first_line, suffix_path, window, source = task
    suffixes = _worker_snapshots.get(suffix_path)
    if suffixes is None:
        suffixes = _worker_snapshots[suffix_path] = SuffixSnapshot.load(suffix_path)
    return _parse_rows(_iter_jsonl(lines, first_line), suffixes, window, source)


def _chunks(stream: BinaryIO, size: int, suffix_path, window, source):
    first_line = 1
    while True:
        lines = list(islice(stream, size))
        if not lines:
            return
        yield lines, first_line, suffix_path, window, source
        first_line += len(lines)


def parse_jsonl_parallel(
    stream: BinaryIO,
    suffixes,
    window: CollectionWindow | None = None,
    source: str = "",
    workers: int | None = None,
    chunk_lines: int = PARALLEL_CHUNK_LINES,
) -> ParseResult:
    """
    parse_records for JSONL, split into chunks of lines parsed by worker processes.

    Chunk results are merged in input order, so records, errors and warnings
    equal those of the sequential parse.

    Args:
        workers: Process count; None uses the CPU count.
        chunk_lines: Lines per chunk.

    Raises:
        InputError: If the stream cannot be read.
    """
    result = ParseResult()
    try:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            tasks = _chunks(stream, chunk_lines, suffixes.path, window, source)
            for part in executor.map(_parse_chunk, tasks):
                result.extend(part)
    except OSError as e:
        raise InputError(f"unreadable input stream: {e}") from e
    _log_outcome(result, source)
    return result


def parse_files(paths: Iterable, format, suffixes, window=None, workers: int = 1) -> ParseResult:
    """
    Parse several record files in order.

    JSONL files longer than PARALLEL_CHUNK_LINES lines are parsed by worker
    processes unless workers is 1; 0 means one worker per CPU.

    Raises:
        InputError: If a file cannot be opened or read.
    """
    format = InputFormat(format)
    result = ParseResult()
    for path in paths:
        try:
            with open(path, "rb") as stream:
                if format == InputFormat.JSONL and workers != 1 and _longer_than(stream, PARALLEL_CHUNK_LINES):
                    part = parse_jsonl_parallel(stream, suffixes, window, path.name, workers or None,
                                                PARALLEL_CHUNK_LINES)
                else:
                    part = parse_records(stream, format, suffixes, window, source=path.name)
        except OSError as e:
            raise InputError(f"cannot read {path}: {e}") from e
        result.extend(part)
        logger.info("parsed %s", path.name)
    return result


def _longer_than(stream: BinaryIO, lines: int) -> bool:
    """Whether a seekable stream holds more than the given number of lines; rewinds it."""
    count = sum(1 for _ in islice(stream, lines + 1))
    stream.seek(0)
    return count > lines


def canonical_order(records: Iterable[SiteRecord]) -> list[SiteRecord]:
    """Records in a permutation-independent order for persistence."""
    return sorted(records, key=SiteRecord.sort_key)
