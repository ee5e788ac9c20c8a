"""
Monthly activity series per group.

A bucket counts the distinct entities (domains by default) of a group that
have at least one observation in that calendar month. Months cut short by the
collection window are trimmed before analysis.
"""
import csv
import logging
import re
from collections import defaultdict
from datetime import date
from typing import Iterable, Mapping

from pydantic import BaseModel, Field

from bootstrap.pipeline_config import CollectionWindow, EntityKind
from .graph import EntityGraph

logger = logging.getLogger(__name__)

_DIGITS = re.compile(r"(\d+)")


class MonthlySeries(BaseModel):
    group_id: str
    buckets: list[tuple[str, int]] = Field(default_factory=list, description="(YYYY-MM, count), ascending")

    @property
    def months(self) -> list[str]:
        return [month for month, _ in self.buckets]


class ActivitySummary(BaseModel):
    group_id: str
    first_active: str | None = None
    last_active: str | None = None
    active_months: int = 0
    peak_month: str | None = None
    peak_count: int = 0
    status: str = Field(description="throughout, emerging, ended, short_lived or inactive")


class SuccessionHint(BaseModel):
    """One series stops shortly before another one starts."""

    ended_group: str
    started_group: str
    gap_months: int


def group_sort_key(group_id: str):
    """Natural order, so G2 sorts before G10 and G1-2 before G1-10."""
    return [int(part) if part.isdigit() else part for part in _DIGITS.split(group_id)]


def month_key(day: date) -> str:
    return f"{day.year:04d}-{day.month:02d}"


def window_months(window: CollectionWindow) -> list[str]:
    months = []
    year, month = window.start_date.year, window.start_date.month
    while (year, month) <= (window.end_date.year, window.end_date.month):
        months.append(f"{year:04d}-{month:02d}")
        year, month = (year + 1, 1) if month == 12 else (year, month + 1)
    return months


def _month_index(month: str) -> int:
    year, mon = month.split("-")
    return int(year) * 12 + int(mon) - 1


def domain_membership(graph: EntityGraph, groups: Iterable) -> dict[str, str]:
    """domain key -> group id for every domain member of the given groups."""
    membership = {}
    for group in groups:
        for node_id in group.member_node_ids:
            node = graph.nodes[node_id]
            if node.kind == EntityKind.DOMAIN:
                membership[node.key] = group.group_id
    return membership


def _metric_values(record, metric: EntityKind):
    if metric == EntityKind.DOMAIN:
        return (record.domain,)
    if metric == EntityKind.EMAIL:
        return record.emails
    if metric == EntityKind.MATOMO:
        return record.matomo_urls
    return record.la51_ids


def bucket_by_month(
    records: Iterable,
    membership: Mapping[str, str],
    window: CollectionWindow,
    metric: EntityKind = EntityKind.DOMAIN,
) -> list[MonthlySeries]:
    """
    Count distinct entities per group and calendar month.

    Args:
        records: SiteRecords.
        membership: domain -> group id; records of other domains are ignored.
        window: Months outside it are never emitted.
        metric: Entity kind to count.

    Returns:
        One series per group in membership, covering every window month
        (zero months included), ordered by group id.
    """
    metric = EntityKind(metric)
    seen = defaultdict(set)
    outside = 0
    for record in records:
        group_id = membership.get(record.domain)
        if group_id is None:
            continue
        if not window.contains(record.observed_at):
            outside += 1
            continue
        bucket = seen[(group_id, month_key(record.observed_at))]
        bucket.update(_metric_values(record, metric))
    if outside:
        logger.warning("excluded %d group records observed outside the collection window", outside)

    months = window_months(window)
    return [
        MonthlySeries(group_id=group_id, buckets=[(m, len(seen.get((group_id, m), ()))) for m in months])
        for group_id in sorted(set(membership.values()), key=group_sort_key)
    ]


def trim_partial_months(series: MonthlySeries, window: CollectionWindow) -> MonthlySeries:
    """Drop the first and last buckets when the window covers them only partially."""
    buckets = list(series.buckets)
    if buckets and not window.starts_on_month_boundary and buckets[0][0] == month_key(window.start_date):
        buckets = buckets[1:]
    if buckets and not window.ends_on_month_boundary and buckets[-1][0] == month_key(window.end_date):
        buckets = buckets[:-1]
    return MonthlySeries(group_id=series.group_id, buckets=buckets)


def summarize_activity(series: MonthlySeries) -> ActivitySummary:
    """
    First and last active month, peak, and a coarse lifecycle status relative
    to the months the series spans.
    """
    active = [(month, count) for month, count in series.buckets if count > 0]
    if not active:
        return ActivitySummary(group_id=series.group_id, status="inactive")

    first, last = active[0][0], active[-1][0]
    peak_month, peak_count = max(active, key=lambda bucket: (bucket[1], -_month_index(bucket[0])))
    starts_at_open = first == series.buckets[0][0]
    runs_to_close = last == series.buckets[-1][0]
    if starts_at_open and runs_to_close:
        status = "throughout"
    elif runs_to_close:
        status = "emerging"
    elif starts_at_open:
        status = "ended"
    else:
        status = "short_lived"

    return ActivitySummary(
        group_id=series.group_id,
        first_active=first,
        last_active=last,
        active_months=len(active),
        peak_month=peak_month,
        peak_count=peak_count,
        status=status,
    )


def succession_hints(summaries: Iterable[ActivitySummary], max_gap_months: int = 2) -> list[SuccessionHint]:
    """
    Pairs where one group goes quiet and another appears within
    max_gap_months afterwards, a pattern worth checking for an actor moving
    to new infrastructure.
    """
    summaries = [s for s in summaries if s.status != "inactive"]
    hints = []
    for ended in summaries:
        if ended.status not in ("ended", "short_lived"):
            continue
        for started in summaries:
            if started.group_id == ended.group_id or started.status not in ("emerging", "short_lived"):
                continue
            gap = _month_index(started.first_active) - _month_index(ended.last_active)
            if 0 <= gap <= max_gap_months:
                hints.append(SuccessionHint(
                    ended_group=ended.group_id, started_group=started.group_id, gap_months=gap
                ))
    return sorted(hints, key=lambda h: (group_sort_key(h.ended_group), group_sort_key(h.started_group)))


def count_column(metric: EntityKind) -> str:
    return f"{EntityKind(metric).value}_count"


def write_csv(series: Iterable[MonthlySeries], stream, metric: EntityKind = EntityKind.DOMAIN) -> int:
    """Write rows sorted by (group_id, month); returns the row count."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["group_id", "month", count_column(metric)])
    rows = 0
    for item in sorted(series, key=lambda s: group_sort_key(s.group_id)):
        for month, count in item.buckets:
            writer.writerow([item.group_id, month, count])
            rows += 1
    return rows


def plot_data(series: list[MonthlySeries], metric: EntityKind = EntityKind.DOMAIN) -> dict:
    """The CSV content reshaped as one count array per group over a shared month axis."""
    months = sorted({month for item in series for month, _ in item.buckets})
    return {
        "metric": count_column(metric),
        "months": months,
        "series": {
            item.group_id: [dict(item.buckets).get(month, 0) for month in months]
            for item in sorted(series, key=lambda s: group_sort_key(s.group_id))
        },
    }
