"""
Markdown reports rendered from the scamgraph/reports templates.

Context values are plain JSON-mode dumps of the result models, so templates
see strings and numbers only.
"""
from collections import Counter

from django.template.loader import render_to_string

from bootstrap.pipeline_config import FilterConfig, SplitPolicy

DEFAULT_FILTER = FilterConfig()
DEFAULT_SPLIT = SplitPolicy()


def report_meta(config, fingerprint: str, suffix_version: str) -> dict:
    inferred = (
        config.filter.min_domains == DEFAULT_FILTER.min_domains
        and config.filter.min_sites == DEFAULT_FILTER.min_sites
    ) or (
        config.split.min_domains == DEFAULT_SPLIT.min_domains
        and config.split.min_sites == DEFAULT_SPLIT.min_sites
    )
    return {
        "fingerprint": fingerprint,
        "suffix_snapshot": suffix_version,
        "filter": config.filter.model_dump(mode="json"),
        "split": config.split.model_dump(mode="json"),
        "inferred_thresholds": inferred,
    }


def render_report(name: str, meta: dict, **context) -> str:
    return render_to_string(f"scamgraph/reports/{name}.md", {"meta": meta, **context})


def stats_report(meta, stats, window, errors, warnings) -> str:
    reasons = Counter(issue.reason for issue in [*errors, *warnings])
    return render_report(
        "stats", meta,
        stats=stats.model_dump(mode="json"),
        window=window.model_dump(mode="json"),
        error_count=len(errors),
        warning_count=len(warnings),
        reasons=sorted(reasons.items()),
    )


def groups_report(meta, groups, summary, dropped) -> str:
    return render_report(
        "groups", meta,
        groups=[g.model_dump(mode="json", exclude={"member_node_ids"}) for g in groups],
        summary=summary.model_dump(mode="json"),
        dropped=dropped.model_dump(mode="json"),
    )


def subgroups_report(meta, results) -> str:
    rows = []
    for result in results:
        kept = {sub.group_id for sub in result.kept}
        rows.append({
            "parent_id": result.parent_id,
            "was_split": result.was_split,
            "cut_labels": [node.label for node in result.removed_cut_entities],
            "dropped_fragments": result.dropped_fragments.model_dump(mode="json"),
            "rows": [
                {**sub.model_dump(mode="json", include={
                    "group_id", "domain_count", "site_count", "email_count", "matomo_count", "la51_count",
                }), "kept": sub.group_id in kept}
                for sub in result.subgroups
            ],
        })
    return render_report("subgroups", meta, results=rows)


def indicators_report(meta, indicators) -> str:
    return render_report("indicators", meta, indicators=[item.model_dump(mode="json") for item in indicators])


def attribution_report(meta, results, level) -> str:
    return render_report(
        "attribution", meta,
        results=[result.model_dump(mode="json") for result in results],
        level=level,
    )
