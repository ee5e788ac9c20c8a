"""ecattrib attribute: attribute URLs (arguments or stdin) to groups."""
import logging
import sys

from scamgraph.attribution import AttributionIndex, MatchLevel
from scamgraph.exceptions import InputError
from scamgraph.management.pipeline import PipelineCommand
from scamgraph.reports import attribution_report

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Attribute URLs to groups by site match, then domain match. Reads stdin without arguments."
    stealth_options = ("stdin",)

    def add_command_arguments(self, parser):
        parser.add_argument("urls", nargs="*", help="URLs or hostnames; defanged forms are accepted")
        self.add_level_argument(parser)

    def run(self, urls=(), level="auto", **options):
        if not urls:
            stream = options.get("stdin") or sys.stdin
            urls = [line.strip() for line in stream if line.strip()]

        graph = self.store.load_graph()
        groups, level = self.resolve_groups(graph, level)
        index = AttributionIndex(graph, groups, level, self.suffixes)

        results, failures = [], []
        for url in urls:
            try:
                result = index.attribute(url).presented(self.config.defang)
            except InputError as e:
                logger.error("cannot attribute %r: %s", url, e)
                failures.append(url)
                continue
            results.append(result)
            if self.verbosity >= 2:
                self.stdout.write(f"{result.query_url}\t{result.match_level.value}\t{result.group_id or '-'}")

        self.store.write_json("attribution", {
            "level": level.value,
            "defanged": self.config.defang,
            "results": [result.model_dump(mode="json") for result in results],
        })
        self.store.write_text("report_attribution.md", attribution_report(self.meta, results, level.value))

        if failures:
            raise InputError(f"{len(failures)} of {len(urls)} URLs have no valid hostname: {', '.join(failures)}")

        counts = {match: sum(1 for r in results if r.match_level == match) for match in MatchLevel}
        return (f"attribute: {len(results)} URLs, {counts[MatchLevel.SITE]} site matches, "
                f"{counts[MatchLevel.DOMAIN]} domain matches, {counts[MatchLevel.NONE]} unmatched")
