"""
Registrable-domain (eTLD+1) extraction against a fixed public-suffix snapshot.

The snapshot is never fetched live: either tldextract's bundled snapshot or a
local public-suffix list file named in the pipeline configuration. Its version
string is recorded in every artifact.
"""
import hashlib
import logging
from pathlib import Path

import tldextract

from .exceptions import InputError

logger = logging.getLogger(__name__)


class SuffixSnapshot:
    """
    A loaded public-suffix table.

    Use SuffixSnapshot.bundled() or SuffixSnapshot.from_path(); call
    registrable_domain() for lookups. Results are memoized per host, and a
    host inherits the answer of its parent unless a rule names the host or
    its parent.
    """

    def __init__(self, extractor, version, path=None):
        self._extractor = extractor
        self.version = version
        self.path = path
        self._cache = {}
        self._rule_names = None

    @classmethod
    def bundled(cls):
        """The snapshot shipped inside tldextract (ICANN section only)."""
        extractor = tldextract.TLDExtract(
            suffix_list_urls=(),
            cache_dir=None,
            fallback_to_snapshot=True,
            include_psl_private_domains=False,
        )
        return cls(extractor, f"tldextract-{tldextract.__version__}-bundled")

    @classmethod
    def from_path(cls, path):
        """
        Load a public-suffix list file (the publicsuffix.org .dat format).

        Args:
            path: Path to the suffix list.

        Raises:
            InputError: If the file is missing, unreadable or holds no rules.
        """
        path = Path(path)
        try:
            content = path.read_bytes()
        except OSError as e:
            raise InputError(f"Cannot read suffix snapshot {path}: {e}") from e

        extractor = tldextract.TLDExtract(
            suffix_list_urls=(path.resolve().as_uri(),),
            cache_dir=None,
            fallback_to_snapshot=False,
            include_psl_private_domains=False,
        )
        try:
            extractor("example.invalid")
        except Exception as e:
            raise InputError(f"Suffix snapshot {path} is not a usable public-suffix list: {e}") from e

        digest = hashlib.sha256(content).hexdigest()[:12]
        return cls(extractor, f"psl-sha256-{digest}", path)

    @classmethod
    def load(cls, path=None):
        return cls.bundled() if path is None else cls.from_path(path)

    @property
    def rule_names(self) -> frozenset:
        """
        Every name a suffix rule mentions, without "*." or "!" markers.

        Both the Unicode and the IDNA form are included.
        """
        if self._rule_names is None:
            names = set()
            for rule in self._extractor.tlds:
                name = rule.lstrip("!")
                if name.startswith("*."):
                    name = name[2:]
                names.add(name)
                try:
                    names.add(name.encode("idna").decode("ascii"))
                except UnicodeError:
                    pass
            self._rule_names = frozenset(names)
        return self._rule_names

    def registrable_domain(self, host):
        """
        Registrable domain of a normalized (lowercase, dot-stripped) hostname.

        Returns:
            (domain, fallback) where fallback is True when the host has no
            known public suffix, or is itself a public suffix, and the domain
            therefore falls back to the host.
        """
        cached = self._cache.get(host)
        if cached is None:
            cached = self._cache[host] = self._resolve(host)
        return cached

    def _resolve(self, host):
        # Only a rule naming host, or a wildcard under its parent, can give
        # host a longer suffix than its parent; otherwise both share one.
        parent = host.partition(".")[2]
        if "." in parent and host not in self.rule_names and parent not in self.rule_names:
            domain, fallback = self.registrable_domain(parent)
            if not fallback:
                return domain, False

        result = self._extractor(host)
        if result.suffix and result.domain:
            return f"{result.domain}.{result.suffix}", False
        logger.debug("No public suffix for %s; using the host as domain", host)
        return host, True
