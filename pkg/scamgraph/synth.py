"""
Synthetic scam ecosystems with planted actors, and recovery scoring.

Every actor owns a block of domains tied together by a ring over its email
pool (domain j uses pool emails j and j+1), so each actor is one compound
component that no single email or domain removal disconnects. Optional
Matomo servers, 51.la IDs and leaf emails decorate the ring. Planted bridges
are single fresh emails shared by one domain of each of two actors.

All randomness comes from numpy streams spawned from the configured seed:
one per actor, one for bridges, one for output encoding.
"""
import json
import logging
from collections import Counter
from datetime import timedelta
from math import comb
from typing import Iterable

import numpy as np
from pydantic import BaseModel, Field

from bootstrap.pipeline_config import ActorTier, CountDistribution, SynthConfig
from .exceptions import ConfigError, EvaluationError
from .ingest import SiteRecord

logger = logging.getLogger(__name__)

TLDS = ("shop", "top", "xyz")
# Consonants outside the hex alphabet, so a name token never reads as a serial.
NAME_LETTERS = "ghjklmnpqrstvwxz"


class PlantedBridge(BaseModel):
    entity: str = Field(description="Bridge email shared by exactly two actors")
    actors: tuple[str, str]
    domains: tuple[str, str]


class SynthGroundTruth(BaseModel):
    domain_actor: dict[str, str] = Field(default_factory=dict)
    bridges: list[PlantedBridge] = Field(default_factory=list)

    def actor_cells(self) -> set[frozenset[str]]:
        cells = {}
        for domain, actor in self.domain_actor.items():
            cells.setdefault(actor, set()).add(domain)
        return {frozenset(cell) for cell in cells.values()}

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"domain": domain, "actor": actor}) + "\n"
            for domain, actor in sorted(self.domain_actor.items())
        )

    @classmethod
    def from_jsonl(cls, lines: Iterable[str]) -> "SynthGroundTruth":
        """
        Raises:
            EvaluationError: On a malformed line or a domain labeled twice.
        """
        domain_actor = {}
        for line_no, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                domain, actor = row["domain"], row["actor"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise EvaluationError(f"truth line {line_no} is malformed: {e}") from e
            if domain in domain_actor:
                raise EvaluationError(f"truth line {line_no} labels {domain} a second time")
            domain_actor[domain] = actor
        return cls(domain_actor=domain_actor)


class EvaluationReport(BaseModel):
    pairwise_precision: float
    pairwise_recall: float
    pairwise_f1: float
    exact_match: bool
    tp: int
    fp: int
    fn: int
    domains: int
    predicted_cells: int
    true_cells: int


# =============================================================================
# Generation
# =============================================================================

def _streams(cfg: SynthConfig) -> list[np.random.Generator]:
    """Actor streams first, then the bridge stream, then the encoding stream."""
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.total_actors + 2)
    return [np.random.default_rng(child) for child in children]


def sample_count(dist: CountDistribution, rng: np.random.Generator) -> int:
    if dist.kind == "fixed":
        return dist.minimum
    if dist.kind == "uniform":
        return int(rng.integers(dist.minimum, dist.maximum + 1))
    value = int(dist.minimum * (1.0 + rng.pareto(dist.alpha)))
    return min(max(value, dist.minimum), dist.maximum)


def name_token(index: int) -> str:
    """Unique letters-only token for actor number index (0-based)."""
    letters = []
    index += len(NAME_LETTERS) ** 2
    while index:
        index, digit = divmod(index, len(NAME_LETTERS))
        letters.append(NAME_LETTERS[digit])
    return "".join(reversed(letters))


def encode_cf_email(email: str, key: int) -> str:
    """Cloudflare email-protection payload for email under an XOR key."""
    return f"{key:02x}" + "".join(f"{byte ^ key:02x}" for byte in email.encode("utf-8"))


class _Actor:
    __slots__ = ("label", "domains", "entities", "sites")

    def __init__(self, label):
        self.label = label
        self.domains = []
        self.entities = {}
        self.sites = {}


def _generate_actor(tier: ActorTier, label: str, actor_index: int, n_domains: int, rng) -> _Actor:
    actor = _Actor(label)
    token = name_token(actor_index)
    pool_size = min(tier.emails_per_actor, n_domains)
    pool = [f"{token}.{i}@{token}mail.test" for i in range(pool_size)]
    servers = []
    if tier.matomo_servers_per_actor and rng.random() < tier.matomo_adoption_prob:
        servers = [f"https://{token}{s}.xyz/matomo.php" for s in range(tier.matomo_servers_per_actor)]
    la51_ids = []

    for j in range(n_domains):
        domain = f"{token}{j}.{TLDS[int(rng.integers(len(TLDS)))]}"
        emails = {pool[j % pool_size], pool[(j + 1) % pool_size]}
        if rng.random() < tier.email_reuse_prob:
            emails.add(pool[int(rng.integers(pool_size))])
        else:
            emails.add(f"{token}.x{j}@{token}mail.test")
        matomo = {servers[int(rng.integers(len(servers)))]} if servers else set()
        la51 = set()
        if rng.random() < tier.la51_adoption_prob:
            if la51_ids and rng.random() < tier.la51_reuse_prob:
                la51.add(la51_ids[int(rng.integers(len(la51_ids)))])
            else:
                la51_ids.append(f"{actor_index + 1}{len(la51_ids):05d}")
                la51.add(la51_ids[-1])

        actor.domains.append(domain)
        actor.entities[domain] = (emails, matomo, la51)
        actor.sites[domain] = max(1, sample_count(tier.sites_per_domain, rng))
    return actor


def _plant_bridges(actors: list[_Actor], count: int, rng) -> list[PlantedBridge]:
    n = len(actors)
    if count > comb(n, 2):
        raise ConfigError(f"cannot plant {count} bridges between {n} actors ({comb(n, 2)} pairs)")
    if count == 0:
        return []

    pair_indices = sorted(int(i) for i in rng.choice(comb(n, 2), size=count, replace=False))
    bridges = []
    for serial, index in enumerate(pair_indices):
        a, b = _pair_from_index(index, n)
        email = f"bridge{serial:03d}@relay.test"
        chosen = []
        for actor in (actors[a], actors[b]):
            domain = actor.domains[int(rng.integers(len(actor.domains)))]
            actor.entities[domain][0].add(email)
            chosen.append(domain)
        bridges.append(PlantedBridge(
            entity=email, actors=(actors[a].label, actors[b].label), domains=tuple(chosen)
        ))
    return bridges


def _pair_from_index(index: int, n: int) -> tuple[int, int]:
    """Inverse of the row-major enumeration of pairs (a, b), a < b."""
    a = 0
    while index >= n - 1 - a:
        index -= n - 1 - a
        a += 1
    return a, a + 1 + index


def generate(cfg: SynthConfig) -> tuple[list[SiteRecord], SynthGroundTruth]:
    """
    Generate records and the planted truth for a synthetic configuration.

    Raises:
        ConfigError: If more bridges are requested than actor pairs exist,
            or a sampled actor would get no domains.
    """
    streams = _streams(cfg)
    actors = []
    actor_index = 0
    for tier in cfg.tiers:
        for n in range(tier.count):
            rng = streams[actor_index]
            n_domains = tier.domain_counts[n] if tier.domain_counts else sample_count(tier.domains_per_actor, rng)
            if n_domains < 1:
                raise ConfigError(f"actor {tier.label_prefix}{n + 1:04d} would have no domains")
            actors.append(_generate_actor(tier, f"{tier.label_prefix}{n + 1:04d}", actor_index, n_domains, rng))
            actor_index += 1

    bridges = _plant_bridges(actors, cfg.cross_actor_bridge_count, streams[-2])

    span = (cfg.end_date - cfg.start_date).days
    records = []
    truth = {}
    for actor, rng in zip(actors, streams):
        for domain in actor.domains:
            truth[domain] = actor.label
            emails, matomo, la51 = (tuple(sorted(values)) for values in actor.entities[domain])
            for k in range(actor.sites[domain]):
                host = domain if k == 0 else f"w{k}.{domain}"
                records.append(SiteRecord.model_construct(
                    site_url=f"https://{host}/",
                    site_host=host,
                    domain=domain,
                    emails=emails,
                    matomo_urls=matomo,
                    la51_ids=la51,
                    observed_at=cfg.start_date + timedelta(days=int(rng.integers(span + 1))),
                    suffix_fallback=False,
                ))

    logger.info("generated %d records for %d actors, %d domains, %d bridges",
                len(records), len(actors), len(truth), len(bridges))
    return records, SynthGroundTruth(domain_actor=truth, bridges=bridges)


def to_input_rows(records: Iterable[SiteRecord], cfg: SynthConfig) -> Iterable[dict]:
    """
    Records in the JSONL input schema; a cf_encoded_prob share of the
    emails is moved to emails_cfencoded under a random key.
    """
    rng = _streams(cfg)[-1]
    for record in records:
        row = record.to_input_row()
        if cfg.cf_encoded_prob > 0:
            plain, encoded = [], []
            for email in row["emails"]:
                if rng.random() < cfg.cf_encoded_prob:
                    encoded.append(encode_cf_email(email, int(rng.integers(256))))
                else:
                    plain.append(email)
            row["emails"], row["emails_cfencoded"] = plain, encoded
        yield row


# =============================================================================
# Evaluation
# =============================================================================

def evaluate(predicted: Iterable[Iterable[str]], truth: SynthGroundTruth) -> EvaluationReport:
    """
    Pairwise precision, recall and F1 of a predicted domain partition.

    Truth domains missing from predicted count as singletons.

    Raises:
        EvaluationError: If a predicted domain is unknown to the truth or
            appears in two cells.
    """
    cell_of = {}
    for index, cell in enumerate(predicted):
        for domain in cell:
            if domain not in truth.domain_actor:
                raise EvaluationError(f"predicted domain {domain} is not in the ground truth")
            if domain in cell_of:
                raise EvaluationError(f"predicted domain {domain} appears in two cells")
            cell_of[domain] = index
    next_cell = max(cell_of.values(), default=-1) + 1
    for domain in sorted(truth.domain_actor):
        if domain not in cell_of:
            cell_of[domain] = next_cell
            next_cell += 1

    joint = Counter((cell_of[domain], actor) for domain, actor in truth.domain_actor.items())
    cell_sizes = Counter(cell_of[domain] for domain in truth.domain_actor)
    actor_sizes = Counter(truth.domain_actor.values())

    tp = sum(comb(n, 2) for n in joint.values())
    predicted_pairs = sum(comb(n, 2) for n in cell_sizes.values())
    true_pairs = sum(comb(n, 2) for n in actor_sizes.values())
    precision = tp / predicted_pairs if predicted_pairs else 1.0
    recall = tp / true_pairs if true_pairs else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    cells = {}
    for domain, index in cell_of.items():
        cells.setdefault(index, set()).add(domain)
    exact = {frozenset(cell) for cell in cells.values()} == truth.actor_cells()

    return EvaluationReport(
        pairwise_precision=round(precision, 6),
        pairwise_recall=round(recall, 6),
        pairwise_f1=round(f1, 6),
        exact_match=exact,
        tp=tp,
        fp=predicted_pairs - tp,
        fn=true_pairs - tp,
        domains=len(truth.domain_actor),
        predicted_cells=len(cell_sizes),
        true_cells=len(actor_sizes),
    )
