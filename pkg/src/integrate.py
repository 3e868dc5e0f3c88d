#!/usr/bin/env python3
"""Joining the warehouse with external author data (a bibliography and a recommendation authors list) by name."""

import csv
import logging
import os
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

from lxml import etree

from src.model import Warehouse
from src.queries import q1_posts_per_actor
from src.utilities import fold_name

logger = logging.getLogger(__name__)

_person_records = {'www'}  # bibliography entries describing a person rather than a publication
_tech_report_header = ['recommendationid', 'authorfullname']


class MatchKind(Enum):
    EXACT = 'exact'
    NORMALIZED = 'normalized'
    UNMATCHED = 'unmatched'


@dataclass(frozen=True)
class ExternalAuthorRecord:
    full_name: str
    publication_count: int = 0
    recommendation_ids: tuple = ()


@dataclass(frozen=True)
class NameLink:
    actor_id: str
    external_name: Optional[str]
    match_kind: MatchKind


class SourceParseError(ValueError):

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f'{self.path}:{line}: {message}')


def load_bibliography(path: str or Path) -> list:
    """
    Count publications per author in a bibliography slice shaped like DBLP: a root element holding one element per
    publication (article, inproceedings, ...) with <author> children. An author listed twice on one publication
    counts once. Person records ('www') are skipped. The DTD named by the DOCTYPE is read from the local file system
    so that its character entities (&ouml; and the like) resolve; nothing is fetched over the network.
    :param path: the XML file; an empty file holds no records
    :return: ExternalAuthorRecord list sorted by name
    """
    path = Path(path)
    if os.path.getsize(path) == 0:
        logger.info(f'{path} is empty')
        return []

    counts = Counter()
    depth = 0
    try:
        for event, element in etree.iterparse(str(path), events=('start', 'end'), load_dtd=True, resolve_entities=True,
                                              no_network=True):
            if event == 'start':
                depth += 1
                continue
            depth -= 1
            if depth == 1:
                if element.tag not in _person_records:
                    authors = {' '.join((a.text or '').split()) for a in element.findall('author')}
                    counts.update(a for a in authors if a)
                element.clear()
    except etree.XMLSyntaxError as e:
        raise SourceParseError(path, e.lineno or e.position[0], str(e))

    logger.info(f'{path}: {sum(counts.values())} authorships by {len(counts)} authors')
    return [ExternalAuthorRecord(full_name=name, publication_count=n) for name, n in sorted(counts.items())]


def load_tech_reports(path: str or Path) -> list:
    """
    Read the flattened recommendation authors list: CSV rows 'recommendationId,authorFullName'. A header row,
    blank lines and lines starting with # are skipped.
    :return: one ExternalAuthorRecord per author, with the recommendations they signed
    """
    recommendations = defaultdict(list)
    with open(path, 'r', encoding='utf-8', newline='') as fh:
        for row in csv.reader(fh):
            row = [c.strip() for c in row]
            if not row or not any(row) or row[0].startswith('#'):
                continue
            if [c.lower() for c in row[:2]] == _tech_report_header:
                continue
            if len(row) < 2 or not row[1]:
                logger.warning(f'Skipping incomplete tech report row {row} in {path}')
                continue
            name = ' '.join(row[1].split())
            if row[0] not in recommendations[name]:
                recommendations[name].append(row[0])
    return [ExternalAuthorRecord(full_name=name, recommendation_ids=tuple(sorted(ids)))
            for name, ids in sorted(recommendations.items())]


def link_actors(warehouse: Warehouse, records: list, refused: list = None) -> list:
    """
    Link external names to actors: first on 'Firstname Lastname' as written, then on names folded for case and
    diacritics. A name matching several actors, or an actor already linked to another name, is refused.
    :param refused: if given, the refused external names are appended here
    :return: one NameLink per actor, sorted by actor id; actors without a link are unmatched
    """
    exact, folded = defaultdict(list), defaultdict(list)
    for a in sorted(warehouse.actors, key=lambda x: x.id):
        if a.name is None:
            continue
        exact[a.name.first_last].append(a.id)
        folded[fold_name(a.name.first_last)].append(a.id)

    linked = {}  # actor id -> (external name, kind)
    pending = []
    names = sorted({r.full_name for r in records})

    for name in names:
        candidates = exact.get(name, [])
        if len(candidates) == 1 and candidates[0] not in linked:
            linked[candidates[0]] = (name, MatchKind.EXACT)
        else:
            pending.append(name)

    for name in pending:
        candidates = folded.get(fold_name(name), [])
        if len(candidates) == 1 and candidates[0] not in linked:
            linked[candidates[0]] = (name, MatchKind.NORMALIZED)
        elif candidates:
            logger.warning(f'Refusing ambiguous link for {name!r}: candidates {", ".join(candidates)}')
            if refused is not None:
                refused.append(name)

    links = []
    for a in sorted(warehouse.actors, key=lambda x: x.id):
        name, kind = linked.get(a.id, (None, MatchKind.UNMATCHED))
        links.append(NameLink(actor_id=a.id, external_name=name, match_kind=kind))
    return links


@dataclass(frozen=True)
class JoinedRow:
    actor_id: str
    name: str
    posts: int
    publications: int


@dataclass(frozen=True)
class GroupSummary:
    actors: int
    publishers: int  # actors with at least one publication
    fraction_publishing: float
    mean_publications: float


@dataclass(frozen=True)
class PublicationJoin:
    rows: tuple  # JoinedRow of the top posters, q1 order
    top: GroupSummary
    others: GroupSummary  # posters below the threshold


@dataclass(frozen=True)
class NormalizedRow:
    actor_id: str
    posts_percent: float
    publications_percent: float


def _summarize(publications: list) -> GroupSummary:
    n = len(publications)
    publishers = sum(1 for p in publications if p >= 1)
    return GroupSummary(actors=n, publishers=publishers,
                        fraction_publishing=publishers / n if n else 0.0,
                        mean_publications=sum(publications) / n if n else 0.0)


def q8_posts_vs_publications(warehouse: Warehouse, records: list, threshold: int,
                             count_recovered: bool = False) -> PublicationJoin:
    """
    Join the posters with at least threshold posts to their publication counts and compare the share of
    publishers and the mean publication count with the remaining posters.
    """
    if threshold < 0:
        raise ValueError(f'Threshold must be at least 0, got {threshold}')

    publications = {r.full_name: r.publication_count for r in records}
    per_actor = {link.actor_id: publications.get(link.external_name, 0) for link in link_actors(warehouse, records)}
    posters = [r for r in q1_posts_per_actor(warehouse, 0, count_recovered) if not r.is_unresolved]
    top = [r for r in posters if r.total_posts >= threshold]
    others = [r for r in posters if r.total_posts < threshold]

    rows = tuple(JoinedRow(r.actor_id, r.name, r.total_posts, per_actor.get(r.actor_id, 0)) for r in top)
    return PublicationJoin(rows=rows,
                           top=_summarize([row.publications for row in rows]),
                           others=_summarize([per_actor.get(r.actor_id, 0) for r in others]))


def normalize_join(join: PublicationJoin) -> list:
    """Posts and publications of the top posters as percentages of the largest value of each"""

    most_posts = max((r.posts for r in join.rows), default=0)
    most_publications = max((r.publications for r in join.rows), default=0)
    return [NormalizedRow(r.actor_id,
                          100.0 * r.posts / most_posts if most_posts else 0.0,
                          100.0 * r.publications / most_publications if most_publications else 0.0)
            for r in join.rows]


@dataclass(frozen=True)
class RecommendationAuthor:
    actor_id: str
    recommendation_ids: tuple


@dataclass(frozen=True)
class AbsentAuthor:
    full_name: str
    recommendation_ids: tuple


@dataclass(frozen=True)
class RecommendationReport:
    authors: tuple  # RecommendationAuthor, by actor id
    absent: tuple  # AbsentAuthor: signed recommendations but never posted


def q7_recommendation_authors(warehouse: Warehouse, tech_reports: list) -> RecommendationReport:
    """Recommendations signed by each posting actor, and the signers with no presence on the lists"""

    owners = warehouse.email_owners()
    posting = set()
    for m in warehouse.messages():
        posting.update(owners.get(e) for e in [m.sender_email, *(h.email for h in m.recovered_senders)])
    posting.discard(None)
    by_name = {r.full_name: r for r in tech_reports}
    linked_names = {}
    for link in link_actors(warehouse, tech_reports):
        if link.external_name is not None:
            linked_names[link.external_name] = link.actor_id

    authors, absent = [], []
    for name, record in sorted(by_name.items()):
        actor_id = linked_names.get(name)
        if actor_id is not None and actor_id in posting:
            authors.append(RecommendationAuthor(actor_id, record.recommendation_ids))
        else:
            absent.append(AbsentAuthor(name, record.recommendation_ids))
    if absent:
        logger.info(f'{len(absent)} recommendation authors never posted: {", ".join(a.full_name for a in absent)}')
    return RecommendationReport(authors=tuple(sorted(authors, key=lambda a: a.actor_id)), absent=tuple(absent))
