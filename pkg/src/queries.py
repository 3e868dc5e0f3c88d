#!/usr/bin/env python3
"""
The analytic queries run over a warehouse snapshot. Every query is a pure function of the warehouse and returns
rows in a deterministic order: descending counts, ties broken by id or domain.
"""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from more_itertools import last

from settings import unresolved_row
from src.institutions import DomainResolver, email_domain, resolve_domain
from src.model import Marker, Warehouse
from src.utilities import normalize_subject, period_of, period_range, period_start

logger = logging.getLogger(__name__)

DIRECT = 'direct'  # series kind of posts sent from the actor's own address
_granularity_of_label = {4: 'year', 7: 'month', 10: 'day'}


@dataclass(frozen=True)
class ActorPostCount:
    actor_id: str
    name: str
    total_posts: int
    per_list: dict = field(default_factory=dict)  # list id -> posts, lists without posts omitted

    @property
    def is_unresolved(self) -> bool:
        return self.actor_id == unresolved_row['actor_id']


@dataclass(frozen=True)
class MonthBucket:
    period: str  # 'YYYY-MM' by default, 'YYYY-MM-DD' or 'YYYY' for other granularities
    count: int


@dataclass(frozen=True)
class EmailTimeline:
    actor_id: str
    series: dict = field(default_factory=dict)  # (address, 'direct' or marker value) -> list of MonthBucket

    @property
    def periods(self) -> list:
        return sorted({b.period for buckets in self.series.values() for b in buckets})

    def total(self) -> int:
        return sum(b.count for buckets in self.series.values() for b in buckets)


@dataclass(frozen=True)
class InstitutionPostCount:
    institution: str  # registrable domain, or institution id when the domain map covers it
    count: int


@dataclass(frozen=True)
class PostingShare:
    selected_posts: int
    total_posts: int
    gateway_posts: int
    share_of_all: float
    share_excluding_gateways: float  # gateway messages removed from the denominator


@dataclass(frozen=True)
class ThreadRole:
    actor_id: str
    initiated: int  # threads started
    replies: int


@dataclass(frozen=True)
class DistributionBucket:
    posts: int
    actors: int


@dataclass(frozen=True)
class SubjectCluster:
    subject: str
    count: int


def attribute(message, owners: dict, count_recovered: bool = False):
    """
    Return the id of the actor a message counts for, or None when its address has no owner.
    With count_recovered, a gateway message carrying recovered senders counts for the owner of the last one.
    """
    if count_recovered and message.recovered_senders:
        return owners.get(last(message.recovered_senders).email)
    return owners.get(message.sender_email)


def _display_name(warehouse: Warehouse, actor_id: str) -> str:
    return warehouse.actor(actor_id).name.full_name


def q1_posts_per_actor(warehouse: Warehouse, threshold: int = 0, count_recovered: bool = False) -> list:
    """
    Count the posts of every actor, per list and in total.
    :param threshold: actors with fewer posts are left out
    :param count_recovered: attribute gateway messages to the hidden senders recovered from their bodies
    :return: ActorPostCount rows, most posts first; messages nobody owns are gathered in a final 'unresolved'
             row whenever there are any
    """
    if threshold < 0:
        raise ValueError(f'Threshold must be at least 0, got {threshold}')

    owners = warehouse.email_owners()
    counts = defaultdict(Counter)
    for list_id in warehouse.list_ids:
        for m in warehouse.messages(list_id):
            counts[attribute(m, owners, count_recovered)][list_id] += 1

    rows = [ActorPostCount(actor_id=a, name=_display_name(warehouse, a), total_posts=sum(c.values()),
                           per_list=dict(sorted(c.items())))
            for a, c in counts.items() if a is not None and sum(c.values()) >= threshold]
    rows.sort(key=lambda r: (-r.total_posts, r.actor_id))
    if counts.get(None):
        unresolved = counts[None]
        rows.append(ActorPostCount(actor_id=unresolved_row['actor_id'], name=unresolved_row['name'],
                                   total_posts=sum(unresolved.values()), per_list=dict(sorted(unresolved.items()))))
    logger.debug(f'q1: {len(rows)} rows at threshold {threshold}')
    return rows


def q1_share(warehouse: Warehouse, rows: list, gateways) -> PostingShare:
    """
    Share of all messages covered by the actor rows of a q1 result, computed over all messages and over the
    messages not sent from a gateway.
    """
    total = warehouse.message_count()
    gateways = set(gateways)
    gateway_posts = sum(1 for m in warehouse.messages() if m.sender_email in gateways)
    selected = sum(r.total_posts for r in rows if not r.is_unresolved)
    return PostingShare(selected_posts=selected, total_posts=total, gateway_posts=gateway_posts,
                        share_of_all=selected / total if total else 0.0,
                        share_excluding_gateways=selected / (total - gateway_posts) if total > gateway_posts else 0.0)


def q2_multi_list_posters(warehouse: Warehouse, min_lists: int = 2, count_recovered: bool = False) -> list:
    """Actors who posted on at least min_lists lists, whatever their volume"""

    if min_lists < 2:
        raise ValueError(f'A multi-list poster needs at least 2 lists, got {min_lists}')
    return [r for r in q1_posts_per_actor(warehouse, 0, count_recovered)
            if not r.is_unresolved and len(r.per_list) >= min_lists]


def _check_period(label: str, granularity: str):
    try:
        valid = period_of(period_start(label), granularity) == label
    except ValueError:
        valid = False
    if not valid:
        raise ValueError(f'{label} is not a {granularity} period label')


def q3_posts_per_month(warehouse: Warehouse, list_id: str, granularity: str = 'month', start: str = None,
                       end: str = None) -> list:
    """
    Posts of one list per period, including empty periods. The series runs from the period of the list's own first
    post to that of its own last post, not over the span of the whole warehouse, so two lists rarely give series
    of the same length. Pinning start and end (e.g. to the warehouse span) lines series up; posts outside a
    pinned range are left out.
    :param granularity: 'month' (default), 'day' or 'year'
    :param start: period label to start at, shaped like the granularity ('2004-01' for months)
    :param end: period label to end at
    :return: MonthBucket list; empty when the list has no posts and the range is not fully pinned
    """
    if list_id not in warehouse.lists:
        raise ValueError(f'No list {list_id} in the warehouse')
    for label in (start, end):
        if label is not None:
            _check_period(label, granularity)
    counts = Counter(period_of(m.date, granularity) for m in warehouse.messages(list_id))
    start = start or (min(counts) if counts else None)
    end = end or (max(counts) if counts else None)
    if start is None or end is None:
        return []
    if start > end:
        raise ValueError(f'Period {start} comes after {end}')
    return [MonthBucket(p, counts.get(p, 0)) for p in period_range(start, end, granularity)]


def q4_fulltext(warehouse: Warehouse, list_id: str, needle: str, field: str = 'subject', period: str = None) -> list:
    """
    Messages whose subject or body contains needle, ignoring case, ordered by date.
    :param list_id: list to search, or None for every list
    :param period: optional period label such as '2004-02' restricting the dates
    """
    if not needle:
        raise ValueError('The search text must not be empty')
    if field not in ('subject', 'body'):
        raise ValueError(f'{field} not a valid field. Use subject or body')
    if list_id is not None and list_id not in warehouse.lists:
        raise ValueError(f'No list {list_id} in the warehouse')
    granularity = None
    if period is not None:
        granularity = _granularity_of_label.get(len(period))
        if granularity is None:
            raise ValueError(f'{period} is not a period label such as 2004, 2004-02 or 2004-02-03')

    needle = needle.casefold()
    hits = [m for m in warehouse.messages(list_id)
            if needle in getattr(m, field).casefold()
            and (period is None or period_of(m.date, granularity) == period)]
    return sorted(hits, key=lambda m: m.order_key)


def subject_clusters(messages, top_n: int = 10) -> list:
    """Most frequent subjects once reply prefixes are stripped"""

    counts = Counter(normalize_subject(m.subject) for m in messages)
    return [SubjectCluster(s, n) for s, n in sorted(counts.items(), key=lambda x: (-x[1], x[0]))[:top_n]]


def q5_email_timeline(warehouse: Warehouse, actor_id: str, granularity: str = 'month') -> EmailTimeline:
    """
    Posting series of an actor: one per address for direct posts, and one per (gateway address, marker) for
    gateway messages recovered for the actor. All series cover the same periods. The series add up to the
    actor's q1 total with recovered counting on.
    """
    actor = warehouse.actor(actor_id)
    owners = warehouse.email_owners()
    tallies = defaultdict(Counter)
    for m in warehouse.messages():
        if attribute(m, owners, count_recovered=True) != actor_id:
            continue
        if m.recovered_senders:
            key = (m.sender_email.address, last(m.recovered_senders).marker.value)
        else:
            key = (m.sender_email.address, DIRECT)
        tallies[key][period_of(m.date, granularity)] += 1

    if not tallies:
        return EmailTimeline(actor.id)
    labels = {p for c in tallies.values() for p in c}
    periods = period_range(min(labels), max(labels), granularity)
    series = {key: [MonthBucket(p, tallies[key].get(p, 0)) for p in periods] for key in sorted(tallies)}
    return EmailTimeline(actor.id, series)


def q6_posts_per_institution(warehouse: Warehouse, top_n: int = 20, domain_map: dict = None,
                             resolver: DomainResolver = None) -> list:
    """
    Messages per registrable sender domain, most first. Domains the domain map covers count for their
    institution id instead.
    """
    if top_n < 1:
        raise ValueError(f'top_n must be at least 1, got {top_n}')
    domain_map = domain_map or {}
    counts = Counter()
    for m in warehouse.messages():
        ref = resolve_domain(m.sender_email.domain, domain_map)
        counts[email_domain(m.sender_email, registrable=True, resolver=resolver) if ref.bucket else ref.key] += 1
    ranked = sorted(counts.items(), key=lambda x: (-x[1], x[0]))
    return [InstitutionPostCount(k, n) for k, n in ranked[:top_n]]


def thread_roles(warehouse: Warehouse) -> list:
    """Threads each actor started and replies each actor sent; unowned addresses are gathered as 'unresolved'"""

    owners = warehouse.email_owners()
    initiated, replies = Counter(), Counter()
    for list_id in warehouse.list_ids:
        for thread in warehouse.lists[list_id]:
            for m in thread.messages():
                actor_id = owners.get(m.sender_email, unresolved_row['actor_id'])
                if m is thread.root:
                    initiated[actor_id] += 1
                else:
                    replies[actor_id] += 1
    rows = [ThreadRole(a, initiated[a], replies[a]) for a in set(initiated) | set(replies)]
    return sorted(rows, key=lambda r: (-(r.initiated + r.replies), r.actor_id))


def posting_distribution(rows: list) -> list:
    """How many actors posted each number of messages, from a q1 result; helps choosing a q1 threshold"""

    counts = Counter(r.total_posts for r in rows if not r.is_unresolved)
    return [DistributionBucket(posts, n) for posts, n in sorted(counts.items(), reverse=True)]


def marker_label(kind: str) -> str:
    """Legend text of a q5 series kind"""

    if kind == DIRECT:
        return DIRECT
    return Marker(kind).value.replace('-', ' ')
