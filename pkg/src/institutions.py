#!/usr/bin/env python3
"""Institutions behind email domains and the dated affiliations derived from posting addresses."""

import functools
import logging
from collections import defaultdict
from dataclasses import dataclass, replace

import tldextract
from tqdm import tqdm

from settings import corporate_suffixes, derived_role
from src.model import EmailAddress, Function, Institution, Warehouse
from src.utilities import fold_name

logger = logging.getLogger(__name__)


class DomainResolver:
    """Collapses domains to their registrable part using the bundled public-suffix snapshot (no network access)"""

    def __init__(self, extra_suffixes: tuple = ()):
        self.extra_suffixes = tuple(sorted(s.strip('.').lower() for s in extra_suffixes if s.strip('.')))
        self._extract = tldextract.TLDExtract(suffix_list_urls=(), cache_dir=None,
                                              extra_suffixes=self.extra_suffixes)

    def registrable(self, domain: str) -> str:
        """Return e.g. ibm.com for us.ibm.com; domains without a known public suffix are returned whole"""

        return self._extract(domain).registered_domain or domain


@functools.lru_cache(maxsize=None)
def default_resolver() -> DomainResolver:
    return DomainResolver()


def email_domain(email: EmailAddress, registrable: bool = False, resolver: DomainResolver = None) -> str:
    """
    Return the domain of an address.
    :param email: e.g. don@us.ibm.com
    :param registrable: collapse to the registrable domain (ibm.com) instead of the full one (us.ibm.com)
    :param resolver: resolver holding extra public suffixes; the default snapshot is used otherwise
    """
    domain = email.domain.lower()
    if registrable:
        return (resolver or default_resolver()).registrable(domain)
    return domain


def _alias_key(name: str) -> str:
    tokens = fold_name(name).split()
    while len(tokens) > 1 and tokens[-1] in corporate_suffixes:
        tokens.pop()
    return ' '.join(tokens)


class AliasTable:
    """Case and punctuation insensitive lookup from institution name variants to canonical names"""

    def __init__(self, pairs=()):
        self._canonical = {}
        self.variants = defaultdict(set)  # canonical -> variants as written
        for variant, canonical in pairs:
            self._canonical[_alias_key(variant)] = canonical
            self.variants[canonical].add(variant)
        for canonical in list(self.variants):  # canonical names are fixed points
            self._canonical[_alias_key(canonical)] = canonical

    def __len__(self):
        return len(self.variants)

    @property
    def canonicals(self) -> list:
        return sorted(self.variants)

    def lookup(self, name: str):
        return self._canonical.get(_alias_key(name))


def normalize_institution(name: str, alias_table: AliasTable) -> str:
    """
    Map an institution name to its canonical form, e.g. 'Sun Microsystems Inc.' to 'Sun'. Names the table does
    not know are returned unchanged.
    """
    canonical = alias_table.lookup(name)
    if canonical is None:
        logger.info(f'No alias for institution name {name!r}')
        return name
    return canonical


@dataclass(frozen=True)
class InstitutionRef:
    key: str  # institution id, or the domain itself for a bucket
    bucket: bool = False

    def __str__(self):
        return self.key


def resolve_domain(domain: str, domain_map: dict) -> InstitutionRef:
    """
    Resolve a domain through the domain map, trying the domain and then its parent domains, so a mapping for
    ibm.com covers us.ibm.com. Unmapped domains are their own bucket.
    :param domain_map: domain -> institution id
    """
    labels = domain.lower().split('.')
    for i in range(max(len(labels) - 1, 1)):
        candidate = '.'.join(labels[i:])
        if candidate in domain_map:
            return InstitutionRef(domain_map[candidate])
    return InstitutionRef(domain.lower(), bucket=True)


def _overlaps(a: Function, b: Function) -> bool:
    return a.start <= b.end and b.start <= a.end


def build_affiliation_timeline(warehouse: Warehouse, actor_id: str, domain_map: dict) -> list:
    """
    Derive dated functions from the addresses an actor posted from. Each mapped institution gets one function
    running from the first to the last direct post through one of its domains. Functions that overlap another
    function of the actor are flagged fuzzy; the overlap is not resolved.
    :raises ValueError: if the actor is unknown
    """
    actor = warehouse.actor(actor_id)
    spans = {}
    for m in warehouse.messages():
        if m.sender_email not in actor.emails:
            continue
        ref = resolve_domain(m.sender_email.domain, domain_map)
        if ref.bucket:
            continue
        day = m.date.date()
        first, last = spans.get(ref.key, (day, day))
        spans[ref.key] = (min(first, day), max(last, day))

    functions = [Function(actor_ref=actor_id, institution_ref=key, role_name=derived_role, start=start, end=end)
                 for key, (start, end) in sorted(spans.items())]
    timeline = [replace(f, fuzzy=any(_overlaps(f, g) for g in functions if g is not f)) for f in functions]
    return sorted(timeline, key=lambda f: (f.start, f.institution_ref))


def build_institutions(domain_map: dict, alias_table: AliasTable = None, names: dict = None) -> tuple:
    """
    Create an Institution for every institution id the domain map or the names table mentions.
    :param domain_map: domain -> institution id
    :param alias_table: supplies the aliases of each canonical name
    :param names: institution id -> canonical name (defaults to the id)
    """
    alias_table = alias_table or AliasTable()
    names = names or {}
    domains = defaultdict(set)
    for domain, institution_id in domain_map.items():
        domains[institution_id].add(domain)

    institutions = []
    for institution_id in sorted(set(domains) | set(names)):
        canonical = normalize_institution(names.get(institution_id, institution_id), alias_table)
        aliases = frozenset(v for v in alias_table.variants.get(canonical, ()) if v != canonical)
        institutions.append(Institution(id=institution_id, canonical_name=canonical, aliases=aliases,
                                        domains=frozenset(domains[institution_id])))
    return tuple(institutions)


def enrich_functions(warehouse: Warehouse, domain_map: dict, institutions: tuple = ()) -> Warehouse:
    """
    Add institutions and replace the functions derived from posting history with freshly computed timelines.
    Functions with another role are kept.
    """
    known = {i.id: i for i in warehouse.institutions}
    known.update({i.id: i for i in institutions})
    missing = sorted(set(domain_map.values()) - set(known))
    for institution_id in missing:
        logger.warning(f'Domain map names institution {institution_id} with no entry; using the id as its name')
        known[institution_id] = Institution(id=institution_id, canonical_name=institution_id,
                                            domains=frozenset(d for d, i in domain_map.items() if i == institution_id))

    functions = [f for f in warehouse.functions if f.role_name != derived_role]
    for actor in tqdm(sorted(warehouse.actors, key=lambda a: a.id), desc='building timelines'):  # progress bar
        functions.extend(build_affiliation_timeline(warehouse, actor.id, domain_map))
    return replace(warehouse, institutions=tuple(sorted(known.values(), key=lambda i: i.id)),
                   functions=tuple(sorted(functions, key=lambda f: f.sort_key)))


@dataclass(frozen=True)
class InstitutionActivity:
    domain: str
    institution: str  # institution id, or the domain when unmapped
    messages: int
    actors: int


def institution_report(warehouse: Warehouse, domain_map: dict, resolver: DomainResolver = None) -> list:
    """Per registrable sender domain: the institution it resolves to, its messages and its distinct actors"""

    owners = warehouse.email_owners()
    messages, actors = defaultdict(int), defaultdict(set)
    for m in warehouse.messages():
        domain = email_domain(m.sender_email, registrable=True, resolver=resolver)
        messages[domain] += 1
        actors[domain].add(owners.get(m.sender_email, m.sender_email.address))

    rows = [InstitutionActivity(domain=d, institution=resolve_domain(d, domain_map).key, messages=n,
                                actors=len(actors[d]))
            for d, n in messages.items()]
    return sorted(rows, key=lambda r: (-r.messages, r.domain))
