#!/usr/bin/env python3
"""Resolving email addresses to physical actors."""

import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from itertools import combinations

import dateutil.parser
import pytz
from more_itertools import last
from tqdm import tqdm
from unidecode import unidecode

from settings import non_person_tokens
from src.model import Actor, EmailAddress, HiddenSender, Marker, PersonName, Warehouse, Thread, map_tree
from src.utilities import fold_name

logger = logging.getLogger(__name__)

_parenthesized = re.compile(r'\([^)]*\)|\[[^\]]*\]')
_local_separators = re.compile(r'[._\-+]+')
_hidden_marker = re.compile(
    r'(?P<marker>reported\s*by|comments?\s+from)[\s:\-]*<?(?P<email>[^\s<>()\[\],;:"\']+@[^\s<>()\[\],;:"\']+)>?'
    r'(?P<rest>[^\n]*?)(?=reported\s*by|comments?\s+from|$)',
    re.IGNORECASE)


class MergeEvidence(Enum):
    SAME_NAME = 'same-name'
    BODY_ANALYSIS = 'body-analysis'
    MANUAL = 'manual'


@dataclass(frozen=True, order=True)
class MergeProposal:
    actor_a: str  # the lexicographically smaller id
    actor_b: str
    evidence: MergeEvidence
    score: float


@dataclass(frozen=True)
class NameCandidate:
    """A name guessed from an address"""

    name: PersonName
    low_confidence: bool = False
    non_person: bool = False  # the local part names a role or a robot


def parse_person_name(display: str) -> PersonName:
    """
    Parse a display name. Two tokens are read as 'Firstname Lastname' unless the first is all uppercase with at least
    two letters: 'KAY Michael' is Lastname Firstname but 'J Smith' stays Firstname Lastname. A comma gives
    'Lastname, Firstname Middlenames'; with three or more tokens the first is the firstname, the last the lastname
    and the rest middle names; a single token is a lastname.
    :param display: e.g. 'Michael Kay', 'Kay, Michael', 'KAY Michael' or 'Ashok K Malhotra'
    :raises ValueError: if nothing usable remains once quotes, bracketed comments and addresses are removed
    """
    text = _parenthesized.sub(' ', display or '')
    text = ' '.join(t.strip('"') for t in text.split() if '@' not in t and t.strip('"'))
    if not text:
        raise ValueError(f'Cannot parse a person name from {display!r}')

    if ',' in text:
        surname, given = text.split(',', 1)
        surname = ' '.join(surname.split())
        given = given.replace(',', ' ').split()
        if surname:
            return PersonName(lastname=surname, firstname=given[0] if given else None, middlenames=tuple(given[1:]))
        text = ' '.join(given)
        if not text:
            raise ValueError(f'Cannot parse a person name from {display!r}')

    tokens = text.split()
    if len(tokens) == 1:
        return PersonName(lastname=tokens[0])
    if len(tokens) == 2:
        head, tail = tokens
        if head.isupper() and sum(c.isalpha() for c in head) > 1:
            return PersonName(lastname=head, firstname=tail)
        return PersonName(lastname=tail, firstname=head)
    return PersonName(lastname=tokens[-1], firstname=tokens[0], middlenames=tuple(tokens[1:-1]))


def derive_actor_from_email(email: EmailAddress) -> NameCandidate:
    """
    Guess a name from the local part of an address, e.g. michael.kay@softwareag.com gives Michael Kay.
    Single-token local parts and role addresses (see settings.non_person_tokens) are flagged low confidence.
    A local part holding no name characters at all, such as '""' or '"()"', names the actor after the domain.
    """
    local = email.local
    tokens = [t for t in _local_separators.split(local) if t and not t.isdigit()]
    non_person = local in non_person_tokens or any(t in non_person_tokens for t in tokens)
    if not tokens:
        tokens = [local]
    try:
        name = parse_person_name(' '.join(t[:1].upper() + t[1:] for t in tokens))
    except ValueError:
        logger.warning(f'No name in the local part of {email}; using its domain')
        return NameCandidate(name=PersonName(lastname=email.domain), low_confidence=True, non_person=non_person)
    return NameCandidate(name=name, low_confidence=non_person or len(tokens) < 2, non_person=non_person)


def _id_part(text: str) -> str:
    return re.sub(r'[^a-z0-9]', '', unidecode(text or '').lower())


def make_actor_id(name: PersonName, taken: set) -> str:
    """
    Build an actor key: lowercase 'lastname-firstname' with non-alphanumerics removed, suffixed -2, -3... when
    the key is already taken. The key is added to taken.
    """
    base = '-'.join(p for p in [_id_part(name.lastname), _id_part(name.firstname)] if p) or 'actor'
    if not base[0].isalpha():
        base = f'a{base}'
    key, n = base, 1
    while key in taken:
        n += 1
        key = f'{base}-{n}'
    taken.add(key)
    return key


def _name_key(name: PersonName):
    if not name.firstname:
        return None
    return fold_name(name.firstname), fold_name(name.lastname)


def build_actors(senders: dict, existing: tuple = (), strict_homonym: bool = False) -> tuple:
    """
    Create actors for sender addresses that no existing actor owns.

    The name comes from the most frequent display name used with the address, or from the address itself when no
    display name parses. Unless strict_homonym is set, an address whose confidently known (firstname, lastname)
    equals that of an actor is given to that actor instead of a new one.

    :param senders: EmailAddress -> list of display names seen with it (may be empty)
    :param existing: actors already in the warehouse
    :param strict_homonym: never key two addresses to one actor by name
    :return: the full actor tuple, existing actors included
    """
    actors = {a.id: a for a in existing}
    owned = {e for a in existing for e in a.emails}
    taken = set(actors)
    by_name = {} if strict_homonym else {_name_key(a.name): a.id for a in sorted(existing, key=lambda x: x.id)
                                         if _name_key(a.name)}

    for address in tqdm(sorted(senders), desc='registering senders'):  # progress bar
        if address in owned:
            continue
        name, confident = None, True
        for display, _ in sorted(Counter(d for d in senders[address] if d).items(), key=lambda x: (-x[1], x[0])):
            try:
                name = parse_person_name(display)
                break
            except ValueError:
                continue
        if name is None:
            candidate = derive_actor_from_email(address)
            name, confident = candidate.name, not candidate.low_confidence

        key = _name_key(name) if confident and not strict_homonym else None
        if key in by_name:
            owner = actors[by_name[key]]
            actors[owner.id] = replace(owner, emails=owner.emails | {address})
            logger.info(f'Keyed {address} to actor {owner.id} by name')
        else:
            actor = Actor(id=make_actor_id(name, taken), name=name, emails=frozenset({address}))
            actors[actor.id] = actor
            if key is not None:
                by_name[key] = actor.id
        owned.add(address)
    return tuple(sorted(actors.values(), key=lambda a: a.id))


def register_senders(warehouse: Warehouse, strict_homonym: bool = False) -> Warehouse:
    """Return the warehouse with an actor for every sender address of its messages"""

    senders = defaultdict(list)
    for m in warehouse.messages():
        senders[m.sender_email].append(m.sender_name)
    actors = build_actors(senders, warehouse.actors, strict_homonym=strict_homonym)
    logger.info(f'{len(actors) - len(warehouse.actors)} actors created')
    return replace(warehouse, actors=actors)


def propose_merges(warehouse: Warehouse) -> list:
    """
    Propose pairs of actors that may be one person: equal firstname and lastname scores 1.0, equal lastname and
    firstnames sharing an initial scores 0.5. Proposals are never applied here.
    :return: proposals sorted by descending score, then ids
    """
    blocks = defaultdict(list)
    for a in warehouse.actors:
        if a.name is not None and a.name.firstname:
            blocks[fold_name(a.name.lastname)].append(a)

    proposals = []
    for block in blocks.values():
        for a, b in combinations(sorted(block, key=lambda x: x.id), 2):
            fa, fb = fold_name(a.name.firstname).replace(' ', ''), fold_name(b.name.firstname).replace(' ', '')
            if fa == fb:
                proposals.append(MergeProposal(a.id, b.id, MergeEvidence.SAME_NAME, 1.0))
            elif fa and fb and fa[0] == fb[0]:
                proposals.append(MergeProposal(a.id, b.id, MergeEvidence.SAME_NAME, 0.5))
    return sorted(proposals, key=lambda p: (-p.score, p.actor_a, p.actor_b))


def apply_merge(warehouse: Warehouse, keep_id: str, drop_id: str) -> Warehouse:
    """
    Merge the actor drop_id into keep_id: addresses are united, functions re-pointed and drop_id removed.
    Threads are not touched since messages only store addresses.
    :raises ValueError: if either id is unknown or both are the same
    """
    if keep_id == drop_id:
        raise ValueError(f'Cannot merge actor {keep_id} with itself')
    keep, drop = warehouse.actor(keep_id), warehouse.actor(drop_id)

    merged = replace(keep,
                     emails=keep.emails | drop.emails,
                     sex=keep.sex or drop.sex,
                     birth_date=keep.birth_date or drop.birth_date,
                     diplomas=keep.diplomas + tuple(d for d in drop.diplomas if d not in keep.diplomas),
                     skills=keep.skills + tuple(s for s in drop.skills if s not in keep.skills))
    actors = tuple(merged if a.id == keep_id else a for a in warehouse.actors if a.id != drop_id)
    functions = []
    for f in warehouse.functions:
        f = replace(f, actor_ref=keep_id) if f.actor_ref == drop_id else f
        if f not in functions:
            functions.append(f)
    logger.info(f'Merged actor {drop_id} into {keep_id}')
    return replace(warehouse, actors=actors, functions=tuple(functions))


def apply_confirmed_merges(warehouse: Warehouse, pairs: list) -> Warehouse:
    """
    Apply manually confirmed (keep_id, drop_id) pairs in order. An id dropped by an earlier pair stands for the
    actor it was merged into.
    """
    merged_into = {}

    def current(actor_id):
        while actor_id in merged_into:
            actor_id = merged_into[actor_id]
        return actor_id

    for keep_id, drop_id in pairs:
        keep_id, drop_id = current(keep_id), current(drop_id)
        if keep_id == drop_id:
            logger.info(f'Skipping merge of {drop_id}: already merged into {keep_id}')
            continue
        warehouse = apply_merge(warehouse, keep_id, drop_id)
        merged_into[drop_id] = keep_id
    return warehouse


def _hidden_date(text: str):
    text = text.strip(' \t-:,;()[]*=')
    if not any(c.isdigit() for c in text):
        return None
    try:
        moment = dateutil.parser.parse(text)
    except (ValueError, OverflowError):
        return None
    return pytz.utc.localize(moment) if moment.tzinfo is None else moment.astimezone(pytz.utc)


def recover_hidden_senders(message, gateways) -> list:
    """
    Find the people a gateway message was really sent by, from 'reported by <email> [date]' and
    'comment(s) from <email> [date]' markers in its body. The body is only read.
    :param message: a MessageNode sent from a gateway address
    :param gateways: set of gateway EmailAddress
    :return: one HiddenSender per marker, in body order
    :raises ValueError: if the message was not sent from a gateway
    """
    if message.sender_email not in gateways:
        raise ValueError(f'Message {message.message_id} was not sent from a gateway address')

    found = []
    for line in message.body.splitlines():
        for hit in _hidden_marker.finditer(line):
            marker = Marker.REPORTED_BY if hit.group('marker').lower().startswith('reported') else Marker.COMMENTS_FROM
            try:
                email = EmailAddress.parse(hit.group('email').rstrip('.'))
            except ValueError:
                logger.debug(f'Ignoring malformed hidden address {hit.group("email")} in {message.message_id}')
                continue
            found.append(HiddenSender(marker=marker, email=email, date=_hidden_date(hit.group('rest'))))
    return found


def recover_warehouse(warehouse: Warehouse, gateways) -> tuple:
    """
    Record the hidden senders of every gateway message.
    :return: (updated warehouse, sorted addresses recovered that no actor owns)
    """
    gateways = set(gateways)

    def rebuild(node, children):
        recovered = tuple(recover_hidden_senders(node, gateways)) if node.sender_email in gateways else ()
        return replace(node, recovered_senders=recovered, children=children)

    lists = {list_id: tuple(Thread(t.list_id, map_tree(t.root, rebuild)) for t in threads)
             for list_id, threads in warehouse.lists.items()}
    recovered = replace(warehouse, lists=lists)

    owners = recovered.email_owners()
    hits = [h for m in recovered.messages() for h in m.recovered_senders]
    unknown = sorted({h.email.address for h in hits if h.email not in owners})
    logger.info(f'Recovered {len(hits)} hidden senders from gateway messages; {len(unknown)} have no actor')
    if unknown:
        logger.warning(f'Recovered addresses with no actor: {", ".join(unknown)}')
    return recovered, unknown


def last_hidden_sender(message):
    """The recovered sender a gateway message is attributed to, or None"""

    return last(message.recovered_senders, None)
