#!/usr/bin/env python3
"""Domain types of the warehouse and the validation of their ID/IDREF and uniqueness constraints."""

import datetime
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional

logger = logging.getLogger(__name__)

_xml_id = re.compile(r'^[A-Za-z_][A-Za-z0-9_.-]*$')  # Keys end up as xs:ID values, so they must be NCNames
_list_id = re.compile(r'^[A-Za-z0-9_][A-Za-z0-9_.-]*$')  # List ids name files under threads/


class Sex(Enum):
    MALE = 'male'
    FEMALE = 'female'
    OTHER = 'other'


class Marker(Enum):
    """How a gateway message names the person hidden behind it"""

    REPORTED_BY = 'reported-by'
    COMMENTS_FROM = 'comments-from'


@dataclass(frozen=True, order=True)
class EmailAddress:
    address: str  # canonical lowercase local@domain

    @classmethod
    def parse(cls, text: str) -> 'EmailAddress':
        """
        Canonicalize an address. Surrounding whitespace and angle brackets are dropped and both parts are lowercased.
        :param text: an address such as 'Michael.Kay@softwareag.com' or '<mhk@mhk.me.uk>'
        """
        address = (text or '').strip().strip('<>').strip().lower()
        if address.count('@') != 1 or any(c.isspace() for c in address):
            raise ValueError(f'{text!r} is not a valid email address')
        local, domain = address.split('@')
        if not local or not domain:
            raise ValueError(f'{text!r} is not a valid email address')
        return cls(address)

    @property
    def local(self) -> str:
        return self.address.split('@')[0]

    @property
    def domain(self) -> str:
        return self.address.split('@')[-1]

    def is_well_formed(self) -> bool:
        try:
            return EmailAddress.parse(self.address) == self
        except ValueError:
            return False

    def __str__(self):
        return self.address


@dataclass(frozen=True)
class PersonName:
    lastname: str
    firstname: Optional[str] = None
    middlenames: tuple = ()

    @property
    def parts(self) -> list:
        return [p for p in [self.firstname, *self.middlenames, self.lastname] if p is not None]

    @property
    def first_last(self) -> str:
        """'Firstname Lastname', the form used to join with external sources"""
        return ' '.join(p for p in [self.firstname, self.lastname] if p)

    @property
    def full_name(self) -> str:
        return ' '.join(p for p in self.parts if p)

    def rendered(self) -> str:
        """
        Render as 'Lastname, Firstname Middlenames'. Parsing this form gives back the same name, whatever the
        case of the tokens or the number of words in the last name.
        """
        given = ' '.join(p for p in [self.firstname, *self.middlenames] if p)
        if given:
            return f'{self.lastname}, {given}'
        return f'{self.lastname},' if ' ' in self.lastname else self.lastname


@dataclass(frozen=True)
class Actor:
    id: str
    name: PersonName
    emails: frozenset = frozenset()  # of EmailAddress
    sex: Optional[Sex] = None
    birth_date: Optional[datetime.date] = None
    diplomas: tuple = ()
    skills: tuple = ()
    extensions: tuple = field(default=(), compare=False)  # unknown elements kept verbatim when asked to


@dataclass(frozen=True)
class Institution:
    id: str
    canonical_name: str
    aliases: frozenset = frozenset()
    domains: frozenset = frozenset()
    extensions: tuple = field(default=(), compare=False)


@dataclass(frozen=True)
class Function:
    """A dated link between an actor and an institution"""

    actor_ref: str
    institution_ref: str
    role_name: str
    start: Optional[datetime.date] = None
    end: Optional[datetime.date] = None
    fuzzy: bool = False  # overlaps another function of the same actor
    extensions: tuple = field(default=(), compare=False)

    @property
    def sort_key(self) -> tuple:
        return (self.actor_ref, self.institution_ref, self.start or datetime.date.min,
                self.end or datetime.date.max, self.role_name)


@dataclass(frozen=True)
class HiddenSender:
    marker: Marker
    email: EmailAddress
    date: Optional[datetime.datetime] = None


@dataclass(frozen=True)
class MessageNode:
    message_id: str
    list_id: str
    sender_email: EmailAddress
    date: datetime.datetime  # timezone-aware, UTC
    subject: str = ''
    body: str = ''
    sender_name: Optional[str] = None  # display name from the From header
    in_reply_to: Optional[str] = None
    references: tuple = ()
    topics: tuple = ()
    recovered_senders: tuple = ()  # of HiddenSender
    children: tuple = ()  # of MessageNode, ordered by (date, message_id)
    extensions: tuple = field(default=(), compare=False)

    @property
    def order_key(self) -> tuple:
        return self.date, self.message_id

    def walk(self) -> Iterator['MessageNode']:
        """Yield this message and all its descendants, depth first, parents before children"""

        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass(frozen=True)
class Thread:
    list_id: str
    root: MessageNode

    def messages(self) -> Iterator[MessageNode]:
        return self.root.walk()


def map_tree(root: MessageNode, rebuild) -> MessageNode:
    """
    Rebuild a message tree bottom-up without recursion.
    :param root: the root of the tree to rebuild
    :param rebuild: called as rebuild(node, new_children) for every node, children first; returns the new node
    """
    rebuilt = {}
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            rebuilt[id(node)] = rebuild(node, tuple(rebuilt.pop(id(child)) for child in node.children))
        else:
            stack.append((node, True))
            stack.extend((child, False) for child in node.children)
    return rebuilt[id(root)]


def _sort_children(node: MessageNode, children: tuple) -> MessageNode:
    return replace(node, children=tuple(sorted(children, key=lambda m: m.order_key)))


@dataclass(frozen=True, order=True)
class Violation:
    entity_id: str
    rule: str
    detail: str = ''

    def __str__(self):
        return f'{self.rule}: {self.entity_id} {self.detail}'.rstrip()


@dataclass(frozen=True)
class ValidationReport:
    """Every broken warehouse constraint. An empty report means the warehouse is valid."""

    violations: tuple = ()
    unresolved: tuple = ()  # sender addresses owned by no actor; reported, not a violation

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


@dataclass(frozen=True)
class Warehouse:
    actors: tuple = ()
    institutions: tuple = ()
    functions: tuple = ()
    lists: dict = field(default_factory=dict)  # list id -> tuple of Thread
    report: Optional[ValidationReport] = field(default=None, compare=False)
    warnings: tuple = field(default=(), compare=False)

    def canonical(self) -> 'Warehouse':
        """Return the same warehouse in the order it is written to disk"""

        lists = {}
        for list_id in sorted(self.lists):
            threads = [Thread(t.list_id, map_tree(t.root, _sort_children)) for t in self.lists[list_id]]
            lists[list_id] = tuple(sorted(threads, key=lambda t: t.root.order_key))
        return replace(self,
                       actors=tuple(sorted(self.actors, key=lambda a: a.id)),
                       institutions=tuple(sorted(self.institutions, key=lambda i: i.id)),
                       functions=tuple(sorted(self.functions, key=lambda f: f.sort_key)),
                       lists=lists)

    @property
    def list_ids(self) -> list:
        return sorted(self.lists)

    def actor(self, actor_id: str) -> Actor:
        for a in self.actors:
            if a.id == actor_id:
                return a
        raise ValueError(f'No actor with id {actor_id} was found')

    def has_actor(self, actor_id: str) -> bool:
        return any(a.id == actor_id for a in self.actors)

    def email_owners(self) -> dict:
        """Map each EmailAddress to the id of the actor owning it"""

        owners = {}
        for a in sorted(self.actors, key=lambda x: x.id):
            for e in a.emails:
                owners.setdefault(e, a.id)
        return owners

    def messages(self, list_id: str = None) -> Iterator[MessageNode]:
        """Yield every message of one list, or of all lists when list_id is None"""

        for key in ([list_id] if list_id is not None else self.list_ids):
            for thread in self.lists.get(key, ()):
                yield from thread.messages()

    def message_count(self, list_id: str = None) -> int:
        return sum(1 for _ in self.messages(list_id))


class WarehouseValidationError(ValueError):

    def __init__(self, report: ValidationReport):
        self.report = report
        summary = '; '.join(str(v) for v in report.violations[:5])
        super().__init__(f'Warehouse is invalid ({len(report)} violations): {summary}')


class WarehouseParseError(ValueError):

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f'{self.path}:{line}: {message}')


def unresolved_senders(warehouse: Warehouse) -> list:
    """Return the sorted sender addresses that no actor owns"""

    owners = warehouse.email_owners()
    return sorted({m.sender_email.address for m in warehouse.messages() if m.sender_email not in owners})


def _check_name(actor: Actor, violations: list):
    name = actor.name
    if name is None or not name.lastname or not name.lastname.strip():
        violations.append(Violation(actor.id, 'missing-lastname'))
        return
    for part in name.parts:
        if part != part.strip() or not part:
            violations.append(Violation(actor.id, 'name-whitespace', repr(part)))


def validate(warehouse: Warehouse) -> ValidationReport:
    """
    Check every warehouse constraint and report each violation with the entity it concerns.
    :param warehouse: the warehouse to check; it is not modified
    :return: a ValidationReport, empty when the warehouse is valid
    """
    violations = []
    seen_ids = set()
    email_users = defaultdict(set)

    for a in warehouse.actors:
        if not _xml_id.match(a.id or ''):
            violations.append(Violation(a.id, 'id-format'))
        if a.id in seen_ids:
            violations.append(Violation(a.id, 'duplicate-id'))
        seen_ids.add(a.id)
        if not a.emails:
            violations.append(Violation(a.id, 'missing-email'))
        for e in a.emails:
            if not e.is_well_formed():
                violations.append(Violation(a.id, 'malformed-email', e.address))
            email_users[e].add(a.id)
        _check_name(a, violations)

    for e, users in email_users.items():
        if len(users) > 1:
            violations.append(Violation(e.address, 'shared-email', ','.join(sorted(users))))

    alias_owner = defaultdict(set)
    for i in warehouse.institutions:
        for alias in i.aliases:
            alias_owner[alias.casefold()].add(i.id)
    for i in warehouse.institutions:
        if not _xml_id.match(i.id or ''):
            violations.append(Violation(i.id, 'id-format'))
        if i.id in seen_ids:
            violations.append(Violation(i.id, 'duplicate-id'))
        seen_ids.add(i.id)
        if not i.canonical_name:
            violations.append(Violation(i.id, 'missing-name'))
        elif alias_owner[i.canonical_name.casefold()] - {i.id}:
            others = ','.join(sorted(alias_owner[i.canonical_name.casefold()] - {i.id}))
            violations.append(Violation(i.id, 'alias-collision', f'{i.canonical_name} is an alias of {others}'))

    actor_ids = {a.id for a in warehouse.actors}
    institution_ids = {i.id for i in warehouse.institutions}
    for f in warehouse.functions:
        label = f'{f.actor_ref}@{f.institution_ref}'
        if f.actor_ref not in actor_ids:
            violations.append(Violation(f.actor_ref, 'dangling-actor-ref', label))
        if f.institution_ref not in institution_ids:
            violations.append(Violation(f.institution_ref, 'dangling-institution-ref', label))
        if not f.role_name:
            violations.append(Violation(label, 'missing-role'))
        if f.end is not None and f.start is None:
            violations.append(Violation(label, 'interval-missing-start'))
        if f.start is not None and f.end is not None and f.start > f.end:
            violations.append(Violation(label, 'interval-order', f'{f.start} > {f.end}'))

    for list_id, threads in warehouse.lists.items():
        if not _list_id.match(list_id or ''):
            violations.append(Violation(list_id, 'list-id-format'))
        message_ids = set()
        for thread in threads:
            if thread.list_id != list_id:
                violations.append(Violation(thread.root.message_id, 'thread-list-mismatch', thread.list_id))
            for m in thread.messages():
                if m.message_id in message_ids:
                    violations.append(Violation(m.message_id, 'duplicate-message-id', list_id))
                message_ids.add(m.message_id)
                if not m.message_id:
                    violations.append(Violation(list_id, 'missing-message-id'))
                if m.list_id != list_id:
                    violations.append(Violation(m.message_id, 'message-list-mismatch', m.list_id))
                if not m.sender_email.is_well_formed():
                    violations.append(Violation(m.message_id, 'malformed-email', m.sender_email.address))
                if m.date.tzinfo is None:
                    violations.append(Violation(m.message_id, 'naive-date'))

    report = ValidationReport(tuple(sorted(violations)), tuple(unresolved_senders(warehouse)))
    if violations:
        logger.info(f'Validation found {len(violations)} violations')
    return report
