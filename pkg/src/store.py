#!/usr/bin/env python3
"""Reading and writing the on-disk XML warehouse: actors_info.xml plus one threads/<listId>.xml per list."""

import base64
import datetime
import errno
import logging
import os
import re
from pathlib import Path

import pytz
from dateutil.parser import isoparse
from lxml import etree

from settings import namespace, prefixes, warehouse_files
from src.model import (Actor, EmailAddress, Function, HiddenSender, Institution, Marker, MessageNode, PersonName,
                       Sex, Thread, Warehouse, WarehouseParseError, WarehouseValidationError, validate)

logger = logging.getLogger(__name__)

_not_xml_char = re.compile('[^\u0009\u000a\u000d\u0020-\ud7ff\ue000-\ufffd\U00010000-\U0010ffff]')


def _q(tag: str) -> str:
    return f'{{{namespace}}}{tag}'


def _local(tag) -> str or None:
    if not isinstance(tag, str):  # comments and processing instructions
        return None
    return etree.QName(tag).localname if tag.startswith(f'{{{namespace}}}') else tag


def _sub(parent, tag: str, text: str = None, **attributes):
    element = etree.SubElement(parent, _q(tag), {k: v for k, v in attributes.items() if v is not None})
    if text is not None:
        if _not_xml_char.search(text):  # raw mail may carry control characters XML cannot hold
            element.set('encoding', 'base64')
            element.text = base64.b64encode(text.encode('utf-8')).decode('ascii')
        else:
            element.text = text
    return element


def _text(element) -> str:
    if element.get('encoding') == 'base64':
        return base64.b64decode(element.text or '').decode('utf-8')
    return element.text or ''


def _timestamp(moment: datetime.datetime) -> str:
    moment = moment.astimezone(pytz.utc)
    fraction = f'.{moment.microsecond:06d}' if moment.microsecond else ''
    return moment.strftime('%Y-%m-%dT%H:%M:%S') + fraction + 'Z'


def _append_extensions(element, extensions: tuple):
    for xml in extensions:
        element.append(etree.fromstring(xml))


def _write(root, path: Path):
    etree.ElementTree(root).write(str(path), encoding='UTF-8', xml_declaration=True, pretty_print=True)


def _email(value: str) -> EmailAddress:
    return EmailAddress((value or '').strip().lower())


def _actors_info_document(w: Warehouse):
    root = etree.Element(_q('actors_info'), nsmap={prefixes['actors_info']: namespace})

    actors = _sub(root, 'actors')
    for a in w.actors:
        actor = _sub(actors, 'actor', id=a.id, sex=a.sex.value if a.sex else None,
                     birthDate=a.birth_date.isoformat() if a.birth_date else None)
        name = _sub(actor, 'name')
        _sub(name, 'lastname', a.name.lastname)
        if a.name.firstname is not None:
            _sub(name, 'firstname', a.name.firstname)
        for middle in a.name.middlenames:
            _sub(name, 'middlename', middle)
        emails = _sub(actor, 'emails')
        for e in sorted(a.emails):
            _sub(emails, 'email', e.address)
        for diploma in a.diplomas:
            _sub(actor, 'diploma', diploma)
        for skill in a.skills:
            _sub(actor, 'skill', skill)
        _append_extensions(actor, a.extensions)

    institutions = _sub(root, 'institutions')
    for i in w.institutions:
        institution = _sub(institutions, 'institution', id=i.id)
        _sub(institution, 'name', i.canonical_name)
        for alias in sorted(i.aliases):
            _sub(institution, 'alias', alias)
        for domain in sorted(i.domains):
            _sub(institution, 'domain', domain)
        _append_extensions(institution, i.extensions)

    functions = _sub(root, 'functions')
    for f in w.functions:
        function = _sub(functions, 'function', actor=f.actor_ref, institution=f.institution_ref,
                        start=f.start.isoformat() if f.start else None, end=f.end.isoformat() if f.end else None,
                        fuzzy='true' if f.fuzzy else None)
        _sub(function, 'role', f.role_name)
        _append_extensions(function, f.extensions)
    return root


def _message_element(parent, m: MessageNode):
    """Write a message and, nested inside it, all of its replies"""

    pending = [(parent, m)]
    while pending:
        parent, m = pending.pop(0)
        message = _sub(parent, 'message', id=m.message_id, date=_timestamp(m.date))
        _sub(message, 'sender', m.sender_email.address)
        if m.sender_name is not None:
            _sub(message, 'senderName', m.sender_name)
        _sub(message, 'subject', m.subject)
        if m.in_reply_to is not None:
            _sub(message, 'inReplyTo', m.in_reply_to)
        for reference in m.references:
            _sub(message, 'reference', reference)
        for topic in m.topics:
            _sub(message, 'topic', topic)
        for h in m.recovered_senders:
            _sub(message, 'recovered', marker=h.marker.value, email=h.email.address,
                 date=_timestamp(h.date) if h.date else None)
        _sub(message, 'body', m.body)
        _append_extensions(message, m.extensions)
        pending.extend((message, child) for child in m.children)


def _threads_document(list_id: str, threads: tuple):
    root = etree.Element(_q('threads'), {'list': list_id}, nsmap={prefixes['threads']: namespace})
    for t in threads:
        _message_element(_sub(root, 'thread'), t.root)
    return root


def serialize(warehouse: Warehouse, directory: str or Path):
    """
    Write the warehouse under directory. Output is in canonical order so the same warehouse always produces
    byte-identical files.
    :param warehouse: must validate without violations
    :param directory: created if needed
    """
    report = validate(warehouse)
    if report:
        raise WarehouseValidationError(report)

    w = warehouse.canonical()
    directory = Path(directory)
    threads_dir = directory / warehouse_files['threads_dir']
    threads_dir.mkdir(parents=True, exist_ok=True)

    _write(_actors_info_document(w), directory / warehouse_files['actors_info'])
    for list_id in w.list_ids:
        _write(_threads_document(list_id, w.lists[list_id]), threads_dir / f'{list_id}.xml')

    for stale in sorted(threads_dir.glob('*.xml')):
        if stale.stem not in w.lists:
            logger.info(f'Removing {stale}: list {stale.stem} is no longer in the warehouse')
            stale.unlink()
    logger.info(f'Wrote warehouse with {len(w.actors)} actors and {len(w.lists)} lists to {directory}')


class _Reader:
    """Builds domain objects from parsed documents, collecting warnings about elements it does not know"""

    def __init__(self, path: Path, preserve_extensions: bool):
        self.path = path
        self.preserve_extensions = preserve_extensions
        self.warnings = []

    def fail(self, element, message: str):
        raise WarehouseParseError(self.path, element.sourceline, message)

    def required(self, element, attribute: str) -> str:
        value = element.get(attribute)
        if value is None:
            self.fail(element, f'<{_local(element.tag)}> is missing attribute {attribute}')
        return value

    def children(self, element, known: set, owner: str) -> tuple:
        """Split children into known (tag, element) pairs and preserved unknown elements"""

        found, extensions = [], []
        for child in element:
            tag = _local(child.tag)
            if tag is None:
                continue
            if tag in known:
                found.append((tag, child))
                continue
            warning = f'{self.path}:{child.sourceline}: unknown element <{tag}> in {owner}'
            if self.preserve_extensions:
                extensions.append(etree.tostring(child, encoding='unicode', with_tail=False))
            else:
                warning += ' dropped'
            logger.warning(warning)
            self.warnings.append(warning)
        return found, tuple(extensions)

    def date(self, element, attribute: str) -> datetime.date or None:
        value = element.get(attribute)
        try:
            return datetime.date.fromisoformat(value) if value else None
        except ValueError:
            self.fail(element, f'{attribute}={value!r} is not a date')

    def timestamp(self, element, attribute: str, required: bool = True) -> datetime.datetime or None:
        value = self.required(element, attribute) if required else element.get(attribute)
        if value is None:
            return None
        try:
            moment = isoparse(value)
        except ValueError:
            self.fail(element, f'{attribute}={value!r} is not a timestamp')
        if moment.tzinfo is None:
            moment = pytz.utc.localize(moment)
        return moment.astimezone(pytz.utc)

    def actor(self, element) -> Actor:
        actor_id = self.required(element, 'id')
        children, extensions = self.children(element, {'name', 'emails', 'diploma', 'skill'}, f'actor {actor_id}')
        name, emails, diplomas, skills = None, [], [], []
        for tag, child in children:
            if tag == 'name':
                name = self.person_name(child, actor_id)
            elif tag == 'emails':
                for _, e in self.children(child, {'email'}, f'emails of actor {actor_id}')[0]:
                    emails.append(_email(_text(e)))
            elif tag == 'diploma':
                diplomas.append(_text(child))
            else:
                skills.append(_text(child))
        sex = element.get('sex')
        try:
            sex = Sex(sex) if sex else None
        except ValueError:
            self.fail(element, f'sex={sex!r} is not one of {", ".join(s.value for s in Sex)}')
        return Actor(id=actor_id, name=name or PersonName(''), emails=frozenset(emails), sex=sex,
                     birth_date=self.date(element, 'birthDate'), diplomas=tuple(diplomas), skills=tuple(skills),
                     extensions=extensions)

    def person_name(self, element, actor_id: str) -> PersonName:
        lastname, firstname, middles = '', None, []
        for tag, child in self.children(element, {'lastname', 'firstname', 'middlename'},
                                        f'name of actor {actor_id}')[0]:
            if tag == 'lastname':
                lastname = _text(child)
            elif tag == 'firstname':
                firstname = _text(child)
            else:
                middles.append(_text(child))
        return PersonName(lastname, firstname, tuple(middles))

    def institution(self, element) -> Institution:
        institution_id = self.required(element, 'id')
        children, extensions = self.children(element, {'name', 'alias', 'domain'}, f'institution {institution_id}')
        values = {'name': [], 'alias': [], 'domain': []}
        for tag, child in children:
            values[tag].append(_text(child))
        return Institution(id=institution_id, canonical_name=values['name'][0] if values['name'] else '',
                           aliases=frozenset(values['alias']), domains=frozenset(values['domain']),
                           extensions=extensions)

    def function(self, element) -> Function:
        actor_ref = self.required(element, 'actor')
        institution_ref = self.required(element, 'institution')
        children, extensions = self.children(element, {'role'}, f'function {actor_ref}@{institution_ref}')
        role = _text(children[0][1]) if children else ''
        return Function(actor_ref=actor_ref, institution_ref=institution_ref, role_name=role,
                        start=self.date(element, 'start'), end=self.date(element, 'end'),
                        fuzzy=element.get('fuzzy') == 'true', extensions=extensions)

    def message(self, element, list_id: str) -> MessageNode:
        """Read a message element and its nested replies"""

        known = {'sender', 'senderName', 'subject', 'inReplyTo', 'reference', 'topic', 'recovered', 'body', 'message'}
        built, parsed = {}, {}
        stack = [element]
        while stack:
            current = stack.pop()
            if id(current) not in parsed:
                parsed[id(current)] = self.children(current, known, f'message {current.get("id")}')
                stack.append(current)
                stack.extend(child for tag, child in parsed[id(current)][0] if tag == 'message')
                continue
            children, extensions = parsed.pop(id(current))
            replies = [child for tag, child in children if tag == 'message']

            fields = {'references': [], 'topics': [], 'recovered_senders': [], 'subject': '', 'body': ''}
            sender = None
            for tag, child in children:
                if tag == 'sender':
                    sender = _email(_text(child))
                elif tag == 'senderName':
                    fields['sender_name'] = _text(child)
                elif tag == 'subject':
                    fields['subject'] = _text(child)
                elif tag == 'inReplyTo':
                    fields['in_reply_to'] = _text(child)
                elif tag == 'reference':
                    fields['references'].append(_text(child))
                elif tag == 'topic':
                    fields['topics'].append(_text(child))
                elif tag == 'recovered':
                    fields['recovered_senders'].append(self.hidden_sender(child))
                elif tag == 'body':
                    fields['body'] = _text(child)
            if sender is None:
                self.fail(current, f'message {current.get("id")} has no <sender>')
            for key in ('references', 'topics', 'recovered_senders'):
                fields[key] = tuple(fields[key])

            built[id(current)] = MessageNode(
                message_id=self.required(current, 'id'), list_id=list_id, sender_email=sender,
                date=self.timestamp(current, 'date'),
                children=tuple(sorted((built.pop(id(r)) for r in replies), key=lambda m: m.order_key)),
                extensions=extensions, **fields)
        return built[id(element)]

    def hidden_sender(self, element) -> HiddenSender:
        marker = self.required(element, 'marker')
        try:
            marker = Marker(marker)
        except ValueError:
            self.fail(element, f'marker={marker!r} is not one of {", ".join(m.value for m in Marker)}')
        return HiddenSender(marker, _email(self.required(element, 'email')),
                            self.timestamp(element, 'date', required=False))


def _parse(path: Path):
    parser = etree.XMLParser(resolve_entities=False, no_network=True, huge_tree=True)  # long reply chains nest deep
    try:
        return etree.parse(str(path), parser).getroot()
    except etree.XMLSyntaxError as e:
        raise WarehouseParseError(path, e.lineno, e.msg) from e


def _expect_root(root, tag: str, path: Path):
    if _local(root.tag) != tag or etree.QName(root).namespace != namespace:
        raise WarehouseParseError(path, root.sourceline, f'expected <{tag}> in namespace {namespace}')


def deserialize(directory: str or Path, preserve_extensions: bool = False) -> Warehouse:
    """
    Load a warehouse written by serialize (or a hand-written equivalent) and validate it.
    :param directory: warehouse directory containing actors_info.xml and threads/
    :param preserve_extensions: keep unknown elements on entities instead of dropping them; either way they are
                                reported as warnings
    :return: the warehouse in canonical order, with its validation report attached
    """
    directory = Path(directory)
    actors_path = directory / warehouse_files['actors_info']
    if not directory.is_dir():
        raise FileNotFoundError(errno.ENOENT, os.strerror(errno.ENOENT), str(directory))
    if not actors_path.is_file():
        raise FileNotFoundError(errno.ENOENT, os.strerror(errno.ENOENT), str(actors_path))

    warnings = []
    root = _parse(actors_path)
    _expect_root(root, 'actors_info', actors_path)
    reader = _Reader(actors_path, preserve_extensions)
    actors, institutions, functions = [], [], []
    for tag, section in reader.children(root, {'actors', 'institutions', 'functions'}, 'actors_info')[0]:
        if tag == 'actors':
            actors.extend(reader.actor(e) for _, e in reader.children(section, {'actor'}, 'actors')[0])
        elif tag == 'institutions':
            institutions.extend(reader.institution(e)
                                for _, e in reader.children(section, {'institution'}, 'institutions')[0])
        else:
            functions.extend(reader.function(e) for _, e in reader.children(section, {'function'}, 'functions')[0])
    warnings.extend(reader.warnings)

    lists = {}
    for path in sorted((directory / warehouse_files['threads_dir']).glob('*.xml')):
        root = _parse(path)
        _expect_root(root, 'threads', path)
        list_id = root.get('list') or path.stem
        if list_id != path.stem:
            logger.warning(f'{path}: list attribute {list_id} does not match the file name')
        reader = _Reader(path, preserve_extensions)
        threads = []
        for _, thread in reader.children(root, {'thread'}, f'list {list_id}')[0]:
            messages = reader.children(thread, {'message'}, f'thread in list {list_id}')[0]
            if len(messages) != 1:
                reader.fail(thread, f'a thread must hold exactly one root message, found {len(messages)}')
            threads.append(Thread(list_id, reader.message(messages[0][1], list_id)))
        lists[list_id] = tuple(threads)
        warnings.extend(reader.warnings)

    warehouse = Warehouse(actors=tuple(actors), institutions=tuple(institutions), functions=tuple(functions),
                          lists=lists).canonical()
    report = validate(warehouse)
    if report:
        logger.warning(f'Warehouse in {directory} has {len(report)} violations')
    return Warehouse(actors=warehouse.actors, institutions=warehouse.institutions, functions=warehouse.functions,
                     lists=warehouse.lists, report=report, warnings=tuple(warnings))
