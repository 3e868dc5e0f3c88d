#!/usr/bin/env python3
"""Turning raw mailing-list archives into messages, and messages into reply threads."""

import bisect
import datetime
import email
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, replace
from email.errors import MissingHeaderBodySeparatorDefect
from email.header import decode_header, make_header
from email.policy import compat32
from email.utils import parseaddr, parsedate_to_datetime
from pathlib import Path
from typing import Optional

import dateutil.parser
import pytz
from tqdm import tqdm

from settings import subject_window_days, warehouse_files
from src.model import EmailAddress, MessageNode, Thread
from src.utilities import normalize_subject

logger = logging.getLogger(__name__)

_from_line = re.compile(rb'^From \S')
_escaped_from_line = re.compile(rb'^>(>*From )', re.MULTILINE)
_message_id = re.compile(r'<([^<>\s]+)>')
_folding = re.compile(r'\r?\n[ \t]+')


@dataclass(frozen=True)
class RawMessage:
    headers: tuple  # (name, value) pairs in archive order
    body: str
    source_list: str
    byte_offset: int
    origin: str = '<stream>'  # file the message came from

    def header(self, name: str) -> Optional[str]:
        """Return the first value of a header, matching the name case-insensitively"""
        name = name.lower()
        return next((value for key, value in self.headers if key.lower() == name), None)


@dataclass(frozen=True)
class QuarantineRecord:
    source_list: str
    byte_offset: Optional[int]
    reason: str
    detail: str = ''

    def to_line(self) -> str:
        offset = '-' if self.byte_offset is None else str(self.byte_offset)
        detail = ' '.join(self.detail.split())
        return f'{self.source_list}\t{offset}\t{self.reason}\t{detail}'.rstrip()


class MessageRejected(ValueError):
    """A message that cannot enter the warehouse; it goes to quarantine with this reason"""

    def __init__(self, reason: str, detail: str = ''):
        self.reason = reason
        self.detail = detail
        super().__init__(f'{reason}: {detail}' if detail else reason)


class ArchiveError(ValueError):
    pass


def _decode(value: str) -> str:
    """Decode RFC 2047 encoded words and unfold continuation lines"""

    value = _folding.sub(' ', value)
    try:
        value = str(make_header(decode_header(value)))
    except (UnicodeError, LookupError, email.errors.HeaderParseError):
        pass
    # undeclared 8-bit bytes arrive as surrogate escapes
    return value.encode('utf-8', 'surrogateescape').decode('utf-8', 'replace')


def _first_text_part(message) -> str:
    """Return the body of the first text/plain part (or first text part of any kind), decoded by its charset"""

    parts = [p for p in message.walk() if not p.is_multipart() and p.get_content_maintype() == 'text']
    part = next((p for p in parts if p.get_content_subtype() == 'plain'), parts[0] if parts else None)
    if part is None:
        return ''
    payload = part.get_payload(decode=True) or b''
    charset = part.get_content_charset() or 'utf-8'
    try:
        return payload.decode(charset, errors='replace')
    except LookupError:
        logger.debug(f'Unknown charset {charset}, decoding as UTF-8')
        return payload.decode('utf-8', errors='replace')


def _split_mbox(data: bytes):
    """
    Yield (byte offset, message bytes) for every message of an mbox archive. A separator is a line starting with
    'From ' at the beginning of the archive or after a blank line.
    """
    offset, start, previous_blank = 0, None, True
    for line in data.splitlines(keepends=True):
        if previous_blank and _from_line.match(line):
            if start is not None:
                yield start, data[start:offset]
            start = offset
        elif start is None and line.strip():
            raise ArchiveError(f'Not an mbox archive: expected a "From " line at byte {offset}')
        previous_blank = not line.strip()
        offset += len(line)
    if start is not None:
        yield start, data[start:]


def _parse_chunk(chunk: bytes, list_id: str, offset: int, origin: str, has_from_line: bool = True):
    """Return a RawMessage, or a QuarantineRecord when the headers are unusable"""

    if has_from_line:
        chunk = chunk.split(b'\n', 1)[1] if b'\n' in chunk else b''
        chunk = _escaped_from_line.sub(rb'\1', chunk)
        for separator in (b'\r\n\r\n', b'\n\n'):  # the blank line before the next 'From ' line
            if chunk.endswith(separator):
                chunk = chunk[:len(chunk) - len(separator) // 2]
                break
    message = email.message_from_bytes(chunk, policy=compat32)

    if not message.keys() or any(isinstance(d, MissingHeaderBodySeparatorDefect) for d in message.defects):
        return QuarantineRecord(list_id, offset, 'header-defect', origin)
    headers = tuple((name, _decode(str(value))) for name, value in message.items())
    raw = RawMessage(headers=headers, body=_first_text_part(message), source_list=list_id, byte_offset=offset,
                     origin=origin)
    if not (raw.header('Message-ID') or '').strip():
        return QuarantineRecord(list_id, offset, 'missing-message-id', origin)
    return raw


def parse_archive(source, list_id: str) -> tuple:
    """
    Split an archive into raw messages. Every message ends up either parsed or quarantined.
    :param source: a binary stream holding an mbox archive, the path of an mbox file, or the path of a directory
                   holding one message per file (maildir style; files are read in name order)
    :param list_id: the list the archive belongs to
    :return: (list of RawMessage, list of QuarantineRecord)
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if path.is_dir():
            return _parse_directory(path, list_id)
        with open(path, 'rb') as fh:
            return _parse_stream(fh, list_id, str(path))
    return _parse_stream(source, list_id, '<stream>')


def _parse_stream(stream, list_id: str, origin: str) -> tuple:
    data = stream.read()
    if not isinstance(data, (bytes, bytearray)):
        raise ArchiveError(f'Archive for list {list_id} must be read as bytes')

    messages, quarantine = [], []
    for offset, chunk in _split_mbox(bytes(data)):
        parsed = _parse_chunk(chunk, list_id, offset, origin)
        (quarantine if isinstance(parsed, QuarantineRecord) else messages).append(parsed)
    logger.info(f'{origin}: {len(messages)} messages parsed, {len(quarantine)} quarantined for list {list_id}')
    return messages, quarantine


def _parse_directory(directory: Path, list_id: str) -> tuple:
    messages, quarantine = [], []
    files = sorted(p for p in directory.rglob('*') if p.is_file() and not p.name.startswith('.'))
    for path in tqdm(files, desc=f'reading {list_id}'):  # progress bar
        data = path.read_bytes()
        if not data.strip():
            quarantine.append(QuarantineRecord(list_id, 0, 'header-defect', f'{path} is empty'))
            continue
        parsed = _parse_chunk(data, list_id, 0, str(path), has_from_line=bool(_from_line.match(data)))
        (quarantine if isinstance(parsed, QuarantineRecord) else messages).append(parsed)
    logger.info(f'{directory}: {len(messages)} messages parsed, {len(quarantine)} quarantined for list {list_id}')
    return messages, quarantine


def message_ids(value: str) -> list:
    """Return the message ids, without angle brackets, listed in a Message-ID/In-Reply-To/References value"""

    if not value:
        return []
    found = _message_id.findall(value)
    return found or value.split()[:1]


def parse_date(value: str) -> datetime.datetime or None:
    """
    Parse a Date header into an aware UTC datetime. RFC 2822 parsing is tried first, then a lenient parser.
    Dates without a zone are taken as UTC. Returns None when the value cannot be understood.
    """
    if not value:
        return None
    try:
        moment = parsedate_to_datetime(value)
    except (TypeError, ValueError, IndexError):
        moment = None
    if moment is None:
        try:
            moment = dateutil.parser.parse(value)
        except (ValueError, OverflowError):
            return None
    if moment.tzinfo is None:
        moment = pytz.utc.localize(moment)
    return moment.astimezone(pytz.utc)


def to_message(raw: RawMessage) -> MessageNode:
    """
    Map a raw message onto a childless MessageNode.
    :raises MessageRejected: with the quarantine reason when a required header is missing or unreadable
    """
    ids = message_ids(raw.header('Message-ID'))
    if not ids:
        raise MessageRejected('missing-message-id')

    sender = raw.header('From')
    if not sender:
        raise MessageRejected('missing-from', ids[0])
    name, address = parseaddr(sender)
    try:
        sender_email = EmailAddress.parse(address)
    except ValueError:
        raise MessageRejected('bad-sender', sender)

    date_value = raw.header('Date')
    if not date_value:
        raise MessageRejected('missing-date', ids[0])
    date = parse_date(date_value)
    if date is None:
        raise MessageRejected('bad-date', date_value)

    in_reply_to = message_ids(raw.header('In-Reply-To'))
    keywords = raw.header('Keywords') or ''
    return MessageNode(message_id=ids[0], list_id=raw.source_list, sender_email=sender_email, date=date,
                       subject=(raw.header('Subject') or '').strip(), body=raw.body,
                       sender_name=name.strip().strip('"').strip() or None,
                       in_reply_to=in_reply_to[0] if in_reply_to else None,
                       references=tuple(message_ids(raw.header('References'))),
                       topics=tuple(t.strip() for t in keywords.split(',') if t.strip()))


def to_messages(raws: list) -> tuple:
    """Convert raw messages, quarantining the ones to_message rejects. Returns (messages, quarantine)."""

    messages, quarantine = [], []
    for raw in tqdm(raws, desc='converting messages'):  # progress bar
        try:
            messages.append(to_message(raw))
        except MessageRejected as e:
            logger.warning(f'Quarantining message at byte {raw.byte_offset} of {raw.origin}: {e}')
            quarantine.append(QuarantineRecord(raw.source_list, raw.byte_offset, e.reason, e.detail))
    return messages, quarantine


def _creates_cycle(parent_id: str, child_id: str, parent_of: dict) -> bool:
    current = parent_id
    while current is not None:
        if current == child_id:
            return True
        current = parent_of.get(current)
    return False


def build_threads(messages: list, list_id: str, quarantine: list = None) -> list:
    """
    Arrange the messages of one list into reply trees.

    The parent of a message is the message its In-Reply-To names, else the last known entry of its References,
    else the earliest earlier message with the same normalized subject within the subject window. Messages without
    a known parent start a thread. Edges that would close a cycle are dropped, leaving the later message as a root.

    :param messages: MessageNodes of list_id; their children are ignored
    :param list_id: the list being threaded
    :param quarantine: if given, duplicates of an already seen message id are recorded here
    :return: threads ordered by the (date, message id) of their roots
    """
    unique = {}
    for m in sorted(messages, key=lambda x: x.order_key):
        if m.list_id != list_id:
            raise ValueError(f'Message {m.message_id} belongs to list {m.list_id}, not {list_id}')
        if m.message_id in unique:
            logger.warning(f'Duplicate message id {m.message_id} in list {list_id}; keeping the earliest')
            if quarantine is not None:
                quarantine.append(QuarantineRecord(list_id, None, 'duplicate-message-id', m.message_id))
            continue
        unique[m.message_id] = m

    window = datetime.timedelta(days=subject_window_days)
    parent_of = {}
    by_subject = defaultdict(lambda: ([], []))  # normalized subject -> (dates, messages) in date order
    for m in unique.values():
        candidate = None
        if m.in_reply_to in unique and m.in_reply_to != m.message_id:
            candidate = m.in_reply_to
        else:
            known = [r for r in m.references if r in unique and r != m.message_id]
            if known:
                candidate = known[-1]
        subject = normalize_subject(m.subject)
        if candidate is None and subject and subject in by_subject:
            dates, earlier = by_subject[subject]
            i = bisect.bisect_left(dates, m.date - window)
            if i < len(earlier):
                candidate = earlier[i].message_id

        if candidate is not None:
            if _creates_cycle(candidate, m.message_id, parent_of):
                logger.warning(f'Dropping reply edge {m.message_id} -> {candidate}: it would close a cycle')
            else:
                parent_of[m.message_id] = candidate
        if subject:
            by_subject[subject][0].append(m.date)
            by_subject[subject][1].append(m)

    children = defaultdict(list)
    for child, parent in parent_of.items():
        children[parent].append(child)

    built = {}
    roots = [message_id for message_id in unique if message_id not in parent_of]
    for root in roots:
        stack = [(root, False)]
        while stack:
            message_id, expanded = stack.pop()
            if not expanded:
                stack.append((message_id, True))
                stack.extend((c, False) for c in children[message_id])
                continue
            replies = sorted((built.pop(c) for c in children[message_id]), key=lambda x: x.order_key)
            built[message_id] = replace(unique[message_id], children=tuple(replies))

    threads = [Thread(list_id, built[root]) for root in roots]
    logger.info(f'List {list_id}: {len(unique)} messages in {len(threads)} threads')
    return threads


def write_quarantine(records: list, directory: str or Path, list_id: str) -> Path:
    """Write one record per line to <directory>/quarantine/<list_id>.log"""

    path = Path(directory) / warehouse_files['quarantine_dir'] / f'{list_id}.log'
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as fh:
        for record in records:
            fh.write(record.to_line() + '\n')
    return path
