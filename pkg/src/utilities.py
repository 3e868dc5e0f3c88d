#!/usr/bin/env python3

import datetime
import logging
import re
import string

from dateutil.relativedelta import relativedelta
from unidecode import unidecode

from settings import reply_prefix_pattern

logger = logging.getLogger(__name__)

GRANULARITIES = ('day', 'month', 'year')

_reply_prefix = re.compile(reply_prefix_pattern, re.IGNORECASE)
_punctuation = str.maketrans({c: ' ' for c in string.punctuation})


def strip_reply_prefixes(subject: str) -> str:
    """
    Remove any number of leading reply/forward prefixes from a subject.

    Example:
        'Re: RE: Fwd: Last Call' -> 'Last Call'
    """
    previous = None
    subject = subject or ''
    while previous != subject:
        previous = subject
        subject = _reply_prefix.sub('', subject, count=1)
    return subject.strip()


def normalize_subject(subject: str) -> str:
    """Subject key used for subject-fallback threading and subject clusters"""

    return ' '.join(strip_reply_prefixes(subject).split()).casefold()


def fold_name(text: str) -> str:
    """
    Fold a name for loose comparison: diacritics stripped, case-folded, punctuation and repeated whitespace removed.

    Example:
        'Jérôme  Siméon' -> 'jerome simeon'
    """
    return ' '.join(unidecode(text or '').translate(_punctuation).casefold().split())


def period_of(moment: datetime.datetime or datetime.date, granularity: str = 'month') -> str:
    """
    Return the label of the period a moment falls in, e.g. '2004-02' for month granularity.
    Moments are expected in UTC already.
    """
    if granularity == 'day':
        return moment.strftime('%Y-%m-%d')
    elif granularity == 'month':
        return moment.strftime('%Y-%m')
    elif granularity == 'year':
        return moment.strftime('%Y')
    raise ValueError(f'{granularity} not a valid granularity. Use one of {", ".join(GRANULARITIES)}')


def period_start(label: str) -> datetime.date:
    """Return the first day of a period label produced by period_of"""

    parts = [int(p) for p in label.split('-')]
    return datetime.date(parts[0], parts[1] if len(parts) > 1 else 1, parts[2] if len(parts) > 2 else 1)


def period_range(first: str, last: str, granularity: str = 'month') -> list:
    """
    Return every period label from first to last inclusive.

    Example:
        period_range('2003-11', '2004-02') -> ['2003-11', '2003-12', '2004-01', '2004-02']
    """
    step = {'day': relativedelta(days=1), 'month': relativedelta(months=1), 'year': relativedelta(years=1)}
    if granularity not in step:
        raise ValueError(f'{granularity} not a valid granularity. Use one of {", ".join(GRANULARITIES)}')

    labels = []
    current, end = period_start(first), period_start(last)
    while current <= end:
        labels.append(period_of(current, granularity))
        current += step[granularity]
    return labels


def period_end(label: str) -> datetime.date:
    """Return the last day of a period label produced by period_of"""

    step = {1: relativedelta(years=1), 2: relativedelta(months=1), 3: relativedelta(days=1)}[len(label.split('-'))]
    return period_start(label) + step - relativedelta(days=1)
