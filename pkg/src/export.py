#!/usr/bin/env python3
"""Rendering query results as tables, sequence-analysis matrices and SVG bar charts."""

import csv
import dataclasses
import datetime
import json
import logging
import math
import sys
from enum import Enum
from pathlib import Path

import matplotlib
matplotlib.use('Agg')  # Non-interactive backend, no display needed

import matplotlib.pyplot as plt

from settings import chart
from src.integrate import JoinedRow, PublicationJoin, RecommendationReport
from src.model import MessageNode, ValidationReport, Warehouse
from src.queries import DIRECT, EmailTimeline, marker_label
from src.utilities import period_end, period_of, period_range, period_start

logger = logging.getLogger(__name__)

FORMATS = ('csv', 'tsv', 'json-lines')

_message_columns = ('message_id', 'list_id', 'date', 'sender_email', 'subject')
_chart_rc = {  # Settings that keep SVG output byte-identical between runs
    'svg.hashsalt': chart['hashsalt'],
    'svg.fonttype': 'none',
    'hatch.linewidth': 0.8,
}


@dataclasses.dataclass(frozen=True)
class Table:
    header: tuple
    rows: tuple = ()  # tuples of strings, one per record

    def __len__(self):
        return len(self.rows)


def cell(value) -> str:
    """Render one value as table text"""

    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, datetime.datetime):
        return value.strftime('%Y-%m-%dT%H:%M:%SZ')
    if isinstance(value, datetime.date):
        return value.isoformat()
    if isinstance(value, (tuple, list)):
        return ';'.join(cell(v) for v in value)
    if isinstance(value, frozenset):
        return ';'.join(sorted(cell(v) for v in value))
    return str(value)


def _dataclass_table(items: list, row_type=None) -> Table:
    row_type = row_type or type(items[0])
    names = [f.name for f in dataclasses.fields(row_type) if f.compare]
    expanded = {}  # dict-valued field -> sorted keys found in any row
    for name in names:
        values = [getattr(i, name) for i in items]
        if values and all(isinstance(v, dict) for v in values):
            expanded[name] = sorted({k for v in values for k in v})

    header = []
    for name in names:
        if name in expanded:
            header.extend(f'{name}:{k}' for k in expanded[name])
        else:
            header.append(name)
    rows = []
    for item in items:
        row = []
        for name in names:
            value = getattr(item, name)
            if name in expanded:
                row.extend(cell(value.get(k, 0)) for k in expanded[name])
            else:
                row.append(cell(value))
        rows.append(tuple(row))
    return Table(tuple(header), tuple(rows))


def as_table(result, row_type=None) -> Table:
    """
    Flatten a query result into a Table.
    :param result: a list of result records (dataclasses or MessageNodes), an EmailTimeline, a PublicationJoin,
                   a RecommendationReport, a ValidationReport or a Table
    :param row_type: record dataclass naming the columns when result is an empty list
    """
    if isinstance(result, Table):
        return result
    if isinstance(result, EmailTimeline):
        rows = [(address, kind, b.period, str(b.count)) for (address, kind), buckets in result.series.items()
                for b in buckets]
        return Table(('address', 'kind', 'period', 'count'), tuple(rows))
    if isinstance(result, PublicationJoin):
        return as_table(list(result.rows), row_type=JoinedRow)
    if isinstance(result, RecommendationReport):
        rows = [('author', a.actor_id, cell(a.recommendation_ids)) for a in result.authors]
        rows += [('absent', a.full_name, cell(a.recommendation_ids)) for a in result.absent]
        return Table(('status', 'author', 'recommendation_ids'), tuple(rows))
    if isinstance(result, ValidationReport):
        rows = [(v.rule, v.entity_id, v.detail) for v in result.violations]
        rows += [('unresolved-sender', address, '') for address in result.unresolved]
        return Table(('rule', 'entity_id', 'detail'), tuple(rows))

    items = list(result)
    if items and isinstance(items[0], MessageNode) or row_type is MessageNode:
        return Table(_message_columns, tuple(tuple(cell(getattr(m, c)) for c in _message_columns) for m in items))
    if items:
        return _dataclass_table(items)
    if row_type is not None:
        return Table(tuple(f.name for f in dataclasses.fields(row_type) if f.compare))
    raise ValueError('Cannot tell the columns of an empty result without a row type')


def summary_table(join: PublicationJoin) -> Table:
    """Publisher share and mean publications of the top posters and of the other posters"""

    rows = []
    for group, summary in [('top', join.top), ('others', join.others)]:
        rows.append((group, *(cell(getattr(summary, f.name)) for f in dataclasses.fields(summary))))
    return Table(('group', 'actors', 'publishers', 'fraction_publishing', 'mean_publications'), tuple(rows))


def write_table(table: Table, fmt: str, stream):
    """Write a table to an open text stream"""

    if fmt == 'csv':
        writer = csv.writer(stream, lineterminator='\r\n')
    elif fmt == 'tsv':
        writer = csv.writer(stream, delimiter='\t', lineterminator='\n')
    elif fmt == 'json-lines':
        for row in table.rows:
            stream.write(json.dumps(dict(zip(table.header, row)), ensure_ascii=False) + '\n')
        return
    else:
        raise ValueError(f'{fmt} not a valid format. Use one of {", ".join(FORMATS)}')
    writer.writerow(table.header)
    writer.writerows(table.rows)


def export_table(result, fmt: str, path, row_type=None) -> Table:
    """
    Write a result as csv (RFC 4180 quoting), tsv or json-lines, UTF-8, with a header row (json-lines objects
    carry the column names instead).
    :param path: output file, or '-' for standard output
    """
    table = as_table(result, row_type)
    if str(path) == '-':
        write_table(table, fmt, sys.stdout)
        return table
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        write_table(table, fmt, fh)
    logger.info(f'Wrote {len(table)} rows to {path}')
    return table


def read_table(path, fmt: str) -> Table:
    """Read back a table written by export_table"""

    with open(path, 'r', encoding='utf-8', newline='') as fh:
        if fmt == 'json-lines':
            records = [json.loads(line) for line in fh if line.strip()]
            header = tuple(records[0]) if records else ()
            return Table(header, tuple(tuple(r[h] for h in header) for r in records))
        if fmt not in ('csv', 'tsv'):
            raise ValueError(f'{fmt} not a valid format. Use one of {", ".join(FORMATS)}')
        rows = list(csv.reader(fh, delimiter=',' if fmt == 'csv' else '\t'))
    if not rows:
        return Table(())
    return Table(tuple(rows[0]), tuple(tuple(r) for r in rows[1:]))


def render_text(table: Table) -> str:
    """Align a table in columns for the terminal"""

    widths = [len(h) for h in table.header]
    for row in table.rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    lines = ['  '.join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [table.header, *table.rows]]
    return '\n'.join(lines) + '\n'


def export_sequence_matrix(warehouse: Warehouse, granularity: str = 'month') -> Table:
    """
    One row per actor and one column per period of the corpus. A cell holds the institution whose function covers
    the period, '*' when several do, '-' when none does.
    """
    dates = [m.date for m in warehouse.messages()]
    periods = period_range(period_of(min(dates), granularity), period_of(max(dates), granularity),
                           granularity) if dates else []
    spans = [(p, period_start(p), period_end(p)) for p in periods]

    by_actor = {}
    for f in warehouse.functions:
        by_actor.setdefault(f.actor_ref, []).append(f)

    rows = []
    for actor in sorted(warehouse.actors, key=lambda a: a.id):
        row = [actor.id]
        for _, first_day, last_day in spans:
            active = {f.institution_ref for f in by_actor.get(actor.id, ())
                      if (f.start is None or f.start <= last_day) and (f.end is None or f.end >= first_day)}
            row.append('-' if not active else active.pop() if len(active) == 1 else '*')
        rows.append(tuple(row))
    return Table(('actor_id', *periods), tuple(rows))


def _tick_labels(ax, labels: list):
    step = max(1, math.ceil(len(labels) / 24))
    positions = list(range(0, len(labels), step))
    ax.set_xticks(positions)
    ax.set_xticklabels([labels[i] for i in positions], rotation=90, fontsize=7)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    logger.info(f'Wrote chart {path}')
    return path


def render_bar_chart(series, path, title: str = '') -> Path:
    """
    Draw posts per period as an SVG bar chart.
    :param series: a MonthBucket list (one bar per period), or an EmailTimeline drawn as stacked bars: direct
                   posts in plain fills, recovered gateway posts hatched per marker
    :param path: the SVG file to write
    """
    with matplotlib.rc_context(_chart_rc):
        fig, ax = plt.subplots(figsize=chart['figsize'])
        ax.set_title(title)
        ax.set_ylabel('posts')

        if isinstance(series, EmailTimeline):
            if not series.series:
                plt.close(fig)
                raise ValueError(f'Actor {series.actor_id} has no posts to chart')
            periods = series.periods
            bottom = [0] * len(periods)
            direct = 0
            for (address, kind), buckets in series.series.items():
                counts = {b.period: b.count for b in buckets}
                heights = [counts.get(p, 0) for p in periods]
                if kind == DIRECT:
                    style = dict(color=chart['direct_fills'][direct % len(chart['direct_fills'])])
                    direct += 1
                else:
                    style = dict(color='white', hatch=chart['recovered_hatches'][kind])
                ax.bar(range(len(periods)), heights, bottom=bottom, edgecolor=chart['edgecolor'], linewidth=0.5,
                       label=f'{address} ({marker_label(kind)})', **style)
                bottom = [b + h for b, h in zip(bottom, heights)]
            ax.legend(fontsize=7)
        else:
            buckets = list(series)
            periods = [b.period for b in buckets]
            ax.bar(range(len(buckets)), [b.count for b in buckets], color=chart['direct_fills'][2],
                   edgecolor=chart['edgecolor'], linewidth=0.5)
        _tick_labels(ax, periods)
        return _save(fig, path)


def render_paired_bar_chart(rows: list, path, title: str = '') -> Path:
    """Side by side bars of normalized posts (white) and publications (black) for each top poster"""

    with matplotlib.rc_context(_chart_rc):
        fig, ax = plt.subplots(figsize=chart['figsize'])
        ax.set_title(title)
        ax.set_ylabel('% of maximum')
        positions = range(len(rows))
        ax.bar([p - 0.2 for p in positions], [r.posts_percent for r in rows], width=0.4, color='white',
               edgecolor=chart['edgecolor'], linewidth=0.5, label='posts')
        ax.bar([p + 0.2 for p in positions], [r.publications_percent for r in rows], width=0.4, color='black',
               edgecolor=chart['edgecolor'], linewidth=0.5, label='publications')
        _tick_labels(ax, [r.actor_id for r in rows])
        ax.legend(fontsize=7)
        return _save(fig, path)
