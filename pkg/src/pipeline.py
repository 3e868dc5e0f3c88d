#!/usr/bin/env python3
"""Multi-step stages run by the command line: each loads the warehouse, transforms it and stores it back."""

import concurrent.futures
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from settings import warehouse_files
from src.export import export_table, render_bar_chart
from src.identity import apply_confirmed_merges, recover_warehouse, register_senders
from src.ingest import build_threads, parse_archive, to_messages, write_quarantine
from src.institutions import build_institutions, enrich_functions
from src.model import Warehouse, validate
from src.queries import ActorPostCount, InstitutionPostCount, MonthBucket, q1_posts_per_actor, \
    q2_multi_list_posters, q3_posts_per_month, q6_posts_per_institution
from src.store import deserialize, serialize

logger = logging.getLogger(__name__)

extensions = {'csv': 'csv', 'tsv': 'tsv', 'json-lines': 'jsonl'}


@dataclass(frozen=True)
class IngestSummary:
    list_id: str
    raw: int  # messages found in the archive
    parsed: int  # messages placed in threads
    quarantined: int
    threads: int


class Pipeline:
    """
    Assumptions:
    - Stages run one at a time against a warehouse directory; nothing else writes to it meanwhile
    - Configuration has been loaded by the caller
    """
    @staticmethod
    def load(directory: str or Path, preserve_extensions: bool = False, allow_missing: bool = False) -> Warehouse:
        """
        Read the warehouse of a directory.
        :param allow_missing: give an empty warehouse when the directory holds none yet
        """
        if allow_missing and not (Path(directory) / warehouse_files['actors_info']).is_file():
            logger.info(f'No warehouse in {directory} yet; starting an empty one')
            return Warehouse()
        warehouse = deserialize(directory, preserve_extensions=preserve_extensions)
        for warning in warehouse.warnings:
            logger.warning(warning)
        return warehouse

    @staticmethod
    def ingest(directory: str or Path, archives: list, strict_homonym: bool = False,
               preserve_extensions: bool = False, max_workers: int = 4) -> list:
        """
        Parse archives into threads, register their senders as actors and store the warehouse. Archives of
        distinct lists are parsed concurrently; threading is done list by list in list id order.
        :param archives: (list id, path) pairs; a list already in the warehouse is replaced
        :return: an IngestSummary per list
        """
        list_ids = [list_id for list_id, _ in archives]
        if len(set(list_ids)) != len(list_ids):
            raise ValueError(f'Each list may be ingested from one archive only, got {", ".join(sorted(list_ids))}')
        warehouse = Pipeline.load(directory, preserve_extensions, allow_missing=True)

        with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
            parsed = dict(zip(list_ids, executor.map(lambda a: parse_archive(a[1], a[0]), archives)))

        lists = dict(warehouse.lists)
        summaries = []
        for list_id in sorted(parsed):
            raws, quarantine = parsed[list_id]
            messages, rejected = to_messages(raws)
            quarantine = quarantine + rejected
            threads = build_threads(messages, list_id, quarantine)
            if list_id in lists:
                logger.warning(f'Replacing the threads of list {list_id}')
            lists[list_id] = tuple(threads)
            write_quarantine(quarantine, directory, list_id)

            placed = sum(1 for t in threads for _ in t.messages())
            summary = IngestSummary(list_id, len(raws) + len(parsed[list_id][1]), placed, len(quarantine),
                                    len(threads))
            if summary.raw != summary.parsed + summary.quarantined:
                logger.error(f'List {list_id}: {summary.raw} messages read but {summary.parsed} placed and '
                             f'{summary.quarantined} quarantined')
            summaries.append(summary)

        warehouse = register_senders(replace(warehouse, lists=lists), strict_homonym=strict_homonym)
        serialize(warehouse, directory)
        return summaries

    @staticmethod
    def apply_merges(directory: str or Path, config: 'Config', preserve_extensions: bool = False) -> Warehouse:
        """Apply the confirmed merges of the configuration and store the result"""

        warehouse = apply_confirmed_merges(Pipeline.load(directory, preserve_extensions), config.merges)
        serialize(warehouse, directory)
        return warehouse

    @staticmethod
    def recover_hidden(directory: str or Path, config: 'Config', preserve_extensions: bool = False) -> list:
        """Record hidden senders of gateway messages; returns the recovered addresses no actor owns"""

        if not config.gateways:
            logger.warning('No gateway addresses are configured; nothing to recover')
        warehouse, unknown = recover_warehouse(Pipeline.load(directory, preserve_extensions), config.gateways)
        serialize(warehouse, directory)
        return unknown

    @staticmethod
    def enrich_institutions(directory: str or Path, config: 'Config', preserve_extensions: bool = False) -> Warehouse:
        """Store the configured institutions and the affiliations derived from posting addresses"""

        institutions = build_institutions(config.domain_map, config.aliases, config.institution_names)
        warehouse = enrich_functions(Pipeline.load(directory, preserve_extensions), config.domain_map, institutions)
        serialize(warehouse, directory)
        return warehouse

    @staticmethod
    def report(warehouse: Warehouse, config: 'Config', out_dir: str or Path, fmt: str = 'csv', threshold: int = 20,
               count_recovered: bool = False, top_n: int = 20) -> list:
        """
        Write the validation report, q1, q2, q6 and per-list q3 tables and charts into out_dir.
        :return: the paths written, in writing order
        """
        out_dir = Path(out_dir)
        ext = extensions[fmt]
        report = warehouse.report or validate(warehouse)
        written = [out_dir / f'validation.{ext}', out_dir / f'q1.{ext}', out_dir / f'q2.{ext}',
                   out_dir / f'q6.{ext}']
        export_table(report, fmt, written[0])
        export_table(q1_posts_per_actor(warehouse, threshold, count_recovered), fmt, written[1],
                     row_type=ActorPostCount)
        export_table(q2_multi_list_posters(warehouse, 2, count_recovered), fmt, written[2], row_type=ActorPostCount)
        export_table(q6_posts_per_institution(warehouse, top_n, config.domain_map, config.resolver), fmt,
                     written[3], row_type=InstitutionPostCount)

        for list_id in warehouse.list_ids:
            buckets = q3_posts_per_month(warehouse, list_id)
            table_path, chart_path = out_dir / 'q3' / f'{list_id}.{ext}', out_dir / 'q3' / f'{list_id}.svg'
            export_table(buckets, fmt, table_path, row_type=MonthBucket)
            render_bar_chart(buckets, chart_path, title=f'{list_id}: posts per month')
            written.extend([table_path, chart_path])
        logger.info(f'Report written to {out_dir} ({len(written)} files)')
        return written
