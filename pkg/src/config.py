#!/usr/bin/env python3

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from settings import config_env_var, config_files, default_dirs
from src.institutions import AliasTable, DomainResolver
from src.model import EmailAddress

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Config:
    directory: Path
    merges: tuple = ()  # (keep id, drop id) pairs, in file order
    gateways: frozenset = frozenset()  # of EmailAddress
    aliases: AliasTable = field(default_factory=AliasTable)
    domain_map: dict = field(default_factory=dict)  # domain -> institution id
    institution_names: dict = field(default_factory=dict)  # institution id -> canonical name
    public_suffixes: tuple = ()

    @property
    def resolver(self) -> DomainResolver:
        return DomainResolver(self.public_suffixes)


def get_config_dir(flag: str = None) -> Path:
    """
    Locate the configuration directory.

    :param flag: value of the --config option, if given
    :return: the flag, else the directory named by the LISTFORGE_CONFIG environment variable, else ./config
    """
    directory = flag or os.environ.get(config_env_var) or default_dirs['config']
    return Path(directory).expanduser()


def load_config(directory: str or Path) -> Config:
    """
    Read every configuration file of a directory. Missing files count as empty.
    :param directory: the configuration directory, see get_config_dir
    """
    directory = Path(directory).expanduser()
    if not directory.is_dir():
        logger.info(f'No configuration directory at {directory}; using empty configuration')

    gateways = set()
    for line in _read_lines(directory / config_files['gateways']):
        try:
            gateways.add(EmailAddress.parse(line))
        except ValueError as e:
            logger.warning(f'Ignoring gateway entry: {e}')

    return Config(directory=directory,
                  merges=tuple(_read_pairs(directory / config_files['merges'])),
                  gateways=frozenset(gateways),
                  aliases=AliasTable(_read_pairs(directory / config_files['aliases'])),
                  domain_map={d.lower(): i for d, i in _read_pairs(directory / config_files['domain_map'])},
                  institution_names=dict(_read_pairs(directory / config_files['institutions'])),
                  public_suffixes=tuple(_read_lines(directory / config_files['public_suffixes'])))


def _read_lines(path: Path) -> list:
    """
    Read the meaningful lines of a configuration file
    :param path: Path to the file; blank lines and lines starting with # are skipped
    """
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            lines = [''.join(line.split()) for line in fh]
    except FileNotFoundError:
        logger.info(f'No configuration file {path}')
        return []
    return [line for line in lines if line and not line.startswith('#')]


def _read_pairs(path: Path) -> list:
    """Read a two-column CSV configuration file into (first, second) pairs"""

    pairs = []
    try:
        with open(path, 'r', encoding='utf-8', newline='') as fh:
            for n, row in enumerate(csv.reader(fh), start=1):
                row = [c.strip() for c in row]
                if not row or not any(row) or row[0].startswith('#'):
                    continue
                if len(row) != 2 or not all(row):
                    logger.warning(f'{path}:{n}: expected two values, got {row}; skipping')
                    continue
                pairs.append((row[0], row[1]))
    except FileNotFoundError:
        logger.info(f'No configuration file {path}')
    return pairs
