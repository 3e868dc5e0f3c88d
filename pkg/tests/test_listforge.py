#!/usr/bin/env python3

import io
import shlex
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from src.export import read_table
from src.listforge import build_parser, main
from warehouse_fixtures import QT, mbox, mbox_message

ARCHIVE = mbox(
    mbox_message('a@qt', subject='Casting rules'),
    mbox_message('b@qt', sender='Don Chamberlin <don@us.ibm.com>', date='Wed, 4 Feb 2004 10:00:00 +0100',
                 subject='Re: Casting rules', extra_headers={'In-Reply-To': '<a@qt>'}),
    mbox_message('c@qt', date='Mon, 1 Mar 2004 10:00:00 +0100', subject='XSLT keys'),
    mbox_message('bug@qt', sender='Bugzilla <bugzilla@w3.org>', date='Tue, 2 Mar 2004 10:00:00 +0100',
                 subject='[Bug 7] keys', body='Comments from nobody@example.com:\nKeys are slow.\n'))


class TestCommandLine(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.warehouse = self.root / 'warehouse'
        self.config = self.root / 'config'
        self.config.mkdir()
        (self.config / 'gateways.txt').write_text('bugzilla@w3.org\n', encoding='utf-8')
        self.archive = self.root / 'qt.mbox'
        self.archive.write_bytes(ARCHIVE)

    def tearDown(self):
        self.tmp.cleanup()

    def _args(self, *argv) -> list:
        return ['--warehouse', str(self.warehouse), '--config', str(self.config), *argv]

    def _run(self, *argv) -> tuple:
        """Run the command line; returns the exit code and what was written to stdout"""

        with patch('sys.stdout', new_callable=io.StringIO) as stdout, patch('sys.stderr', new_callable=io.StringIO):
            code = main(self._args(*argv))
        return code, stdout.getvalue()

    def _ingest(self):
        code, _ = self._run('ingest', '--list', QT, str(self.archive))
        self.assertEqual(code, 0)

    def test_ingest_and_query(self):
        code, out = self._run('ingest', '--list', QT, str(self.archive))
        self.assertEqual(code, 0)
        self.assertEqual(out.splitlines()[0].split(), ['list_id', 'raw', 'parsed', 'quarantined', 'threads'])
        self.assertEqual(out.splitlines()[1].split(), [QT, '4', '4', '0', '3'])

        q1 = self.root / 'q1.csv'
        self.assertEqual(self._run('--out', str(q1), 'query', 'q1', '--threshold', '0')[0], 0)
        rows = read_table(q1, 'csv').rows
        self.assertEqual(rows[0], ('kay-michael', 'Michael Kay', '2', '2'))
        self.assertIn(('chamberlin-don', 'Don Chamberlin', '1', '1'), rows)
        self.assertEqual(len(rows), 3)  # the gateway address is an actor too

        code, out = self._run('query', 'q3', '--list', QT)
        self.assertEqual(code, 0)
        self.assertEqual(out.split(), ['period', 'count', '2004-02', '2', '2004-03', '2'])

        code, out = self._run('query', 'q3', '--list', QT, '--from', '2004-01', '--to', '2004-04')
        self.assertEqual(code, 0)
        self.assertEqual(out.split(),
                         ['period', 'count', '2004-01', '0', '2004-02', '2', '2004-03', '2', '2004-04', '0'])
        self.assertEqual(self._run('query', 'q3', '--list', QT, '--from', 'Jan 2004')[0], 1)

    def test_recover_hidden(self):
        self._ingest()
        code, out = self._run('recover-hidden')
        self.assertEqual(code, 0)
        self.assertEqual(out.split(), ['unknown_address', 'nobody@example.com'])

    def test_report_is_reproducible(self):
        self._ingest()
        first, second = self.root / 'first', self.root / 'second'
        self.assertEqual(self._run('--out', str(first), 'report')[0], 0)
        self.assertEqual(self._run('--out', str(second), 'report')[0], 0)

        files = sorted(p.relative_to(first) for p in first.rglob('*') if p.is_file())
        self.assertEqual(files, sorted(p.relative_to(second) for p in second.rglob('*') if p.is_file()))
        self.assertIn(Path('q3') / f'{QT}.svg', files)
        for name in files:
            with self.subTest(file=str(name)):
                self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def test_validate(self):
        self._ingest()
        code, out = self._run('validate')
        self.assertEqual(code, 0)
        self.assertEqual(out.split(), ['rule', 'entity_id', 'detail'])

        actors_info = self.warehouse / 'actors_info.xml'
        actors_info.write_text(actors_info.read_text(encoding='utf-8').replace('don@us.ibm.com', 'mhk@mhk.me.uk'),
                               encoding='utf-8')
        code, out = self._run('validate')
        self.assertEqual(code, 1)
        self.assertIn('shared-email', out)

    def test_exit_codes(self):
        self.assertEqual(self._run('validate')[0], 1)  # no warehouse yet
        with patch('sys.stdout', new_callable=io.StringIO):
            self.assertEqual(main([]), 2)
        self.assertEqual(self._run('query', 'q9')[0], 2)
        self._ingest()
        self.assertEqual(self._run('query', 'q3', '--list', 'www-talk')[0], 1)
        self.assertEqual(self._run('institutions', 'timeline')[0], 2)
        self.assertEqual(self._run('export', 'chart-q3', '--list', QT)[0], 2)

    def test_export(self):
        self._ingest()
        code, out = self._run('export', 'matrix')
        self.assertEqual(code, 0)
        self.assertEqual(out.splitlines()[0].split(), ['actor_id', '2004-02', '2004-03'])

        chart = self.root / 'charts' / 'kay.svg'
        self.assertEqual(self._run('--out', str(chart), 'export', 'chart-q5', '--actor', 'kay-michael')[0], 0)
        self.assertTrue(chart.read_text(encoding='utf-8').lstrip().startswith('<?xml'))


class TestBatch(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.archive = self.root / 'qt.mbox'
        self.archive.write_bytes(ARCHIVE)
        self.prefix = f'--warehouse {shlex.quote(str(self.root / "warehouse"))} ' \
                      f'--config {shlex.quote(str(self.root / "config"))}'

    def tearDown(self):
        self.tmp.cleanup()

    def _batch(self, *lines) -> int:
        command_file = self.root / 'commands.txt'
        command_file.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        with patch('sys.stdout', new_callable=io.StringIO), patch('sys.stderr', new_callable=io.StringIO):
            return main(['batch', str(command_file)])

    def test_commands_run_in_order(self):
        out = self.root / 'q3.csv'
        code = self._batch('# build the warehouse, then count',
                           f'{self.prefix} ingest --list {QT} {shlex.quote(str(self.archive))}',
                           '',
                           f'{self.prefix} --out {shlex.quote(str(out))} query q3 --list {QT}')
        self.assertEqual(code, 0)
        self.assertEqual(out.read_bytes(), b'period,count\r\n2004-02,2\r\n2004-03,2\r\n')

    def test_failing_command_stops_the_batch(self):
        out = self.root / 'q3.csv'
        code = self._batch(f'{self.prefix} ingest --list {QT} {shlex.quote(str(self.archive))}',
                           f'{self.prefix} query q3 --list www-talk',
                           f'{self.prefix} --out {shlex.quote(str(out))} query q3 --list {QT}')
        self.assertEqual(code, 1)
        self.assertFalse(out.exists())

    def test_nested_batch_and_missing_file(self):
        self.assertEqual(self._batch(f'batch {shlex.quote(str(self.root / "other.txt"))}'), 2)
        with patch('sys.stderr', new_callable=io.StringIO):
            self.assertEqual(main(['batch', str(self.root / 'missing.txt')]), 1)

    def test_parser(self):
        args = build_parser().parse_args(['ingest', '--list', 'a', 'a.mbox', '--list', 'b', 'b.mbox'])
        self.assertEqual(args.archives, [['a', 'a.mbox'], ['b', 'b.mbox']])
        self.assertEqual(args.warehouse, './warehouse')


if __name__ == '__main__':
    unittest.main()
