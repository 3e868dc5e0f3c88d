#!/usr/bin/env python3

import datetime
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

from settings import namespace, warehouse_files
from src.model import Function, HiddenSender, Institution, Marker, PersonName, Sex, Thread, Warehouse, \
    WarehouseParseError, WarehouseValidationError
from src.store import deserialize, serialize
from warehouse_fixtures import GATEWAY, QT, XSL, actor, corpus_warehouse, email, figure5_warehouse, message, utc


def _fixtures() -> list:
    """Warehouses covering every element and attribute the store writes"""

    corpus = corpus_warehouse()
    recovered = replace(corpus, lists={QT: (Thread(QT, message(
        'm6@qt', QT, GATEWAY.address, utc(2005, 4, 12, 10), '[Bug 1234] fn:trace', 'Reported by mhk@mhk.me.uk',
        recovered_senders=(HiddenSender(Marker.REPORTED_BY, email('mhk@mhk.me.uk')),
                           HiddenSender(Marker.COMMENTS_FROM, email('don@us.ibm.com'),
                                        utc(2005, 4, 13, 10))))),)})
    detailed = Warehouse(
        actors=(replace(actor('simeon-jerome', 'Jérôme', 'Siméon', 'simeon@research.bell-labs.com'),
                        sex=Sex.MALE, birth_date=datetime.date(1970, 5, 1), diplomas=('PhD',),
                        skills=('XQuery', 'optimization')),
                replace(actor('berg-anna', 'Anna', 'van der Berg', 'anna@example.org'),
                        name=PersonName('van der Berg', 'Anna', ('Maria', 'Louise'))),
                actor('mononym', None, 'Cher', 'cher@example.org')),
        institutions=(Institution(id='lucent', canonical_name='Lucent Technologies',
                                  aliases=frozenset({'Bell Labs', 'Lucent'}),
                                  domains=frozenset({'research.bell-labs.com', 'lucent.com'})),
                      Institution(id='misc', canonical_name='Misc & <Co>')),
        functions=(Function('simeon-jerome', 'lucent', 'researcher', datetime.date(2001, 1, 1),
                            datetime.date(2004, 12, 31), fuzzy=True),
                   Function('simeon-jerome', 'misc', 'advisor', datetime.date(2004, 6, 1)),
                   Function('berg-anna', 'misc', 'member')))
    fractional = Warehouse(lists={'list.with-dots_1': (Thread('list.with-dots_1', message(
        'a@b', 'list.with-dots_1', 'a@b.com', utc(2004, 1, 1).replace(microsecond=250000), 'Ünïcödé 主题',
        'Body with <markup> & entities\n\n  indented\n', topics=('t1', 't2'))),)})
    control = Warehouse(lists={XSL: (Thread(XSL, message('c@x', XSL, 'a@b.com', utc(2004, 1, 1), 'bell \x07 subject',
                                                         'form feed \x0c and nul \x00 inside')),)})
    deep = message('d0', XSL, 'a@b.com', utc(2004, 1, 1))
    for i in range(1, 200):
        deep = message(f'd{i}', XSL, 'a@b.com', utc(2004, 1, 1, 0, 0, i % 60), children=(deep,))
    siblings = message('s', XSL, 'a@b.com', utc(2004, 1, 1), children=tuple(
        message(f's{i:02d}', XSL, 'a@b.com', utc(2004, 1, 2 + i % 5)) for i in range(20)))

    return [Warehouse(), figure5_warehouse(), corpus, recovered, detailed, fractional, control,
            Warehouse(lists={XSL: (Thread(XSL, deep),)}), Warehouse(lists={XSL: (Thread(XSL, siblings),)}),
            Warehouse(actors=detailed.actors, lists=corpus.lists)]


class TestStore(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.directory = Path(self.tmp.name) / 'warehouse'

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        for number, warehouse in enumerate(_fixtures()):
            with self.subTest(fixture=number):
                directory = self.directory / str(number)
                serialize(warehouse, directory)
                loaded = deserialize(directory)
                self.assertEqual(loaded, warehouse.canonical())
                self.assertTrue(loaded.report.is_valid)

    def test_serialization_is_byte_identical(self):
        for number, warehouse in enumerate(_fixtures()):
            with self.subTest(fixture=number):
                first, second = self.directory / f'{number}-a', self.directory / f'{number}-b'
                serialize(warehouse, first)
                serialize(deserialize(first), second)
                files = sorted(p.relative_to(first) for p in first.rglob('*.xml'))
                self.assertEqual(files, sorted(p.relative_to(second) for p in second.rglob('*.xml')))
                for name in files:
                    self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), str(name))

    def test_empty_warehouse_layout(self):
        serialize(Warehouse(), self.directory)
        self.assertTrue((self.directory / warehouse_files['actors_info']).is_file())
        self.assertEqual(list((self.directory / warehouse_files['threads_dir']).iterdir()), [])
        self.assertEqual(deserialize(self.directory), Warehouse())

    def test_control_characters_are_base64_encoded(self):
        serialize(_fixtures()[6], self.directory)
        text = (self.directory / 'threads' / f'{XSL}.xml').read_text(encoding='utf-8')
        self.assertIn('encoding="base64"', text)
        self.assertNotIn('\x07', text)

    def test_addresses_with_control_characters_round_trip(self):
        w = Warehouse(actors=(actor('odd', None, 'Odd', 'a\x01b@example.com'),),
                      lists={XSL: (Thread(XSL, message('c@x', XSL, 'a\x01b@example.com', utc(2004, 1, 1), 'odd')),)})
        serialize(w, self.directory)
        for path in [self.directory / warehouse_files['actors_info'], self.directory / 'threads' / f'{XSL}.xml']:
            with self.subTest(file=path.name):
                self.assertNotIn('\x01', path.read_text(encoding='utf-8'))
        loaded = deserialize(self.directory)
        self.assertEqual(loaded, w.canonical())
        self.assertEqual(loaded.actor('odd').emails, {email('a\x01b@example.com')})
        self.assertEqual(next(loaded.messages()).sender_email, email('a\x01b@example.com'))

    def test_invalid_warehouse_is_refused(self):
        broken = replace(figure5_warehouse(), functions=(Function('A1', 'I9', 'CEO'),))
        with self.assertRaises(WarehouseValidationError) as context:
            serialize(broken, self.directory)
        self.assertEqual([v.rule for v in context.exception.report], ['dangling-institution-ref'])
        self.assertFalse(self.directory.exists())

    def test_stale_lists_are_removed(self):
        serialize(corpus_warehouse(), self.directory)
        serialize(replace(corpus_warehouse(), lists={QT: corpus_warehouse().lists[QT]}), self.directory)
        self.assertEqual(sorted(p.name for p in (self.directory / 'threads').iterdir()), [f'{QT}.xml'])

    def test_missing_directory(self):
        with self.assertRaises(FileNotFoundError):
            deserialize(self.directory / 'nowhere')
        self.directory.mkdir()
        with self.assertRaises(FileNotFoundError):
            deserialize(self.directory)

    def test_malformed_xml_reports_line(self):
        self.directory.mkdir()
        (self.directory / 'actors_info.xml').write_text(
            f'<?xml version="1.0"?>\n<act:actors_info xmlns:act="{namespace}">\n<act:actors>\n'
            f'<act:actor id="A1">\n</act:actors>\n</act:actors_info>\n', encoding='utf-8')
        with self.assertRaises(WarehouseParseError) as context:
            deserialize(self.directory)
        self.assertEqual(context.exception.line, 5)

    def test_wrong_root_element(self):
        self.directory.mkdir()
        (self.directory / 'actors_info.xml').write_text('<actors_info/>', encoding='utf-8')
        with self.assertRaises(WarehouseParseError):
            deserialize(self.directory)

    def _with_unknown_element(self):
        serialize(figure5_warehouse(), self.directory)
        path = self.directory / 'actors_info.xml'
        text = path.read_text(encoding='utf-8')
        homepage = '<act:homepage>http://saxonica.com</act:homepage>'
        path.write_text(text.replace('</act:emails>', f'</act:emails>\n      {homepage}'), encoding='utf-8')

    def test_unknown_elements_are_dropped_with_warning(self):
        self._with_unknown_element()
        with self.assertLogs('src.store', level='WARNING') as logs:
            loaded = deserialize(self.directory)
        self.assertEqual(loaded, figure5_warehouse().canonical())
        self.assertEqual(len(loaded.warnings), 1)
        self.assertIn('homepage', loaded.warnings[0])
        self.assertIn('homepage', logs.output[0])
        self.assertEqual(loaded.actors[0].extensions, ())

    def test_unknown_elements_are_preserved_on_request(self):
        self._with_unknown_element()
        loaded = deserialize(self.directory, preserve_extensions=True)
        self.assertEqual(len(loaded.actors[0].extensions), 1)
        self.assertIn('http://saxonica.com', loaded.actors[0].extensions[0])

        copy = self.directory.parent / 'copy'
        serialize(loaded, copy)
        self.assertIn('homepage', (copy / 'actors_info.xml').read_text(encoding='utf-8'))

    def test_invalid_files_load_with_report(self):
        serialize(figure5_warehouse(), self.directory)
        path = self.directory / 'actors_info.xml'
        path.write_text(path.read_text(encoding='utf-8').replace('institution="I1"', 'institution="I2"'),
                        encoding='utf-8')
        loaded = deserialize(self.directory)
        self.assertFalse(loaded.report.is_valid)
        self.assertEqual([v.rule for v in loaded.report], ['dangling-institution-ref'])


if __name__ == '__main__':
    unittest.main()
