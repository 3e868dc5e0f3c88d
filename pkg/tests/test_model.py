#!/usr/bin/env python3

import datetime
import unittest
from dataclasses import replace
from itertools import combinations

from src.model import EmailAddress, Function, Institution, PersonName, Thread, Warehouse, map_tree, \
    unresolved_senders, validate
from warehouse_fixtures import QT, actor, corpus_warehouse, figure5_warehouse, message, utc


class TestEmailAddress(unittest.TestCase):

    def test_parse_lowercases_and_strips_brackets(self):
        self.assertEqual(EmailAddress.parse('<Michael.Kay@SoftwareAG.com>'),
                         EmailAddress('michael.kay@softwareag.com'))
        self.assertEqual(EmailAddress.parse(' a@b ').domain, 'b')

    def test_parse_rejects_malformed(self):
        for text in ['', 'no-at-sign', 'two@@ats.com', 'a@b@c', '@domain.com', 'local@', 'sp ace@x.com']:
            with self.assertRaises(ValueError, msg=text):
                EmailAddress.parse(text)

    def test_is_well_formed(self):
        self.assertTrue(EmailAddress('mhk@mhk.me.uk').is_well_formed())
        self.assertFalse(EmailAddress('MHK@mhk.me.uk').is_well_formed())
        self.assertFalse(EmailAddress('mhk').is_well_formed())


class TestPersonName(unittest.TestCase):

    def test_rendered_forms(self):
        self.assertEqual(PersonName('Kay', 'Michael').rendered(), 'Kay, Michael')
        self.assertEqual(PersonName('Malhotra', 'Ashok', ('K',)).rendered(), 'Malhotra, Ashok K')
        self.assertEqual(PersonName('Kay').rendered(), 'Kay')
        self.assertEqual(PersonName('van der Berg').rendered(), 'van der Berg,')

    def test_first_last(self):
        self.assertEqual(PersonName('Malhotra', 'Ashok', ('K',)).first_last, 'Ashok Malhotra')
        self.assertEqual(PersonName('Malhotra', 'Ashok', ('K',)).full_name, 'Ashok K Malhotra')


class TestValidate(unittest.TestCase):

    def test_empty_warehouse_is_valid(self):
        report = validate(Warehouse())
        self.assertTrue(report.is_valid)
        self.assertEqual(len(report), 0)

    def test_figure5_is_valid(self):
        self.assertTrue(validate(figure5_warehouse()).is_valid)
        self.assertTrue(validate(corpus_warehouse()).is_valid)

    def test_dangling_actor_reference(self):
        w = replace(figure5_warehouse(), functions=(Function(actor_ref='A9', institution_ref='I1', role_name='CEO'),))
        report = validate(w)
        self.assertEqual([v.rule for v in report], ['dangling-actor-ref'])
        self.assertEqual(report.violations[0].entity_id, 'A9')

    def test_dangling_institution_reference(self):
        w = replace(figure5_warehouse(), functions=(Function(actor_ref='A1', institution_ref='I7', role_name='CEO'),))
        self.assertEqual([v.rule for v in validate(w)], ['dangling-institution-ref'])

    def test_shared_email_matches_pairwise_scan(self):
        actors = (actor('A1', 'Don', 'Chamberlin', 'x@y.com'),
                  actor('A2', 'Michael', 'Kay', 'mhk@mhk.me.uk'),
                  actor('A3', 'Ashok', 'Malhotra', 'x@y.com', 'ashok@oracle.com'))
        report = validate(Warehouse(actors=actors))

        shared = {e for a, b in combinations(actors, 2) for e in a.emails & b.emails}
        self.assertEqual([v.entity_id for v in report if v.rule == 'shared-email'], sorted(e.address for e in shared))
        self.assertEqual(len(report), 1)

    def test_actor_constraints(self):
        actors = (actor('A1', 'Michael', 'Kay'),
                  actor('A2', 'Don', ' ', 'don@us.ibm.com'),
                  actor('A1', 'Other', 'Person', 'other@x.org'),
                  actor('1bad', 'Bad', 'Id', 'bad@x.org'),
                  actor('A3', ' Ashok', 'Malhotra', 'ashok@oracle.com'))
        rules = {(v.entity_id, v.rule) for v in validate(Warehouse(actors=actors))}
        self.assertIn(('A1', 'missing-email'), rules)
        self.assertIn(('A2', 'missing-lastname'), rules)
        self.assertIn(('A1', 'duplicate-id'), rules)
        self.assertIn(('1bad', 'id-format'), rules)
        self.assertIn(('A3', 'name-whitespace'), rules)

    def test_institution_ids_share_the_actor_id_space(self):
        w = replace(figure5_warehouse(), institutions=(Institution(id='A1', canonical_name='Saxonica'),))
        rules = [v.rule for v in validate(w)]
        self.assertIn('duplicate-id', rules)

    def test_alias_collision(self):
        institutions = (Institution(id='I1', canonical_name='Sun', aliases=frozenset({'Sun Microsystems'})),
                        Institution(id='I2', canonical_name='Sun Microsystems'))
        report = validate(Warehouse(institutions=institutions))
        self.assertEqual([(v.entity_id, v.rule) for v in report], [('I2', 'alias-collision')])

    def test_function_interval(self):
        f = Function(actor_ref='A1', institution_ref='I1', role_name='CEO', start=datetime.date(2005, 1, 1),
                     end=datetime.date(2004, 1, 1))
        self.assertEqual([v.rule for v in validate(replace(figure5_warehouse(), functions=(f,)))], ['interval-order'])
        f = Function(actor_ref='A1', institution_ref='I1', role_name='CEO', end=datetime.date(2004, 1, 1))
        self.assertEqual([v.rule for v in validate(replace(figure5_warehouse(), functions=(f,)))],
                         ['interval-missing-start'])
        f = Function(actor_ref='A1', institution_ref='I1', role_name='')
        self.assertEqual([v.rule for v in validate(replace(figure5_warehouse(), functions=(f,)))], ['missing-role'])

    def test_message_constraints(self):
        duplicate = message('m1@qt', QT, 'a@b.com', utc(2004, 1, 2))
        root = message('m1@qt', QT, 'a@b.com', utc(2004, 1, 1), children=(duplicate,))
        naive = message('m2@qt', 'other-list', 'a@b.com', datetime.datetime(2004, 1, 1))
        w = Warehouse(lists={QT: (Thread(QT, root), Thread(QT, naive))})
        rules = {(v.entity_id, v.rule) for v in validate(w)}
        self.assertEqual(rules, {('m1@qt', 'duplicate-message-id'), ('m2@qt', 'message-list-mismatch'),
                                 ('m2@qt', 'naive-date')})

    def test_unresolved_senders_are_reported_not_violations(self):
        report = validate(corpus_warehouse())
        self.assertTrue(report.is_valid)
        self.assertEqual(list(report.unresolved), ['anon@hotmail.com', 'bugzilla@w3.org'])
        self.assertEqual(unresolved_senders(corpus_warehouse()), ['anon@hotmail.com', 'bugzilla@w3.org'])


class TestWarehouse(unittest.TestCase):

    def test_messages_and_counts(self):
        w = corpus_warehouse()
        self.assertEqual(w.message_count(), 10)
        self.assertEqual(w.message_count(QT), 8)
        self.assertEqual(w.list_ids, [QT, 'xsl-list'])

    def test_actor_lookup(self):
        w = corpus_warehouse()
        self.assertEqual(w.actor('kay-michael').name.lastname, 'Kay')
        self.assertTrue(w.has_actor('chamberlin-don'))
        with self.assertRaises(ValueError):
            w.actor('nobody')

    def test_canonical_orders_everything(self):
        w = corpus_warehouse()
        shuffled = replace(w, actors=tuple(reversed(w.actors)),
                           lists={QT: tuple(reversed(w.lists[QT])), 'xsl-list': w.lists['xsl-list']})
        self.assertEqual(shuffled.canonical(), w.canonical())
        self.assertEqual([a.id for a in w.canonical().actors], ['chamberlin-don', 'kay-michael', 'malhotra-ashok'])

    def test_walk_visits_parents_first(self):
        root = corpus_warehouse().lists[QT][0].root
        self.assertEqual([m.message_id for m in root.walk()], ['m1@qt', 'm2@qt', 'm3@qt'])

    def test_map_tree_handles_deep_chains(self):
        node = message('m0', QT, 'a@b.com', utc(2004, 1, 1))
        for i in range(1, 5000):
            node = message(f'm{i}', QT, 'a@b.com', utc(2004, 1, 1), children=(node,))
        rebuilt = map_tree(node, lambda n, children: replace(n, subject='x', children=children))
        self.assertEqual(sum(1 for m in rebuilt.walk() if m.subject == 'x'), 5000)


if __name__ == '__main__':
    unittest.main()
