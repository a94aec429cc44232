import os
import unittest

from dirveval.core import Ranking, RankingSet, ImpressionRecord
from dirveval.data_io import load_relevance_csv, load_feature_csv, load_world_csv, load_variance_table_csv, \
    load_replay_datasets, write_replay_records, DataInvalidException
from .test_config import write_file


class TestCsvInputs(unittest.TestCase):

    csv_path = '_tmp_test_input.csv'

    def write_and_load(self, loader, text):
        with write_file(self.csv_path) as csv_file:
            csv_file.write(text)
            csv_file.close()
            return loader(self.csv_path)

    def test_relevance(self):
        self.assertEqual(self.write_and_load(load_relevance_csv, "item_id,relevance\n3,2\n1,0\n"), {3: 2, 1: 0})

    def test_relevance_not_integer(self):
        with self.assertRaises(DataInvalidException):
            self.write_and_load(load_relevance_csv, "item_id,relevance\n3,1.5\n")

    def test_missing_column(self):
        with self.assertRaises(DataInvalidException) as context:
            self.write_and_load(load_relevance_csv, "item_id,label\n3,2\n")
        self.assertIn("relevance", str(context.exception))

    def test_duplicate_ids(self):
        with self.assertRaises(DataInvalidException):
            self.write_and_load(load_relevance_csv, "item_id,relevance\n3,2\n3,1\n")

    def test_features(self):
        table = self.write_and_load(load_feature_csv, "item_id,bm25,tf\n2,1.5,3\n1,0.5,4\n")
        self.assertEqual(list(table.index), [1, 2])
        self.assertEqual(list(table.columns), ['bm25', 'tf'])
        self.assertEqual(table.loc[2, 'bm25'], 1.5)

    def test_features_not_numeric(self):
        with self.assertRaises(DataInvalidException):
            self.write_and_load(load_feature_csv, "item_id,bm25\n1,high\n")
        with self.assertRaises(DataInvalidException):
            self.write_and_load(load_feature_csv, "item_id\n1\n")

    def test_world(self):
        world = self.write_and_load(load_world_csv, "item_id,attraction,mean_dwell,var_dwell\n5,0.25,30,12.5\n")
        self.assertEqual(world, {5: (0.25, 30.0, 12.5)})
        with self.assertRaises(DataInvalidException):
            self.write_and_load(load_world_csv, "item_id,attraction,mean_dwell,var_dwell\n5,1.25,30,12.5\n")
        with self.assertRaises(DataInvalidException):
            self.write_and_load(load_world_csv, "item_id,attraction,mean_dwell,var_dwell\n5,0.25,0,12.5\n")

    def test_variance_table(self):
        table = self.write_and_load(load_variance_table_csv, "item_id,predicted_variance\n1,4\n2,0.5\n")
        self.assertEqual(table, {1: 4.0, 2: 0.5})
        with self.assertRaises(DataInvalidException):
            self.write_and_load(load_variance_table_csv, "item_id,predicted_variance\n1,-4\n")

    def test_empty_file(self):
        with self.assertRaises(DataInvalidException):
            self.write_and_load(load_relevance_csv, "")


REPLAY_LOG = """# two queries
#input_ranking\tq1\t1,2,3
#input_ranking\tq1\t3,2,1
q1\t1,2,3\t0,1,0\t-,12.5,-
q1\t2,1,3\t0,0,0\t-,-,-

q1\t1,2,3\t1,0,1\t4.0,-,0.0
#input_ranking\tq2\t7,8
#input_ranking\tq2\t8,9
q2\t8,9\t1,1\t2,3
"""


class TestReplayLog(unittest.TestCase):

    log_path = '_tmp_test_replay.tsv'

    def load(self, text):
        with write_file(self.log_path) as log_file:
            log_file.write(text)
            log_file.close()
            return load_replay_datasets(self.log_path)

    def test_load(self):
        first, second = self.load(REPLAY_LOG)
        self.assertEqual(first.query_id, 'q1')
        self.assertEqual(list(first.input_rankings), [Ranking((1, 2, 3)), Ranking((3, 2, 1))])
        self.assertEqual(first.record_count(), 3)
        self.assertEqual(list(first.pool), [Ranking((1, 2, 3)), Ranking((2, 1, 3))])
        records = list(first.pool[Ranking((1, 2, 3))])
        self.assertEqual(records[0].post_clicks, (None, 12.5, None))
        self.assertEqual(records[1].clicks, (True, False, True))
        self.assertEqual(second.nonempty_rankings(), [Ranking((8, 9))])

    def test_too_few_input_rankings(self):
        with self.assertRaises(DataInvalidException):
            self.load("#input_ranking\tq1\t1,2\nq1\t1,2\t0,0\t-,-\n")
        with self.assertRaises(DataInvalidException):
            self.load("q1\t1,2\t0,0\t-,-\n")

    def test_malformed_lines(self):
        header = "#input_ranking\tq1\t1,2\n#input_ranking\tq1\t2,1\n"
        for line in ["q1\t1,2\t0,0\n", "q1\t1,2\t0,2\t-,-\n", "q1\t1,2\t0,1\t-,-\n", "q1\t1,2\t0,1\t-,x\n",
                     "q1\t1,1\t0,0\t-,-\n", "q1\t1,5\t0,0\t-,-\n", "q1\t1,2\t1,0\t-5,-\n"]:
            with self.assertRaises(DataInvalidException, msg=line):
                self.load(header + line)

    def test_non_finite_post_click_values(self):
        header = "#input_ranking\tq1\t1,2\n#input_ranking\tq1\t2,1\n"
        for value in ('nan', 'inf', '-inf'):
            with self.assertRaises(DataInvalidException, msg=value) as context:
                self.load(header + "q1\t1,2\t1,0\t{},-\n".format(value))
            self.assertIn("line 3", str(context.exception))

    def test_line_number_in_message(self):
        with self.assertRaises(DataInvalidException) as context:
            self.load("#input_ranking\tq1\t1,2\n#input_ranking\tq1\t2,1\nq1\t1,2\t0,0\n")
        self.assertIn("line 3", str(context.exception))

    def test_write_and_load(self):
        rankings = RankingSet(((1, 2), (2, 3)))
        records = [ImpressionRecord(Ranking((1, 2)), (True, False), (0.1, None)),
                   ImpressionRecord(Ranking((3, 2)), (False, False), (None, None))]
        try:
            write_replay_records(self.log_path, 'a', rankings, records)
            write_replay_records(self.log_path, 'b', rankings, records[:1], append=True)
            first, second = load_replay_datasets(self.log_path)
            self.assertEqual(first.input_rankings, rankings)
            self.assertEqual([list(queue) for queue in first.pool.values()], [[records[0]], [records[1]]])
            self.assertEqual(second.query_id, 'b')
            self.assertEqual(second.record_count(), 1)
        finally:
            os.remove(self.log_path)
