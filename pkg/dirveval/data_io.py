"""
dirveval - online comparison of rankings on post-click metrics

Reading and writing the input files: relevance labels, feature tables, news-style world tables, predicted variances
and replay logs.

Replay logs are tab-separated text with one impression per line:

    query_id<TAB>ranking<TAB>clicks<TAB>post-click values

where the ranking is a comma-separated list of item ids, clicks a comma-separated list of 0/1 flags and the post-click
values a comma-separated list of numbers with '-' for positions that weren't clicked. Input rankings of each query are
declared by header lines:

    #input_ranking<TAB>query_id<TAB>comma-separated item ids
"""
import logging
from collections import deque, OrderedDict
from dataclasses import dataclass, field

import pandas as pd

from .core import Ranking, RankingSet, ImpressionRecord, MalformedRecordException

_log = logging.getLogger(__name__)

INPUT_RANKING_HEADER = '#input_ranking'
UNCLICKED = '-'


@dataclass
class ReplayDataset:
    """
    Logged impressions of one query: the input rankings plus a queue of records for every ranking that was logged.
    """
    query_id: str
    input_rankings: RankingSet
    pool: OrderedDict = field(default_factory=OrderedDict)

    def record_count(self):
        return sum(len(queue) for queue in self.pool.values())

    def nonempty_rankings(self):
        return [ranking for ranking, queue in self.pool.items() if len(queue) > 0]


def _read_csv(path, columns):
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataInvalidException("can't be read as CSV: {}".format(exc), path) from exc
    frame.columns = [str(col).strip() for col in frame.columns]
    missing = [col for col in columns if col not in frame.columns]
    if len(missing) > 0:
        raise DataInvalidException("missing columns {} (found {})".format(missing, list(frame.columns)), path)
    if frame['item_id'].duplicated().any():
        duplicates = sorted(frame.loc[frame['item_id'].duplicated(), 'item_id'].unique().tolist())
        raise DataInvalidException("duplicate item ids: {}".format(duplicates), path)
    for col in frame.columns:
        if not pd.api.types.is_numeric_dtype(frame[col]):
            raise DataInvalidException("column '{}' has to be numeric".format(col), path)
        if frame[col].isnull().any():
            raise DataInvalidException("column '{}' has missing values".format(col), path)
    if not pd.api.types.is_integer_dtype(frame['item_id']):
        raise DataInvalidException("item ids have to be integers", path)
    return frame


def load_relevance_csv(path):
    """
    Relevance label per item from a CSV with 'item_id,relevance' columns.
    """
    frame = _read_csv(path, ['item_id', 'relevance'])
    if not pd.api.types.is_integer_dtype(frame['relevance']):
        raise DataInvalidException("relevance labels have to be integers", path)
    return {int(item): int(label) for item, label in zip(frame['item_id'], frame['relevance'])}


def load_feature_csv(path):
    """
    Feature table from a CSV with an 'item_id' column followed by one column per feature.
    """
    frame = _read_csv(path, ['item_id'])
    if len(frame.columns) < 2:
        raise DataInvalidException("no feature columns found", path)
    return frame.set_index('item_id').sort_index()


def load_world_csv(path):
    """
    Per-item (attraction, mean dwell time, dwell time variance) from a CSV with
    'item_id,attraction,mean_dwell,var_dwell' columns.
    """
    frame = _read_csv(path, ['item_id', 'attraction', 'mean_dwell', 'var_dwell'])
    if not frame['attraction'].between(0.0, 1.0).all():
        raise DataInvalidException("attraction has to be in [0, 1]", path)
    if (frame['mean_dwell'] <= 0).any():
        raise DataInvalidException("mean_dwell has to be positive", path)
    if (frame['var_dwell'] < 0).any():
        raise DataInvalidException("var_dwell can't be negative", path)
    return {int(row.item_id): (float(row.attraction), float(row.mean_dwell), float(row.var_dwell))
            for row in frame.itertuples(index=False)}


def load_variance_table_csv(path):
    frame = _read_csv(path, ['item_id', 'predicted_variance'])
    if (frame['predicted_variance'] < 0).any():
        raise DataInvalidException("predicted variances can't be negative", path)
    return {int(item): float(value) for item, value in zip(frame['item_id'], frame['predicted_variance'])}


def _parse_ids(text, path, line_no):
    try:
        return Ranking(tuple(int(item) for item in text.split(',')))
    except ValueError as exc:
        raise DataInvalidException("invalid item ids '{}'".format(text), path, line_no) from exc
    except MalformedRecordException as exc:
        raise DataInvalidException(str(exc), path, line_no) from exc


def _parse_record(fields, path, line_no):
    ranking = _parse_ids(fields[1], path, line_no)
    try:
        clicks = tuple({'0': False, '1': True}[flag.strip()] for flag in fields[2].split(','))
    except KeyError as exc:
        raise DataInvalidException("click flags have to be 0 or 1: '{}'".format(fields[2]), path, line_no) from exc
    try:
        post_clicks = tuple(None if value.strip() == UNCLICKED else float(value) for value in fields[3].split(','))
    except ValueError as exc:
        raise DataInvalidException("invalid post-click values '{}'".format(fields[3]), path, line_no) from exc
    record = ImpressionRecord(ranking, clicks, post_clicks)
    try:
        record.validate()
    except MalformedRecordException as exc:
        raise DataInvalidException(str(exc), path, line_no) from exc
    return record


def load_replay_datasets(path):
    """
    One dataset per query id, in order of first appearance. Blank lines and comment lines other than the input ranking
    headers are skipped.
    """
    input_rankings = OrderedDict()
    records = OrderedDict()
    with open(path, 'r') as log_file:
        for line_no, line in enumerate(log_file, start=1):
            line = line.rstrip('\n')
            if line.strip() == '':
                continue
            fields = line.split('\t')
            if fields[0] == INPUT_RANKING_HEADER:
                if len(fields) != 3:
                    raise DataInvalidException("input ranking header needs 3 fields, got {}".format(len(fields)),
                                               path, line_no)
                input_rankings.setdefault(fields[1], []).append(_parse_ids(fields[2], path, line_no))
                records.setdefault(fields[1], [])
                continue
            if fields[0].startswith('#'):
                continue
            if len(fields) != 4:
                raise DataInvalidException("expected 4 tab-separated fields, got {}".format(len(fields)), path, line_no)
            records.setdefault(fields[0], []).append((line_no, _parse_record(fields, path, line_no)))

    datasets = []
    for query_id, query_records in records.items():
        rankings = input_rankings.get(query_id, [])
        if len(rankings) < 2:
            raise DataInvalidException("query '{}' declares {} input rankings, at least 2 are needed"
                                       .format(query_id, len(rankings)), path)
        ranking_set = RankingSet(tuple(rankings))
        pool = OrderedDict()
        for line_no, record in query_records:
            unknown = [item for item in record.ranking if item not in ranking_set.universe]
            if len(unknown) > 0:
                raise DataInvalidException("items {} aren't part of any input ranking of query '{}'"
                                           .format(unknown, query_id), path, line_no)
            pool.setdefault(record.ranking, deque()).append(record)
        if len(pool) == 0:
            _log.warning("Query '{}' in '{}' has no logged impressions".format(query_id, path))
        datasets.append(ReplayDataset(query_id, ranking_set, pool))
    return datasets


def _format_record(query_id, record):
    clicks = ','.join('1' if clicked else '0' for clicked in record.clicks)
    post_clicks = ','.join(UNCLICKED if value is None else repr(float(value)) for value in record.post_clicks)
    return '\t'.join([str(query_id), str(record.ranking), clicks, post_clicks])


def write_replay_records(path, query_id, input_rankings, records, append=False):
    """
    Write the input rankings and logged impressions of one query in the format read by load_replay_datasets().
    """
    with open(path, 'a' if append else 'w') as log_file:
        for ranking in input_rankings:
            log_file.write('\t'.join([INPUT_RANKING_HEADER, str(query_id), str(ranking)]) + '\n')
        for record in records:
            log_file.write(_format_record(query_id, record) + '\n')


class DataInvalidException(Exception):
    """
    Exception raised for input files with invalid content.
    """

    def __init__(self, message, path=None, line=None):
        if path is not None and line is not None:
            message = "Data in '{}' (line {}) is invalid:\n {}".format(path, line, message)
        elif path is not None:
            message = "Data in '{}' is invalid:\n {}".format(path, message)
        else:
            message = "Data is invalid:\n {}".format(message)
        super().__init__(message)
