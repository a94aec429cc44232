#!/usr/bin/env python3
"""
dirveval - online comparison of rankings on post-click metrics
"""
import os
import sys
import errno
import logging
from logging.handlers import RotatingFileHandler

import click
from appdirs import user_log_dir

from .utils import decorate, NoExceptionFormatter, only_file_stem
from .exp_config import read_experiment_config, ConfigInvalidException, SIMULATE, REPLAY
from .data_io import load_replay_datasets, write_replay_records, DataInvalidException
from .interleave import POLICIES, TDM, ReplayExhaustedException
from . import harness, sim, __version__

APP_NAME = "dirveval"
LOG_FILE = os.path.join(user_log_dir(APP_NAME, appauthor=False), "out.log")
ALL_POLICIES = 'all'

log = logging.getLogger()


def setup_logging(verbose=False): # pragma: no cover
    log_dir = os.path.dirname(LOG_FILE)
    try:
        if not os.path.exists(log_dir):
            os.makedirs(log_dir)

        max_total_size = 1024 * 1024
        file_count = 2
        file_handler = RotatingFileHandler(LOG_FILE, mode='a', maxBytes=max_total_size / file_count,
                                           backupCount=file_count - 1, encoding=None, delay=0)
    except OSError as err:
        if err.errno == errno.EACCES:
            print('WARN: No permissions to create logging directory or file: ' + LOG_FILE)
            return
        raise err

    file_handler.setFormatter(
        logging.Formatter("[%(asctime)s] %(name)-10.10s %(threadName)-12.12s %(levelname)-8.8s  %(message)s"))
    file_handler.setLevel(logging.INFO)

    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(
        NoExceptionFormatter("%(levelname)s: %(message)s"))
    stream_handler.setLevel(logging.WARN)
    # Get the root logger to setup logging for all other modules
    log.addHandler(file_handler)
    log.addHandler(stream_handler)
    # Set the root level to lowest detail otherwise it's never passed on to handlers or other loggers
    log.setLevel(logging.DEBUG)
    if verbose:
        file_handler.setLevel(logging.DEBUG)
        stream_handler.setLevel(logging.DEBUG)


def exit_with_error(exc):
    click.echo(str(exc), err=True)
    sys.exit(1)


def print_summary(frame, path):
    """
    Mean binary error at the last checkpoint of each policy.
    """
    if len(frame) == 0:
        print("No results")
        return
    last = frame[frame['impressions'] == frame.groupby('repeat')['impressions'].transform('max')]
    for policy, rows in last.groupby('policy', sort=False):
        click.secho("\t{:<16} binary error: {:.4f} (over {} runs, {} impressions)".format(
            policy, rows['e_bin'].mean(), len(rows), int(rows['impressions'].max())), fg='green')
    print("Results written to: {}".format(path))


# Shared command line options for experiments
EXPERIMENT_OPTIONS = [
    click.option('--config', '-c', type=click.Path(exists=True, dir_okay=False), required=True,
                 help='Experiment config file (YAML).'),
    click.option('--seed', '-s', type=click.IntRange(min=0), default=None,
                 help='Master seed for all random streams (overrides the config).'),
    click.option('--out', '-o', type=click.Path(file_okay=False), default=None,
                 help='Output directory for result files (overrides the config).'),
]


@click.group(context_settings=dict(max_content_width=120))
@click.option('--verbose', '-v', is_flag=True, help='Give more verbose output.')
@click.version_option(version=__version__, message="%(prog)s, version %(version)s")
def main(verbose):
    """
    Compares rankings on post-click metrics by simulating or replaying interleaved impressions.
    """
    setup_logging(verbose)


@main.command()
@decorate(EXPERIMENT_OPTIONS)
@click.option('--policy', '-p', type=click.Choice(POLICIES + (ALL_POLICIES,)), default=None,
              help='Ranking selection policy (overrides the config), or "all" to run every policy in turn.')
def simulate(config, seed, out, policy):
    """
    Run simulated experiments.

    Every repeat generates a world of items with known parameters, presents rankings chosen by the policy to simulated
    users and records the binary error of the estimated preferences at regular checkpoints.
    """
    policies = POLICIES if policy == ALL_POLICIES else (policy,)
    try:
        for name in policies:
            cfg = read_experiment_config(config, {'policy': name, 'seed': seed, 'output': out, 'mode': SIMULATE})
            print('{}:'.format(cfg.policy))
            frame = harness.run_simulation(cfg)
            path, _ = harness.emit_results(frame, harness.result_path(cfg.output, cfg.policy, cfg.seed))
            print_summary(frame, path)
    except (ConfigInvalidException, DataInvalidException) as exc:
        exit_with_error(exc)
    except Exception as exc:
        logging.exception(exc)
        sys.exit(1)


@main.command()
@decorate(EXPERIMENT_OPTIONS)
@click.option('--data', '-d', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Replay log with the logged impressions of one or more queries.')
@click.option('--policy', '-p', type=click.Choice([name for name in POLICIES if name != TDM]), default=None,
              help='Ranking selection policy (overrides the config).')
@click.option('--swap-halves', is_flag=True,
              help='Compute the ground truth from the second half of each ranking\'s log and replay the first.')
def replay(config, seed, out, data, policy, swap_halves):
    """
    Replay logged impressions.

    Half of the logged impressions of each input ranking define the ground truth, the other half is consumed as the
    policy picks rankings. Results are averaged over the queries in the log.
    """
    try:
        cfg = read_experiment_config(config, {'policy': policy, 'seed': seed, 'output': out, 'mode': REPLAY})
        datasets = load_replay_datasets(data)
        print('{}: {} queries'.format(only_file_stem(data), len(datasets)))
        frame = harness.run_replay_datasets(cfg, datasets, swap=swap_halves)
        path, _ = harness.emit_results(frame, harness.result_path(cfg.output, cfg.policy, cfg.seed, mode=REPLAY))
        print_summary(frame, path)
    except (ConfigInvalidException, DataInvalidException, ReplayExhaustedException) as exc:
        exit_with_error(exc)
    except Exception as exc:
        logging.exception(exc)
        sys.exit(1)


@main.command(name='record-log')
@decorate(EXPERIMENT_OPTIONS[:2])
@click.option('--impressions-per-ranking', '-n', type=click.IntRange(min=1), default=1000, show_default=True,
              help='Logged impressions for every candidate ranking.')
@click.option('--interleavings', '-i', type=click.IntRange(min=0), default=0, show_default=True,
              help='Number of team-draft interleavings drawn as extra candidate rankings.')
@click.argument('log_file', type=click.Path(dir_okay=False))
def record_log(config, seed, impressions_per_ranking, interleavings, log_file):
    """
    Write a replay log from simulated worlds.

    Every repeat of the config becomes one query with its own world and input rankings.
    """
    try:
        cfg = read_experiment_config(config, {'seed': seed, 'mode': SIMULATE})
        inputs = harness.SimulationInputs.load(cfg)
        for repeat in range(cfg.num_repeats):
            world, rankings = harness.build_world(cfg, inputs, harness.stream(cfg.seed, repeat, harness.WORLD_STREAM))
            rng = harness.stream(cfg.seed, repeat, harness.BEHAVIOR_STREAM)
            candidates = sim.interleaved_candidates(rankings, interleavings, rng, cfg.depth)
            records = sim.record_replay_log(world, rankings, harness.behavior_for(cfg), impressions_per_ranking, rng,
                                            candidates)
            write_replay_records(log_file, 'q{}'.format(repeat), rankings, records, append=repeat > 0)
        print("Logged {} queries to: {}".format(cfg.num_repeats, log_file))
    except (ConfigInvalidException, DataInvalidException) as exc:
        exit_with_error(exc)
    except Exception as exc:
        logging.exception(exc)
        sys.exit(1)


@main.command()
@click.option('--in', 'in_dir', type=click.Path(exists=True, file_okay=False), required=True,
              help='Directory with result files.')
def report(in_dir):
    """
    Aggregate all result files in a directory.

    Prints the mean and standard deviation of the binary error and total variance per policy and checkpoint, and
    writes them to report_aggregate.csv in the same directory.
    """
    try:
        aggregate = harness.aggregate_results(harness.load_results(in_dir))
        path = os.path.join(in_dir, 'report_aggregate.csv')
        harness.write_csv(aggregate, path)
        if len(aggregate) == 0:
            print("No result files found in: {}".format(in_dir))
            return
        print(aggregate.to_string(index=False, float_format=lambda value: '{:.6g}'.format(value)))
    except Exception as exc:
        logging.exception(exc)
        sys.exit(1)


@main.command(name='bound-check')
@decorate(EXPERIMENT_OPTIONS[:2])
@click.option('--impressions', '-n', type=click.IntRange(min=0), default=None,
              help='Impressions per repeat (default: num_impressions of the config).')
@click.option('--repeats', '-r', type=click.IntRange(min=2), default=None,
              help='Monte Carlo repeats (default: num_repeats of the config).')
def bound_check(config, seed, impressions, repeats):
    """
    Compare the mean binary error with its variance-based upper bound.

    The world and input rankings of the config's first repeat are kept fixed while the policy is run repeatedly.
    """
    try:
        cfg = read_experiment_config(config, {'seed': seed, 'mode': SIMULATE})
        report_ = harness.bound_check_from_config(cfg, impressions, repeats)
        print("Impressions:       {}".format(report_.impressions))
        print("Repeats:           {}".format(report_.repeats))
        print("Binary error:      {:.6g}".format(report_.empirical_error))
        print("Bound:             {:.6g}".format(report_.bound))
        print("Bound (measured):  {:.6g}".format(report_.empirical_variance_bound))
        color = {harness.HOLDS: 'green', harness.VIOLATED: 'red'}.get(report_.verdict)
        click.secho("Verdict:           {}".format(report_.verdict), fg=color)
    except (ConfigInvalidException, DataInvalidException, harness.UndefinedBoundException) as exc:
        exit_with_error(exc)
    except Exception as exc:
        logging.exception(exc)
        sys.exit(1)


if __name__ == "__main__":
    main()
