import argparse
import logging
import os
import shlex
import sys

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(ROOT_DIR)

from settings import default_dirs, exit_codes
from src.config import get_config_dir, load_config
from src.export import FORMATS, Table, as_table, export_sequence_matrix, export_table, render_bar_chart, \
    render_paired_bar_chart, render_text, summary_table
from src.identity import MergeProposal, propose_merges
from src.institutions import InstitutionActivity, build_affiliation_timeline, institution_report
from src.integrate import NormalizedRow, load_bibliography, load_tech_reports, normalize_join, \
    q7_recommendation_authors, q8_posts_vs_publications
from src.model import Function, MessageNode, WarehouseValidationError
from src.pipeline import IngestSummary, Pipeline
from src.queries import ActorPostCount, DistributionBucket, InstitutionPostCount, MonthBucket, PostingShare, \
    SubjectCluster, ThreadRole, posting_distribution, q1_posts_per_actor, q1_share, q2_multi_list_posters, \
    q3_posts_per_month, q4_fulltext, q5_email_timeline, q6_posts_per_institution, subject_clusters, \
    thread_roles

# Set up logging
logging.basicConfig(level=logging.INFO,
                    format='%(asctime)s %(levelname)s %(message)s',
                    filename=f'{ROOT_DIR}/listforge.log',
                    filemode='w')
# These libraries make a lot of debug-level log messages which make the log file hard to read
logging.getLogger('matplotlib').setLevel(logging.WARNING)
logging.getLogger('PIL').setLevel(logging.WARNING)

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    """Make the argument parser with one subparser per command"""

    parser = argparse.ArgumentParser(prog='listforge',
                                     description='Build an XML warehouse from mailing-list archives and run the '
                                                 'posting, timeline, institution and publication queries on it. '
                                                 'See the README for more help and examples.')
    parser.add_argument('--warehouse', default=default_dirs['warehouse'], help='warehouse directory')
    parser.add_argument('--config', help='configuration directory (default: $LISTFORGE_CONFIG, then ./config)')
    parser.add_argument('--out', help='write the result to this file (directory for report) instead of stdout')
    parser.add_argument('--format', choices=FORMATS, default='csv', help='table format used with --out')
    parser.add_argument('-v', '--verbose', action='store_true', help='Write all log messages to the log file')
    parser.add_argument('--preserve-extensions', action='store_true',
                        help='keep unknown XML elements of stored documents instead of dropping them')
    parser.add_argument('--strict-homonym', action='store_true',
                        help='never give two addresses to one actor because their names are equal')
    subparsers = parser.add_subparsers(dest='command')

    ingest = subparsers.add_parser('ingest', help='parse mbox files or maildir directories into the warehouse')
    ingest.add_argument('--list', dest='archives', nargs=2, action='append', required=True,
                        metavar=('LIST_ID', 'PATH'), help='a list and its archive; may be repeated')
    ingest.set_defaults(handler=_ingest)

    resolve = subparsers.add_parser('resolve', help='propose or apply actor merges')
    resolve.add_argument('action', choices=['propose', 'apply'])
    resolve.set_defaults(handler=_resolve)

    recover = subparsers.add_parser('recover-hidden', help='recover the senders hidden in gateway messages')
    recover.set_defaults(handler=_recover_hidden)

    institutions = subparsers.add_parser('institutions', help='institution report, timelines and enrichment')
    institutions.add_argument('action', choices=['report', 'timeline', 'enrich'])
    institutions.add_argument('actor', nargs='?', help='actor id, for timeline')
    institutions.set_defaults(handler=_institutions)

    validate_parser = subparsers.add_parser('validate', help='check the warehouse constraints')
    validate_parser.set_defaults(handler=_validate)

    query = subparsers.add_parser('query', help='run one query')
    queries = query.add_subparsers(dest='query', required=True)
    for name in ['q1', 'q2', 'distribution', 'share', 'q8']:
        q = queries.add_parser(name)
        q.add_argument('--count-recovered', action='store_true',
                       help='attribute gateway messages to the senders recovered from their bodies')
        if name != 'q2':
            q.add_argument('--threshold', type=int, default=20 if name != 'distribution' else 0)
        if name == 'q2':
            q.add_argument('--min-lists', type=int, default=2)
        if name == 'q8':
            q.add_argument('--bibliography', required=True, help='DBLP-shaped XML file')
            q.add_argument('--summary', action='store_true', help='show the group summary instead of the rows')
            q.add_argument('--normalized', action='store_true', help='posts and publications as %% of the maximum')
    q3 = queries.add_parser('q3')
    q3.add_argument('--list', required=True, dest='list_id')
    q3.add_argument('--granularity', choices=['day', 'month', 'year'], default='month')
    q3.add_argument('--from', dest='start', help='first period of the series, default the first post of the list')
    q3.add_argument('--to', dest='end', help='last period of the series, default the last post of the list')
    q4 = queries.add_parser('q4')
    q4.add_argument('--list', dest='list_id', help='search one list only')
    q4.add_argument('--needle', required=True)
    q4.add_argument('--field', choices=['subject', 'body'], default='subject')
    q4.add_argument('--period', help='restrict to a period such as 2004-02')
    q4.add_argument('--clusters', type=int, metavar='N', help='show the N most frequent subjects of the hits')
    q5 = queries.add_parser('q5')
    q5.add_argument('--actor', required=True)
    q5.add_argument('--granularity', choices=['day', 'month', 'year'], default='month')
    q6 = queries.add_parser('q6')
    q6.add_argument('--top', type=int, default=20)
    q7 = queries.add_parser('q7')
    q7.add_argument('--tech-reports', required=True, help='CSV of recommendationId,authorFullName')
    queries.add_parser('roles')
    query.set_defaults(handler=_query)

    export = subparsers.add_parser('export', help='sequence matrix and charts')
    export.add_argument('what', choices=['matrix', 'chart-q3', 'chart-q5', 'chart-q8'])
    export.add_argument('--granularity', choices=['day', 'month', 'year'], default='month')
    export.add_argument('--list', dest='list_id', help='list, for chart-q3')
    export.add_argument('--actor', help='actor id, for chart-q5')
    export.add_argument('--bibliography', help='DBLP-shaped XML file, for chart-q8')
    export.add_argument('--threshold', type=int, default=20, help='top poster threshold, for chart-q8')
    export.set_defaults(handler=_export)

    report = subparsers.add_parser('report', help='validate and write q1, q2, q3 and q6 into a directory')
    report.add_argument('--threshold', type=int, default=20)
    report.add_argument('--top', type=int, default=20)
    report.add_argument('--count-recovered', action='store_true')
    report.set_defaults(handler=_report)

    # A file of commands, one per line, each run as if entered in the command line
    batch = subparsers.add_parser('batch', help='run the commands listed in a file, one per line')
    batch.add_argument('command_file')

    return parser


def main(argv: list = None) -> int:
    """Parse instructions from the command line and run them"""

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code

    if args.command is None:  # Show help message if no command is given
        parser.print_help()
        return exit_codes['usage_error']

    if args.command != 'batch':
        return run_command(args)

    try:
        with open(args.command_file, 'r') as f:
            lines = [line.strip() for line in f.readlines()]
    except OSError as e:
        logger.error(f'Cannot read command file: {e}')
        print(f'listforge: {e}', file=sys.stderr)
        return exit_codes['data_error']
    for line in lines:
        if not line or line.startswith('#'):
            continue
        try:
            command = parser.parse_args(shlex.split(line))
        except SystemExit as e:
            return e.code
        if command.command in (None, 'batch'):
            print(f'listforge: cannot run {line!r} from a command file', file=sys.stderr)
            return exit_codes['usage_error']
        code = run_command(command)
        if code != exit_codes['ok']:
            return code
    return exit_codes['ok']


def run_command(args: argparse.Namespace) -> int:
    """
    Run one command as specified in the given command line arguments
    :param args: an argparse Namespace object holding the values of parsed arguments
    :return: the exit code
    """
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)  # Show all log messages

    logger.info(f'Running {args.command} with args {str(vars(args))}')
    config = load_config(get_config_dir(args.config))
    try:
        code = args.handler(args, config)
    except WarehouseValidationError as e:
        for violation in e.report:
            logger.error(str(violation))
        print(f'listforge: {e}', file=sys.stderr)
        return exit_codes['data_error']
    except (ValueError, OSError) as e:
        logger.error(f'{args.command} failed: {e}', exc_info=True)
        print(f'listforge: {e}', file=sys.stderr)
        return exit_codes['data_error']
    logger.info(f'{args.command} finished')
    return code


def _emit(result, args, row_type=None) -> int:
    """Write a result to --out in --format, or as an aligned table on stdout"""

    if args.out:
        export_table(result, args.format, args.out, row_type=row_type)
    else:
        sys.stdout.write(render_text(as_table(result, row_type)))
    return exit_codes['ok']


def _load(args):
    return Pipeline.load(args.warehouse, preserve_extensions=args.preserve_extensions)


def _ingest(args, config) -> int:
    summaries = Pipeline.ingest(args.warehouse, [tuple(a) for a in args.archives],
                                strict_homonym=args.strict_homonym, preserve_extensions=args.preserve_extensions)
    return _emit(summaries, args, row_type=IngestSummary)


def _resolve(args, config) -> int:
    if args.action == 'propose':
        return _emit(propose_merges(_load(args)), args, row_type=MergeProposal)
    warehouse = Pipeline.apply_merges(args.warehouse, config, preserve_extensions=args.preserve_extensions)
    print(f'{len(config.merges)} merges applied; {len(warehouse.actors)} actors remain')
    return exit_codes['ok']


def _recover_hidden(args, config) -> int:
    unknown = Pipeline.recover_hidden(args.warehouse, config, preserve_extensions=args.preserve_extensions)
    return _emit(Table(('unknown_address',), tuple((a,) for a in unknown)), args)


def _institutions(args, config) -> int:
    if args.action == 'report':
        return _emit(institution_report(_load(args), config.domain_map, config.resolver), args,
                     row_type=InstitutionActivity)
    if args.action == 'timeline':
        if not args.actor:
            print('listforge: institutions timeline needs an actor id', file=sys.stderr)
            return exit_codes['usage_error']
        return _emit(build_affiliation_timeline(_load(args), args.actor, config.domain_map), args,
                     row_type=Function)
    warehouse = Pipeline.enrich_institutions(args.warehouse, config, preserve_extensions=args.preserve_extensions)
    print(f'{len(warehouse.institutions)} institutions, {len(warehouse.functions)} functions')
    return exit_codes['ok']


def _validate(args, config) -> int:
    report = _load(args).report
    _emit(report, args)
    return exit_codes['ok'] if report.is_valid else exit_codes['data_error']


def _query(args, config) -> int:
    warehouse = _load(args)
    name = args.query
    if name == 'q1':
        return _emit(q1_posts_per_actor(warehouse, args.threshold, args.count_recovered), args,
                     row_type=ActorPostCount)
    if name == 'q2':
        return _emit(q2_multi_list_posters(warehouse, args.min_lists, args.count_recovered), args,
                     row_type=ActorPostCount)
    if name == 'distribution':
        rows = q1_posts_per_actor(warehouse, args.threshold, args.count_recovered)
        return _emit(posting_distribution(rows), args, row_type=DistributionBucket)
    if name == 'share':
        rows = q1_posts_per_actor(warehouse, args.threshold, args.count_recovered)
        return _emit([q1_share(warehouse, rows, config.gateways)], args, row_type=PostingShare)
    if name == 'q3':
        return _emit(q3_posts_per_month(warehouse, args.list_id, args.granularity, args.start, args.end), args,
                     row_type=MonthBucket)
    if name == 'q4':
        hits = q4_fulltext(warehouse, args.list_id, args.needle, args.field, args.period)
        if args.clusters:
            return _emit(subject_clusters(hits, args.clusters), args, row_type=SubjectCluster)
        return _emit(hits, args, row_type=MessageNode)
    if name == 'q5':
        return _emit(q5_email_timeline(warehouse, args.actor, args.granularity), args)
    if name == 'q6':
        return _emit(q6_posts_per_institution(warehouse, args.top, config.domain_map, config.resolver), args,
                     row_type=InstitutionPostCount)
    if name == 'q7':
        return _emit(q7_recommendation_authors(warehouse, load_tech_reports(args.tech_reports)), args)
    if name == 'q8':
        join = q8_posts_vs_publications(warehouse, load_bibliography(args.bibliography), args.threshold,
                                        args.count_recovered)
        if args.summary:
            return _emit(summary_table(join), args)
        if args.normalized:
            return _emit(normalize_join(join), args, row_type=NormalizedRow)
        return _emit(join, args)
    return _emit(thread_roles(warehouse), args, row_type=ThreadRole)


def _export(args, config) -> int:
    warehouse = _load(args)
    if args.what == 'matrix':
        return _emit(export_sequence_matrix(warehouse, args.granularity), args)

    if not args.out:
        print(f'listforge: export {args.what} needs --out for the SVG file', file=sys.stderr)
        return exit_codes['usage_error']
    if args.what == 'chart-q3':
        if not args.list_id:
            print('listforge: export chart-q3 needs --list', file=sys.stderr)
            return exit_codes['usage_error']
        render_bar_chart(q3_posts_per_month(warehouse, args.list_id, args.granularity), args.out,
                         title=f'{args.list_id}: posts per {args.granularity}')
    elif args.what == 'chart-q5':
        if not args.actor:
            print('listforge: export chart-q5 needs --actor', file=sys.stderr)
            return exit_codes['usage_error']
        render_bar_chart(q5_email_timeline(warehouse, args.actor, args.granularity), args.out,
                         title=f'{args.actor}: posts per {args.granularity}')
    else:
        if not args.bibliography:
            print('listforge: export chart-q8 needs --bibliography', file=sys.stderr)
            return exit_codes['usage_error']
        join = q8_posts_vs_publications(warehouse, load_bibliography(args.bibliography), args.threshold)
        render_paired_bar_chart(normalize_join(join), args.out, title='posts and publications of top posters')
    return exit_codes['ok']


def _report(args, config) -> int:
    warehouse = _load(args)
    written = Pipeline.report(warehouse, config, args.out or 'report', fmt=args.format, threshold=args.threshold,
                              count_recovered=args.count_recovered, top_n=args.top)
    print(f'{len(written)} files written to {args.out or "report"}')
    return exit_codes['ok'] if warehouse.report is None or warehouse.report.is_valid else exit_codes['data_error']


if __name__ == '__main__':
    sys.exit(main())
