import csv
import logging
import os

from .utils import atomic_writer


logger = logging.getLogger(__name__)

ROW_COLUMNS = [
    'dataset', 'ratio', 'noise_level', 'method', 'seed', 'accuracy',
    'homophily_before', 'homophily_after',
    'edges_before', 'edges_after_delete', 'edges_after_add',
    't_correlation_s', 't_delete_s', 't_add_s', 't_search_s',
    'train_homophily_before', 'train_homophily_after', 't_denoise_s', 't_condense_s',
    'status', 'cell',
]

AGGREGATE_COLUMNS = [
    'dataset', 'ratio', 'noise_level', 'method', 'runs', 'accuracy_mean', 'accuracy_std', 'cell',
]

FILENAMES = {
    'csv': 'report.csv',
    'markdown': 'report.md',
    'json': 'report.json',
}


class ReportError(Exception):
    pass


def _cell(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(report, writer):
    out = csv.writer(writer, lineterminator='\n')
    out.writerow(ROW_COLUMNS)
    for row in report.rows:
        out.writerow([_cell(getattr(row, c)) for c in ROW_COLUMNS])


def _percent(value):
    return '' if value is None else '{:.1f}'.format(100 * value)


def _write_markdown(report, writer):
    writer.write("| dataset | ratio | noise | method | runs | accuracy (%) |\n")
    writer.write("|---|---|---|---|---|---|\n")
    for a in report.aggregates:
        accuracy = _percent(a.accuracy_mean)
        if a.accuracy_mean is not None:
            accuracy += ' ± ' + _percent(a.accuracy_std)
        method = a.method if a.cell is None else '{} ({})'.format(a.method, a.cell)
        writer.write("| {} | {:g} | {:g} | {} | {} | {} |\n"
                     .format(a.dataset, a.ratio, a.noise_level, method, a.runs, accuracy))

    writer.write("\n| method | noise | seed | accuracy | homophily | edges before "
                 "| after deletion | after addition | status |\n")
    writer.write("|---|---|---|---|---|---|---|---|---|\n")
    for r in report.rows:
        homophily = '' if r.homophily_after is None or r.homophily_before is None else \
            '{:.2f} → {:.2f}'.format(r.homophily_before, r.homophily_after)
        writer.write("| {} | {:g} | {} | {} | {} | {} | {} | {} | {} |\n"
                     .format(r.method, r.noise_level, r.seed, _percent(r.accuracy), homophily,
                             _cell(r.edges_before), _cell(r.edges_after_delete),
                             _cell(r.edges_after_add), r.status))


def _write_json(report, writer):
    writer.write(report.to_json_text(indent=4))
    writer.write("\n")


WRITERS = {
    'csv': _write_csv,
    'markdown': _write_markdown,
    'json': _write_json,
}


def emit_report(report, formats, output_dir):
    """Writes the report in each of formats to output_dir; returns the paths written"""
    try:
        os.makedirs(output_dir, exist_ok=True)
    except OSError as e:
        raise ReportError("cannot create {}: {}".format(output_dir, e)) from None

    paths = []
    for f in formats:
        if f not in WRITERS:
            raise ReportError("unknown report format {!r}".format(f))
        path = os.path.join(output_dir, FILENAMES[f])
        try:
            with atomic_writer(path) as writer:
                WRITERS[f](report, writer)
        except OSError as e:
            raise ReportError("cannot write {}: {}".format(path, e)) from None
        paths.append(path)

    return paths
