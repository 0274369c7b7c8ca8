import codecs
from contextlib import contextmanager
import hashlib
import logging
import os
import re
from tempfile import NamedTemporaryFile
import time

import numpy as np


logger = logging.getLogger(__name__)


_ENV_VAR_TOKEN_RE = re.compile(r"\$\{|(?P<varname>[A-Za-z_][A-Za-z0-9_]*)|.")


class SubstitutionError(Exception):
    pass


def _substitute_env_vars(itr, outer=True):
    result = ""
    while True:
        m = next(itr, None)
        if m is None:
            if not outer:
                raise SubstitutionError("unclosed variable reference")
            return result
        elif m.group(0) == "${":
            m = next(itr, None)
            if m is None:
                raise SubstitutionError("unclosed variable reference")
            elif m.group('varname'):
                varname = m.group(0)
                m = next(itr, None)
                if m is None:
                    raise SubstitutionError("unclosed variable reference")
                elif m.group(0) == ":":
                    fallback = _substitute_env_vars(itr, outer=False)
                    result += os.environ.get(varname, fallback)
                elif m.group(0) == "}":
                    try:
                        result += os.environ[varname]
                    except KeyError:
                        raise SubstitutionError(
                            "environment variable {} is not set".format(varname)) from None
                else:
                    raise SubstitutionError(
                        "at position {} in field: expected : or }}".format(m.start()))
            else:
                raise SubstitutionError(
                    "at position {} in field: expected variable name".format(m.start()))
        elif m.group(0) == "}" and not outer:
            return result
        else:
            result += m.group(0)


def substitute_env_vars(val):
    return _substitute_env_vars(_ENV_VAR_TOKEN_RE.finditer(val))


@contextmanager
def atomic_writer(output_path, binary=False):
    output_dir = os.path.dirname(output_path) or '.'
    tmpfile = NamedTemporaryFile(delete=False,
                                 dir=output_dir,
                                 prefix=os.path.basename(output_path))
    success = False
    try:
        writer = tmpfile if binary else codecs.getwriter("utf-8")(tmpfile)
        yield writer
        writer.close()
        tmpfile.close()

        # Identical outputs are left alone so repeated runs keep their mtimes
        changed = True
        if os.path.exists(output_path):
            h1 = hashlib.sha256()
            with open(output_path, "rb") as f:
                h1.update(f.read())
            h2 = hashlib.sha256()
            with open(tmpfile.name, "rb") as f:
                h2.update(f.read())

            if h1.digest() == h2.digest():
                changed = False

        if changed:
            os.chmod(tmpfile.name, 0o644)
            os.rename(tmpfile.name, output_path)
            logger.info("Wrote %s", output_path)
        else:
            logger.info("%s is unchanged", output_path)
            os.unlink(tmpfile.name)

        success = True
    finally:
        if not success:
            tmpfile.close()
            os.unlink(tmpfile.name)


_HEADER_DTYPE = np.dtype('<u8')
_DATA_DTYPE = np.dtype('<f4')


def read_matrix_bin(path, square=False):
    """
    Reads [u64 rows][u64 cols] (or a single [u64 n] when square) followed by
    rows*cols little-endian float32, row-major
    """
    with open(path, 'rb') as f:
        raw = f.read()

    header_count = 1 if square else 2
    header_size = header_count * _HEADER_DTYPE.itemsize
    if len(raw) < header_size:
        raise ValueError("{}: truncated header".format(path))
    header = np.frombuffer(raw, dtype=_HEADER_DTYPE, count=header_count)
    rows = int(header[0])
    cols = rows if square else int(header[1])

    data = np.frombuffer(raw, dtype=_DATA_DTYPE, offset=header_size)
    if len(data) != rows * cols:
        raise ValueError("{}: expected {}x{} values, found {}"
                         .format(path, rows, cols, len(data)))

    return data.reshape(rows, cols).astype(np.float64)


def write_matrix_bin(writer, matrix, square=False):
    matrix = np.asarray(matrix)
    shape = matrix.shape[:1] if square else matrix.shape
    writer.write(np.asarray(shape, dtype=_HEADER_DTYPE).tobytes())
    writer.write(np.ascontiguousarray(matrix, dtype=_DATA_DTYPE).tobytes())


def get_thread_count():
    """Number of worker threads allowed by ROBGC_THREADS (default 1)"""
    raw = os.environ.get('ROBGC_THREADS')
    if not raw:
        return 1
    try:
        count = int(raw)
    except ValueError:
        raise ValueError(f"ROBGC_THREADS must be an integer, not {raw!r}") from None

    return max(1, count)


class StageTimer:
    """
    Accumulates wall-clock seconds per named stage. Nested stages are
    measured independently, so 'denoise' can enclose 'correlation',
    'delete', 'add' and 'search'.
    """
    def __init__(self):
        self.seconds = {}

    @contextmanager
    def stage(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - start

    def get(self, name):
        return self.seconds.get(name, 0.0)

    def merge(self, other):
        for k, v in other.seconds.items():
            self.seconds[k] = self.seconds.get(k, 0.0) + v


@contextmanager
def null_stage(name):
    yield


def stage(timer, name):
    """timer.stage(name), tolerating timer=None"""
    if timer is None:
        return null_stage(name)
    return timer.stage(name)
