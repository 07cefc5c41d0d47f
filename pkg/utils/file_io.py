"""
File I/O Utility
Readers and writers for template matrices, vectors, signals, plans and
result CSVs.

Numbers in CSV files are read as decimal literals, so "0.1" is exactly one
tenth. Blank lines and lines starting with '#' are ignored. Parse errors
name the file and line. Outputs are written atomically: a temporary file in
the target directory is renamed over the destination.
"""
import csv
import logging
import os
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from models import ClassificationEvent, MultiplicationPlan, StreamStep
from services.exceptions import InputError, MatrixFormatError, PlanFormatError, SignalError
from services.quantization import to_rational

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SIGNAL_FORMATS = ('csv', 'f64')


def _data_rows(path: PathLike) -> Iterable[tuple]:
    """Yield (line number, cells) for every non-blank, non-comment CSV row."""
    try:
        with open(path, newline='', encoding='utf-8') as handle:
            reader = csv.reader(handle)
            for cells in reader:
                cells = [c.strip() for c in cells]
                if not any(cells) or cells[0].startswith('#'):
                    continue
                yield reader.line_num, cells
    except OSError as e:
        logger.error(f"[IO] Cannot read {path}: {e}")
        raise MatrixFormatError(f"cannot read file: {e.strerror or e}", path=str(path))
    except UnicodeDecodeError as e:
        raise MatrixFormatError(f"not UTF-8 text (byte {e.start})", path=str(path))
    except csv.Error as e:
        raise MatrixFormatError(f"malformed CSV: {e}", path=str(path))


def _parse_cell(cell: str, path: PathLike, line: int, error=MatrixFormatError) -> Fraction:
    try:
        return to_rational(cell)
    except SignalError:
        if error is MatrixFormatError:
            raise MatrixFormatError(f"not a finite number: {cell!r}", path=str(path), line=line)
        raise SignalError(f"{path}:{line}: not a finite number: {cell!r}")


def read_matrix_csv(path: PathLike) -> List[List[Fraction]]:
    """
    Read a K x m matrix, one template per line.

    Raises:
        MatrixFormatError: For unreadable files, bad numbers or ragged rows
    """
    rows: List[List[Fraction]] = []
    width: Optional[int] = None
    for line, cells in _data_rows(path):
        if '' in cells:
            raise MatrixFormatError("empty cell", path=str(path), line=line)
        row = [_parse_cell(cell, path, line) for cell in cells]
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise MatrixFormatError(f"row has {len(row)} entries, expected {width}", path=str(path), line=line)
        rows.append(row)
    if not rows:
        raise MatrixFormatError("matrix is empty", path=str(path))
    logger.debug(f"[IO] Read {len(rows)}x{width} matrix from {path}")
    return rows


def read_vector_csv(path: PathLike) -> List[Fraction]:
    """Read a vector written on one line or one value per line."""
    values = []
    for line, cells in _data_rows(path):
        values.extend(_parse_cell(cell, path, line, SignalError) for cell in cells if cell != '')
    if not values:
        raise SignalError(f"{path}: vector is empty")
    return values


def read_vector(path: PathLike, fmt: str = 'csv') -> List[Fraction]:
    """Read an input vector as CSV or raw little-endian float64."""
    if fmt == 'csv':
        return read_vector_csv(path)
    values = read_signal(path, fmt)
    if not values:
        raise SignalError(f"{path}: vector is empty")
    return values


def _read_f64(path: PathLike) -> List[Fraction]:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        logger.error(f"[IO] Cannot read {path}: {e}")
        raise SignalError(f"{path}: cannot read file: {e.strerror or e}")
    if len(raw) % 8:
        raise SignalError(f"{path}: size {len(raw)} is not a multiple of 8 bytes")
    data = np.frombuffer(raw, dtype='<f8')
    bad = np.flatnonzero(~np.isfinite(data))
    if bad.size:
        raise SignalError(f"{path}: sample {int(bad[0])} is not finite")
    return [Fraction(float(v)) for v in data]


def read_signal(path: PathLike, fmt: str = 'csv') -> List[Fraction]:
    """
    Read a signal as exact samples.

    Args:
        path: Signal file
        fmt: 'csv' (one sample per line) or 'f64' (raw little-endian float64)

    Raises:
        SignalError: For unreadable files, bad or non-finite samples
    """
    if fmt not in SIGNAL_FORMATS:
        raise InputError(f"Unknown signal format {fmt!r}; expected one of {SIGNAL_FORMATS}")

    if fmt == 'f64':
        samples = _read_f64(path)
    else:
        samples = []
        try:
            for line, cells in _data_rows(path):
                if len(cells) != 1:
                    raise SignalError(f"{path}:{line}: expected one sample per line, got {len(cells)}")
                samples.append(_parse_cell(cells[0], path, line, SignalError))
        except MatrixFormatError as e:
            raise SignalError(str(e))

    logger.debug(f"[IO] Read {len(samples)} sample(s) from {path}")
    return samples


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    """Write data to path through a temporary file and a rename."""
    target = Path(path)
    directory = target.parent if str(target.parent) else Path('.')
    fd, temp_path = tempfile.mkstemp(prefix=f'.{target.name}.', suffix='.tmp', dir=directory)
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(temp_path, target)
    except BaseException:
        if os.path.exists(temp_path):
            os.unlink(temp_path)
        raise
    logger.debug(f"[IO] Wrote {len(data)} byte(s) to {target}")


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode('utf-8'))


def load_plan(path: PathLike) -> MultiplicationPlan:
    """
    Load and validate a plan JSON file.

    Raises:
        PlanFormatError: If the file is unreadable or not a valid plan
    """
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        logger.error(f"[IO] Cannot read plan {path}: {e}")
        raise PlanFormatError(f"{path}: cannot read file: {e.strerror or e}")
    except UnicodeDecodeError as e:
        raise PlanFormatError(f"{path}: not UTF-8 text (byte {e.start})")
    try:
        return MultiplicationPlan.from_json(text)
    except PlanFormatError as e:
        raise PlanFormatError(f"{path}: {e}")


def save_plan(path: PathLike, plan: MultiplicationPlan) -> None:
    atomic_write_text(path, plan.to_json())


def write_signal(path: PathLike, samples: Sequence[float], fmt: str = 'csv') -> None:
    """Write a signal as CSV (float repr per line) or raw little-endian float64."""
    if fmt not in SIGNAL_FORMATS:
        raise InputError(f"Unknown signal format {fmt!r}; expected one of {SIGNAL_FORMATS}")
    if fmt == 'f64':
        atomic_write_bytes(path, np.asarray(samples, dtype='<f8').tobytes())
    else:
        atomic_write_text(path, ''.join(f"{float(v)!r}\n" for v in samples))


def format_value(value) -> str:
    """Shortest round-tripping float text for an exact or float value."""
    return repr(float(value))


def correlation_header(K: int, with_step: bool) -> List[str]:
    header = [f'c_{k + 1}' for k in range(K)]
    return ['step'] + header if with_step else header


def vector_to_csv(values: Sequence) -> str:
    """One correlation vector as a header line and a value line."""
    return (','.join(correlation_header(len(values), with_step=False)) + '\n'
            + ','.join(format_value(v) for v in values) + '\n')


def stream_steps_to_csv(steps: Iterable[StreamStep], K: int, normalized: bool = False) -> str:
    """
    Per-window lines `step,c_1,…,c_K`.

    Raw correlations by default; normalized ones leave zero-norm windows
    with empty cells.
    """
    lines = [','.join(correlation_header(K, with_step=True))]
    for step in steps:
        if normalized:
            cells = [''] * K if step.correlations is None else [format_value(c) for c in step.correlations]
        else:
            cells = [format_value(v) for v in step.result.values]
        lines.append(','.join([str(step.step)] + cells))
    return '\n'.join(lines) + '\n'


def events_to_csv(events: Iterable[ClassificationEvent]) -> str:
    """Event lines `step,template,correlation,distance`."""
    lines = ['step,template,correlation,distance']
    for event in events:
        lines.append(f"{event.step},{event.template},{event.correlation:.12f},{event.distance:.12f}")
    return '\n'.join(lines) + '\n'
