"""
Serialization utilities.
This module contains the deterministic writers and readers for reports
(YAML) and trajectories (CSV).
"""

import csv
import io
import math
import os
import tempfile
from pathlib import Path

import numpy as np
import yaml

REAL_DIGITS = 17


def format_real(value):
    """
    Format a real with 17 significant digits.

    The mantissa always carries a decimal point so YAML readers resolve the
    text as a float.

    Args:
        value (float): Value to format

    Returns:
        str: Decimal representation
    """
    value = float(value)
    if math.isnan(value):
        return '.nan'
    if math.isinf(value):
        return '.inf' if value > 0 else '-.inf'
    text = format(value, f'.{REAL_DIGITS}g')
    mantissa, sep, exponent = text.partition('e')
    if '.' not in mantissa:
        mantissa += '.0'
    return mantissa + sep + exponent


def parse_real(text):
    """Inverse of format_real for CSV cells."""
    text = text.strip()
    special = {'.nan': math.nan, '.inf': math.inf, '-.inf': -math.inf}
    if text in special:
        return special[text]
    return float(text)


def to_builtin(value):
    """Convert numpy containers and scalars to plain Python objects."""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_builtin(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return value


class ReportDumper(yaml.SafeDumper):
    """YAML dumper writing reals with 17 significant digits."""


def _represent_real(dumper, value):
    return dumper.represent_scalar('tag:yaml.org,2002:float', format_real(value))


ReportDumper.add_representer(float, _represent_real)


def dump_yaml(data):
    """Serialize a report to YAML text with a stable key order."""
    return yaml.dump(
        to_builtin(data),
        Dumper=ReportDumper,
        sort_keys=False,
        default_flow_style=False,
        allow_unicode=True,
    )


def write_atomic(path, text):
    """
    Write text to path atomically (temporary file then rename).

    Args:
        path (str | Path): Destination
        text (str): File contents

    Returns:
        Path: The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_yaml(path, data):
    """Write a report as YAML."""
    return write_atomic(path, dump_yaml(data))


def read_yaml(path):
    with open(path, encoding='utf-8') as handle:
        return yaml.safe_load(handle)


def write_csv(path, header, rows):
    """
    Write a numeric table as CSV with LF endings and 17-digit reals.

    The table is rendered in memory and written with write_atomic.

    Args:
        path (str | Path): Destination
        header (list[str]): Column names
        rows (iterable): Rows of reals

    Returns:
        Path: The written path
    """
    buffer = io.StringIO(newline='')
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_real(v) for v in row])
    return write_atomic(path, buffer.getvalue())


def read_csv(path):
    """
    Read a CSV written by write_csv.

    Returns:
        tuple[list[str], numpy.ndarray]: Header and a 2-D array of values
    """
    with open(path, encoding='utf-8', newline='') as handle:
        reader = csv.reader(handle)
        header = next(reader)
        rows = [[parse_real(cell) for cell in row] for row in reader if row]
    values = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, values


def write_trajectory_csv(path, trajectory):
    """Write the `t,prevalence,c1,l2` summary table of a trajectory."""
    rows = zip(trajectory.times, trajectory.prevalence, trajectory.c1, trajectory.l2)
    return write_csv(path, ['t', 'prevalence', 'c1', 'l2'], rows)


def write_trajectory_wide_csv(path, trajectory):
    """Write a trajectory with one column per cell."""
    header = ['t'] + [f'u{i}' for i in range(trajectory.partition.size)]
    rows = (
        [t, *state] for t, state in zip(trajectory.times, trajectory.states)
    )
    return write_csv(path, header, rows)


def read_trajectory_csv(path):
    """
    Read a summary trajectory CSV.

    Returns:
        dict: Arrays keyed by column name
    """
    header, values = read_csv(path)
    return {name: values[:, i] for i, name in enumerate(header)}


def read_trajectory_wide_csv(path):
    """
    Read a wide trajectory CSV.

    Returns:
        tuple[numpy.ndarray, numpy.ndarray]: Times and states (times x cells)
    """
    _, values = read_csv(path)
    return values[:, 0], values[:, 1:]
