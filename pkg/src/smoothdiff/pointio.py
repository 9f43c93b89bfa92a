"""Reading and writing point clouds in the xyz-ascii format.

One point per line: three decimal floats separated by single spaces, "\n"
line endings, no header. The reader additionally accepts scientific notation
and CRLF line endings.
"""

import os

import numpy as np

from .errors import DataError
from .geometry import PointCloud


def _fmt(value):
    # Shortest decimal digits that parse back to the exact same float64.
    return np.format_float_positional(float(value), unique=True, trim="0")


def write_xyz(path, cloud):
    """Write a cloud as xyz-ascii. Coordinates round-trip exactly."""
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        for x, y, z in pts:
            fh.write(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}\n")


def read_xyz(path):
    """Read an xyz-ascii file into a PointCloud.

    Raises DataError naming the file and line on any malformed content.
    """
    points = []
    try:
        with open(path, "r") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.rstrip("\r\n")
        if not stripped.strip():
            continue
        fields = stripped.split(" ")
        if len(fields) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 space-separated values")
        try:
            points.append([float(f) for f in fields])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-numeric coordinate") from exc
    if not points:
        raise DataError(f"{path}: no points found")
    try:
        return PointCloud(np.array(points))
    except Exception as exc:
        raise DataError(f"{path}: invalid point data: {exc}") from exc


def read_cloud_dir(directory):
    """Read every .xyz file in a directory, sorted by filename."""
    try:
        names = sorted(n for n in os.listdir(directory) if n.endswith(".xyz"))
    except OSError as exc:
        raise DataError(f"cannot list {directory}: {exc}") from exc
    if not names:
        raise DataError(f"no .xyz files in {directory}")
    return [read_xyz(os.path.join(directory, n)) for n in names]
