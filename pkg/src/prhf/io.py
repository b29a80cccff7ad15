"""Binary snapshots, CSV time series and run manifests."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS, TimeSeriesRecord
from .dynamics import MODELS, SimState
from .grid import Grid
from .operators import OrbitalSet

MAGIC = b"PRHF1\x00\x00\x00"
FORMAT_VERSION = 1

# magic, version, n, N, L, m, kappa, t, step_index, sigma_ref, dt, model
_HEADER = struct.Struct("<8sIIIdddd" + "Q" + "dd" + "16s")
HEADER_SIZE = _HEADER.size


class SnapshotError(ValueError):
    """Malformed, truncated or mismatching snapshot file."""


def save_snapshot(
    path, state: SimState, sigma_ref: float | None = None, dt: float | None = None
) -> None:
    """Write ``state`` as header plus ``N`` little-endian complex128 arrays.

    ``sigma_ref`` and ``dt`` are carried along so that a restart can repeat
    the detector decisions and report a step-size change.
    """
    psi = state.psi
    g = psi.grid
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        g.n,
        psi.N,
        g.L,
        psi.m,
        psi.kappa,
        state.t,
        state.step_index,
        math.nan if sigma_ref is None else float(sigma_ref),
        math.nan if dt is None else float(dt),
        state.model.encode("ascii").ljust(16, b"\x00"),
    )
    data = np.ascontiguousarray(psi.psi, dtype="<c16")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())
    tmp.replace(path)


class Snapshot:
    """A loaded snapshot: the state plus the stored bookkeeping values."""

    def __init__(self, state: SimState, sigma_ref: float | None, dt: float | None):
        self.state = state
        self.sigma_ref = sigma_ref
        self.dt = dt

    @property
    def grid(self) -> Grid:
        return self.state.psi.grid


def load_snapshot(path) -> Snapshot:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise SnapshotError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    (magic, version, n, N, L, m, kappa, t, step, sigma_ref, dt, model) = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise SnapshotError(f"{path}: unsupported format version {version}")
    model = model.rstrip(b"\x00").decode("ascii")
    if model not in MODELS:
        raise SnapshotError(f"{path}: unknown model {model!r}")
    expected = HEADER_SIZE + N * n**3 * 16
    if len(raw) != expected:
        raise SnapshotError(f"{path}: {len(raw)} bytes, header implies {expected} (truncated?)")
    data = np.frombuffer(raw, dtype="<c16", offset=HEADER_SIZE).reshape(N, n, n, n)
    grid = Grid(n, L)
    psi = OrbitalSet(data.astype(np.complex128), grid, m, kappa)
    state = SimState(psi, t=t, step_index=int(step), model=model)
    return Snapshot(
        state,
        None if math.isnan(sigma_ref) else sigma_ref,
        None if math.isnan(dt) else dt,
    )


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def csv_header() -> str:
    return ",".join(CSV_COLUMNS) + "\n"


def csv_row(rec: TimeSeriesRecord) -> str:
    return ",".join(format_float(v) for v in rec.csv_values()) + "\n"


class CsvWriter:
    """Appends one row per record and flushes, so partial runs stay readable."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        exists = self.path.exists() and self.path.stat().st_size > 0
        self._fh = open(self.path, "a" if append else "w", encoding="utf-8", newline="")
        if not (append and exists):
            self._fh.write(csv_header())

    def write(self, rec: TimeSeriesRecord) -> None:
        self._fh.write(csv_row(rec))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    cols = lines[0].split(",")
    return [dict(zip(cols, map(float, line.split(",")))) for line in lines[1:]]


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, payload: dict, artifacts=()) -> None:
    """JSON manifest; ``artifacts`` are hashed so a rerun can be compared."""
    body = dict(payload)
    body["artifacts"] = {
        Path(a).name: sha256_of(a) for a in sorted(artifacts, key=lambda p: str(p)) if Path(a).exists()
    }
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
