import json
import math

import numpy as np
import pytest

from prhf.config import ConfigError, RunConfig, default_config, example_toml, from_dict, load_config
from prhf.diagnostics import CSV_COLUMNS, record
from prhf.dynamics import SimState
from prhf.initdata import gaussian_family
from prhf.io import (
    HEADER_SIZE,
    MAGIC,
    CsvWriter,
    SnapshotError,
    format_float,
    load_snapshot,
    read_csv,
    save_snapshot,
    sha256_of,
    write_manifest,
)


@pytest.fixture
def state(g16, rng):
    psi = gaussian_family(2, [(-1, 0, 0), (1, 0.5, 0)], 1.6, g16, m=0.7, kappa=1.3)
    psi = psi.with_psi(psi.psi * np.exp(1j * rng.uniform(0, 6, size=psi.psi.shape)))
    return SimState(psi, t=0.375, step_index=75, model="hartree_fock")


def test_snapshot_round_trip(tmp_path, state):
    p = tmp_path / "s.prhf"
    save_snapshot(p, state, sigma_ref=2.5, dt=0.005)
    snap = load_snapshot(p)
    s = snap.state
    assert np.array_equal(s.psi.psi, state.psi.psi)
    assert (s.t, s.step_index, s.model) == (state.t, state.step_index, state.model)
    assert (s.psi.m, s.psi.kappa, s.psi.grid) == (state.psi.m, state.psi.kappa, state.psi.grid)
    assert (snap.sigma_ref, snap.dt) == (2.5, 0.005)
    assert p.read_bytes()[:8] == MAGIC and MAGIC.startswith(b"PRHF1")
    assert p.stat().st_size == HEADER_SIZE + 2 * 16**3 * 16
    save_snapshot(tmp_path / "again.prhf", s, sigma_ref=2.5, dt=0.005)
    assert (tmp_path / "again.prhf").read_bytes() == p.read_bytes()


def test_snapshot_optional_fields(tmp_path, state):
    p = tmp_path / "s.prhf"
    save_snapshot(p, state)
    snap = load_snapshot(p)
    assert snap.sigma_ref is None and snap.dt is None


@pytest.mark.parametrize("damage", ["truncate", "short", "magic", "version", "model"])
def test_snapshot_corruption(tmp_path, state, damage):
    p = tmp_path / "s.prhf"
    save_snapshot(p, state)
    raw = bytearray(p.read_bytes())
    if damage == "truncate":
        raw = raw[:-16]
    elif damage == "short":
        raw = raw[: HEADER_SIZE - 1]
    elif damage == "magic":
        raw[0:1] = b"X"
    elif damage == "version":
        raw[8] = 9
    else:
        raw[HEADER_SIZE - 16 : HEADER_SIZE] = b"dirac".ljust(16, b"\0")
    p.write_bytes(bytes(raw))
    with pytest.raises(SnapshotError):
        load_snapshot(p)


def test_csv_round_trip(tmp_path, state):
    recs = [record(state.psi, t, "hartree_fock", radii=[0.5, 1.0, 2.0]) for t in (0.0, 0.1)]
    p = tmp_path / "ts.csv"
    with CsvWriter(p) as w:
        for r in recs:
            w.write(r)
    lines = p.read_text().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    rows = read_csv(p)
    assert [r["t"] for r in rows] == [0.0, 0.1]
    assert rows[1]["E"] == recs[1].E
    with CsvWriter(p, append=True) as w:
        w.write(recs[0])
    assert len(p.read_text().splitlines()) == 4


def test_format_float_is_exact():
    for x in (0.1, 1 / 3, -2.5e-300, 1e308, math.pi):
        assert float(format_float(x)) == x
    assert format_float(float("nan")) == "nan"


def test_manifest_hashes(tmp_path):
    a = tmp_path / "a.txt"
    a.write_text("hello")
    write_manifest(tmp_path / "m.json", {"x": 1}, [a, tmp_path / "missing"])
    body = json.loads((tmp_path / "m.json").read_text())
    assert body["artifacts"] == {"a.txt": sha256_of(a)}
    assert sha256_of(a) == "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"


# -- config -------------------------------------------------------------------------


def test_defaults_are_valid():
    cfg = default_config()
    assert isinstance(cfg, RunConfig)
    assert from_dict({}) == cfg


def test_example_config_loads(tmp_path):
    p = tmp_path / "ex.toml"
    p.write_text(example_toml())
    cfg = load_config(p)
    assert cfg.grid.n == 48 and cfg.physics.negative_energy_margin == 0.5
    assert cfg.to_dict()["integrator"]["scheme"] == "strang"


@pytest.mark.parametrize(
    "data,path",
    [
        ({"grid": {"n": 33}}, "grid.n"),
        ({"grid": {"n": 4}}, "grid.n"),
        ({"grid": {"L": -1.0}}, "grid.L"),
        ({"grid": {"nn": 32}}, "grid.nn"),
        ({"bogus": {}}, "bogus"),
        ({"physics": {"model": "dirac"}}, "physics.model"),
        ({"physics": {"m": -1.0}}, "physics.m"),
        ({"physics": {"kappa": 1.0, "kappa_scaled": 1.0}}, "physics"),
        ({"physics": {"negative_energy_margin": 1.0}}, "physics.negative_energy_margin"),
        ({"initial_data": {"kind": "gaussians", "widths": 1.0}}, "initial_data.seed"),
        ({"initial_data": {"kind": "gaussians"}}, "initial_data.widths"),
        ({"initial_data": {"kind": "snapshot_file"}}, "initial_data.path"),
        ({"integrator": {"dt": 0.0}}, "integrator.dt"),
        ({"integrator": {"scheme": "euler"}}, "integrator.scheme"),
        ({"diagnostics": {"radii": [1.0, 9.0]}, "grid": {"L": 16.0}}, "diagnostics.radii[1]"),
        ({"critical": {"lo": 3.0, "hi": 2.0}}, "critical"),
        ({"checks": {"families": -1}}, "checks.families"),
        ({"grid": 5}, "grid"),
    ],
)
def test_config_errors_name_the_field(data, path):
    with pytest.raises(ConfigError) as exc:
        from_dict(data)
    assert exc.value.path == path
    assert str(exc.value).startswith(path + ":")


def test_invalid_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[grid\nn = 3")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_config(p)


def test_replace_keeps_other_sections():
    cfg = default_config().replace("grid", n=48)
    assert cfg.grid.n == 48 and cfg.grid.L == default_config().grid.L
