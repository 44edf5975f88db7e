import csv
import json
import math

import numpy as np
import pytest

from torusflow.cli import main
from torusflow.constitutive import ModelKind
from torusflow.dynamics import (
    CompressibleState,
    IncompressibleState,
    initial_from_preset,
    make_compressible,
    well_prepared_initial,
)
from torusflow.errors import ConfigError, SnapshotError
from torusflow.io import (
    SNAPSHOT_SCHEMA_VERSION,
    load_config,
    load_sweep_config,
    read_snapshot,
    snapshot_header,
    write_snapshot,
    write_timeseries,
)
from torusflow.spectral import TorusGrid


def write_json(tmp_path, name, payload):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return p


def base_run_config(**overrides):
    cfg = {
        "model": "nsch",
        "regime": "compressible",
        "eps": 0.2,
    }
    cfg.update(overrides)
    return cfg


# ---------------------------------------------------------------------------
# run config parsing


def test_load_config_minimal_defaults(tmp_path):
    p = write_json(tmp_path, "run.json", base_run_config())
    cfg = load_config(p)
    assert cfg.model is ModelKind.CH
    assert cfg.regime == "compressible"
    assert cfg.eps == 0.2
    assert cfg.grid.dim == 2 and cfg.grid.n == 64
    assert cfg.constitutive.gamma == 2.0
    assert cfg.stepper.scheme == "rk4"
    assert cfg.initial == "taylor_green_bubble"
    assert cfg.kappa0 == 0.1
    assert cfg.seed == 0
    assert cfg.outdir is None
    assert cfg.sample_cadence == 10


def test_load_config_full_roundtrip(tmp_path):
    payload = {
        "model": "nsac",
        "regime": "incompressible",
        "grid": {"dim": 2, "n": 32},
        "constitutive": {"gamma": 1.4, "nu0": 0.05, "visc_kind": "affine"},
        "stepper": {
            "scheme": "imex",
            "cfl": 0.3,
            "dt_override": 1e-4,
            "t_end": 0.25,
            "picard": {"enabled": False, "tol": 1e-9, "max_iter": 20},
        },
        "initial": {"preset": "single_mode", "kappa0": 0.05, "seed": 7},
        "output": {"directory": "out", "sample_cadence": 5},
    }
    cfg = load_config(write_json(tmp_path, "run.json", payload))
    assert cfg.model is ModelKind.AC
    assert cfg.regime == "incompressible"
    assert cfg.eps is None
    assert cfg.grid.n == 32
    assert cfg.constitutive.gamma == 1.4
    assert cfg.constitutive.visc_kind == "affine"
    assert cfg.stepper.scheme == "imex"
    assert cfg.stepper.dt_override == 1e-4
    assert cfg.stepper.picard.tol == 1e-9
    assert cfg.initial == "single_mode"
    assert cfg.kappa0 == 0.05
    assert cfg.seed == 7
    assert cfg.outdir == "out"
    assert cfg.sample_cadence == 5


def test_load_config_null_dt_override(tmp_path):
    payload = base_run_config(stepper={"dt_override": None})
    cfg = load_config(write_json(tmp_path, "run.json", payload))
    assert cfg.stepper.dt_override is None


@pytest.mark.parametrize(
    "payload,fragment",
    [
        (base_run_config(constitutive={"vicosity": 0.1}), "vicosity"),
        (base_run_config(extra_knob=1), "extra_knob"),
        ({"model": "nsch", "regime": "compressible"}, "eps"),
        (base_run_config(regime="incompressible"), "eps"),
        (base_run_config(eps=-0.1), "eps"),
        ({"regime": "compressible", "eps": 0.2}, "model"),
        (base_run_config(model="navier"), "model"),
        (base_run_config(regime="transonic"), "regime"),
        (base_run_config(eps="big"), "eps"),
        (base_run_config(grid={"n": 64.0}), "n"),
        (base_run_config(stepper={"cfl": True}), "cfl"),
        (base_run_config(stepper={"picard": {"warmstart": 1}}), "warmstart"),
        (base_run_config(constitutive={"gamma": 0.5}), "constitutive"),
        (base_run_config(stepper={"cfl": 1.5}), "stepper"),
        (base_run_config(grid={"n": 63}), "grid"),
        (base_run_config(initial={"preset": "vortex"}), "preset"),
        (base_run_config(initial={"kappa0": -1.0}), "kappa0"),
        (base_run_config(output={"sample_cadence": 0}), "sample_cadence"),
        (
            base_run_config(
                regime="incompressible", eps=None, grid={"dim": 1, "n": 32}
            ),
            "dim",
        ),
    ],
)
def test_load_config_rejects(tmp_path, payload, fragment):
    payload = {k: v for k, v in payload.items() if v is not None}
    p = write_json(tmp_path, "bad.json", payload)
    with pytest.raises(ConfigError, match=fragment):
        load_config(p)


def test_load_config_bad_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    notjson = tmp_path / "notjson.json"
    notjson.write_text("{model:")
    with pytest.raises(ConfigError):
        load_config(notjson)
    toplist = tmp_path / "list.json"
    toplist.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(toplist)


# ---------------------------------------------------------------------------
# sweep config parsing


def sweep_payload(**overrides):
    cfg = {
        "model": "nsch",
        "grid": {"dim": 2, "n": 32},
        "sweep": {
            "eps_list": [0.4, 0.2],
            "t_end": 0.02,
            "sample_times": [0.0, 0.01, 0.02],
        },
    }
    cfg.update(overrides)
    return cfg


def test_load_sweep_config(tmp_path):
    p = write_json(tmp_path, "sweep.json", sweep_payload(constitutive={"gamma": 1.4}))
    cfg, c = load_sweep_config(p)
    assert cfg.model is ModelKind.CH
    assert cfg.n == 32
    assert cfg.eps_list == (0.4, 0.2)
    assert cfg.t_end == 0.02
    assert cfg.sample_times == (0.0, 0.01, 0.02)
    assert c.gamma == 1.4


@pytest.mark.parametrize(
    "mutate",
    [
        {"sweep": {"eps_list": [0.4, "x"]}},
        {"sweep": {"eps_list": [0.2, 0.4]}},
        {"sweep": {"relax": 1}},
        {"unknown_section": {}},
    ],
)
def test_load_sweep_config_rejects(tmp_path, mutate):
    payload = sweep_payload(**mutate)
    with pytest.raises(ConfigError):
        load_sweep_config(write_json(tmp_path, "bad.json", payload))


# ---------------------------------------------------------------------------
# snapshots


def sample_compressible(g):
    rng = np.random.default_rng(5)
    u0, phi0 = initial_from_preset("taylor_green_bubble", g)
    return well_prepared_initial(u0, phi0, 0.3, 0.1, 3, ModelKind.CH)


def test_snapshot_roundtrip_compressible(tmp_path, g2):
    s = sample_compressible(g2)
    path = tmp_path / "snap.bin"
    write_snapshot(s, path, time=0.375)
    header = snapshot_header(path)
    assert header["schema_version"] == SNAPSHOT_SCHEMA_VERSION
    assert header["time"] == 0.375
    assert header["regime"] == "compressible"
    assert header["fields"] == ["rho", "mom_x", "mom_y", "q"]
    back = read_snapshot(path)
    assert isinstance(back, CompressibleState)
    assert back.eps == s.eps
    assert back.model is s.model
    for a, b in zip(s.as_arrays(), back.as_arrays()):
        assert np.array_equal(a, b)


def test_snapshot_roundtrip_incompressible(tmp_path, g2):
    u0, phi0 = initial_from_preset("taylor_green_bubble", g2)
    s = IncompressibleState(u0, phi0, ModelKind.AC)
    path = tmp_path / "snap.bin"
    write_snapshot(s, path)
    back = read_snapshot(path)
    assert isinstance(back, IncompressibleState)
    assert back.model is ModelKind.AC
    for a, b in zip(s.as_arrays(), back.as_arrays()):
        assert np.array_equal(a, b)


def test_snapshot_truncated_payload(tmp_path, g2):
    s = sample_compressible(g2)
    path = tmp_path / "snap.bin"
    write_snapshot(s, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-16])
    with pytest.raises(SnapshotError, match="bytes"):
        read_snapshot(path)


def test_snapshot_bad_header(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"\x00\x01binary junk\n more")
    with pytest.raises(SnapshotError):
        snapshot_header(p)


def test_snapshot_wrong_schema_version(tmp_path, g2):
    s = sample_compressible(g2)
    path = tmp_path / "snap.bin"
    write_snapshot(s, path)
    header_line, _, payload = path.read_bytes().partition(b"\n")
    header = json.loads(header_line)
    header["schema_version"] = 99
    path.write_bytes(json.dumps(header).encode() + b"\n" + payload)
    with pytest.raises(SnapshotError, match="schema_version"):
        read_snapshot(path)


def test_snapshot_missing_eps(tmp_path, g2):
    s = sample_compressible(g2)
    path = tmp_path / "snap.bin"
    write_snapshot(s, path)
    header_line, _, payload = path.read_bytes().partition(b"\n")
    header = json.loads(header_line)
    header["eps"] = None
    path.write_bytes(json.dumps(header).encode() + b"\n" + payload)
    with pytest.raises(SnapshotError, match="eps"):
        read_snapshot(path)


def test_snapshot_unknown_regime(tmp_path, g2):
    s = sample_compressible(g2)
    path = tmp_path / "snap.bin"
    write_snapshot(s, path)
    header_line, _, payload = path.read_bytes().partition(b"\n")
    header = json.loads(header_line)
    header["regime"] = "transonic"
    path.write_bytes(json.dumps(header).encode() + b"\n" + payload)
    with pytest.raises(SnapshotError, match="regime"):
        read_snapshot(path)


# ---------------------------------------------------------------------------
# CSV emission


def test_timeseries_roundtrip_and_determinism(tmp_path):
    rows = [
        {"time": 0.1, "count": 3, "flag": True},
        {"time": 1.0 / 3.0, "count": -1, "flag": False},
    ]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_timeseries(rows, p1)
    write_timeseries(rows, p2)
    assert p1.read_bytes() == p2.read_bytes()
    with open(p1, newline="") as fh:
        reader = csv.DictReader(fh)
        got = list(reader)
    assert got[0]["flag"] == "true" and got[1]["flag"] == "false"
    assert got[0]["count"] == "3"
    # 17 significant digits round-trip doubles exactly
    assert float(got[1]["time"]) == 1.0 / 3.0


def test_timeseries_column_control(tmp_path):
    rows = [{"a": 1, "b": 2.0}]
    p = tmp_path / "c.csv"
    write_timeseries(rows, p, columns=["b", "a"])
    assert p.read_text().splitlines()[0] == "b,a"
    write_timeseries([], p, columns=["x", "y"])
    assert p.read_text() == "x,y\n"
    with pytest.raises(ValueError):
        write_timeseries([], p)
    with pytest.raises(ValueError):
        write_timeseries([{"a": 1}], p, columns=["a", "b"])
    with pytest.raises(ValueError):
        write_timeseries([{"a": 1, "z": 2}], p, columns=["a"])


def test_timeseries_rejects_nonfinite(tmp_path):
    with pytest.raises(ValueError):
        write_timeseries([{"x": math.nan}], tmp_path / "bad.csv")
    with pytest.raises(ValueError):
        write_timeseries([{"x": math.inf}], tmp_path / "bad.csv")


# ---------------------------------------------------------------------------
# CLI


def run_config_file(tmp_path, **overrides):
    payload = {
        "model": "nsac",
        "regime": "incompressible",
        "grid": {"dim": 2, "n": 16},
        "stepper": {"dt_override": 1e-3, "t_end": 5e-3},
    }
    payload.update(overrides)
    return write_json(tmp_path, "cli_run.json", payload)


def test_cli_run_incompressible(tmp_path, capsys):
    cfg = run_config_file(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "run complete" in text
    with open(out / "timeseries.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    # t = 0 row plus the forced final row (5 steps is not a cadence multiple)
    assert len(rows) == 2
    assert rows[0]["time"] == "0"
    assert float(rows[-1]["time"]) == pytest.approx(5e-3)
    assert set(rows[0]) == {
        "time", "kinetic", "gradient", "potential", "total",
        "dissipation", "phase_mass", "div_u_max",
    }
    # energy decays even over this short horizon
    assert float(rows[-1]["total"]) < float(rows[0]["total"])


def test_cli_run_compressible_with_snapshots(tmp_path):
    cfg = run_config_file(
        tmp_path,
        model="nsch",
        regime="compressible",
        eps=0.4,
        stepper={"dt_override": 1e-4, "t_end": 5e-4},
    )
    out = tmp_path / "out"
    code = main(
        ["run", "--config", str(cfg), "--out", str(out), "--quiet",
         "--snapshots-every", "2"]
    )
    assert code == 0
    snaps = sorted(out.glob("snap_*.bin"))
    assert [p.name for p in snaps] == [
        "snap_000000.bin", "snap_000002.bin", "snap_000004.bin", "snap_000005.bin",
    ]
    with open(out / "timeseries.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    masses = [float(r["mass"]) for r in rows]
    assert all(m == pytest.approx(masses[0], rel=1e-12) for m in masses)

    audit_csv = tmp_path / "audit.csv"
    code = main(
        ["audit", "--snapshots", str(out / "snap_*.bin"), "--out", str(audit_csv),
         "--config", str(cfg)]
    )
    assert code == 0
    with open(audit_csv, newline="") as fh:
        arows = list(csv.DictReader(fh))
    assert len(arows) == 4
    assert arows[0]["snapshot"] == "snap_000000.bin"
    assert float(arows[0]["time"]) == 0.0
    assert float(arows[-1]["time"]) == pytest.approx(5e-4)


def test_cli_exit_codes(tmp_path, capsys):
    # 2: missing config file
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    # 2: malformed config
    bad = write_json(tmp_path, "bad.json", base_run_config(vicosity=1))
    assert main(["run", "--config", str(bad)]) == 2
    # 2: bad CLI arguments (argparse failure, message on stderr)
    assert main(["run"]) == 2
    # 2: bad dispersion parameters (validation error before any stepping)
    assert main(["dispersion", "--eps", "-1.0", "--k", "1"]) == 2
    # 3: numerical failure (perturbation amplitude drives density negative)
    vac = run_config_file(
        tmp_path,
        model="nsch",
        regime="compressible",
        eps=0.4,
        initial={"kappa0": 5000.0},
        stepper={"dt_override": 1e-4, "t_end": 5e-4},
    )
    assert main(["run", "--config", str(vac), "--out", str(tmp_path / "v")]) == 3
    # 4: unreadable snapshot
    junk = tmp_path / "snap_junk.bin"
    junk.write_bytes(b"\x00\x01 not a snapshot\n")
    assert (
        main(["audit", "--snapshots", str(junk), "--out", str(tmp_path / "a.csv")])
        == 4
    )
    # 2: audit glob with no matches
    assert (
        main(
            ["audit", "--snapshots", str(tmp_path / "zilch_*.bin"),
             "--out", str(tmp_path / "a.csv")]
        )
        == 2
    )
    capsys.readouterr()


def sweep_config_file(tmp_path):
    return write_json(
        tmp_path,
        "cli_sweep.json",
        {
            "model": "nsch",
            "grid": {"dim": 2, "n": 32},
            "sweep": {
                "eps_list": [0.4, 0.2],
                "t_end": 0.02,
                "sample_times": [0.0, 0.01, 0.02],
            },
        },
    )


def test_cli_sweep_tables_and_determinism(tmp_path, capsys):
    cfg = sweep_config_file(tmp_path)
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert main(["sweep", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(out2)]) == 0
    for name in ("sweep_errors.csv", "sweep_slopes.csv", "sweep_modulated.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    with open(out1 / "sweep_errors.csv", newline="") as fh:
        erows = list(csv.DictReader(fh))
    assert [float(r["eps"]) for r in erows] == [0.4, 0.2]
    assert all(r["failed"] == "false" for r in erows)
    with open(out1 / "sweep_modulated.csv", newline="") as fh:
        mrows = list(csv.DictReader(fh))
    assert len(mrows) == 6
    text = capsys.readouterr().out
    assert "err_u: slope" in text


def test_cli_sweep_eps_override_and_failures(tmp_path, capsys):
    cfg = sweep_config_file(tmp_path)
    out = tmp_path / "s3"
    # single-leg override: no slopes can be fitted
    assert main(["sweep", "--config", str(cfg), "--out", str(out),
                 "--eps", "0.4"]) == 0
    assert (out / "sweep_slopes.csv").read_text() == "family,slope,intercept,r2\n"
    # malformed override
    assert main(["sweep", "--config", str(cfg), "--eps", "0.4,zero"]) == 2
    # increasing override violates the sweep contract
    assert main(["sweep", "--config", str(cfg), "--eps", "0.1,0.2"]) == 2
    # bad parallelism
    assert main(["sweep", "--config", str(cfg), "--parallel", "0"]) == 2
    capsys.readouterr()


def test_cli_sweep_all_failed_exits_3(tmp_path, capsys):
    cfg = write_json(
        tmp_path,
        "cli_sweep_bad.json",
        {
            "model": "nsch",
            "grid": {"dim": 2, "n": 32},
            "sweep": {
                "eps_list": [0.4],
                "t_end": 0.02,
                "sample_times": [0.0, 0.02],
                "kappa0": 5000.0,
            },
        },
    )
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "sf")]) == 3
    err = capsys.readouterr().err
    assert "failed" in err
    # the error table still records the leg, with empty error cells
    with open(tmp_path / "sf" / "sweep_errors.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert rows[0]["failed"] == "true"
    assert "density" in rows[0]["reason"]
    assert rows[0]["err_u"] == ""
