"""Command-line layer: config schema, resolution, CSV/sidecar emission.

Everything runs in-process through ``main(argv)`` — exit codes and files
are the contract.  Monte Carlo sizes are kept small; statistical accuracy
is not at stake here (the estimator modules own that), only plumbing:
field-path errors, dB->linear resolution, formatting, flags, determinism.
"""

from __future__ import annotations

import hashlib
import json
import math
import os

import numpy as np
import pytest

from mmfso.channel_fso import fso_pathloss, rytov_variance
from mmfso.checks import CheckResult
from mmfso.cli import (
    PRESETS,
    CSV_COLUMNS,
    ConfigError,
    CurvePoint,
    _config_hash,
    _flag_mismatch,
    default_config,
    load_config,
    main,
    resolve,
)

VARPI_IMDD = math.e / (2.0 * math.pi)


def _write_cfg(tmp_path, patch, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(patch))
    return str(path)


def _read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_sha256=")
    digest = lines[0].split("=", 1)[1]
    assert lines[1] == ",".join(CSV_COLUMNS)
    rows = [dict(zip(CSV_COLUMNS, ln.split(","))) for ln in lines[2:]]
    return digest, rows


SMALL = {"sweep": {"start_db": 8.0, "stop_db": 20.0, "step_db": 6.0},
         "mc": {"seed": 11, "trials": 4000, "workers": 1}}


# ---------------------------------------------------------------------------
# presets and schema
# ---------------------------------------------------------------------------


def test_preset_weather_table():
    want = {
        "clear_air": (0.43, 0.0, 5e-14),
        "moderate_fog": (42.2, 0.0, 2e-15),
        "moderate_rain": (5.8, 5.6, 5e-15),
    }
    assert set(PRESETS) == set(want)
    for name, (fog, rain, cn2) in want.items():
        cfg = default_config(name)
        assert cfg["fso"]["fog_db_per_km"] == fog
        assert cfg["rf"]["rain_db_per_km"] == rain
        assert cfg["fso"]["cn2"] == cn2
    with pytest.raises(ConfigError, match="unknown preset"):
        default_config("monsoon")


def test_default_config_link_tables():
    cfg = default_config()
    rf, fso = cfg["rf"], cfg["fso"]
    assert (rf["carrier_ghz"], rf["bandwidth_mhz"]) == (28.0, 850.0)
    assert (rf["tx_gain_dbi"], rf["rx_gain_dbi"]) == (44.0, 44.0)
    assert rf["oxygen_db_per_km"] == 15.1
    assert (rf["noise_psd_dbm_mhz"], rf["noise_figure_db"]) == (-144.0, 5.0)
    assert (rf["distance_km"], fso["distance_km"]) == (0.1, 1.0)
    assert fso["wavelength_nm"] == 1550.0
    assert (fso["receiver_radius_m"], fso["divergence_rad"]) == (0.05, 0.010)
    turb = fso["turbulence"]
    assert (turb["rho"], turb["b0"], turb["omega"]) == (0.95, 0.596, 1.32)
    assert (turb["alpha"], turb["beta"]) == (2.1, 2)


def test_load_config_merge_and_unknown_field(tmp_path):
    path = _write_cfg(tmp_path, {"rf": {"n_antennas": 3},
                                 "mc": {"trials": 999}})
    cfg = load_config(path)
    assert cfg["rf"]["n_antennas"] == 3
    assert cfg["rf"]["m_shape"] == 2          # untouched default survives
    assert cfg["mc"] == {"seed": 20260814, "trials": 999, "workers": 1}

    bad = _write_cfg(tmp_path, {"fso": {"apertures_x": 2}}, "bad.json")
    with pytest.raises(ConfigError) as err:
        load_config(bad)
    assert err.value.path == "fso.apertures_x"

    notobj = tmp_path / "arr.json"
    notobj.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="top level"):
        load_config(str(notobj))


@pytest.mark.parametrize("patch,path_fragment", [
    ({"rf": {"n_antennas": 0}}, "rf.n_antennas"),
    ({"rf": {"m_shape": 0}}, "rf.m_shape"),
    ({"fso": {"detection": 3}}, "fso.detection"),
    ({"fso": {"apertures": 0}}, "fso.apertures"),
    ({"sweep": {"step_db": 0.0}}, "sweep.step_db"),
    ({"sweep": {"start_db": 10.0, "stop_db": 0.0}}, "sweep"),
    ({"mc": {"seed": -1}}, "mc.seed"),
    ({"mc": {"seed": 2**64}}, "mc.seed"),
    ({"mc": {"trials": 0}}, "mc.trials"),
    ({"mc": {"workers": 0}}, "mc.workers"),
    ({"truncation": 0}, "truncation"),
    ({"modulation": "13-psk"}, "modulation"),
    ({"modulation": "ook", "fso": {"detection": 1}}, "modulation"),
    ({"hpa": {"kind": "doherty"}}, "hpa"),
    ({"hpa": {"branch": "folklore"}}, "hpa.branch"),
    ({"iq": {"ilr_db": 0.0}}, "iq"),
    ({"pdf": {"truncation_grid": []}}, "pdf.truncation_grid"),
    ({"interference": [{"m_shape": 1, "inr_db": 3.0},
                       {"m_shape": 2, "inr_db": 9.0}]}, "interference[1]"),
    ({"fso": {"turbulence": {"g": 0.1}}}, "fso.turbulence"),  # g without omega_prime
])
def test_resolve_rejects_with_field_path(patch, path_fragment):
    cfg = default_config()
    for key, val in patch.items():
        if isinstance(val, dict):
            for k2, v2 in val.items():
                if isinstance(cfg[key].get(k2), dict) and isinstance(v2, dict):
                    cfg[key][k2].update(v2)
                else:
                    cfg[key][k2] = v2
        else:
            cfg[key] = val
    with pytest.raises(ConfigError) as err:
        resolve(cfg)
    assert path_fragment in str(err.value)


# ---------------------------------------------------------------------------
# resolution: dB -> linear, diagnostics, echo hashing
# ---------------------------------------------------------------------------


def test_resolved_scenario_and_diagnostics():
    res = resolve(default_config())
    assert res.sweep_db[0] == -10.0 and res.sweep_db[-1] == 32.0
    assert len(res.sweep_db) == 15
    scen = res.scenario_at(20.0)
    assert scen.rf.mean_snr == pytest.approx(100.0, rel=1e-12)
    assert scen.fso.mu_r == pytest.approx(100.0, rel=1e-12)
    assert scen.turbulence.g == pytest.approx(2 * 0.596 * (1 - 0.95))
    assert res.diagnostics["rytov_variance"] == pytest.approx(
        rytov_variance(5e-14, 1550e-9, 1000.0), rel=1e-12)
    assert res.diagnostics["rytov_variance"] == pytest.approx(
        0.9954771925563520, rel=1e-12)
    assert res.diagnostics["fso_pathloss_db"] == pytest.approx(
        10.0 * math.log10(7.1136072127464040e-05), rel=1e-12)
    # opting into the budget turns the measured link budget into the offset
    cfg = default_config()
    cfg["rf"]["use_budget"] = True
    assert resolve(cfg).rf_offset_db == pytest.approx(114.804866894129,
                                                      abs=1e-9)
    # pathloss opt-in scales the optical mean SNR
    cfg2 = default_config()
    cfg2["fso"]["apply_pathloss"] = True
    assert resolve(cfg2).model_pathloss == pytest.approx(
        fso_pathloss(0.05, 0.010, 1.0, 0.43), rel=1e-12)


def test_echo_hash_is_sha256_of_canonical_json_and_skips_workers():
    cfg = default_config()
    cfg["mc"]["workers"] = 4
    echo = resolve(cfg).linear_echo()
    assert echo["mc"] == {"seed": 20260814, "trials": 200000}
    blob = json.dumps(echo, sort_keys=True, separators=(",", ":"))
    assert _config_hash(echo) == hashlib.sha256(blob.encode()).hexdigest()
    cfg2 = default_config()
    cfg2["mc"]["workers"] = 8
    assert _config_hash(resolve(cfg2).linear_echo()) == _config_hash(echo)


def test_curve_point_cell_formats():
    p = CurvePoint(sweep_db=8.0, metric="outage", mc=0.04275,
                   mc_ci95=6.2813390710e-03, analytic=None,
                   quadrature=4.4653218348e-02, flags=["a", "b"])
    assert p.cells() == ["8", "outage", "4.2750000000e-02",
                         "6.2813390710e-03", "", "4.4653218348e-02", "a;b"]
    assert CurvePoint(sweep_db=0.1256, metric="m").cells() == [
        "0.1256", "m", "", "", "", "", ""]


def test_mismatch_flag_rule():
    hit = CurvePoint(1.0, "outage", mc=0.010, mc_ci95=0.001, analytic=0.0150)
    _flag_mismatch(hit)
    assert hit.flags == ["mismatch"]       # |diff| 5e-3 > ci 1e-3 + 1e-3
    ok = CurvePoint(1.0, "outage", mc=0.010, mc_ci95=0.004, analytic=0.0149)
    _flag_mismatch(ok)
    assert ok.flags == []                  # inside ci + 1e-3
    quad_only = CurvePoint(1.0, "outage", mc=0.010, mc_ci95=0.0,
                           quadrature=0.5)
    _flag_mismatch(quad_only)
    assert quad_only.flags == ["mismatch"]  # quadrature stands in for ref
    assert not CurvePoint(1.0, "outage", analytic=0.5).flags


# ---------------------------------------------------------------------------
# end-to-end subcommands
# ---------------------------------------------------------------------------


def test_outage_end_to_end(tmp_path):
    cfg = _write_cfg(tmp_path, SMALL)
    out = tmp_path / "run"
    assert main(["outage", "--config", cfg, "--out", str(out)]) == 0
    digest, rows = _read_csv(out / "outage.csv")
    assert len(digest) == 64 and set(digest) <= set("0123456789abcdef")
    assert [r["metric"] for r in rows] == ["outage"] * 3
    assert [r["sweep_db"] for r in rows] == ["8", "14", "20"]
    for r in rows:
        series, quad = float(r["analytic"]), float(r["quadrature"])
        assert series == pytest.approx(quad, rel=1e-5)
        assert 0.0 < float(r["mc"]) < 1.0 and float(r["mc_ci95"]) > 0.0
    side = json.loads((out / "outage.json").read_text())
    assert side["command"] == "outage" and side["engine"] == "both"
    assert side["config_sha256"] == digest
    assert side["rows_written"] == 3 and side["workers"] == 1
    prov = side["provenance"]
    assert prov["bussgang_branch"] == "corrected"
    assert prov["varpi"] == pytest.approx(VARPI_IMDD, rel=1e-12)
    assert prov["series"]["variant"] == "kernel"
    assert prov["series"]["truncation_certified"] is True
    assert prov["interference_in_closed_forms"] == "absent"
    assert side["resolved"]["mc"] == {"seed": 11, "trials": 4000}
    assert set(side["versions"]) == {"package", "python", "numpy", "scipy"}


def test_engine_selects_routes(tmp_path):
    cfg = _write_cfg(tmp_path, SMALL)
    out_mc = tmp_path / "mc"
    assert main(["outage", "--config", cfg, "--out", str(out_mc),
                 "--engine", "mc"]) == 0
    _, rows = _read_csv(out_mc / "outage.csv")
    for r in rows:
        assert r["analytic"] == "" and r["quadrature"] == ""
        assert r["mc"] != "" and "no_analytic:engine=mc" in r["flags"]
    out_an = tmp_path / "an"
    assert main(["outage", "--config", cfg, "--out", str(out_an),
                 "--engine", "analytic"]) == 0
    _, rows = _read_csv(out_an / "outage.csv")
    for r in rows:
        assert r["mc"] == "" and r["mc_ci95"] == ""
        assert r["analytic"] != "" and "no_mc:engine=analytic" in r["flags"]


def test_seed_trials_override_and_range_check(tmp_path):
    cfg = _write_cfg(tmp_path, SMALL)
    out = tmp_path / "o"
    assert main(["outage", "--config", cfg, "--out", str(out),
                 "--seed", "77", "--trials", "2000",
                 "--engine", "mc"]) == 0
    side = json.loads((out / "outage.json").read_text())
    assert side["resolved"]["mc"] == {"seed": 77, "trials": 2000}
    assert main(["outage", "--config", cfg, "--out", str(out),
                 "--seed", "-1"]) == 2


def test_reruns_and_worker_fanout_are_byte_identical(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "sweep": {"start_db": 10.0, "stop_db": 16.0, "step_db": 6.0},
        "mc": {"seed": 5, "trials": 40000, "workers": 1}})
    blobs = []
    for tag, workers in (("a", "1"), ("b", "4"), ("c", "8"), ("d", "1")):
        out = tmp_path / tag
        assert main(["outage", "--config", cfg, "--out", str(out),
                     "--workers", workers]) == 0
        blobs.append((out / "outage.csv").read_bytes())
    assert blobs[0] == blobs[1] == blobs[2] == blobs[3]
    side = json.loads((tmp_path / "b" / "outage.json").read_text())
    assert side["workers"] == 4            # fan-out recorded, outside hash


def test_different_seed_changes_mc_not_hash(tmp_path):
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    cfg = _write_cfg(tmp_path, SMALL)
    main(["outage", "--config", cfg, "--out", str(out1), "--engine", "mc"])
    main(["outage", "--config", cfg, "--out", str(out2), "--engine", "mc",
          "--seed", "12"])
    d1, rows1 = _read_csv(out1 / "outage.csv")
    d2, rows2 = _read_csv(out2 / "outage.csv")
    assert d1 != d2                        # seed is part of the echo
    assert [r["mc"] for r in rows1] != [r["mc"] for r in rows2]


def test_ber_closed_form_on_single_aperture(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "fso": {"detection": 1, "apertures": 1},
        "sweep": {"start_db": 10.0, "stop_db": 10.0, "step_db": 1.0},
        "mc": {"seed": 3, "trials": 4000, "workers": 1}})
    out = tmp_path / "r"
    assert main(["ber", "--config", cfg, "--out", str(out)]) == 0
    _, rows = _read_csv(out / "ber.csv")
    assert len(rows) == 1 and rows[0]["flags"] == ""
    assert float(rows[0]["analytic"]) == pytest.approx(
        float(rows[0]["quadrature"]), rel=1e-6)


def test_ber_multi_aperture_skips_closed_form(tmp_path):
    cfg = _write_cfg(tmp_path, SMALL)
    out = tmp_path / "r"
    assert main(["ber", "--config", cfg, "--out", str(out)]) == 0
    _, rows = _read_csv(out / "ber.csv")
    for r in rows:
        assert r["analytic"] == ""
        assert "no_analytic:closed_form_preconditions" in r["flags"]
        assert float(r["quadrature"]) > 0.0
    side = json.loads((out / "ber.json").read_text())
    assert "single aperture" in side["provenance"]["closed_form_skipped"]


def test_capacity_rows_with_bounds_and_ceiling(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "hpa": {"kind": "sel", "ibo_db": 0.0},
        "iq": {"ilr_db": -15.0},
        "sweep": {"start_db": 20.0, "stop_db": 60.0, "step_db": 40.0},
        "mc": {"seed": 9, "trials": 4000, "workers": 1}})
    out = tmp_path / "cap"
    assert main(["capacity", "--config", cfg, "--out", str(out)]) == 0
    _, rows = _read_csv(out / "capacity.csv")
    by_metric = {}
    for r in rows:
        by_metric.setdefault(r["metric"], []).append(r)
    assert set(by_metric) == {"capacity", "capacity_approx",
                              "capacity_jensen"}
    for cap_row, jen_row in zip(by_metric["capacity"],
                                by_metric["capacity_jensen"]):
        assert float(cap_row["quadrature"]) < float(jen_row["analytic"])
        assert "upper_bound" in jen_row["flags"]
    # at 60 dB the impaired link sits in the saturation region
    assert "ceiling_region" in by_metric["capacity"][1]["flags"]
    side = json.loads((out / "capacity.json").read_text())
    ceil = side["provenance"]["capacity_ceilings"]
    assert ceil["bounded"] is True and ceil["joint"] < ceil["iq_only"]


def test_outage_ceiling_and_floor_flags(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "hpa": {"kind": "sel", "ibo_db": 0.0},
        "iq": {"ilr_db": -10.0},            # ceiling 1/rho2 = 10
        "threshold_db": 20.0,               # threshold 100 > ceiling
        "sweep": {"start_db": 10.0, "stop_db": 10.0, "step_db": 1.0},
        "mc": {"seed": 9, "trials": 1000, "workers": 1}})
    out = tmp_path / "ceil"
    assert main(["outage", "--config", cfg, "--out", str(out),
                 "--engine", "analytic"]) == 0
    _, rows = _read_csv(out / "outage.csv")
    assert "ceiling_reached" in rows[0]["flags"]
    assert float(rows[0]["analytic"]) == 1.0

    cfg2 = _write_cfg(tmp_path, {
        "hpa": {"kind": "sel", "ibo_db": 0.0},
        "iq": {"ilr_db": -15.0},
        "sweep": {"start_db": 100.0, "stop_db": 100.0, "step_db": 1.0},
        "mc": {"seed": 9, "trials": 1000, "workers": 1}}, "floor.json")
    out2 = tmp_path / "floor"
    assert main(["outage", "--config", cfg2, "--out", str(out2),
                 "--engine", "analytic"]) == 0
    _, rows2 = _read_csv(out2 / "outage.csv")
    assert "floor_region" in rows2[0]["flags"]
    side = json.loads((out2 / "outage.json").read_text())
    assert side["provenance"]["outage_floor"] == pytest.approx(
        1.63923741e-04, rel=1e-4)


def test_interference_rows_carry_decoupling_flag(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "interference": [{"m_shape": 1, "inr_db": 3.0}],
        "sweep": {"start_db": 14.0, "stop_db": 14.0, "step_db": 1.0},
        "mc": {"seed": 2, "trials": 4000, "workers": 1}})
    out = tmp_path / "i"
    assert main(["outage", "--config", cfg, "--out", str(out)]) == 0
    _, rows = _read_csv(out / "outage.csv")
    assert "closed_form_decouples_interference" in rows[0]["flags"]
    side = json.loads((out / "outage.json").read_text())
    assert side["provenance"]["interference_in_closed_forms"].startswith(
        "decoupled")
    assert side["resolved"]["interference"]["mean_inr"] == pytest.approx(
        10.0 ** 0.3, rel=1e-12)


def test_metric_filter(tmp_path):
    cfg = _write_cfg(tmp_path, {
        "hpa": {"kind": "sel", "ibo_db": 0.0},
        "iq": {"ilr_db": -15.0},
        "sweep": {"start_db": 10.0, "stop_db": 16.0, "step_db": 6.0},
        "mc": {"seed": 9, "trials": 1000, "workers": 1}})
    out = tmp_path / "jen"
    assert main(["capacity", "--config", cfg, "--out", str(out),
                 "--engine", "analytic", "--metric", "capacity_jensen"]) == 0
    _, rows = _read_csv(out / "capacity.csv")
    assert [r["metric"] for r in rows] == ["capacity_jensen"] * 2
    missing = tmp_path / "missing"
    assert main(["capacity", "--config", cfg, "--out", str(missing),
                 "--engine", "analytic", "--metric", "zzz"]) == 2
    assert not missing.exists()            # failed before any file write


def test_pdf_truncation_diagnostics(tmp_path):
    cfg = _write_cfg(tmp_path, {"mc": {"seed": 4, "trials": 1,
                                       "workers": 1}})
    out = tmp_path / "pdf"
    assert main(["pdf", "--config", cfg, "--out", str(out)]) == 0
    _, rows = _read_csv(out / "pdf.csv")
    err_rows = [r for r in rows if r["metric"] == "pdf_truncation_error"]
    assert [float(r["sweep_db"]) for r in err_rows] == [2, 4, 8, 16, 32]
    bounds = [float(r["analytic"]) for r in err_rows]
    assert all(b > n for b, n in zip(bounds, bounds[1:]))  # bound shrinks
    for r in err_rows:
        measured, bound = float(r["quadrature"]), float(r["analytic"])
        assert "x_axis:truncation_order" in r["flags"]
        if "measured_error_is_float_noise" in r["flags"]:
            assert bound < 1e-13           # true error below double noise
        else:
            assert measured <= bound
    overlays = {r["metric"] for r in rows} - {"pdf_truncation_error"}
    assert overlays == {"pdf_overlay_L%d" % L for L in (2, 4, 8, 16, 32)}
    for name in overlays:
        fam = [r for r in rows if r["metric"] == name]
        assert len(fam) == 33
        assert all(float(r["quadrature"]) >= 0.0 for r in fam)
    side = json.loads((out / "pdf.json").read_text())
    assert side["engine"] == "deterministic"


# ---------------------------------------------------------------------------
# failure exit codes
# ---------------------------------------------------------------------------


def test_config_errors_exit_2_and_write_nothing(tmp_path, capsys):
    out = tmp_path / "never"
    assert main(["outage", "--out", str(out)]) == 2   # --config required
    assert "config error at --config" in capsys.readouterr().err

    missing = str(tmp_path / "nope.json")
    assert main(["outage", "--config", missing, "--out", str(out)]) == 2

    badjson = tmp_path / "bad.json"
    badjson.write_text("{not json")
    assert main(["outage", "--config", str(badjson), "--out", str(out)]) == 2
    assert "invalid JSON" in capsys.readouterr().err

    empty_sweep = _write_cfg(tmp_path, {
        "sweep": {"start_db": 10.0, "stop_db": 0.0, "step_db": 3.0}},
        "empty.json")
    assert main(["outage", "--config", empty_sweep, "--out", str(out)]) == 2
    assert "empty grid" in capsys.readouterr().err
    assert not out.exists() and not os.path.exists("out")


def test_validate_subcommand(tmp_path, capsys, monkeypatch):
    out = tmp_path / "val"
    assert main(["validate", "--out", str(out),
                 "--metric", "detection_prefactor"]) == 0
    assert "PASS detection_prefactor_constants" in capsys.readouterr().out
    side = json.loads((out / "validate.json").read_text())
    assert side["failed"] == []
    assert side["checks"][0]["name"] == "detection_prefactor_constants"

    from mmfso import checks as checks_mod
    monkeypatch.setattr(checks_mod, "run_all", lambda pattern=None: [
        CheckResult("forced_failure", False, "boom", 0.0)])
    assert main(["validate", "--out", str(out)]) == 3
    captured = capsys.readouterr()
    assert "FAIL forced_failure" in captured.out
    assert "1 of 1 checks failed" in captured.err
