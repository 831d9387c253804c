"""Command-line front end: scenario files, metric sweeps, validation.

The config file is JSON.  A ``preset`` key selects one of the bundled
weather presets (``clear_air``, ``moderate_fog``, ``moderate_rain``)
whose values fill every field the user leaves out; any explicit field
overrides the preset.  All dB quantities are converted to linear at
ingestion and the resolved linear scenario is echoed into the JSON
sidecar written next to each CSV.

Subcommands: ``outage``, ``ber``, ``capacity`` sweep a metric over the
average-SNR axis (the sweep value sets both hops' average SNR, shifted
by the per-hop offset fields); ``pdf`` emits the deterministic
truncation-diagnostic curves of the turbulence density; ``validate``
runs the registered cross-check oracles.

Exit codes: 0 success, 2 config error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import platform
import sys
import time
from typing import Any

import numpy as np
import scipy

from . import __version__
from .analytic import (
    Modulation,
    ScenarioAnalytic,
    ber as ber_quadrature,
    ber_foxh_special_case,
    capacity_approx,
    capacity_ceilings,
    capacity_foxh_closed_form,
    capacity_high_snr_limit,
    capacity_jensen_bound,
    capacity_quadrature,
    outage_floor,
    outage_quadrature,
    outage_series_detail,
    parse_modulation,
    varpi_for_detection,
)
from .channel_fso import (
    FsoSnrModel,
    MalagaParams,
    PointingParams,
    fso_pathloss,
    malaga_pdf,
    malaga_pdf_truncated,
    rytov_variance,
    truncation_error_bound,
)
from .channel_rf import (
    InterferenceModel,
    RfFading,
    RfLinkBudget,
    mean_snr_from_budget,
    rf_noise_variance,
    rf_power_gain,
)
from .impairments import HpaModel, IqImbalance, iq_coefficients, iq_from_ilr_db
from .montecarlo import RngPolicy, estimate_ber, estimate_capacity, estimate_outage
from .sindr import LinkScenario

__all__ = [
    "ConfigError",
    "PRESETS",
    "default_config",
    "load_config",
    "resolve",
    "ResolvedRun",
    "CurvePoint",
    "main",
]

_DB = 10.0


def _db2lin(db: float) -> float:
    return 10.0 ** (db / _DB)


def _lin2db(x: float) -> float:
    return _DB * math.log10(x)


class ConfigError(Exception):
    """Schema or value error in a scenario file, with the field path."""

    def __init__(self, path: str, msg: str):
        super().__init__("%s: %s" % (path, msg))
        self.path = path
        self.msg = msg


# ---------------------------------------------------------------------------
# Presets and schema
# ---------------------------------------------------------------------------

# Weather-dependent attenuation / turbulence-strength figures.  The fog
# coefficient attenuates the optical hop, rain the radio hop; Cn^2 feeds
# the Rytov-variance diagnostic echoed in the sidecar.
PRESETS: dict[str, dict[str, float]] = {
    "clear_air": {"fog_db_per_km": 0.43, "rain_db_per_km": 0.0, "cn2": 5e-14},
    "moderate_fog": {"fog_db_per_km": 42.2, "rain_db_per_km": 0.0, "cn2": 2e-15},
    "moderate_rain": {"fog_db_per_km": 5.8, "rain_db_per_km": 5.6, "cn2": 5e-15},
}

# Radio-hop constants shared by every preset.
_RF_TABLE = {
    "carrier_ghz": 28.0,
    "bandwidth_mhz": 850.0,
    "tx_gain_dbi": 44.0,
    "rx_gain_dbi": 44.0,
    "oxygen_db_per_km": 15.1,
    "noise_psd_dbm_mhz": -144.0,
    "noise_figure_db": 5.0,
}

# Optical-hop constants shared by every preset.
_FSO_TABLE = {
    "wavelength_nm": 1550.0,
    "receiver_radius_m": 0.05,
    "divergence_rad": 0.010,
    "responsivity": 0.5,
    "noise_variance": 1e-7,
}


def default_config(preset: str = "clear_air") -> dict[str, Any]:
    """Full scenario dictionary for a named weather preset."""
    if preset not in PRESETS:
        raise ConfigError("preset", "unknown preset %r (choose from %s)"
                          % (preset, sorted(PRESETS)))
    weather = PRESETS[preset]
    return {
        "preset": preset,
        "rf": {
            "n_antennas": 2,
            "m_shape": 2,
            "snr_offset_db": 0.0,
            "use_budget": False,
            "tx_power_dbm": 20.0,
            "distance_km": 0.1,
            **_RF_TABLE,
            "rain_db_per_km": weather["rain_db_per_km"],
        },
        "interference": [],
        "fso": {
            "detection": 2,
            "apertures": 2,
            "snr_offset_db": 0.0,
            "apply_pathloss": False,
            "distance_km": 1.0,
            **_FSO_TABLE,
            "fog_db_per_km": weather["fog_db_per_km"],
            "cn2": weather["cn2"],
            # either the generator fields (rho, b0, omega, delta_phi_rad)
            # or direct coefficients (g, omega_prime); direct wins if given
            "turbulence": {
                "alpha": 2.1,
                "beta": 2,
                "rho": 0.95,
                "b0": 0.596,
                "omega": 1.32,
                "delta_phi_rad": math.pi / 2.0,
                "g": None,
                "omega_prime": None,
            },
            "pointing": None,
        },
        "hpa": {"kind": "none", "ibo_db": 3.0, "phase_max_deg": 0.0,
                "branch": "corrected"},
        "iq": {"ilr_db": None, "zeta": None, "theta_deg": None},
        "modulation": "bpsk",
        "threshold_db": 0.0,
        "sweep": {"start_db": -10.0, "stop_db": 32.0, "step_db": 3.0},
        "mc": {"seed": 20260814, "trials": 200000, "workers": 1},
        "truncation": 30,
        "pdf": {"truncation_grid": [2, 4, 8, 16, 32], "points": 100,
                "span_mean_multiples": 4.0},
        "capacity": {"exact_with_interference": False},
    }


def _merge(base: Any, override: Any, path: str) -> Any:
    """Deep-merge override onto base; dict keys must already exist in base."""
    if isinstance(base, dict):
        if not isinstance(override, dict):
            raise ConfigError(path, "expected an object, got %s"
                              % type(override).__name__)
        out = dict(base)
        for key, val in override.items():
            sub = "%s.%s" % (path, key) if path else key
            if key not in base:
                raise ConfigError(sub, "unknown field")
            if isinstance(base[key], dict) and val is not None:
                out[key] = _merge(base[key], val, sub)
            else:
                out[key] = val
        return out
    return override


def load_config(path: str) -> dict[str, Any]:
    """Read a JSON scenario file and fill defaults from its preset."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            user = json.load(fh)
    except OSError as err:
        raise ConfigError("--config", "cannot read %s (%s)" % (path, err))
    except json.JSONDecodeError as err:
        raise ConfigError("--config", "invalid JSON in %s: %s" % (path, err))
    if not isinstance(user, dict):
        raise ConfigError("", "top level must be an object")
    preset = user.get("preset", "clear_air")
    if not isinstance(preset, str):
        raise ConfigError("preset", "must be a string")
    base = default_config(preset)
    # the interference list replaces wholesale (no per-entry merge)
    return _merge(base, user, "")


# ---------------------------------------------------------------------------
# Resolution: dB -> linear, field checks, model construction
# ---------------------------------------------------------------------------


def _need(cfg: dict, key: str, types, path: str):
    val = cfg.get(key)
    if not isinstance(val, types) or isinstance(val, bool) and bool not in (
        types if isinstance(types, tuple) else (types,)
    ):
        want = types if isinstance(types, tuple) else (types,)
        raise ConfigError("%s.%s" % (path, key) if path else key,
                          "expected %s, got %r"
                          % ("/".join(t.__name__ for t in want), val))
    return val


@dataclasses.dataclass(frozen=True)
class ResolvedRun:
    """Linear-domain scenario family plus run policy, ready to sweep."""

    preset: str
    n_antennas: int
    m_shape: int
    interference: InterferenceModel
    malaga: MalagaParams
    pointing: PointingParams | None
    detection: int
    apertures: int
    truncation: int
    hpa: HpaModel
    iq: IqImbalance
    branch: str
    modulation: Modulation
    threshold: float
    sweep_db: tuple[float, ...]
    rf_offset_db: float
    fso_offset_db: float
    model_pathloss: float
    seed: int
    trials: int
    workers: int
    pdf_grid: tuple[int, ...]
    pdf_points: int
    pdf_span: float
    capacity_exact_with_interference: bool
    diagnostics: dict[str, float]

    def scenario_at(self, sweep_db: float) -> LinkScenario:
        gbar = _db2lin(sweep_db + self.rf_offset_db)
        mu = _db2lin(sweep_db + self.fso_offset_db)
        rf = RfFading(n_antennas=self.n_antennas, m_shape=self.m_shape,
                      mean_snr=gbar)
        fso = FsoSnrModel(r=self.detection, apertures=self.apertures,
                          mu_r=mu, truncation=self.truncation,
                          pathloss=self.model_pathloss, pointing=self.pointing)
        return LinkScenario(rf=rf, interference=self.interference,
                            turbulence=self.malaga, fso=fso, hpa=self.hpa,
                            iq=self.iq, hpa_branch=self.branch)

    def linear_echo(self) -> dict[str, Any]:
        """Resolved linear-domain configuration for the sidecar."""
        return {
            "preset": self.preset,
            "rf": {
                "n_antennas": self.n_antennas,
                "m_shape": self.m_shape,
                "mean_snr_at_sweep": [
                    _db2lin(s + self.rf_offset_db) for s in self.sweep_db
                ],
            },
            "interference": {
                "m_total": self.interference.m_total,
                "rate": self.interference.rate,
                "mean_inr": self.interference.mean,
            },
            "turbulence": {
                "alpha": self.malaga.alpha,
                "beta": self.malaga.beta,
                "g": self.malaga.g,
                "omega_prime": self.malaga.omega_prime,
            },
            "pointing": (
                None if self.pointing is None else dataclasses.asdict(self.pointing)
            ),
            "fso": {
                "detection": self.detection,
                "apertures": self.apertures,
                "truncation": self.truncation,
                "model_pathloss": self.model_pathloss,
                "mean_electrical_snr_at_sweep": [
                    _db2lin(s + self.fso_offset_db) for s in self.sweep_db
                ],
            },
            "hpa": {
                "kind": self.hpa.kind,
                "saturation": self.hpa.saturation,
                "rho_sq": self.hpa.rho_sq,
                "phase_max": self.hpa.phase_max,
                "branch": self.branch,
            },
            "iq": {"zeta": self.iq.zeta, "theta": self.iq.theta,
                   "ilr": self.iq.ilr},
            "modulation": self.modulation.name,
            "threshold": self.threshold,
            "sweep_db": list(self.sweep_db),
            # worker fan-out cannot change any emitted value, so it stays
            # out of the hashed echo (byte-identical CSVs across workers)
            "mc": {"seed": self.seed, "trials": self.trials},
            "diagnostics": self.diagnostics,
        }


def resolve(cfg: dict[str, Any]) -> ResolvedRun:
    """Validate the merged config and convert to linear-domain models."""
    rf = _need(cfg, "rf", dict, "")
    n = _need(rf, "n_antennas", int, "rf")
    m = _need(rf, "m_shape", int, "rf")
    if n < 1:
        raise ConfigError("rf.n_antennas", "must be >= 1")
    if m < 1:
        raise ConfigError("rf.m_shape", "must be >= 1 (integer-shape fading)")

    entries = _need(cfg, "interference", list, "")
    if entries:
        rate0 = None
        m_total = 0.0
        for i, ent in enumerate(entries):
            path = "interference[%d]" % i
            if not isinstance(ent, dict):
                raise ConfigError(path, "expected an object")
            mi = _need(ent, "m_shape", (int, float), path)
            inr_db = _need(ent, "inr_db", (int, float), path)
            if mi <= 0:
                raise ConfigError(path + ".m_shape", "must be positive")
            rate = mi / _db2lin(inr_db)
            if rate0 is None:
                rate0 = rate
            elif abs(rate - rate0) > 1e-9 * rate0:
                raise ConfigError(
                    path, "per-interferer rates differ; the aggregate is "
                    "gamma only for a common rate")
            m_total += mi
        interference = InterferenceModel(m_total=m_total, rate=rate0)
    else:
        interference = InterferenceModel.none()

    fso = _need(cfg, "fso", dict, "")
    r = _need(fso, "detection", int, "fso")
    if r not in (1, 2):
        raise ConfigError("fso.detection", "must be 1 (coherent) or 2 "
                          "(intensity modulation / direct detection)")
    apertures = _need(fso, "apertures", int, "fso")
    if apertures < 1:
        raise ConfigError("fso.apertures", "must be >= 1")

    turb = _need(fso, "turbulence", dict, "fso")
    alpha = float(_need(turb, "alpha", (int, float), "fso.turbulence"))
    beta = _need(turb, "beta", int, "fso.turbulence")
    try:
        if turb.get("g") is not None or turb.get("omega_prime") is not None:
            malaga = MalagaParams(alpha=alpha, beta=beta,
                                  g=float(turb["g"]),
                                  omega_prime=float(turb["omega_prime"]))
        else:
            malaga = MalagaParams.from_generators(
                alpha=alpha, beta=beta,
                rho=float(turb["rho"]), b0=float(turb["b0"]),
                omega=float(turb["omega"]),
                delta_phi=float(turb.get("delta_phi_rad", math.pi / 2.0)),
            )
    except (KeyError, TypeError) as err:
        raise ConfigError("fso.turbulence", "needs either (rho, b0, omega) "
                          "or (g, omega_prime): %s" % err)
    except ValueError as err:
        raise ConfigError("fso.turbulence", str(err))

    pointing = None
    pt = fso.get("pointing")
    if pt is not None:
        if not isinstance(pt, dict):
            raise ConfigError("fso.pointing", "expected an object or null")
        try:
            pointing = PointingParams(
                radius_m=float(pt.get("radius_m",
                                      fso.get("receiver_radius_m", 0.05))),
                beam_waist_m=float(pt["beam_waist_m"]),
                jitter_m=float(pt["jitter_m"]),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError("fso.pointing", str(err))

    hpa_cfg = _need(cfg, "hpa", dict, "")
    kind = _need(hpa_cfg, "kind", str, "hpa")
    branch = hpa_cfg.get("branch", "corrected")
    if branch not in ("corrected", "printed"):
        raise ConfigError("hpa.branch", "must be 'corrected' or 'printed'")
    try:
        if kind == "none":
            hpa = HpaModel.ideal()
        else:
            hpa = HpaModel.from_ibo_db(
                kind=kind,
                ibo_db=float(_need(hpa_cfg, "ibo_db", (int, float), "hpa")),
                phase_max=math.radians(float(hpa_cfg.get("phase_max_deg", 0.0))),
            )
    except ValueError as err:
        raise ConfigError("hpa", str(err))

    iq_cfg = _need(cfg, "iq", dict, "")
    try:
        if iq_cfg.get("ilr_db") is not None:
            iq = iq_from_ilr_db(float(iq_cfg["ilr_db"]))
        elif iq_cfg.get("zeta") is not None:
            iq = iq_coefficients(float(iq_cfg["zeta"]),
                                 math.radians(float(iq_cfg.get("theta_deg", 0.0))))
        else:
            iq = IqImbalance.ideal()
    except ValueError as err:
        raise ConfigError("iq", str(err))

    modulation = None
    try:
        modulation = parse_modulation(_need(cfg, "modulation", str, ""))
    except ValueError as err:
        raise ConfigError("modulation", str(err))
    if modulation.im_dd_only and r != 2:
        raise ConfigError("modulation", "%s requires fso.detection = 2"
                          % modulation.name)

    threshold = _db2lin(float(_need(cfg, "threshold_db", (int, float), "")))

    sweep = _need(cfg, "sweep", dict, "")
    start = float(_need(sweep, "start_db", (int, float), "sweep"))
    stop = float(_need(sweep, "stop_db", (int, float), "sweep"))
    step = float(_need(sweep, "step_db", (int, float), "sweep"))
    if step <= 0.0:
        raise ConfigError("sweep.step_db", "must be positive")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    if count < 1:
        raise ConfigError("sweep", "empty grid (start_db > stop_db)")
    grid = tuple(round(start + k * step, 12) for k in range(count))

    mc = _need(cfg, "mc", dict, "")
    seed = _need(mc, "seed", int, "mc")
    trials = _need(mc, "trials", int, "mc")
    workers = _need(mc, "workers", int, "mc")
    if seed < 0 or seed >= 2**64:
        raise ConfigError("mc.seed", "must fit in an unsigned 64-bit integer")
    if trials < 1:
        raise ConfigError("mc.trials", "must be >= 1")
    if workers < 1:
        raise ConfigError("mc.workers", "must be >= 1")

    truncation = _need(cfg, "truncation", int, "")
    if truncation < 1:
        raise ConfigError("truncation", "must be >= 1")

    pdf_cfg = _need(cfg, "pdf", dict, "")
    pdf_grid = tuple(int(v) for v in _need(pdf_cfg, "truncation_grid", list,
                                           "pdf"))
    if not pdf_grid or any(v < 1 for v in pdf_grid):
        raise ConfigError("pdf.truncation_grid", "needs positive integers")
    pdf_points = _need(pdf_cfg, "points", int, "pdf")
    pdf_span = float(_need(pdf_cfg, "span_mean_multiples", (int, float), "pdf"))

    cap_cfg = _need(cfg, "capacity", dict, "")
    cap_exact = bool(cap_cfg.get("exact_with_interference", False))

    # diagnostics: budget-implied radio SNR and optical pathloss for the
    # configured geometry (informational unless the opt-in flags are set)
    budget = RfLinkBudget(
        carrier_ghz=float(rf["carrier_ghz"]),
        distance_km=float(rf["distance_km"]),
        tx_gain_dbi=float(rf["tx_gain_dbi"]),
        rx_gain_dbi=float(rf["rx_gain_dbi"]),
        oxygen_db_per_km=float(rf["oxygen_db_per_km"]),
        rain_db_per_km=float(rf["rain_db_per_km"]),
        bandwidth_mhz=float(rf["bandwidth_mhz"]),
        noise_psd_dbm_mhz=float(rf["noise_psd_dbm_mhz"]),
        noise_figure_db=float(rf["noise_figure_db"]),
    )
    pathloss = fso_pathloss(
        radius_m=float(fso["receiver_radius_m"]),
        divergence_rad=float(fso["divergence_rad"]),
        distance_km=float(fso["distance_km"]),
        sigma_db_per_km=float(fso["fog_db_per_km"]),
    )
    diagnostics = {
        "rf_power_gain_db": rf_power_gain(budget),
        "rf_noise_dbm": rf_noise_variance(budget).dbm,
        "rf_budget_snr_db_at_tx": (
            _lin2db(mean_snr_from_budget(budget, float(rf["tx_power_dbm"])))
        ),
        "fso_pathloss_db": _lin2db(pathloss),
        "rytov_variance": rytov_variance(
            float(fso["cn2"]), float(fso["wavelength_nm"]) * 1e-9,
            float(fso["distance_km"]) * 1e3),
    }

    rf_offset = float(rf.get("snr_offset_db", 0.0))
    if rf.get("use_budget", False):
        rf_offset = diagnostics["rf_budget_snr_db_at_tx"]
    fso_offset = float(fso.get("snr_offset_db", 0.0))
    model_pathloss = pathloss if fso.get("apply_pathloss", False) else 1.0

    return ResolvedRun(
        preset=str(cfg.get("preset", "clear_air")),
        n_antennas=n, m_shape=m, interference=interference, malaga=malaga,
        pointing=pointing, detection=r, apertures=apertures,
        truncation=truncation, hpa=hpa, iq=iq, branch=branch,
        modulation=modulation, threshold=threshold, sweep_db=grid,
        rf_offset_db=rf_offset, fso_offset_db=fso_offset,
        model_pathloss=model_pathloss, seed=seed, trials=trials,
        workers=workers, pdf_grid=pdf_grid, pdf_points=pdf_points,
        pdf_span=pdf_span, capacity_exact_with_interference=cap_exact,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Curve rows and file emission
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("sweep_db", "metric", "mc", "mc_ci95", "analytic",
               "quadrature", "flags")


@dataclasses.dataclass
class CurvePoint:
    """One CSV row; None cells are emitted empty with a reason flag."""

    sweep_db: float
    metric: str
    mc: float | None = None
    mc_ci95: float | None = None
    analytic: float | None = None
    quadrature: float | None = None
    flags: list[str] = dataclasses.field(default_factory=list)

    def cells(self) -> list[str]:
        def num(v, fmt="%.10e"):
            return "" if v is None else fmt % v

        return [
            "%.6g" % self.sweep_db,
            self.metric,
            num(self.mc),
            num(self.mc_ci95),
            num(self.analytic),
            num(self.quadrature),
            ";".join(self.flags),
        ]


def _flag_mismatch(point: CurvePoint) -> None:
    """Flag rows where the deterministic value leaves the MC interval."""
    ref = point.analytic if point.analytic is not None else point.quadrature
    if ref is None or point.mc is None:
        return
    if abs(ref - point.mc) > (point.mc_ci95 or 0.0) + 1e-3:
        point.flags.append("mismatch")


def _config_hash(echo: dict[str, Any]) -> str:
    blob = json.dumps(echo, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_csv(path: str, rows: list[CurvePoint], config_hash: str) -> None:
    lines = ["# config_sha256=%s" % config_hash, ",".join(CSV_COLUMNS)]
    lines.extend(",".join(row.cells()) for row in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_sidecar(path: str, payload: dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Metric runners
# ---------------------------------------------------------------------------


def _series_provenance(scn: ScenarioAnalytic) -> dict[str, Any]:
    return {
        "variant": "kernel",
        "order_used": scn.order_used,
        "truncation_certified": scn.certified,
        "irradiance_cut": scn.radius,
        "tail_mass_beyond_cut": 1.0 - scn.fd_at_cut,
    }


def _run_outage(res: ResolvedRun, engine: str,
                provenance: dict[str, Any]) -> list[CurvePoint]:
    rows: list[CurvePoint] = []
    policy = RngPolicy(seed=res.seed)
    floor_val: float | None = None
    for s in res.sweep_db:
        scen = res.scenario_at(s)
        point = CurvePoint(sweep_db=s, metric="outage")
        if engine in ("analytic", "both"):
            scn = ScenarioAnalytic.from_scenario(scen)
            provenance.setdefault("series", _series_provenance(scn))
            detail = outage_series_detail(res.threshold, scn)
            point.analytic = detail.value
            point.quadrature = outage_quadrature(res.threshold, scn)
            if not detail.certified:
                point.flags.append("series_uncertified")
            if res.interference.active:
                point.flags.append("closed_form_decouples_interference")
            if res.threshold >= scen.sindr_ceiling:
                point.flags.append("ceiling_reached")
            else:
                if floor_val is None and scen.rho2 > 0.0:
                    floor_val = outage_floor(res.threshold, scn)
                    provenance["outage_floor"] = floor_val
                if floor_val and point.analytic <= 1.05 * floor_val:
                    point.flags.append("floor_region")
        else:
            point.flags.append("no_analytic:engine=mc")
        if engine in ("mc", "both"):
            est = estimate_outage(scen, res.threshold, res.trials, policy,
                                  workers=res.workers)
            point.mc, point.mc_ci95 = est.value, est.ci95
        else:
            point.flags.append("no_mc:engine=analytic")
        _flag_mismatch(point)
        rows.append(point)
    return rows


def _run_ber(res: ResolvedRun, engine: str,
             provenance: dict[str, Any]) -> list[CurvePoint]:
    rows: list[CurvePoint] = []
    policy = RngPolicy(seed=res.seed)
    closed_form_ok = True
    for s in res.sweep_db:
        scen = res.scenario_at(s)
        point = CurvePoint(sweep_db=s, metric="ber")
        if engine in ("analytic", "both"):
            scn = ScenarioAnalytic.from_scenario(scen)
            provenance.setdefault("series", _series_provenance(scn))
            point.quadrature = ber_quadrature(res.modulation, scn)
            if closed_form_ok:
                try:
                    point.analytic = ber_foxh_special_case(res.modulation, scn)
                except ValueError as err:
                    closed_form_ok = False
                    provenance.setdefault("closed_form_skipped", str(err))
            if point.analytic is None:
                point.flags.append("no_analytic:closed_form_preconditions")
        else:
            point.flags.append("no_analytic:engine=mc")
        if engine in ("mc", "both"):
            est = estimate_ber(scen, res.modulation, res.trials, policy,
                               workers=res.workers)
            point.mc, point.mc_ci95 = est.value, est.ci95
        else:
            point.flags.append("no_mc:engine=analytic")
        _flag_mismatch(point)
        rows.append(point)
    return rows


def _run_capacity(res: ResolvedRun, engine: str,
                  provenance: dict[str, Any]) -> list[CurvePoint]:
    rows: list[CurvePoint] = []
    policy = RngPolicy(seed=res.seed)
    closed_form_ok = True
    skip_exact = res.interference.active and not res.capacity_exact_with_interference
    limit = None
    for s in res.sweep_db:
        scen = res.scenario_at(s)
        point = CurvePoint(sweep_db=s, metric="capacity")
        extra: list[CurvePoint] = []
        if engine in ("analytic", "both"):
            scn = ScenarioAnalytic.from_scenario(scen)
            provenance.setdefault("series", _series_provenance(scn))
            point.quadrature = capacity_quadrature(scn)
            if limit is None:
                ceilings = capacity_ceilings(scn)
                limit = capacity_high_snr_limit(scn)
                provenance["capacity_ceilings"] = {
                    "joint": ceilings.joint,
                    "iq_only": ceilings.iq_only,
                    "bounded": ceilings.bounded,
                    # the curve's true asymptote: the mean-field ceilings
                    # above overshoot it by the residual-fading Jensen gap
                    "ergodic_limit": limit,
                }
            if closed_form_ok and not skip_exact:
                try:
                    point.analytic = capacity_foxh_closed_form(scn)
                except ValueError as err:
                    closed_form_ok = False
                    provenance.setdefault("closed_form_skipped", str(err))
            if point.analytic is None:
                point.flags.append(
                    "no_analytic:closed_form_runtime_opt_out" if skip_exact
                    and closed_form_ok else
                    "no_analytic:closed_form_preconditions")
            if math.isfinite(limit) and point.quadrature >= 0.98 * limit:
                point.flags.append("ceiling_region")
            extra.append(CurvePoint(
                sweep_db=s, metric="capacity_approx",
                analytic=capacity_approx(scn),
                flags=["no_mc:analytic_reference_curve"]))
            extra.append(CurvePoint(
                sweep_db=s, metric="capacity_jensen",
                analytic=capacity_jensen_bound(scn),
                flags=["no_mc:analytic_reference_curve", "upper_bound"]))
        else:
            point.flags.append("no_analytic:engine=mc")
        if engine in ("mc", "both"):
            est = estimate_capacity(scen, res.trials, policy,
                                    workers=res.workers)
            point.mc, point.mc_ci95 = est.value, est.ci95
        else:
            point.flags.append("no_mc:engine=analytic")
        _flag_mismatch(point)
        rows.append(point)
        rows.extend(extra)
    return rows


def _run_pdf(res: ResolvedRun, provenance: dict[str, Any]) -> list[CurvePoint]:
    """Truncation diagnostics of the turbulence density (no Monte Carlo).

    For each truncation order L the first row family reports the measured
    worst absolute error of the truncated series against the exact
    Bessel-form density (quadrature column) next to its analytic upper
    bound (analytic column), over a seeded random irradiance probe set.
    The second family overlays truncated and exact density values on a
    fixed grid, for plotting.
    """
    p = res.malaga
    rng = np.random.default_rng(res.seed)
    span = res.pdf_span * p.mean
    probes = rng.uniform(0.01 * p.mean, span, size=res.pdf_points)
    exact = malaga_pdf(probes, p)
    provenance["pdf_probe_points"] = res.pdf_points
    rows: list[CurvePoint] = []
    base_flags = ["no_mc:deterministic_curve"]
    for L in res.pdf_grid:
        approx = malaga_pdf_truncated(probes, p, L)
        bound = truncation_error_bound(probes, p, L)
        flags = base_flags + ["x_axis:truncation_order", "analytic_is_bound"]
        if float(np.max(bound)) < 1e-13:
            # the true truncation error sits below double-precision
            # roundoff; the measured column shows the noise floor
            flags.append("measured_error_is_float_noise")
        rows.append(CurvePoint(
            sweep_db=float(L), metric="pdf_truncation_error",
            analytic=float(np.max(bound)),
            quadrature=float(np.max(np.abs(exact - approx))),
            flags=flags))
    grid = np.geomspace(0.05 * p.mean, span, 33)
    fex = malaga_pdf(grid, p)
    for L in res.pdf_grid:
        fap = malaga_pdf_truncated(grid, p, L)
        for x, fa, fe in zip(grid, fap, fex):
            rows.append(CurvePoint(
                sweep_db=float(x), metric="pdf_overlay_L%d" % L,
                analytic=float(fa), quadrature=float(fe),
                flags=base_flags + ["x_axis:irradiance"]))
    return rows


_RUNNERS = {
    "outage": _run_outage,
    "ber": _run_ber,
    "capacity": _run_capacity,
}


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmfso",
        description="Dual-hop mmWave-RF / FSO relay link evaluator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("outage", "outage probability sweep"),
        ("ber", "average bit-error probability sweep"),
        ("capacity", "ergodic capacity sweep"),
        ("pdf", "turbulence-density truncation diagnostics"),
        ("validate", "run the registered cross-check oracles"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", metavar="PATH",
                         help="JSON scenario file (optional for validate)")
        cmd.add_argument("--out", metavar="DIR", default="out",
                         help="output directory (default: ./out)")
        cmd.add_argument("--seed", type=int, metavar="U64",
                         help="override mc.seed")
        cmd.add_argument("--trials", type=int, metavar="N",
                         help="override mc.trials")
        cmd.add_argument("--workers", type=int, metavar="W",
                         help="override mc.workers")
        cmd.add_argument("--metric", metavar="NAME",
                         help="emit only rows whose metric matches NAME "
                              "(validate: run only checks containing NAME)")
        cmd.add_argument("--engine", choices=("mc", "analytic", "both"),
                         default="both", help="evaluation route(s)")
    return parser


def _apply_overrides(cfg: dict[str, Any], args: argparse.Namespace) -> None:
    for key in ("seed", "trials", "workers"):
        val = getattr(args, key)
        if val is not None:
            if val < (0 if key == "seed" else 1):
                raise ConfigError("--%s" % key, "out of range")
            cfg["mc"][key] = val


def _run_validate(args: argparse.Namespace) -> int:
    from . import checks

    results = checks.run_all(pattern=args.metric)
    failed = [r for r in results if not r.passed]
    for r in results:
        print("%s %s (%s) [%.2fs]" % ("PASS" if r.passed else "FAIL",
                                      r.name, r.detail, r.elapsed_s))
    os.makedirs(args.out, exist_ok=True)
    write_sidecar(os.path.join(args.out, "validate.json"), {
        "command": "validate",
        "versions": _versions(),
        "checks": [dataclasses.asdict(r) for r in results],
        "failed": [r.name for r in failed],
    })
    if failed:
        print("%d of %d checks failed" % (len(failed), len(results)),
              file=sys.stderr)
        return 3
    print("all %d checks passed" % len(results))
    return 0


def _versions() -> dict[str, str]:
    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "validate":
        return _run_validate(args)
    if not args.config:
        raise ConfigError("--config", "required for %s" % args.command)
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    res = resolve(cfg)

    t0 = time.perf_counter()
    provenance: dict[str, Any] = {
        "bussgang_branch": res.branch,
        "pointing_in_closed_forms": (
            "mean-fold approximation" if res.pointing is not None else "absent"
        ),
        "interference_in_closed_forms": (
            "decoupled from the optical kernel" if res.interference.active
            else "absent"
        ),
        "varpi": varpi_for_detection(res.detection),
    }
    if args.command == "pdf":
        rows = _run_pdf(res, provenance)
    else:
        rows = _RUNNERS[args.command](res, args.engine, provenance)
    if args.metric:
        rows = [row for row in rows if row.metric == args.metric]
        if not rows:
            raise ConfigError("--metric", "no rows match %r" % args.metric)

    echo = res.linear_echo()
    digest = _config_hash(echo)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "%s.csv" % args.command)
    write_csv(csv_path, rows, digest)
    write_sidecar(os.path.join(args.out, "%s.json" % args.command), {
        "command": args.command,
        "engine": args.engine if args.command != "pdf" else "deterministic",
        "config_sha256": digest,
        "resolved": echo,
        "workers": res.workers,
        "provenance": provenance,
        "versions": _versions(),
        "rows_written": len(rows),
        "elapsed_s": round(time.perf_counter() - t0, 3),
    })
    mismatches = sum("mismatch" in row.flags for row in rows)
    print("wrote %d rows -> %s (%d mismatch-flagged)"
          % (len(rows), csv_path, mismatches))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as err:
        print("config error at %s" % err, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
