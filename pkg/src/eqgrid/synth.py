"""Synthetic community generation: incomes, class-scaled load/PV, BESS fleet."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    GlobalParams,
    BessUnit,
    Household,
    Scenario,
    SolarUnit,
    income_to_params,
    validate,
)
from .rng import GLOBAL, stream

SCENARIO_KINDS = ("HighDemand", "LowDemand", "HighPrice", "HighSolar", "Weekday", "Weekend")

DEFAULT_INCOME_LOGNORMAL = {
    "Lower": (math.log(90_000.0), 0.15),
    "Middle": (math.log(200_000.0), 0.25),
    "Upper": (math.log(420_000.0), 0.3),
}

# (load factor range, pv factor range, multiplicative noise sigma)
CLASS_SCALING = {
    "Upper": ((1.0, 1.0), (1.0, 1.0), 0.0),
    "Middle": ((0.4, 0.8), (0.5, 0.9), 0.05),
    "Lower": ((0.1, 0.3), (0.1, 0.4), 0.2),
}

_KIND_ADJUST = {
    # load multiplier, pv multiplier
    "HighDemand": (1.5, 1.0),
    "LowDemand": (0.6, 1.0),
    "HighPrice": (1.0, 1.0),
    "HighSolar": (1.0, 1.8),
    "Weekday": (1.0, 1.0),
    "Weekend": (1.0, 1.0),
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 1
    n_upper: int = 10
    n_middle: int = 20
    n_lower: int = 20
    base_csv: str | None = None  # None selects the embedded parametric profiles
    scenario_kind: str = "Weekday"
    income_lognormal: dict = field(default_factory=lambda: dict(DEFAULT_INCOME_LOGNORMAL))
    horizon_T: int = 24
    load_peak_mw: float = 0.08  # upper-class household peak on the embedded profile
    pv_peak_mw: float = 0.1
    fleet_total_E: float = 5.0
    n_bess: int = 5
    params: GlobalParams = field(default_factory=GlobalParams)

    def __post_init__(self):
        counts = (self.n_upper, self.n_middle, self.n_lower)
        if min(counts) < 0 or sum(counts) < 1:
            raise ValueError(f"household counts must be >= 0 with total >= 1, got {counts}")
        if self.scenario_kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.scenario_kind!r}; expected one of {SCENARIO_KINDS}")
        for cls, (_, sigma) in self.income_lognormal.items():
            if not sigma > 0:
                raise ValueError(f"income sigma for {cls} must be positive")


def draw_income(income_class: str, rng: np.random.Generator, lognormal: dict | None = None) -> float:
    mu, sigma = (lognormal or DEFAULT_INCOME_LOGNORMAL)[income_class]
    return float(rng.lognormal(mu, sigma))


def scale_class_profiles(
    base_load,
    base_pv,
    income_class: str,
    rng: np.random.Generator,
    *,
    load_factor: float | None = None,
    pv_factor: float | None = None,
    noise_sigma: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Derive one household's load and PV from the base profiles of its class.

    Factors are drawn uniformly from the class ranges unless given; noise is
    multiplicative Gaussian per hour, and the result is clamped at zero.
    """
    base_load = np.asarray(base_load, dtype=float)
    base_pv = np.asarray(base_pv, dtype=float)
    if base_load.shape != base_pv.shape:
        raise ValueError(f"base load {base_load.shape} and PV {base_pv.shape} lengths differ")
    (l_lo, l_hi), (p_lo, p_hi), sigma = CLASS_SCALING[income_class]
    # draw order is fixed so overriding one factor never shifts the others
    drawn_load = rng.uniform(l_lo, l_hi)
    drawn_pv = rng.uniform(p_lo, p_hi)
    z = rng.standard_normal(base_load.shape)
    lf = drawn_load if load_factor is None else load_factor
    pf = drawn_pv if pv_factor is None else pv_factor
    s = sigma if noise_sigma is None else noise_sigma
    load = np.maximum(base_load * lf * (1.0 + s * z), 0.0)
    pv = np.maximum(base_pv * pf, 0.0)
    return load, pv


def allocate_bess(households, fleet_total_E: float, n_units: int, *, eta: float = 0.95) -> list[BessUnit]:
    """Split the fleet into ``n_units`` batteries sized by their household cluster's consumption.

    Households are clustered contiguously in id order.
    """
    if not households:
        raise ValueError("cannot size a BESS fleet for an empty community")
    if not fleet_total_E > 0 or n_units < 1:
        raise ValueError("fleet_total_E must be positive and n_units >= 1")
    ordered = sorted(households, key=lambda h: h.id)
    means = np.array([float(np.mean(h.demand)) for h in ordered])
    clusters = np.array_split(np.arange(len(ordered)), n_units)
    load = np.array([means[c].sum() for c in clusters])
    if load.sum() > 0:
        share = load / load.sum()
    else:
        share = np.full(n_units, 1.0 / n_units)
    caps = share * fleet_total_E
    # put the rounding remainder on the largest unit so the sum is exact
    caps[np.argmax(caps)] += fleet_total_E - caps.sum()
    return [BessUnit(id=b, capacity_E=float(caps[b]), p_max=float(caps[b]) / 2.0, eta_c=eta, eta_d=eta)
            for b in range(n_units)]


# ------------------------------------------------------------ base profiles

def _bump(hours: np.ndarray, centre: float, width: float) -> np.ndarray:
    d = np.abs(hours - centre) % 24.0
    d = np.minimum(d, 24.0 - d)
    return np.exp(-0.5 * (d / width) ** 2)


def parametric_load(T: int = 24, *, peak: float = 1.0, morning_amp: float = 0.55,
                    evening_amp: float = 1.0, shift: float = 0.0) -> np.ndarray:
    """Double-peaked diurnal load, normalised so that its maximum equals ``peak``."""
    h = np.arange(T, dtype=float)
    shape = 0.45 + morning_amp * _bump(h, 7.5 + shift, 1.6) + evening_amp * _bump(h, 19.0 + shift, 2.2)
    return peak * shape / shape.max()


def parametric_pv(T: int = 24, *, peak: float = 1.0) -> np.ndarray:
    """Half-sine PV output between 06:00 and 18:00."""
    h = np.arange(T, dtype=float)
    return peak * np.clip(np.sin(np.pi * (h - 6.0) / 12.0), 0.0, None) * ((h >= 6) & (h <= 18))


def parametric_price(T: int = 24) -> np.ndarray:
    h = np.arange(T, dtype=float)
    return 100.0 + 60.0 * _bump(h, 8.0, 2.0) + 120.0 * _bump(h, 19.0, 2.0)


def read_base_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read base profiles: one column per entity, one row per hour.

    Columns whose header starts with ``load`` are load profiles and columns
    starting with ``pv`` are PV profiles; the k-th load column pairs with the
    k-th PV column.  Returns (loads, pvs), each profiles x hours.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"base profile CSV not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header row and at least one hour")
    header = [c.strip() for c in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric cell ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    load_cols = [k for k, name in enumerate(header) if name.lower().startswith("load")]
    pv_cols = [k for k, name in enumerate(header) if name.lower().startswith("pv")]
    if not load_cols or len(load_cols) != len(pv_cols):
        raise ValueError(f"{path}: need matching numbers of load* and pv* columns, got {len(load_cols)}/{len(pv_cols)}")
    if np.any(data[:, load_cols + pv_cols] < 0):
        raise ValueError(f"{path}: profiles must be nonnegative")
    return data[:, load_cols].T.copy(), data[:, pv_cols].T.copy()


def _base_profiles(config: SynthConfig, hid: int, csv_profiles) -> tuple[np.ndarray, np.ndarray]:
    kind = config.scenario_kind
    T = config.horizon_T
    if csv_profiles is not None:
        loads, pvs = csv_profiles
        k = hid % loads.shape[0]
        load, pv = loads[k].astype(float), pvs[k].astype(float)
        if kind == "Weekend":
            load = np.roll(load, 2)
    else:
        rng = stream(config.seed, hid, "base_profile")
        amp = rng.uniform(0.85, 1.15)
        phase = rng.uniform(-1.0, 1.0)
        pv_amp = rng.uniform(0.8, 1.2)
        morning = 0.55 * (0.5 if kind == "Weekend" else 1.0)
        shift = phase + (2.0 if kind == "Weekend" else 0.0)
        load = parametric_load(T, peak=config.load_peak_mw * amp, morning_amp=morning, shift=shift)
        pv = parametric_pv(T, peak=config.pv_peak_mw * pv_amp)
    load_mult, pv_mult = _KIND_ADJUST[kind]
    return load * load_mult, pv * pv_mult


def scenario_prices(config: SynthConfig) -> np.ndarray:
    base = parametric_price(config.horizon_T)
    if config.scenario_kind != "HighPrice":
        return base
    mean = base.mean()
    swing = stream(config.seed, GLOBAL, "price_swing").uniform(-0.5, 0.5, size=base.shape)
    return np.maximum((mean + 2.0 * (base - mean)) * (1.0 + swing), 0.0)


def build_scenario(config: SynthConfig) -> Scenario:
    """Generate a validated community scenario; identical configs give identical scenarios."""
    classes = ["Upper"] * config.n_upper + ["Middle"] * config.n_middle + ["Lower"] * config.n_lower
    csv_profiles = read_base_csv(config.base_csv) if config.base_csv else None
    if csv_profiles is not None and csv_profiles[0].shape[1] != config.horizon_T:
        raise ValueError(f"{config.base_csv}: {csv_profiles[0].shape[1]} rows, expected {config.horizon_T}")

    households, solar = [], []
    for hid, cls in enumerate(classes):
        base_load, base_pv = _base_profiles(config, hid, csv_profiles)
        load, pv = scale_class_profiles(base_load, base_pv, cls, stream(config.seed, hid, "class_scaling"))
        income = draw_income(cls, stream(config.seed, hid, "income"), config.income_lognormal)
        households.append(Household.from_income(hid, income, cls, load))
        solar.append(SolarUnit(id=hid, generation=pv, owner=hid))

    bess = allocate_bess(households, config.fleet_total_E, config.n_bess)
    params = config.params
    if params.horizon_T != config.horizon_T:
        params = params.with_overrides(horizon_T=config.horizon_T)
    scenario = Scenario(households, solar, bess, scenario_prices(config), params,
                        label=f"{config.scenario_kind}_s{config.seed}")
    problems = validate(scenario)
    if problems:
        raise ValueError("generated scenario is invalid: " + "; ".join(map(str, problems)))
    return scenario


__all__ = [
    "SCENARIO_KINDS",
    "SynthConfig",
    "allocate_bess",
    "build_scenario",
    "draw_income",
    "income_to_params",
    "read_base_csv",
    "scale_class_profiles",
]
