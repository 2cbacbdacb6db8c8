"""Domain types shared by every stage of the pipeline.

All quantities use MW / MWh / hours / $.  One time step is one hour, so a
power in MW and an energy per step in MWh are numerically interchangeable.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

INCOME_CLASSES = ("Lower", "Middle", "Upper")

# (upper income bound, xi, beta, lambda); the middle bracket is closed on both ends.
_INCOME_TABLE = (
    (120_000.0, 50.0, 10.0, 100.0),
    (300_000.0, 80.0, 9.0, 60.0),
    (math.inf, 100.0, 8.0, 40.0),
)


def income_to_params(income: float) -> tuple[float, float, float]:
    """Map annual income to (budget xi, utility coefficient beta, equity coefficient lambda)."""
    if not income > 0:
        raise ValueError(f"income must be positive, got {income!r}")
    if income < _INCOME_TABLE[0][0]:
        row = _INCOME_TABLE[0]
    elif income <= _INCOME_TABLE[1][0]:
        row = _INCOME_TABLE[1]
    else:
        row = _INCOME_TABLE[2]
    return row[1], row[2], row[3]


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GlobalParams:
    horizon_T: int = 24
    epsilon: float = 0.001
    theta: float = 0.5
    omega: float = 0.0  # -inf disables the Rawlsian floor
    c_peak: float = 8700.0  # $/MW
    c_bess: float = 0.1  # $/MWh
    r_max: float = 0.2
    tau_min: int = 2
    pi_plus: float = 0.4
    pi_minus: float = 0.2
    terminal_soc_frac: float = 0.4
    w_min: float = 0.1
    w_max: float = 2.0
    bess_total_cap: float = 5.0  # MWh, community limit
    enforce_ir: bool = True

    def with_overrides(self, **overrides) -> "GlobalParams":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown parameter(s): {sorted(unknown)}")
        return replace(self, **overrides)


@dataclass(frozen=True)
class Household:
    id: int
    income: float
    income_class: str
    demand: np.ndarray
    xi: float
    beta: float
    lam: float
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "demand", _frozen_array(self.demand))

    @classmethod
    def from_income(cls, id: int, income: float, income_class: str, demand, weight: float = 1.0):
        xi, beta, lam = income_to_params(income)
        return cls(id, float(income), income_class, demand, xi, beta, lam, weight)


@dataclass(frozen=True)
class SolarUnit:
    id: int
    generation: np.ndarray
    owner: int | None = None  # household whose rooftop this is, if any

    def __post_init__(self):
        object.__setattr__(self, "generation", _frozen_array(self.generation))


@dataclass(frozen=True)
class BessUnit:
    id: int
    capacity_E: float
    p_max: float
    eta_c: float = 0.95
    eta_d: float = 0.95
    soc_min_frac: float = 0.15
    soc_max_frac: float = 0.95
    soc_initial: float | None = None

    def __post_init__(self):
        if self.soc_initial is None:
            object.__setattr__(self, "soc_initial", 0.5 * self.capacity_E)


@dataclass(frozen=True)
class Scenario:
    households: tuple[Household, ...]
    solar: tuple[SolarUnit, ...]
    bess: tuple[BessUnit, ...]
    prices: np.ndarray
    params: GlobalParams = field(default_factory=GlobalParams)
    label: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "households", tuple(self.households))
        object.__setattr__(self, "solar", tuple(self.solar))
        object.__setattr__(self, "bess", tuple(self.bess))
        object.__setattr__(self, "prices", _frozen_array(self.prices))

    @property
    def N(self) -> int:
        return len(self.households)

    @property
    def T(self) -> int:
        return len(self.prices)

    @property
    def S(self) -> int:
        return len(self.solar)

    @property
    def B(self) -> int:
        return len(self.bess)

    def demand_matrix(self) -> np.ndarray:
        """N x T demand."""
        if not self.households:
            return np.zeros((0, self.T))
        return np.vstack([h.demand for h in self.households])

    def solar_matrix(self) -> np.ndarray:
        """S x T generation."""
        if not self.solar:
            return np.zeros((0, self.T))
        return np.vstack([s.generation for s in self.solar])

    def own_solar(self, i: int) -> np.ndarray:
        """Generation of the solar units owned by household index ``i``."""
        hid = self.households[i].id
        out = np.zeros(self.T)
        for unit in self.solar:
            if unit.owner == hid:
                out = out + unit.generation
        return out

    def weights(self) -> np.ndarray:
        return np.array([h.weight for h in self.households], dtype=float)

    def with_params(self, **overrides) -> "Scenario":
        return replace(self, params=self.params.with_overrides(**overrides))


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


def validate(scenario: Scenario) -> list[Violation]:
    """Return every invariant violation in ``scenario``; an empty list means valid."""
    out: list[Violation] = []
    p = scenario.params
    T = scenario.T

    if not 0 < p.epsilon < 1:
        out.append(Violation("params.epsilon", f"must lie in (0, 1), got {p.epsilon}"))
    if not 0 <= p.theta <= 1:
        out.append(Violation("params.theta", f"must lie in [0, 1], got {p.theta}"))
    if not p.w_min < p.w_max:
        out.append(Violation("params.w_min", f"w_min {p.w_min} must be below w_max {p.w_max}"))
    if p.horizon_T != T:
        out.append(Violation("params.horizon_T", f"horizon {p.horizon_T} != price series length {T}"))

    if scenario.N < 1:
        out.append(Violation("households", "at least one household is required"))
    for t in np.flatnonzero(~(scenario.prices >= 0)):
        out.append(Violation(f"prices[{t}]", f"negative or non-finite price {scenario.prices[t]}"))

    for k, h in enumerate(scenario.households):
        path = f"households[{k}]"
        if len(h.demand) != T:
            out.append(Violation(f"{path}.demand", f"length {len(h.demand)} != {T}"))
        for t in np.flatnonzero(~(h.demand >= 0)):
            out.append(Violation(f"{path}.demand[{t}]", f"household {h.id} has negative demand {h.demand[t]} at t={t}"))
        for name in ("xi", "beta", "lam"):
            if not getattr(h, name) > 0:
                out.append(Violation(f"{path}.{name}", f"must be positive, got {getattr(h, name)}"))
        if h.income_class not in INCOME_CLASSES:
            out.append(Violation(f"{path}.income_class", f"unknown class {h.income_class!r}"))
        if h.income > 0 and (h.xi, h.beta, h.lam) != income_to_params(h.income):
            out.append(Violation(path, f"(xi, beta, lambda) inconsistent with income {h.income}"))
        if not p.w_min <= h.weight <= p.w_max:
            out.append(Violation(f"{path}.weight", f"{h.weight} outside [{p.w_min}, {p.w_max}]"))

    for k, s in enumerate(scenario.solar):
        if len(s.generation) != T:
            out.append(Violation(f"solar[{k}].generation", f"length {len(s.generation)} != {T}"))
        for t in np.flatnonzero(~(s.generation >= 0)):
            out.append(Violation(f"solar[{k}].generation[{t}]", f"negative generation {s.generation[t]}"))

    total_cap = 0.0
    for k, b in enumerate(scenario.bess):
        path = f"bess[{k}]"
        total_cap += b.capacity_E
        if not b.capacity_E > 0:
            out.append(Violation(f"{path}.capacity_E", f"must be positive, got {b.capacity_E}"))
        if not b.p_max >= 0:
            out.append(Violation(f"{path}.p_max", f"must be nonnegative, got {b.p_max}"))
        for name in ("eta_c", "eta_d"):
            eta = getattr(b, name)
            if not 0 < eta <= 1:
                out.append(Violation(f"{path}.{name}", f"must lie in (0, 1], got {eta}"))
        if not 0 <= b.soc_min_frac < b.soc_max_frac <= 1:
            out.append(Violation(f"{path}.soc_min_frac",
                                 f"need 0 <= soc_min_frac < soc_max_frac <= 1, got {b.soc_min_frac}, {b.soc_max_frac}"))
        elif not b.soc_min_frac * b.capacity_E - 1e-12 <= b.soc_initial <= b.soc_max_frac * b.capacity_E + 1e-12:
            out.append(Violation(f"{path}.soc_initial", f"{b.soc_initial} outside SOC bounds"))
    if total_cap > p.bess_total_cap + 1e-9:
        out.append(Violation("bess", f"total capacity {total_cap} exceeds community limit {p.bess_total_cap}"))
    return out


# ---------------------------------------------------------------- JSON

def _num(x: float):
    x = float(x)
    return x if math.isfinite(x) else None


def scenario_to_dict(scenario: Scenario) -> dict:
    params = asdict(scenario.params)
    params["omega"] = _num(params["omega"])
    return {
        "households": [
            {
                "id": h.id,
                "income": h.income,
                "income_class": h.income_class,
                "demand": h.demand.tolist(),
                "xi": h.xi,
                "beta": h.beta,
                "lambda": h.lam,
                "weight": h.weight,
            }
            for h in scenario.households
        ],
        "solar": [{"id": s.id, "generation": s.generation.tolist(), "owner": s.owner} for s in scenario.solar],
        "bess": [
            {
                "id": b.id,
                "capacity_E": b.capacity_E,
                "p_max": b.p_max,
                "eta_c": b.eta_c,
                "eta_d": b.eta_d,
                "soc_min_frac": b.soc_min_frac,
                "soc_max_frac": b.soc_max_frac,
                "soc_initial": b.soc_initial,
            }
            for b in scenario.bess
        ],
        "prices": scenario.prices.tolist(),
        "params": params,
        "label": scenario.label,
    }


def scenario_from_dict(data: dict) -> Scenario:
    missing = {"households", "solar", "bess", "prices", "params", "label"} - set(data)
    if missing:
        raise ValueError(f"scenario document missing keys: {sorted(missing)}")
    params = dict(data["params"])
    if params.get("omega") is None:
        params["omega"] = -math.inf
    households = [
        Household(
            id=int(h["id"]),
            income=float(h["income"]),
            income_class=h["income_class"],
            demand=h["demand"],
            xi=float(h["xi"]),
            beta=float(h["beta"]),
            lam=float(h["lambda"]),
            weight=float(h.get("weight", 1.0)),
        )
        for h in data["households"]
    ]
    solar = [SolarUnit(int(s["id"]), s["generation"], s.get("owner")) for s in data["solar"]]
    bess = [BessUnit(**{k: (int(v) if k == "id" else v) for k, v in b.items()}) for b in data["bess"]]
    return Scenario(households, solar, bess, data["prices"], GlobalParams(**params), data["label"])


def dumps_json(obj) -> str:
    """Canonical JSON text used for every artifact (sorted keys, stable float repr)."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps_json(scenario_to_dict(scenario)))


def read_scenario(path: str | Path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def check_weights(weights: Sequence[float] | np.ndarray, params: GlobalParams, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"expected {n} weights, got shape {w.shape}")
    if np.any(w < params.w_min - 1e-12) or np.any(w > params.w_max + 1e-12):
        raise ValueError(f"weights must lie in [{params.w_min}, {params.w_max}]")
    return w

