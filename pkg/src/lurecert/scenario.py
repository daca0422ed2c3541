"""Scenario files (TOML) and matrix literals.

See the README for the grammar.  Matrices are either nested arrays
(row-major) or tables ``{shape = [rows, cols], data = [...]}`` with the data
listed row by row.  Complex entries are strings such as ``"1-2j"``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dissipativity import SupplyRate
from .errors import RateUnresolvable, ScenarioError
from .nonlinear import (ball_sample, default_horizon, estimate_decay_rate, make_nonlinearity,
                        simulate_batch)
from .oscillator import OscillatorParams, optimal_linear_rate
from .systems import LtiSystem


def _scalar(x):
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            return complex(s.replace("i", "j")) if ("j" in s or "i" in s) else float(s)
        except ValueError as exc:
            raise ScenarioError(f"cannot parse number {x!r}") from exc
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ScenarioError(f"expected a number, got {x!r}")
    return x


def parse_matrix(obj, name="matrix"):
    """Matrix literal to a 2-d array (complex if any entry is complex)."""
    if isinstance(obj, dict):
        if "shape" not in obj or "data" not in obj:
            raise ScenarioError(f"{name}: table form needs 'shape' and 'data'")
        shape = tuple(int(s) for s in obj["shape"])
        vals = [_scalar(v) for v in obj["data"]]
        if len(shape) != 2 or shape[0] * shape[1] != len(vals):
            raise ScenarioError(f"{name}: shape {shape} does not match {len(vals)} entries")
        arr = np.array(vals).reshape(shape)
    elif isinstance(obj, list):
        rows = obj if obj and isinstance(obj[0], list) else [obj]
        width = {len(r) for r in rows}
        if len(width) != 1:
            raise ScenarioError(f"{name}: ragged rows")
        arr = np.array([[_scalar(v) for v in r] for r in rows])
    else:
        arr = np.array([[_scalar(obj)]])
    if np.iscomplexobj(arr) and np.all(arr.imag == 0):
        arr = arr.real
    return arr


def format_matrix(M):
    """Nested-list literal (complex entries as strings), inverse of `parse_matrix`."""
    M = np.atleast_2d(M)
    if np.iscomplexobj(M):
        return [[repr(complex(v)) if v.imag else float(v.real) for v in row] for row in M]
    return [[float(v) for v in row] for row in M]


@dataclass
class SimulationSettings:
    dt: float = 1e-3
    T: float = None
    n_initial_conditions: int = 50
    seed: int = 0
    record_every: int = 10
    radius: float = 1.0


@dataclass
class Scenario:
    name: str
    criterion: str = "auto"
    oscillator: OscillatorParams = None
    quasi_convex: bool = False
    time_varying: bool = False
    system: LtiSystem = None
    supply: SupplyRate = None
    fdi: dict = field(default_factory=dict)
    nonlinearity: dict = None
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    output_dir: str = None
    source: str = None

    def build_nonlinearity(self):
        if self.nonlinearity is None:
            raise ScenarioError("scenario has no [nonlinearity] section")
        spec = dict(self.nonlinearity)
        kind = spec.pop("kind", None)
        if kind is None:
            raise ScenarioError("[nonlinearity] needs 'kind'")
        try:
            return make_nonlinearity(kind, **spec)
        except (TypeError, ValueError, KeyError) as exc:
            raise ScenarioError(f"[nonlinearity]: {exc}") from exc

    def horizon(self):
        if self.simulation.T is not None:
            return self.simulation.T
        r = self.oscillator.r if self.oscillator is not None else 1.0
        return default_horizon(r)

    def initial_conditions(self):
        """Seeded uniform samples of the ball of radius ``simulation.radius``."""
        if self.oscillator is not None:
            n = 2 * self.oscillator.d
        elif self.system is not None:
            n = self.system.n_states
        else:
            raise ScenarioError("simulation needs [oscillator] or [system]")
        sim = self.simulation
        rng = np.random.default_rng(sim.seed)
        return ball_sample(rng, sim.n_initial_conditions, n, sim.radius)

    def simulate(self):
        """Simulate every initial condition; returns trajectories and rate estimates.

        A trajectory that decays below the fitting floor keeps the ``inf``
        sentinel estimate.
        """
        phi = self.build_nonlinearity()
        target = self.oscillator if self.oscillator is not None else self.system
        Z0 = self.initial_conditions()
        trajs = simulate_batch(target, phi, Z0, self.horizon(), self.simulation.dt,
                               self.simulation.record_every)
        rates = []
        for tr in trajs:
            try:
                rates.append(estimate_decay_rate(tr))
            except RateUnresolvable as exc:
                rates.append(exc.estimate)
        return trajs, rates

    def resolved(self):
        """Fully resolved parameters, for embedding in reports."""
        out = {"name": self.name, "criterion": self.criterion,
               "quasi_convex": self.quasi_convex, "time_varying": self.time_varying}
        if self.oscillator is not None:
            out["oscillator"] = {k: (v if np.isfinite(v) else "inf") if k != "d" else v
                                 for k, v in self.oscillator.to_dict().items()}
        if self.system is not None:
            out["system"] = {k: format_matrix(getattr(self.system, k)) for k in "ABCD"}
        if self.supply is not None:
            out["supply"] = {k: format_matrix(getattr(self.supply, k)) for k in "QSR"}
        if self.fdi:
            out["fdi"] = dict(self.fdi)
        if self.nonlinearity is not None:
            out["nonlinearity"] = dict(self.nonlinearity)
        sim = self.simulation
        out["simulation"] = {"dt": sim.dt, "T": self.horizon(),
                             "n_initial_conditions": sim.n_initial_conditions,
                             "seed": sim.seed, "record_every": sim.record_every,
                             "radius": sim.radius}
        return out


_TOP_KEYS = {"name", "criterion", "quasi_convex", "time_varying", "oscillator", "system",
             "supply", "fdi", "nonlinearity", "simulation", "output"}


def _oscillator(tab):
    tab = dict(tab)
    unknown = set(tab) - {"d", "m", "L", "sigma", "tau", "r"}
    if unknown:
        raise ScenarioError(f"[oscillator]: unknown keys {sorted(unknown)}")
    m = float(_scalar(tab.get("m", 1.0)))
    sigma = float(_scalar(tab.get("sigma", 1.0)))
    tau = tab.get("tau", 0.0)
    r = tab.get("r", None)
    if tau == "optimal" or r == "optimal":
        r_star, tau_star = optimal_linear_rate(m, sigma)
        tau = tau_star if tau == "optimal" else tau
        r = r_star if r == "optimal" else r
    if r is None:
        raise ScenarioError("[oscillator] needs 'r'")
    try:
        return OscillatorParams(d=int(tab.get("d", 1)), m=m,
                                L=float(_scalar(tab.get("L", math.inf))),
                                sigma=sigma, tau=float(_scalar(tau)), r=float(_scalar(r)))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"[oscillator]: {exc}") from exc


def scenario_from_dict(data, source=None):
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"unknown top-level keys {sorted(unknown)}")
    sc = Scenario(name=str(data.get("name", "scenario")),
                  criterion=str(data.get("criterion", "auto")),
                  quasi_convex=bool(data.get("quasi_convex", False)),
                  time_varying=bool(data.get("time_varying", False)),
                  source=source)
    if "oscillator" in data:
        sc.oscillator = _oscillator(data["oscillator"])
    if "system" in data:
        tab = data["system"]
        try:
            mats = {k: parse_matrix(tab[k], k) for k in ("A", "B") }
            C = parse_matrix(tab["C"], "C") if "C" in tab else None
            D = parse_matrix(tab["D"], "D") if "D" in tab else None
            sc.system = LtiSystem(mats["A"], mats["B"], C, D)
        except KeyError as exc:
            raise ScenarioError(f"[system] is missing {exc}") from exc
        except ValueError as exc:
            raise ScenarioError(f"[system]: {exc}") from exc
    if "supply" in data:
        tab = data["supply"]
        try:
            sc.supply = SupplyRate(parse_matrix(tab["Q"], "Q"), parse_matrix(tab["S"], "S"),
                                   parse_matrix(tab["R"], "R"))
        except KeyError as exc:
            raise ScenarioError(f"[supply] is missing {exc}") from exc
        except ValueError as exc:
            raise ScenarioError(f"[supply]: {exc}") from exc
        if sc.system is not None and (sc.supply.n_states != sc.system.n_states
                                      or sc.supply.n_inputs != sc.system.n_inputs):
            raise ScenarioError("[supply] dimensions do not match [system]")
    if "fdi" in data:
        fdi = dict(data["fdi"])
        unknown = set(fdi) - {"r", "mode"}
        if unknown:
            raise ScenarioError(f"[fdi]: unknown keys {sorted(unknown)}")
        if fdi.get("mode", "axis") not in ("axis", "closed-right"):
            raise ScenarioError("[fdi] mode must be 'axis' or 'closed-right'")
        sc.fdi = fdi
    if "nonlinearity" in data:
        sc.nonlinearity = dict(data["nonlinearity"])
        sc.build_nonlinearity()
    if "simulation" in data:
        tab = dict(data["simulation"])
        unknown = set(tab) - set(SimulationSettings.__dataclass_fields__)
        if unknown:
            raise ScenarioError(f"[simulation]: unknown keys {sorted(unknown)}")
        sc.simulation = SimulationSettings(**tab)
        if sc.simulation.dt <= 0 or sc.simulation.n_initial_conditions < 1:
            raise ScenarioError("[simulation] needs dt > 0 and n_initial_conditions >= 1")
    if "output" in data:
        sc.output_dir = data["output"].get("dir")
    if sc.criterion == "raw_fdi" and (sc.system is None or sc.supply is None):
        raise ScenarioError("raw_fdi scenarios need [system] and [supply]")
    return sc


def load_scenario(path):
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_dict(data, source=str(path))
