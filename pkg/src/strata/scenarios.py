"""Scenario files: a line-oriented, typed description of a model run.

Format: ``key = value`` lines grouped under ``[section]`` headers, ``#``
comments, blank lines ignored.  ``schema_version = 1`` must appear before
the first section.  Unknown sections or keys are rejected with the file
name and line number, as are type errors, so a scenario either loads into
a validated setup or fails loudly.

Sections:

[model]       variant, rho (space-separated, top to bottom), g, h,
              formulation = canonical | primitive (rigid-lid-3 only)
[grid]        x0, x1, m
[initial]     kind = uniform | parabolae | mirrored-parabolae |
                     gaussian-bump | symmetric-pair | file
              plus kind-specific keys (see the generator docstrings)
[integration] t_end, cfl, order, boundary, sample_dt, shock,
              shock_ratio, gradient_factor, nu
[diagnostics] hyperbolicity, symmetry
[analysis]    samples, seed   (used by the analyze subcommands)
[output]      fields_stride

The built-in generators evaluate their profiles analytically at the cell
centers, so a scenario pins its initial data exactly at every resolution.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
import numpy as np

from .core import ConfigError, Grid1D, LayerConfig

VARIANTS = ("rigid-lid-3", "boussinesq-3", "symmetric",
            "free-surface-2", "free-surface-3", "free-surface-n")


class ScenarioError(ValueError):
    """Malformed scenario file; message carries file and line."""


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_KNOWN_KEYS = {
    None: {"schema_version", "name", "description"},
    "model": {"variant", "rho", "g", "h", "formulation"},
    "grid": {"x0", "x1", "m"},
    "initial": {"kind", "zeta1", "zeta2", "sigma1", "sigma2", "zeta", "sigma",
                "amplitude", "amplitude2", "shear", "shear2", "width", "center",
                "path", "eta", "u"},
    "integration": {"t_end", "cfl", "order", "boundary", "sample_dt",
                    "shock", "shock_ratio", "gradient_factor", "nu"},
    "diagnostics": {"hyperbolicity", "symmetry"},
    "analysis": {"samples", "seed"},
    "output": {"fields_stride"},
}


def _parse_lines(text: str, source: str) -> dict:
    data = {None: {}}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _KNOWN_KEYS:
                raise ScenarioError(f"{source}:{lineno}: unknown section [{section}]")
            data.setdefault(section, {})
            continue
        if "=" not in line:
            raise ScenarioError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if key not in _KNOWN_KEYS[section]:
            where = f"[{section}]" if section else "header"
            raise ScenarioError(f"{source}:{lineno}: unknown key {key!r} in {where}")
        if key in data.setdefault(section, {}):
            raise ScenarioError(f"{source}:{lineno}: duplicate key {key!r}")
        data[section][key] = (value, lineno)
    return data


class _Section:
    def __init__(self, data, section, source):
        self.raw = data.get(section, {})
        self.section = section
        self.source = source

    def _get(self, key, required, default):
        if key not in self.raw:
            if required:
                raise ScenarioError(
                    f"{self.source}: missing required key {key!r} in [{self.section}]")
            return None, None
        return self.raw[key]

    def _convert(self, key, conv, typename, required=False, default=None):
        value, lineno = self._get(key, required, default)
        if value is None:
            return default
        try:
            return conv(value)
        except (TypeError, ValueError):
            raise ScenarioError(
                f"{self.source}:{lineno}: key {key!r} needs a {typename}, got {value!r}")

    def str(self, key, required=False, default=None, choices=None):
        value, lineno = self._get(key, required, default)
        if value is None:
            return default
        if choices and value not in choices:
            raise ScenarioError(
                f"{self.source}:{lineno}: {key!r} must be one of {sorted(choices)}, got {value!r}")
        return value

    def float(self, key, required=False, default=None):
        return self._convert(key, float, "number", required, default)

    def int(self, key, required=False, default=None):
        return self._convert(key, int, "integer", required, default)

    def bool(self, key, default=False):
        value, lineno = self._get(key, False, default)
        if value is None:
            return default
        if value.lower() in ("true", "yes", "1"):
            return True
        if value.lower() in ("false", "no", "0"):
            return False
        raise ScenarioError(f"{self.source}:{lineno}: key {key!r} needs a boolean")

    def floats(self, key, required=False, default=None):
        value, lineno = self._get(key, required, default)
        if value is None:
            return default
        try:
            return tuple(float(v) for v in value.replace(",", " ").split())
        except ValueError:
            raise ScenarioError(f"{self.source}:{lineno}: key {key!r} needs numbers")


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    variant: str
    formulation: str
    config: LayerConfig
    grid: Grid1D
    initial: dict
    t_end: float
    cfl: float
    order: int
    boundary: str
    sample_dt: float | None
    shock_mode: str | None
    shock_ratio: float
    gradient_factor: float
    nu: float
    monitor_hyperbolicity: bool
    monitor_symmetry: bool
    analysis_samples: int
    analysis_seed: int
    fields_stride: int


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    data = _parse_lines(text, source)
    header = _Section(data, None, source)
    version = header.int("schema_version", required=True)
    if version != 1:
        raise ScenarioError(f"{source}: unsupported schema_version {version}")
    name = header.str("name", required=True)
    description = header.str("description", default="")

    model = _Section(data, "model", source)
    variant = model.str("variant", required=True, choices=set(VARIANTS))
    rho = model.floats("rho", required=True)
    g = model.float("g", default=1.0)
    h = model.float("h")
    formulation = model.str("formulation", default="canonical",
                            choices={"canonical", "primitive"})
    if formulation == "primitive" and variant != "rigid-lid-3":
        raise ScenarioError(f"{source}: primitive formulation is rigid-lid-3 only")
    needs_lid = variant in ("rigid-lid-3", "boussinesq-3", "symmetric")
    if needs_lid and h is None:
        raise ScenarioError(f"{source}: variant {variant} needs h in [model]")
    if not needs_lid and h is not None:
        raise ScenarioError(f"{source}: free-surface variant takes no h")
    try:
        config = LayerConfig(rho, g=g, h=h)
    except ConfigError as exc:
        raise ScenarioError(f"{source}: bad [model]: {exc}")
    if variant in ("rigid-lid-3", "boussinesq-3", "symmetric") and config.n != 3:
        raise ScenarioError(f"{source}: variant {variant} needs exactly 3 densities")
    if variant == "free-surface-2" and config.n != 2:
        raise ScenarioError(f"{source}: free-surface-2 needs exactly 2 densities")
    if variant == "free-surface-3" and config.n != 3:
        raise ScenarioError(f"{source}: free-surface-3 needs exactly 3 densities")

    gsec = _Section(data, "grid", source)
    try:
        grid = Grid1D(gsec.float("x0", required=True), gsec.float("x1", required=True),
                      gsec.int("m", required=True))
    except ConfigError as exc:
        raise ScenarioError(f"{source}: bad [grid]: {exc}")

    init = _Section(data, "initial", source)
    kind = init.str("kind", required=True, choices={
        "uniform", "parabolae", "mirrored-parabolae", "gaussian-bump",
        "symmetric-pair", "file"})
    initial = {"kind": kind}
    for key in ("zeta1", "zeta2", "sigma1", "sigma2", "zeta", "sigma",
                "amplitude", "amplitude2", "shear", "width", "center"):
        v = init.float(key)
        if v is not None:
            initial[key] = v
    path = init.str("path")
    if path is not None:
        initial["path"] = path
    for key in ("eta", "u"):
        v = init.floats(key)
        if v is not None:
            initial[key] = v

    isec = _Section(data, "integration", source)
    shock_mode = isec.str("shock", default=None,
                          choices={"refinement", "gradient", "off"})
    scenario = Scenario(
        name=name, description=description, variant=variant,
        formulation=formulation, config=config, grid=grid, initial=initial,
        t_end=isec.float("t_end", default=0.0),
        cfl=isec.float("cfl", default=0.4),
        order=isec.int("order", default=2),
        boundary=isec.str("boundary", default="clamp", choices={"clamp", "periodic"}),
        sample_dt=isec.float("sample_dt"),
        shock_mode=None if shock_mode in (None, "off") else shock_mode,
        shock_ratio=isec.float("shock_ratio", default=1.6),
        gradient_factor=isec.float("gradient_factor", default=25.0),
        nu=isec.float("nu", default=0.0),
        monitor_hyperbolicity=_Section(data, "diagnostics", source).bool("hyperbolicity", True),
        monitor_symmetry=_Section(data, "diagnostics", source).bool("symmetry", False),
        analysis_samples=_Section(data, "analysis", source).int("samples", default=100),
        analysis_seed=_Section(data, "analysis", source).int("seed", default=20240901),
        fields_stride=_Section(data, "output", source).int("fields_stride", default=10),
    )
    return scenario


def load_scenario(path_or_name) -> Scenario:
    """Load from a file path, falling back to the built-in registry."""
    import os
    p = str(path_or_name)
    if os.path.exists(p):
        with open(p, "r") as fh:
            return parse_scenario(fh.read(), source=p)
    if p in builtin_names():
        return parse_scenario(builtin_text(p), source=f"builtin:{p}")
    raise ScenarioError(f"no such scenario file or built-in name: {p}")


# ---------------------------------------------------------------------------
# initial-condition generators
# ---------------------------------------------------------------------------

def parabolic_interface_thicknesses(x, h):
    """Spliced parabolic thickness profiles over flat far fields.

    The bottom-layer bump sits on (-1, 1), the middle-layer dip on (0, 2):

        eta3 = h/4 (1 - x^2) + h/5   on (-1, 1), else h/5,
        eta2 = h/3 (x^2 - 2x) + 2h/5 on (0, 2),  else 2h/5.

    The profiles are continuous, flat outside (-1, 2), and their overlap
    is asymmetric, which makes the initial pressure imbalance non-zero
    even at rest.
    """
    x = np.asarray(x, dtype=float)
    eta3 = np.where((x > -1) & (x < 1), h / 4 * (1 - x**2) + h / 5, h / 5)
    eta2 = np.where((x > 0) & (x < 2), h / 3 * (x**2 - 2 * x) + 2 * h / 5, 2 * h / 5)
    eta1 = h - eta2 - eta3
    return np.array([eta1, eta2, eta3])


def mirrored_interface_thicknesses(x, h):
    """Even-parity variant of the parabolic profiles (both bumps centered
    at x = 0): the imbalance integrand is odd, so P_Delta vanishes."""
    x = np.asarray(x, dtype=float)
    eta3 = np.where((x > -1) & (x < 1), h / 4 * (1 - x**2) + h / 5, h / 5)
    eta2 = np.where((x > -1) & (x < 1), h / 3 * (x**2 - 1) + 2 * h / 5, 2 * h / 5)
    eta1 = h - eta2 - eta3
    return np.array([eta1, eta2, eta3])


def gaussian_bump(x, center, width, amplitude):
    x = np.asarray(x, dtype=float)
    return amplitude * np.exp(-((x - center) / width) ** 2)


def build_initial(scenario: Scenario):
    """Initial stacked fields and the far-field tuple for the scenario's
    evolution variables."""
    cfg = scenario.config
    grid = scenario.grid
    x = grid.centers()
    kind = scenario.initial["kind"]
    p = scenario.initial

    if scenario.variant in ("rigid-lid-3", "boussinesq-3"):
        h = cfg.h
        if kind == "uniform":
            z1 = np.full(grid.m, p.get("zeta1", 0.6 * h))
            z2 = np.full(grid.m, p.get("zeta2", 0.2 * h))
            s1 = np.full(grid.m, p.get("sigma1", 0.0))
            s2 = np.full(grid.m, p.get("sigma2", 0.0))
        elif kind == "parabolae":
            eta = parabolic_interface_thicknesses(x, h)
            z1, z2 = eta[1] + eta[2], eta[2]
            s1 = np.zeros(grid.m)
            s2 = np.zeros(grid.m)
        elif kind == "mirrored-parabolae":
            eta = mirrored_interface_thicknesses(x, h)
            z1, z2 = eta[1] + eta[2], eta[2]
            s1 = np.zeros(grid.m)
            s2 = np.zeros(grid.m)
        elif kind == "gaussian-bump":
            base1 = p.get("zeta1", 0.6 * h)
            base2 = p.get("zeta2", 0.2 * h)
            width = p.get("width", 1.0)
            center = p.get("center", 0.0)
            z1 = base1 + gaussian_bump(x, center, width, p.get("amplitude", 0.05 * h))
            z2 = base2 + gaussian_bump(x, center + 0.5 * width, width,
                                       p.get("amplitude2", -0.03 * h))
            s1 = gaussian_bump(x, center, width, p.get("shear", 0.0))
            s2 = np.zeros(grid.m)
        elif kind == "symmetric-pair":
            width = p.get("width", 1.0)
            center = p.get("center", 0.0)
            z2 = p.get("zeta", 0.25 * h) + gaussian_bump(x, center, width,
                                                         p.get("amplitude", 0.05 * h))
            z1 = h - z2
            s2 = np.full(grid.m, p.get("sigma", 0.0)) \
                + gaussian_bump(x, center, width, p.get("shear", 0.0))
            s1 = -s2
        elif kind == "file":
            return _load_tabulated(scenario, x, nfields=4)
        else:
            raise ScenarioError(f"initial kind {kind!r} unsupported for {scenario.variant}")
        U0 = np.array([z1, z2, s1, s2])
        far = (float(z1[0]), float(z2[0]), float(s1[0]), float(s2[0]))
        if scenario.formulation == "primitive":
            from .core import velocities_from_shear
            u1, u2, u3 = velocities_from_shear(cfg, z1, z2, s1, s2)
            U0 = np.array([z1 - z2, z2, u2, u3])
            far = tuple(float(v[0]) for v in U0)
        return U0, far

    if scenario.variant == "symmetric":
        h = cfg.h
        if kind == "uniform":
            z = np.full(grid.m, p.get("zeta", 0.25 * h))
            s = np.full(grid.m, p.get("sigma", 0.0))
        elif kind in ("gaussian-bump", "symmetric-pair"):
            width = p.get("width", 1.0)
            center = p.get("center", 0.0)
            z = p.get("zeta", 0.25 * h) + gaussian_bump(x, center, width,
                                                        p.get("amplitude", 0.05 * h))
            s = np.full(grid.m, p.get("sigma", 0.0)) \
                + gaussian_bump(x, center, width, p.get("shear", 0.0))
        elif kind == "file":
            return _load_tabulated(scenario, x, nfields=2)
        else:
            raise ScenarioError(f"initial kind {kind!r} unsupported for symmetric")
        U0 = np.array([z, s])
        return U0, (float(z[0]), float(s[0]))

    # free-surface family: fields (eta_1..eta_n, mu_1..mu_n)
    n = cfg.n
    eta_far = p.get("eta", tuple([1.0 / n] * n))
    if len(eta_far) != n:
        raise ScenarioError(f"[initial] eta needs {n} values")
    u_far = p.get("u", tuple([0.0] * n))
    eta = np.array([np.full(grid.m, e) for e in eta_far])
    mu = np.array([np.full(grid.m, r * u)
                   for r, u in zip(cfg.rho, u_far)])
    if kind == "gaussian-bump":
        width = p.get("width", 1.0)
        center = p.get("center", 0.0)
        eta[n - 1] = eta[n - 1] + gaussian_bump(x, center, width,
                                                p.get("amplitude", 0.05))
    elif kind == "file":
        return _load_tabulated(scenario, x, nfields=2 * n)
    elif kind != "uniform":
        raise ScenarioError(f"initial kind {kind!r} unsupported for {scenario.variant}")
    U0 = np.concatenate([eta, mu])
    return U0, tuple(float(f[0]) for f in U0)


def _load_tabulated(scenario, x, nfields):
    import csv
    path = scenario.initial.get("path")
    if not path:
        raise ScenarioError("initial kind 'file' needs a path")
    with open(path, "r") as fh:
        rows = list(csv.reader(fh))
    header, rows = rows[0], rows[1:]
    if len(header) != nfields + 1:
        raise ScenarioError(
            f"{path}: expected {nfields + 1} columns (x + {nfields} fields), "
            f"got {len(header)}")
    table = np.array([[float(v) for v in row] for row in rows])
    xs = table[:, 0]
    U0 = np.array([np.interp(x, xs, table[:, 1 + i]) for i in range(nfields)])
    return U0, tuple(float(f[0]) for f in U0)


# ---------------------------------------------------------------------------
# built-in registry
# ---------------------------------------------------------------------------

def builtin_names():
    root = importlib.resources.files("strata") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def builtin_text(name: str) -> str:
    res = importlib.resources.files("strata") / "scenarios" / f"{name}.scn"
    return res.read_text()
