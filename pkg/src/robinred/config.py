"""INI configuration: parsing, schema validation, canonical serialization.

The parameter space is wide enough that runs are driven by named,
versioned files rather than flags.  Unknown sections and keys are
rejected; every default is resolved at parse time so the echoed
configuration in reports carries full provenance.  Serialization emits
17 significant digits so resolved configs and reports round-trip
byte-identically.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field

from .errors import ConfigError

SCHEMA_VERSION = 1

_DOMAIN_KEYS = {
    "interval": {"kind", "a", "b", "n"},
    "rectangle": {"kind", "lx", "ly", "nx", "ny"},
}
_POTENTIAL_KEYS = {
    "constant": {"kind", "value"},
    "nodal_csv": {"kind", "path"},
    "builtin": {"kind", "name", "amp", "freq", "offset", "power", "x0", "y0"},
}
_BOUNDARY_KEYS = {
    "constant": {"kind", "value"},
    "per_side": {"kind", "left", "right", "bottom", "top"},
    "nodal_csv": {"kind", "path"},
}
_REACTION_KEYS = {
    "model": {"kind", "m", "l", "a_s_fraction", "delta"},
    "linear": {"kind", "m", "l", "slope"},
    "square": {"kind", "m", "l"},
}
_SOLVER_DEFAULTS = {
    "seed": 0,
    "cluster_tol": 1e-6,
    "n_report": 12,
    "grad_tol": 1e-9,
    "tol_res": 1e-7,
    "tol_sign": 1e-10,
    "d_min": "auto",
    "rho": 0.5,
    "linking_samples": 200,
    "w_starts": 4,
    "e_starts": 2,
    "v_starts": 4,
    "zero_starts": 2,
    "descent_max_iter": 500,
    "path_points": 64,
    "mp_max_iter": 150,
    "deflation_shift": 1.0,
    "probe_directions": 8,
    "probe_radii": "1,10,50",
    "tau_grad_tol": 1e-10,
    "tau_max_iter": 100,
}
_SOLVER_INT_KEYS = {"seed", "n_report", "linking_samples", "w_starts", "e_starts",
                    "v_starts", "zero_starts", "descent_max_iter", "path_points",
                    "mp_max_iter", "probe_directions", "tau_max_iter"}
_OUTPUT_DEFAULTS = {
    "report": "out/report.json",
    "spectrum_csv": "out/spectrum.csv",
    "solution_prefix": "out/solution",
}
_SECTIONS = ("meta", "domain", "potential", "boundary", "reaction",
             "solver", "output")


@dataclass
class ProblemConfig:
    domain: dict
    potential: dict
    boundary: dict
    reaction: dict
    solver: dict
    output: dict
    schema_version: int = SCHEMA_VERSION
    base_dir: str = "."

    def __eq__(self, other):
        if not isinstance(other, ProblemConfig):
            return NotImplemented
        return (self.schema_version == other.schema_version
                and self.domain == other.domain
                and self.potential == other.potential
                and self.boundary == other.boundary
                and self.reaction == other.reaction
                and self.solver == other.solver
                and self.output == other.output)

    def as_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "domain": self.domain,
            "potential": self.potential,
            "boundary": self.boundary,
            "reaction": self.reaction,
            "solver": self.solver,
            "output": self.output,
        }

    def probe_radii(self) -> list:
        text = self.solver["probe_radii"]
        return [float(t) for t in text.split(",") if t.strip()]


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*[=:]", re.MULTILINE)
    m = pat.search(text)
    if m is None:
        return None
    return text[: m.start()].count("\n") + 1


def _need_float(sec: dict, section: str, key: str, text: str) -> float:
    if key not in sec:
        raise ConfigError(f"[{section}] is missing required key '{key}'", key=key)
    try:
        v = float(sec[key])
    except ValueError:
        raise ConfigError(f"[{section}] key '{key}' is not a number: {sec[key]!r}",
                          line=_line_of(text, key), key=key)
    if not (v == v and abs(v) != float("inf")):
        raise ConfigError(f"[{section}] key '{key}' must be finite",
                          line=_line_of(text, key), key=key)
    return v


def _need_int(sec: dict, section: str, key: str, text: str) -> int:
    v = _need_float(sec, section, key, text)
    if v != int(v):
        raise ConfigError(f"[{section}] key '{key}' must be an integer",
                          line=_line_of(text, key), key=key)
    return int(v)


def _check_keys(sec: dict, allowed: set, section: str, text: str):
    for key in sec:
        if key not in allowed:
            raise ConfigError(
                f"unknown key '{key}' in section [{section}]",
                line=_line_of(text, key), key=key)


def parse_config(text: str, base_dir: str = ".") -> ProblemConfig:
    """Parse and validate INI text; resolve every default."""
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(f"INI parse failure: {exc.message.splitlines()[0]}",
                          line=line) from exc

    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]",
                              line=_line_of(text, f"[{section}"))

    meta = dict(cp["meta"]) if cp.has_section("meta") else {}
    _check_keys(meta, {"schema_version"}, "meta", text)
    version = int(meta.get("schema_version", SCHEMA_VERSION))
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {version}; this build reads version "
            f"{SCHEMA_VERSION}", line=_line_of(text, "schema_version"),
            key="schema_version")

    if not cp.has_section("domain"):
        raise ConfigError("missing required section [domain]")
    dom_raw = dict(cp["domain"])
    kind = dom_raw.get("kind", "interval")
    if kind not in _DOMAIN_KEYS:
        raise ConfigError(f"domain kind must be interval or rectangle, got {kind!r}",
                          line=_line_of(text, "kind"), key="kind")
    _check_keys(dom_raw, _DOMAIN_KEYS[kind], "domain", text)
    if kind == "interval":
        domain = {
            "kind": "interval",
            "a": _need_float(dom_raw, "domain", "a", text) if "a" in dom_raw else 0.0,
            "b": _need_float(dom_raw, "domain", "b", text),
            "n": _need_int(dom_raw, "domain", "n", text),
        }
        if domain["a"] >= domain["b"]:
            raise ConfigError("domain needs a < b", line=_line_of(text, "b"), key="b")
        if domain["n"] < 3:
            raise ConfigError("domain needs n >= 3", line=_line_of(text, "n"), key="n")
    else:
        domain = {
            "kind": "rectangle",
            "lx": _need_float(dom_raw, "domain", "lx", text),
            "ly": _need_float(dom_raw, "domain", "ly", text),
            "nx": _need_int(dom_raw, "domain", "nx", text),
            "ny": _need_int(dom_raw, "domain", "ny", text),
        }
        if domain["lx"] <= 0 or domain["ly"] <= 0:
            raise ConfigError("rectangle sides must be positive",
                              line=_line_of(text, "lx"), key="lx")
        if domain["nx"] < 2 or domain["ny"] < 2:
            raise ConfigError("rectangle needs nx, ny >= 2",
                              line=_line_of(text, "nx"), key="nx")

    pot_raw = dict(cp["potential"]) if cp.has_section("potential") else {}
    pkind = pot_raw.get("kind", "constant")
    if pkind not in _POTENTIAL_KEYS:
        raise ConfigError(f"potential kind must be one of "
                          f"{sorted(_POTENTIAL_KEYS)}, got {pkind!r}",
                          line=_line_of(text, "kind"), key="kind")
    _check_keys(pot_raw, _POTENTIAL_KEYS[pkind], "potential", text)
    if pkind == "constant":
        potential = {"kind": "constant",
                     "value": _need_float(pot_raw, "potential", "value", text)
                     if "value" in pot_raw else 0.0}
    elif pkind == "nodal_csv":
        potential = {"kind": "nodal_csv", "path": pot_raw.get("path", "")}
        if not potential["path"]:
            raise ConfigError("nodal potential needs a path", key="path")
    else:
        name = pot_raw.get("name", "cosine")
        if name not in ("cosine", "inv_dist"):
            raise ConfigError(f"unknown builtin potential {name!r}",
                              line=_line_of(text, "name"), key="name")
        potential = {"kind": "builtin", "name": name}
        for k, dflt in (("amp", 1.0), ("freq", 1.0), ("offset", 0.0),
                        ("power", 0.5), ("x0", -1.0), ("y0", -1.0)):
            potential[k] = (_need_float(pot_raw, "potential", k, text)
                            if k in pot_raw else dflt)

    bnd_raw = dict(cp["boundary"]) if cp.has_section("boundary") else {}
    bkind = bnd_raw.get("kind", "constant")
    if bkind not in _BOUNDARY_KEYS:
        raise ConfigError(f"boundary kind must be one of {sorted(_BOUNDARY_KEYS)}, "
                          f"got {bkind!r}", line=_line_of(text, "kind"), key="kind")
    _check_keys(bnd_raw, _BOUNDARY_KEYS[bkind], "boundary", text)
    if bkind == "constant":
        boundary = {"kind": "constant",
                    "value": _need_float(bnd_raw, "boundary", "value", text)
                    if "value" in bnd_raw else 0.0}
    elif bkind == "per_side":
        boundary = {"kind": "per_side"}
        for k in ("left", "right", "bottom", "top"):
            boundary[k] = (_need_float(bnd_raw, "boundary", k, text)
                           if k in bnd_raw else 0.0)
    else:
        boundary = {"kind": "nodal_csv", "path": bnd_raw.get("path", "")}
        if not boundary["path"]:
            raise ConfigError("nodal boundary coefficient needs a path", key="path")

    if not cp.has_section("reaction"):
        raise ConfigError("missing required section [reaction]")
    rx_raw = dict(cp["reaction"])
    rkind = rx_raw.get("kind", "model")
    if rkind not in _REACTION_KEYS:
        raise ConfigError(f"reaction kind must be one of {sorted(_REACTION_KEYS)}, "
                          f"got {rkind!r}", line=_line_of(text, "kind"), key="kind")
    _check_keys(rx_raw, _REACTION_KEYS[rkind], "reaction", text)
    m = _need_int(rx_raw, "reaction", "m", text) if "m" in rx_raw else 1
    l = _need_int(rx_raw, "reaction", "l", text) if "l" in rx_raw else 3
    if m < 1:
        raise ConfigError("reaction index m must be >= 1",
                          line=_line_of(text, "m"), key="m")
    if l < m + 2:
        raise ConfigError(
            f"reaction indices need l >= m+2 (the near-zero hypothesis pins the "
            f"slope between distinct eigenvalues), got m={m}, l={l}",
            line=_line_of(text, "l"), key="l")
    reaction = {"kind": rkind, "m": m, "l": l}
    if rkind == "model":
        reaction["a_s_fraction"] = (_need_float(rx_raw, "reaction", "a_s_fraction",
                                                text)
                                    if "a_s_fraction" in rx_raw else 0.3)
        reaction["delta"] = (_need_float(rx_raw, "reaction", "delta", text)
                             if "delta" in rx_raw else 0.1)
        if not 0.0 < reaction["a_s_fraction"] < 1.0:
            raise ConfigError("a_s_fraction must lie in (0, 1)",
                              line=_line_of(text, "a_s_fraction"), key="a_s_fraction")
        if reaction["delta"] <= 0.0:
            raise ConfigError("delta must be positive",
                              line=_line_of(text, "delta"), key="delta")
    elif rkind == "linear":
        reaction["slope"] = (_need_float(rx_raw, "reaction", "slope", text)
                             if "slope" in rx_raw else 0.0)

    sol_raw = dict(cp["solver"]) if cp.has_section("solver") else {}
    _check_keys(sol_raw, set(_SOLVER_DEFAULTS), "solver", text)
    solver = {}
    for key, dflt in _SOLVER_DEFAULTS.items():
        if key not in sol_raw:
            solver[key] = dflt
        elif key == "d_min":
            solver[key] = ("auto" if sol_raw[key].strip() == "auto"
                           else _need_float(sol_raw, "solver", key, text))
        elif key == "probe_radii":
            solver[key] = sol_raw[key].strip()
        elif key in _SOLVER_INT_KEYS:
            solver[key] = _need_int(sol_raw, "solver", key, text)
        else:
            solver[key] = _need_float(sol_raw, "solver", key, text)

    out_raw = dict(cp["output"]) if cp.has_section("output") else {}
    _check_keys(out_raw, set(_OUTPUT_DEFAULTS), "output", text)
    output = dict(_OUTPUT_DEFAULTS)
    output.update({k: v.strip() for k, v in out_raw.items()})

    cfg = ProblemConfig(domain=domain, potential=potential, boundary=boundary,
                        reaction=reaction, solver=solver, output=output,
                        schema_version=version, base_dir=base_dir)
    cfg.probe_radii()   # validates the radii list early
    return cfg


def to_ini(cfg: ProblemConfig) -> str:
    """Canonical INI text of a resolved configuration (17 digit floats)."""
    buf = io.StringIO()
    buf.write("[meta]\nschema_version = %d\n\n" % cfg.schema_version)
    for section, data in (("domain", cfg.domain), ("potential", cfg.potential),
                          ("boundary", cfg.boundary), ("reaction", cfg.reaction),
                          ("solver", cfg.solver), ("output", cfg.output)):
        buf.write(f"[{section}]\n")
        for key, value in data.items():
            buf.write(f"{key} = {_fmt(value)}\n")
        buf.write("\n")
    return buf.getvalue()
