"""Experiment configuration: INI parsing, validation, canonical printing, model building.

Sections are ``[model]``, ``[basis]``, ``[flow]``, ``[diagnostics]`` and
``[output]``.  Every key is typed; unknown sections or keys are errors.  The
canonical printer writes every key with its resolved value, so its output
re-parses to an identical configuration.
"""

import configparser
import math
import re

import numpy as np

from .errors import ConfigError
from .features import ActionGrid, StateSpace, bernstein_basis, hat_basis, tabular_basis, trig_basis
from .mdp import build_hat_bandit, build_linear_mdp, build_random_mdp, random_linear_spec


# value parsers ---------------------------------------------------------------

def _float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else _float(text)


def _int(text):
    return int(text)


def _floats(text):
    return tuple(_float(t) for t in text.split(",") if t.strip())


def _vectors(text):
    return tuple(_floats(chunk) for chunk in text.split(";") if chunk.strip())


def _words(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _counts(text):
    out = {}
    for item in _words(text):
        name, _, n = item.partition(":")
        out[name.strip()] = int(n)
    return tuple(sorted(out.items()))


def _choice(*options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return parse


_RANDOM_SPEC = re.compile(r"random\(\s*seed\s*=\s*(-?\d+)\s*,\s*norm\s*=\s*([^)]+)\)")


def _theta0(text):
    t = text.strip()
    if t in ("zeros", "optimal"):
        return (t,)
    m = _RANDOM_SPEC.fullmatch(t)
    if m:
        return ("random", int(m.group(1)), _float(m.group(2)))
    return ("explicit", _floats(t))


def _rho(text):
    t = text.strip()
    return "uniform" if t == "uniform" else _floats(t)


# printers --------------------------------------------------------------------

def _fmt_float(v):
    return repr(float(v))


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _fmt_float(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    raise TypeError(value)


def _fmt_floats(v):
    return ", ".join(_fmt_float(x) for x in v)


def _fmt_vectors(v):
    return "; ".join(_fmt_floats(x) for x in v)


def _fmt_words(v):
    return ", ".join(v)


def _fmt_counts(v):
    return ", ".join(f"{k}:{n}" for k, n in v)


def _fmt_theta0(v):
    if v[0] in ("zeros", "optimal"):
        return v[0]
    if v[0] == "random":
        return f"random(seed={v[1]}, norm={_fmt_float(v[2])})"
    return _fmt_floats(v[1])


def _fmt_rho(v):
    return v if v == "uniform" else _fmt_floats(v)


# schema: section -> key -> (parser, printer, default)
SCHEMA = {
    "model": {
        "kind": (_choice("linear", "random", "hat-bandit"), _fmt, "linear"),
        "n_states": (_int, _fmt, 5),
        "gamma": (_float, _fmt, 0.9),
        "tau": (_float, _fmt, 0.2),
        "rho": (_rho, _fmt_rho, "uniform"),
        "seed": (_int, _fmt, 42),
        "nodes": (_int, _fmt, 512),
        "action_low": (_float, _fmt, 0.0),
        "action_high": (_float, _fmt, 1.0),
        "cost_scale": (_float, _fmt, 0.5),
    },
    "basis": {
        "kind": (_choice("trig", "bernstein", "hat", "tabular"), _fmt, "trig"),
        "frequencies": (_vectors, _fmt_vectors, ((1.0,), (2.0,))),
        "state_frequencies": (_vectors, _fmt_vectors, ()),
        "degree": (_int, _fmt, 3),
        "direction": (_floats, _fmt_floats, (1.0,)),
        "offsets": (_floats, _fmt_floats, ()),
        "grid": (_floats, _fmt_floats, (0.0, 1 / 3, 2 / 3, 1.0)),
    },
    "flow": {
        "theta0": (_theta0, _fmt_theta0, ("zeros",)),
        "integrator": (_choice("rkf45", "rk4"), _fmt, "rkf45"),
        "h": (_opt_float, _fmt, None),
        "tolerance": (_float, _fmt, 1e-9),
        "h0": (_float, _fmt, 1e-2),
        "t_end": (_float, _fmt, 200.0),
        "log_every": (_float, _fmt, 1.0),
        "gap_tol": (_float, _fmt, 0.0),
    },
    "diagnostics": {
        "checks": (_words, _fmt_words, ("all",)),
        "counts": (_counts, _fmt_counts, ()),
        "seed": (_int, _fmt, 0),
        "max_norm": (_float, _fmt, 5.0),
        "probe_state": (_int, _fmt, 0),
        "probe_directions": (_vectors, _fmt_vectors, ()),
        "probe_radii": (_floats, _fmt_floats, ()),
    },
    "output": {
        "directory": (str.strip, _fmt, "out"),
        "formats": (_words, _fmt_words, ("csv", "json", "svg")),
    },
}


def _line_of(text, section, key=None):
    """1-based line of ``[section]`` or of ``key`` inside it, for messages."""
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return no
    return None


def _where(text, section, key=None):
    line = _line_of(text, section, key)
    field = f"{section}.{key}" if key else f"[{section}]"
    return f"line {line}: {field}" if line else field


def parse_config(text):
    """Parse INI text into ``{section: {key: value}}`` with defaults filled in."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{_where(text, section)}: unknown section")
    for section, keys in SCHEMA.items():
        cfg[section] = {k: default for k, (_, _, default) in keys.items()}
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            if key not in keys:
                raise ConfigError(f"{_where(text, section, key)}: unknown key")
            parser = keys[key][0]
            try:
                cfg[section][key] = parser(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{_where(text, section, key)}: bad value {raw!r} ({exc})") from exc
    _validate(cfg, text)
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _validate(cfg, text):
    def fail(section, key, msg):
        raise ConfigError(f"{_where(text, section, key)}: {msg}")

    mdl, fl = cfg["model"], cfg["flow"]
    if not 0.0 <= mdl["gamma"] < 1.0:
        fail("model", "gamma", "must lie in [0, 1)")
    if not mdl["tau"] > 0:
        fail("model", "tau", "must be positive")
    if mdl["n_states"] < 1:
        fail("model", "n_states", "must be at least 1")
    if mdl["nodes"] < 1:
        fail("model", "nodes", "must be at least 1")
    if mdl["kind"] == "hat-bandit" and mdl["nodes"] < 64:
        fail("model", "nodes", "hat bandit needs at least 64 nodes")
    if not mdl["action_high"] > mdl["action_low"]:
        fail("model", "action_high", "must exceed action_low")
    if not 0.0 < mdl["cost_scale"] <= 0.5:
        fail("model", "cost_scale", "must lie in (0, 0.5]")
    if mdl["rho"] != "uniform":
        r = np.asarray(mdl["rho"])
        if r.size != mdl["n_states"] or np.any(r <= 0) or abs(r.sum() - 1) > 1e-12:
            fail("model", "rho", "must be positive, one entry per state, summing to 1")
    if not fl["t_end"] > 0:
        fail("flow", "t_end", "must be positive")
    if not fl["log_every"] > 0:
        fail("flow", "log_every", "must be positive")
    if fl["integrator"] == "rk4" and not (fl["h"] is not None and fl["h"] > 0):
        fail("flow", "h", "rk4 needs a positive step")
    if not fl["tolerance"] > 0:
        fail("flow", "tolerance", "must be positive")
    if fl["gap_tol"] < 0:
        fail("flow", "gap_tol", "must be non-negative")
    from .diagnostics import CHECK_NAMES

    checks = cfg["diagnostics"]["checks"]
    for name in checks:
        if name != "all" and name not in CHECK_NAMES:
            fail("diagnostics", "checks", f"unknown check {name!r}")
    for name, n in cfg["diagnostics"]["counts"]:
        if name not in CHECK_NAMES:
            fail("diagnostics", "counts", f"unknown check {name!r}")
        if n < 1:
            fail("diagnostics", "counts", f"count for {name} must be positive")
    for fmt in cfg["output"]["formats"]:
        if fmt not in ("csv", "json", "svg"):
            fail("output", "formats", f"unknown format {fmt!r}")


def format_config(cfg):
    """Canonical INI text; ``parse_config(format_config(c)) == c``."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (_, printer, _) in keys.items():
            lines.append(f"{key} = {printer(cfg[section][key])}".rstrip())
        lines.append("")
    return "\n".join(lines)


# model construction ------------------------------------------------------------

def build_basis(cfg, states, actions):
    b = cfg["basis"]
    kind = b["kind"]
    if kind == "trig":
        sf = b["state_frequencies"] or None
        return trig_basis(b["frequencies"], sf, states)
    if kind == "bernstein":
        q = b["offsets"]
        if not q:
            q = np.random.default_rng([cfg["model"]["seed"], 1]).uniform(0.0, 0.5, size=states.n)
        return bernstein_basis(b["degree"], b["direction"], q, states, actions)
    if kind == "hat":
        return hat_basis(b["grid"], states)
    return tabular_basis(states, actions)


def build_model(cfg):
    """Construct the MdpModel described by the ``[model]`` and ``[basis]`` sections."""
    mdl = cfg["model"]
    if mdl["kind"] == "hat-bandit":
        grid = cfg["basis"]["grid"]
        return build_hat_bandit(grid, mdl["nodes"], mdl["gamma"], mdl["tau"])
    states = StateSpace.uniform(mdl["n_states"], 0.0, 1.0)
    actions = ActionGrid.midpoint(mdl["nodes"], mdl["action_low"], mdl["action_high"])
    basis = build_basis(cfg, states, actions)
    rho = None if mdl["rho"] == "uniform" else np.asarray(mdl["rho"])
    if mdl["kind"] == "random":
        m = build_random_mdp(mdl["n_states"], basis, actions, mdl["gamma"], mdl["tau"], mdl["seed"], states)
        if rho is not None:
            m = type(m)(m.states, m.actions, m.transition, m.cost, m.gamma, m.tau, rho, m.basis, m.notes)
        return m
    rng = np.random.default_rng(mdl["seed"])
    spec = random_linear_spec(basis, mdl["n_states"], rng, cost_scale=mdl["cost_scale"])
    return build_linear_mdp(spec, basis, states, actions, mdl["gamma"], mdl["tau"], rho)


def initial_theta(cfg, p, soft_opt=None):
    spec = cfg["flow"]["theta0"]
    if spec[0] == "zeros":
        return np.zeros(p)
    if spec[0] == "optimal":
        if soft_opt is None or soft_opt.theta_star is None:
            raise ConfigError("flow.theta0: 'optimal' needs a realizable model")
        return soft_opt.theta_star.copy()
    if spec[0] == "random":
        u = np.random.default_rng(spec[1]).normal(size=p)
        return u / np.linalg.norm(u) * spec[2]
    theta = np.asarray(spec[1], dtype=float)
    if theta.size != p:
        raise ConfigError(f"flow.theta0: expected {p} entries, got {theta.size}")
    return theta
