"""Command-line front end: config parsing, dispatch, CSV emission.

Config grammar (documented in the README): a flat key/value format with
nested sections,

    command = boundary-riemann
    [system]
    name = burgers
    [data]
    u0 = -2
    ub = 1

Lines are ``key = value`` pairs, ``[section.subsection]`` headers, blank
lines, or ``#`` comments.  Values are whitespace-separated tokens; each
token becomes a float when it parses as one.  Keys are validated per
command; in strict mode unknown keys are errors.  All numbers in output
CSVs are printed with 17 significant digits so identical configs give
byte-identical files.
"""

import argparse
import os
import sys
import tempfile

import numpy as np

from . import boundary_riemann as br
from . import parabolic as pb
from . import spectral as sp
from . import systems as sy
from . import wave_curves as wc
from .envelopes import (
    SampledFunction,
    concave_envelope,
    convex_envelope,
    monotone_concave_envelope,
    monotone_convex_envelope,
)
from .errors import ConvergenceError, InvalidInputError, VvlimError

FLOAT_FMT = "%.17g"

COMMANDS = ("analyze", "envelope", "riemann", "boundary-riemann", "layer",
            "simulate", "counterexample", "verify")

KNOWN_KEYS = {
    "": {"command"},
    "system": {"name", "gamma"},
    "data": {"u0", "ub", "g", "u_minus", "u_plus", "u_bar", "samples",
             "states", "input", "u10", "example", "sigma"},
    "numerics": {"m_nodes", "eps", "eps_list", "nu", "nu_list", "L", "J",
                 "T_final", "t_sample", "x_samples", "X", "kind", "regime",
                 "delta", "M", "tol", "K"},
}


class ConfigError(VvlimError):
    def __init__(self, message, line=None, col=None):
        loc = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.col = col


class RunConfig:
    def __init__(self, command, sections, key_lines, output_dir="."):
        self.command = command
        self.sections = sections
        self.key_lines = key_lines
        self.output_dir = output_dir
        self.seed = 0

    def get(self, section, key, default=None, required=False):
        val = self.sections.get(section, {}).get(key, default)
        if required and val is None:
            raise ConfigError(
                f"missing required key '{key}' in section [{section}] "
                f"for command {self.command}"
            )
        return val

    def vector(self, section, key, default=None, required=False):
        v = self.get(section, key, default, required)
        if v is None:
            return None
        if np.isscalar(v):
            return np.array([float(v)])
        return np.array([float(t) for t in v])


def parse_config(text, strict=False) -> RunConfig:
    """Parse the configuration document; errors carry line/column."""
    sections = {"": {}}
    key_lines = {}
    current = ""
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        col = raw.index(stripped[0]) + 1
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("unterminated section header", ln, col)
            current = stripped[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", ln, col)
        key, _, val = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("empty key", ln, col)
        tokens = val.split()
        if not tokens:
            raise ConfigError(f"key '{key}' has no value", ln, col)
        parsed = []
        for tok in tokens:
            try:
                parsed.append(float(tok))
            except ValueError:
                parsed.append(tok)
        sections[current][key] = parsed[0] if len(parsed) == 1 else parsed
        key_lines[(current, key)] = (ln, col)
        if strict:
            base = current.split(".")[0]
            known = KNOWN_KEYS.get(base)
            if known is not None and key not in known:
                raise ConfigError(
                    f"unknown key '{key}' in section [{current}]", ln, col
                )
    command = sections[""].get("command")
    if command is None:
        raise ConfigError("missing top-level 'command' key")
    if command not in COMMANDS:
        ln, col = key_lines.get(("", "command"), (None, None))
        raise ConfigError(
            f"unknown command '{command}'; known: {', '.join(COMMANDS)}",
            ln, col,
        )
    cfg = RunConfig(command, sections, key_lines)
    _validate(cfg)
    return cfg


def _validate(cfg):
    for section in ("numerics",):
        for key, val in cfg.sections.get(section, {}).items():
            vals = val if isinstance(val, list) else [val]
            for v in vals:
                if isinstance(v, float) and key not in ("regime", "kind") \
                        and v <= 0 and key not in ("tol",):
                    ln, col = cfg.key_lines.get((section, key), (None, None))
                    raise ConfigError(
                        f"numeric override '{key}' must be positive", ln, col
                    )
    needs_system = cfg.command in ("analyze", "riemann", "boundary-riemann",
                                   "layer", "simulate", "verify")
    if needs_system:
        cfg.get("system", "name", required=True)


def _system_from(cfg):
    name = cfg.get("system", "name", required=True)
    params = {k: v for k, v in cfg.sections.get("system", {}).items()
              if k != "name"}
    return sy.make_catalog_system(name, params)


def _write_csv(path, header, rows):
    """Atomic CSV write with fixed float formatting."""
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return FLOAT_FMT % v
        return str(v)

    content = ",".join(header) + "\n" + "\n".join(
        ",".join(fmt(v) for v in row) for row in rows
    )
    if rows:
        content += "\n"
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(content)
    os.replace(tmp, path)


def _out(cfg, name):
    return os.path.join(cfg.output_dir, name)


# ---------------------------------------------------------------------------
# command implementations


def _cmd_analyze(cfg):
    spec = _system_from(cfg)
    states = cfg.vector("data", "states")
    if states is None:
        states = spec.u_base.copy()
    states = np.atleast_2d(states.reshape(-1, spec.N))
    rows = []
    for u in states:
        ea = sp.eig_pencil(spec, u)
        d = sp.stable_dimension(spec, u)
        for j, lam in enumerate(ea.values):
            rows.append([*u, j + 1, lam, ea.n, ea.k_minus_1, d])
    _write_csv(_out(cfg, "analyze.csv"),
               [f"u{i+1}" for i in range(spec.N)]
               + ["family", "lambda", "n", "k_minus_1", "stable_dim"], rows)
    return 0


def _cmd_envelope(cfg):
    path = cfg.get("data", "input", required=True)
    kind = cfg.get("numerics", "kind", "concave")
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    tau, fv, fp = data[:, 0], data[:, 1], data[:, 2]
    h = tau[1] - tau[0]
    lip = max(1.0, np.abs(np.diff(fp)).max() / h)
    f = SampledFunction(s=float(tau[-1]), values=fv, deriv=fp, lip_k=lip)
    fns = {"concave": concave_envelope, "convex": convex_envelope,
           "monotone_concave": monotone_concave_envelope,
           "monotone_convex": monotone_convex_envelope}
    if kind not in fns:
        raise ConfigError(f"unknown envelope kind '{kind}'")
    res = fns[kind](f)
    rows = [[t, e, d, int(c)] for t, e, d, c in
            zip(tau, res.env.values, res.env.deriv, res.contact)]
    _write_csv(_out(cfg, "envelope.csv"), ["tau", "env", "env_prime",
                                           "contact"], rows)
    return 0


def _piece_rows(pattern):
    rows = []
    for p in pattern.pieces:
        if isinstance(p, wc.ConstantState):
            rows.append(["constant", 0, "", "", *p.u])
        elif isinstance(p, wc.Shock):
            rows.append(["shock", p.family, p.speed, p.speed,
                         *p.u_from, *p.u_to])
        elif isinstance(p, wc.Rarefaction):
            rows.append(["rarefaction", p.family, p.speed_from, p.speed_to,
                         *p.u_from, *p.u_to])
        elif isinstance(p, wc.BoundaryLayer):
            rows.append(["boundary_layer", 0, 0.0, 0.0,
                         *p.u_boundary, *p.u_trace])
    return rows


def _cmd_riemann(cfg):
    spec = _system_from(cfg)
    um = cfg.vector("data", "u_minus", required=True)
    up = cfg.vector("data", "u_plus", required=True)
    m = cfg.get("numerics", "m_nodes")
    pattern = wc.solve_cauchy_riemann(spec, um, up,
                                      m=int(m) if m else None)
    _write_csv(_out(cfg, "pattern.csv"),
               ["kind", "family", "speed_from", "speed_to", "states..."],
               _piece_rows(pattern))
    t = float(cfg.get("numerics", "t_sample", 1.0))
    xs = cfg.vector("numerics", "x_samples")
    if xs is None:
        xs = np.linspace(0.0, 2.0, 41)
    rows = [[t, x, *wc.sample_solution(pattern, t, x)] for x in xs]
    _write_csv(_out(cfg, "samples.csv"),
               ["t", "x"] + [f"u{i+1}" for i in range(spec.N)], rows)
    return 0


def _cmd_boundary_riemann(cfg):
    spec = _system_from(cfg)
    u0 = cfg.vector("data", "u0", required=True)
    datum = cfg.vector("data", "ub")
    if datum is None:
        datum = cfg.vector("data", "g", required=True)
    regime_key = cfg.get("numerics", "regime", "auto")
    regime = None
    if regime_key != "auto":
        regime = br.detect_regime(spec, u0, delta=cfg.get("numerics", "delta"),
                                  M=float(cfg.get("numerics", "M",
                                                  br.DEFAULT_CHAR_MARGIN)))
        if regime.boundary != regime_key:
            raise ConfigError(
                f"forced regime '{regime_key}' contradicts detection "
                f"'{regime.boundary}'"
            )
    m = cfg.get("numerics", "m_nodes")
    sol = br.solve_boundary_riemann(spec, u0, datum, regime=regime,
                                    m=int(m) if m else None)
    _write_csv(_out(cfg, "pattern.csv"),
               ["kind", "family", "speed_from", "speed_to", "states..."],
               _piece_rows(sol.pattern))
    _write_csv(_out(cfg, "trace.csv"),
               [f"u{i+1}" for i in range(spec.N)] + ["residual",
                                                     "newton_iters"],
               [[*sol.trace, sol.residual, sol.newton_iters]])
    return 0


def _cmd_layer(cfg):
    from .boundary_layers import layer_profile

    spec = _system_from(cfg)
    u0 = cfg.vector("data", "u0", required=True)
    ubar = cfg.vector("data", "u_bar", required=True)
    X = cfg.get("numerics", "X")
    prof = layer_profile(spec, u0, ubar, X=float(X) if X else None)
    rows = [[x, *u] for x, u in zip(prof.x_grid, prof.u)]
    _write_csv(_out(cfg, "layer.csv"),
               ["x"] + [f"u{i+1}" for i in range(spec.N)], rows)
    _write_csv(_out(cfg, "layer_meta.csv"),
               ["decay_rate", "converged"],
               [[prof.decay_rate, int(prof.converged)]])
    return 0


def _cmd_simulate(cfg):
    spec = _system_from(cfg)
    u0 = cfg.vector("data", "u0", required=True)
    datum = cfg.vector("data", "ub")
    if datum is None:
        datum = cfg.vector("data", "g", required=True)
    eps_list = cfg.get("numerics", "eps_list")
    if eps_list is None:
        eps_list = [float(cfg.get("numerics", "eps", 0.01))]
    elif np.isscalar(eps_list):
        eps_list = [float(eps_list)]
    L = float(cfg.get("numerics", "L", 4.0))
    J = int(cfg.get("numerics", "J", 2000))
    T = float(cfg.get("numerics", "T_final", 0.5))
    K = float(cfg.get("numerics", "K", 8.0))
    summary = []
    prev = None
    for eps in eps_list:
        grid = pb.SimGrid(L=L, J=J, T_final=T, eps=eps)
        res = pb.simulate_ibvp(spec, eps, grid, u0, datum)
        rows = [[T, x, *u] for x, u in zip(res.x, res.final)]
        _write_csv(_out(cfg, f"sim_eps{eps:g}.csv"),
                   ["t", "x"] + [f"u{i+1}" for i in range(spec.N)], rows)
        trace = pb.estimate_trace(res, K=K)
        l1 = (np.abs(res.final - prev).sum() * (L / J)
              if prev is not None else np.nan)
        summary.append([eps, *trace, l1])
        prev = res.final
    _write_csv(_out(cfg, "sweep.csv"),
               ["eps"] + [f"trace_u{i+1}" for i in range(spec.N)]
               + ["l1_delta_prev"], summary)
    return 0


def _cmd_counterexample(cfg):
    example = cfg.get("data", "example", required=True)
    u10 = float(cfg.get("data", "u10", 1.0))
    gamma = float(cfg.get("system", "gamma", 5.0))
    nus = cfg.get("numerics", "nu_list")
    if nus is None:
        nus = [float(cfg.get("numerics", "nu", 1e-4))]
    elif np.isscalar(nus):
        nus = [float(nus)]
    fams = [pb.counterexample_family(example, nu, u10, gamma=gamma)
            for nu in sorted(nus)]
    base = fams[0]
    header = ["x", "closed_form"] + [f"u_nu{f.nu:g}" for f in fams]
    rows = [[x, cf, *[f.solution[j] for f in fams]]
            for j, (x, cf) in enumerate(zip(base.x, base.closed_form_limit))]
    _write_csv(_out(cfg, "counterexample.csv"), header, rows)
    summ = [[f.nu, f.sup_error, f.kink_x if f.kink_x is not None else ""]
            for f in fams]
    mono = all(pb.nu_monotone(a, b) for a, b in zip(fams, fams[1:]))
    _write_csv(_out(cfg, "counterexample_summary.csv"),
               ["nu", "sup_error", "kink_x"], summ)
    _write_csv(_out(cfg, "counterexample_meta.csv"),
               ["example", "u10", "nu_monotone"],
               [[example, u10, int(mono)]])
    return 0


def _cmd_verify(cfg, rng):
    spec = _system_from(cfg)
    states = cfg.vector("data", "samples")
    if states is None:
        states = (spec.u_base[None, :]
                  + 0.5 * spec.delta * rng.uniform(-1, 1, (5, spec.N)))
    else:
        states = np.atleast_2d(states.reshape(-1, spec.N))
    sigma = float(cfg.get("data", "sigma", 0.0))
    reports = [
        sy.check_symmetric_dissipative(spec, states),
        sy.check_strict_hyperbolicity(spec, states),
    ]
    if spec.singular:
        reports.append(sy.check_kawashima(spec, states[0]))
        reports.append(sy.check_block_linear_degeneracy(spec, sigma, states))
        tri = sp.transversal_subspaces(spec, spec.u_base)
        vbasis = [v for _, v in tri.theta_vectors] + \
                 [v for _, v in tri.xi_vectors]
        reports.append(sy.check_beta_transversality(spec, spec.u_base,
                                                    vbasis))
    else:
        for u in states:
            rep = sp.verify_count_invariance(spec, u)
            if not rep.passed:
                reports.append(rep)
                break
        else:
            reports.append(rep)
    rows = []
    for rep in reports:
        if rep.constants:
            for key, val in rep.constants.items():
                rows.append([rep.name, int(rep.passed), key, val])
        else:
            rows.append([rep.name, int(rep.passed), "", ""])
    _write_csv(_out(cfg, "summary.csv"),
               ["check", "passed", "constant", "value"], rows)
    return 0 if all(r.passed for r in reports) else 2


def run(cfg, rng=None):
    """Execute a parsed configuration; returns the process exit status."""
    rng = rng or np.random.default_rng(cfg.seed)
    dispatch = {
        "analyze": _cmd_analyze,
        "envelope": _cmd_envelope,
        "riemann": _cmd_riemann,
        "boundary-riemann": _cmd_boundary_riemann,
        "layer": _cmd_layer,
        "simulate": _cmd_simulate,
        "counterexample": _cmd_counterexample,
    }
    if cfg.command == "verify":
        return _cmd_verify(cfg, rng)
    return dispatch[cfg.command](cfg)


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="vvlim",
        description="Vanishing-viscosity (boundary) Riemann solver toolkit",
    )
    ap.add_argument("--config", required=True, help="configuration file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=0,
                    help="seed for randomized verification samples")
    ap.add_argument("--strict", action="store_true",
                    help="reject unknown configuration keys")
    args = ap.parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read(), strict=args.strict)
        cfg.output_dir = args.out
        cfg.seed = args.seed
        return run(cfg)
    except ConfigError as exc:
        print(f"vvlim: config error: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, InvalidInputError) as exc:
        print(f"vvlim: {exc}", file=sys.stderr)
        return 1
    except VvlimError as exc:
        print(f"vvlim: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
