"""Command-line runner.

    alphach run <config.yaml> [--out-dir DIR] [--seed N]
    alphach compare-analytic <config.yaml> [--out-dir DIR]
    alphach transform <config.yaml> [--out-dir DIR] [--seed N]

Every CSV file starts with ``# config=<json>`` holding the fully resolved
configuration, then one header line, then comma-separated rows with 17
significant digits. Exit codes: 0 success, 2 configuration error, 3 invariant
failure (partial output is written, followed by a ``# FAILED`` record),
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .analytic import PeakonParams, aligned_eulerian_grid, pa_eulerian, pa_eulerian_state
from .diagnostics import dissipated, sigma, total_energy
from .evolution import Trajectory, evolve
from .state import (
    AlphaCHError,
    ConfigError,
    DomainError,
    EulerianState,
    IntegrationError,
    SolverConfig,
    check_lagrangian,
)
from .transforms import RelabelingFunction, normalize_eta, relabel, to_eulerian, to_lagrangian

log = logging.getLogger("alphach")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO = 0, 2, 3, 4

_TOP_KEYS = {"solver", "initial", "T", "output_times", "n_outputs", "output_grid", "compare", "transform", "seed"}


# ----------------------------------------------------------------------------
# configuration


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _resolve(cfg: dict, seed: Optional[int]) -> dict:
    """Fill defaults so the embedded config fully determines the output."""
    out = dict(cfg)
    out["solver"] = SolverConfig.from_dict(dict(cfg.get("solver") or {})).to_dict()
    out["initial"] = dict(cfg.get("initial") or {"kind": "zero"})
    out["T"] = float(cfg.get("T", 1.0))
    if not out["T"] >= 0:
        raise ConfigError("T must be nonnegative")
    if seed is not None:
        out["seed"] = int(seed)
    out.setdefault("seed", 0)
    return out


def _times(cfg: dict) -> np.ndarray:
    T = cfg["T"]
    if "output_times" in cfg:
        ts = np.asarray(cfg["output_times"], dtype=float)
        if ts.ndim != 1 or np.any(ts < 0) or np.any(ts > T) or np.any(np.diff(ts) <= 0):
            raise ConfigError("output_times must be increasing and lie in [0, T]")
        return ts
    n = int(cfg.get("n_outputs", 11))
    if n < 2:
        raise ConfigError("n_outputs must be at least 2")
    return np.linspace(0.0, T, n)


def _peakon_params(ini: dict, alpha: float) -> PeakonParams:
    try:
        return PeakonParams(float(ini.get("E", 2.0)), float(ini.get("t0", 1.0)), alpha)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def initial_state(ini: dict, solver: SolverConfig, t: float = 0.0) -> EulerianState:
    """Eulerian initial data described by the ``initial`` section."""
    kind = ini.get("kind", "zero")
    if kind == "zero":
        L = float(ini.get("half_width", 10.0))
        return EulerianState.zero(np.linspace(-L, L, int(ini.get("n_grid", 1001))))
    if kind == "peakon_antipeakon":
        p = _peakon_params(ini, solver.alpha)
        L = float(ini.get("half_width", 12.0))
        n_fine = int(ini.get("n_grid", 20001))
        if ini.get("aligned", True) and t == 0.0 and solver.n_nodes % 2 == 0:
            grid = aligned_eulerian_grid(p, solver.n_nodes, L, n_fine=n_fine)
        else:
            grid = np.linspace(-L, L, n_fine)
        return pa_eulerian_state(p, t, grid)
    if kind == "tabulated":
        if "file" in ini:
            try:
                data = np.loadtxt(ini["file"], delimiter=",", comments="#", ndmin=2)
            except OSError as exc:
                raise ConfigError(f"cannot read tabulated data: {exc}") from exc
            x, u = data[:, 0], data[:, 1]
            rho = data[:, 2] if data.shape[1] > 2 else None
        else:
            if "x" not in ini or "u" not in ini:
                raise ConfigError("tabulated data needs x and u (or file)")
            x = np.asarray(ini["x"], dtype=float)
            u = np.asarray(ini["u"], dtype=float)
            rho = np.asarray(ini["rho"], dtype=float) if "rho" in ini else None
        if x.shape != u.shape or (rho is not None and rho.shape != x.shape) or x.size < 3:
            raise ConfigError("tabulated x, u, rho must have equal lengths >= 3")
        if np.any(np.diff(x) <= 0):
            raise ConfigError("tabulated x must be strictly increasing")
        return EulerianState.from_samples(x, u, rho)
    raise ConfigError(f"unknown initial data kind {kind!r}")


# ----------------------------------------------------------------------------
# output


class _Writer:
    """CSV files sharing one provenance header."""

    def __init__(self, out_dir: Path, cfg: dict):
        self.out_dir = out_dir
        self.header = "# config=" + json.dumps(cfg, sort_keys=True, default=_jsonable)

    def write(self, name: str, columns: Sequence[str], rows, trailer: Optional[str] = None) -> Path:
        path = self.out_dir / name
        with open(path, "w") as fh:
            fh.write(self.header + "\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
            if trailer:
                fh.write(trailer + "\n")
        return path


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"not serializable: {type(v)}")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.16e" % float(v)


def _field_rows(times, states):
    for t, e in zip(times, states):
        for x, u, rho, ux in zip(e.grid, e.u, e.rho, e.u_x()):
            yield (t, x, u, rho, ux)


def _atom_rows(times, states):
    for t, e in zip(times, states):
        for which, m in (("mu", e.mu), ("nu", e.nu)):
            for x, mass in m.atoms:
                yield (t, x, mass, which)


def _write_run(w: _Writer, traj: Trajectory, eta: float, x_grid, trailer=None):
    states = [to_eulerian(th, x_grid=x_grid) for th in traj.states]
    if eta != 1.0:
        for e in states:
            e.rho = e.rho / np.sqrt(eta)
    times = traj.times
    w.write("fields.csv", ["t", "x", "u", "rho", "u_x"], _field_rows(times, states))
    w.write("atoms.csv", ["t", "location", "mass", "measure"], _atom_rows(times, states))
    ref = states[0] if states else None
    diag = []
    for t, th, e in zip(times, traj.states, states):
        n_ev = sum(1 for ev in traj.events if ev.tau <= t)
        diag.append((t, total_energy(e), sigma(th), dissipated(e, ref), n_ev))
    w.write("diagnostics.csv", ["t", "energy", "sigma", "dissipated", "events"], diag, trailer=trailer)
    w.write(
        "events.csv",
        ["node", "tau", "loss_mass", "hbar_before", "q", "w", "r"],
        ((ev.node, ev.tau, ev.loss_mass, ev.hbar_before, ev.q, ev.w, ev.r) for ev in traj.events),
        trailer=trailer,
    )


def _output_grid(cfg):
    og = cfg.get("output_grid")
    if og is None:
        return None
    try:
        return np.linspace(float(og["min"]), float(og["max"]), int(og["n"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("output_grid needs min, max and n") from exc


# ----------------------------------------------------------------------------
# commands


def cmd_run(cfg: dict, out_dir: Path) -> int:
    solver = SolverConfig.from_dict(cfg["solver"])
    e0 = initial_state(cfg["initial"], solver)
    times = _times(cfg)
    x_grid = _output_grid(cfg)
    w = _Writer(out_dir, cfg)
    u, rho = normalize_eta(e0.u, e0.rho, solver.eta)
    e0 = EulerianState(e0.grid, u, rho, e0.mu, e0.nu, ux=e0.ux, t=e0.t)
    theta0 = to_lagrangian(e0, solver.n_nodes)
    try:
        traj = evolve(theta0, cfg["T"], solver, output_times=times, record_groups=False)
    except IntegrationError as exc:
        partial = exc.trajectory if exc.trajectory is not None else Trajectory()
        _write_run(w, partial, solver.eta, x_grid, trailer="# FAILED " + str(exc).splitlines()[0])
        log.error("%s", exc)
        return EXIT_INVARIANT
    _write_run(w, traj, solver.eta, x_grid)
    return EXIT_OK


def cmd_compare_analytic(cfg: dict, out_dir: Path) -> int:
    solver = SolverConfig.from_dict(cfg["solver"])
    ini = cfg["initial"]
    if ini.get("kind") != "peakon_antipeakon":
        raise ConfigError("compare-analytic needs peakon_antipeakon initial data")
    cmp = cfg.get("compare") or {}
    ladder = [int(n) for n in cmp.get("ladder", [256, 512, 1024, 2048])]
    times = np.asarray(cmp.get("times", [0.5, 1.5]), dtype=float)
    if np.any(times < 0) or np.any(times > cfg["T"]):
        raise ConfigError("comparison times must lie in [0, T]")
    p = _peakon_params(ini, solver.alpha)
    rows = []
    errs = {}
    for n in ladder:
        s = SolverConfig.from_dict({**cfg["solver"], "n_nodes": n})
        e0 = initial_state(ini, s)
        traj = evolve(to_lagrangian(e0, n), float(times.max()), s, output_times=np.union1d([0.0], times))
        for t in times:
            e = to_eulerian(traj.at(t))
            ua, _ = pa_eulerian(p, float(t), e.grid)
            err = float(np.max(np.abs(e.u - ua)))
            errs.setdefault(float(t), []).append(err)
            rows.append((n, float(t), err))
    monotone = all(all(b < a for a, b in zip(v, v[1:])) for v in errs.values())
    w = _Writer(out_dir, cfg)
    w.write("errors.csv", ["n_nodes", "t", "sup_error"], rows, trailer=f"# monotone={str(monotone).lower()}")
    for n, t, err in rows:
        print(f"N={n:6d} t={t:.3f} sup|u-u_exact|={err:.3e}")
    print("errors decrease monotonically" if monotone else "WARNING: errors do not decrease monotonically")
    return EXIT_OK


def cmd_transform(cfg: dict, out_dir: Path) -> int:
    solver = SolverConfig.from_dict(cfg["solver"])
    tcfg = cfg.get("transform") or {}
    t = float(tcfg.get("t", 0.0))
    e = initial_state(cfg["initial"], solver, t=t)
    theta = to_lagrangian(e, solver.n_nodes)
    back = to_eulerian(theta)
    u_err = float(np.max(np.abs(np.interp(back.grid, e.grid, e.u) - back.u)))
    rows = [
        ("u_sup_error", u_err),
        ("mu_mass_error", back.mu.total_mass() - e.mu.total_mass()),
        ("nu_mass_error", back.nu.total_mass() - e.nu.total_mass()),
        ("mu_singular_error", back.mu.singular_mass() - e.mu.singular_mass()),
        ("nu_singular_error", back.nu.singular_mass() - e.nu.singular_mass()),
        ("sigma", sigma(theta)),
    ]
    rep = check_lagrangian(theta)
    rows.append(("invariant_violation", max(rep.violations.values(), default=0.0)))
    # random relabelings; M should not see them
    rng = np.random.default_rng(cfg["seed"])
    xi = theta.xi
    for k in range(int(tcfg.get("relabel_checks", 0))):
        amp, width = rng.uniform(0.1, 0.5), rng.uniform(1.0, 3.0)
        centre = rng.uniform(xi[0], xi[-1])
        z = (xi - centre) / width
        f = RelabelingFunction(xi, xi + amp * width * np.tanh(z), 1.0 + amp / np.cosh(z) ** 2)
        e_f = to_eulerian(relabel(theta, f))
        diff = float(np.max(np.abs(np.interp(back.grid, e_f.grid, e_f.u) - back.u)))
        rows.append((f"relabel_{k}_u_sup_diff", diff))
        rows.append((f"relabel_{k}_nu_mass_diff", e_f.nu.total_mass() - back.nu.total_mass()))
    w = _Writer(out_dir, cfg)
    w.write("lagrangian.csv", ["xi", "y", "U", "q", "w", "hbar", "h", "r", "loss"],
            zip(theta.xi, theta.y, theta.U, theta.q, theta.w, theta.hbar, theta.h, theta.r, theta.loss))
    w.write("residuals.csv", ["quantity", "value"], rows)
    return EXIT_OK


_COMMANDS = {"run": cmd_run, "compare-analytic": cmd_compare_analytic, "transform": cmd_transform}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="alphach", description="alpha-dissipative two-component Camassa-Holm solver")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="YAML configuration file")
        sp.add_argument("--out-dir", default=".", help="directory for the CSV output")
        sp.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = _resolve(load_config(args.config), args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AlphaCHError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
