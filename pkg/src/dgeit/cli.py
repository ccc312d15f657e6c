"""Command-line runner: ``dgeit --config run.ini [--seed N] [--threads N] [--out DIR]``.

Config files are INI.  Every key is optional; see ``DEFAULTS`` for the full
set and README.md for the grammar.
"""
import argparse
import configparser
import csv
import json
import logging
import re
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .dgcore import BoundaryTrace, DgSpace, project, write_center_csv, write_coefficients_csv
from .dtn import build_cache
from .exceptions import CoefficientRangeError, ConfigError, InvalidArgumentError, SolverError
from .experiments import (CASES, MEASUREMENTS, PHANTOMS, NoiseModel, background_function,
                          blob_height, center_of_mass, generate_data, run_eoc,
                          write_measurements_csv)
from .inverse import InverseConfig, gauss_newton, write_history_csv
from .mesh import build_mesh

logger = logging.getLogger("dgeit")

MODES = ("eoc", "reconstruct", "forward")

DEFAULTS = {
    "run": {"mode": "reconstruct", "out": "out", "seed": "0"},
    "domain": {"xmin": "-1", "xmax": "1", "ymin": "-1", "ymax": "1"},
    "mesh": {"nx": "32", "ny": "32", "fine_factor": "2", "meshes": "8, 16, 32, 64"},
    "problem": {"phantom": "single_blob", "case": "smooth", "measurement": "1"},
    "noise": {"epsilon": "0"},
    "inverse": {"alpha": "1e-8", "tau": "3", "rho": "0.9", "max_outer": "50",
                "max_inner": "50", "sigma0": "background", "cg_norm": "h1"},
    "solver": {"alpha_stab_scale": "1"},
}


class RunConfig:
    """Resolved configuration with typed accessors that report the offending line."""

    def __init__(self, parser, source=None, lines=None):
        self.parser = parser
        self.source = source or "<defaults>"
        self._lines = lines or {}

    @classmethod
    def load(cls, path=None):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str.lower
        parser.read_dict(DEFAULTS)
        lines = {}
        if path is not None:
            path = Path(path)
            try:
                text = path.read_text()
            except OSError as exc:
                raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
            user = configparser.ConfigParser(interpolation=None)
            user.optionxform = str.lower
            try:
                user.read_string(text, source=str(path))
            except configparser.Error as exc:
                raise ConfigError(f"{path}: {exc}") from exc
            lines = _key_lines(text)
            for section in user.sections():
                if section not in DEFAULTS:
                    raise ConfigError(f"{path}:{lines.get((section, None), '?')}: "
                                      f"unknown section [{section}]")
                for key, value in user.items(section):
                    if key not in DEFAULTS[section]:
                        raise ConfigError(f"{path}:{lines.get((section, key), '?')}: "
                                          f"unknown key '{key}' in [{section}]")
                    parser.set(section, key, value)
        return cls(parser, str(path) if path else None, lines)

    def _where(self, section, key):
        line = self._lines.get((section, key))
        loc = f"{self.source}:{line}" if line else self.source
        return f"{loc}: [{section}] {key}"

    def get(self, section, key):
        return self.parser.get(section, key).strip()

    def _convert(self, section, key, fn, what):
        raw = self.get(section, key)
        try:
            return fn(raw)
        except (ValueError, TypeError):
            raise ConfigError(f"{self._where(section, key)} = {raw!r}: expected {what}") from None

    def float(self, section, key):
        return self._convert(section, key, float, "a number")

    def int(self, section, key, minimum=None):
        val = self._convert(section, key, int, "an integer")
        if minimum is not None and val < minimum:
            raise ConfigError(f"{self._where(section, key)} = {val}: must be >= {minimum}")
        return val

    def int_list(self, section, key):
        return self._convert(section, key,
                             lambda s: [int(t) for t in re.split(r"[,\s]+", s) if t], "integers")

    def choice(self, section, key, options):
        val = self.get(section, key)
        if val not in options:
            raise ConfigError(f"{self._where(section, key)} = {val!r}: "
                              f"expected one of {', '.join(sorted(options))}")
        return val

    def set(self, section, key, value):
        self.parser.set(section, key, str(value))

    def write(self, path):
        with open(path, "w") as fh:
            self.parser.write(fh)


def _key_lines(text):
    lines, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = no
        elif section and s and s[0] not in "#;":
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            lines[(section, key)] = no
    return lines


def _box(cfg):
    box = tuple(cfg.float("domain", k) for k in ("xmin", "xmax", "ymin", "ymax"))
    if not (box[0] < box[1] and box[2] < box[3]):
        raise ConfigError(f"{cfg.source}: [domain] needs xmin < xmax and ymin < ymax, got {box}")
    return box


def _phantom(cfg):
    return PHANTOMS[cfg.choice("problem", "phantom", PHANTOMS)]


def _fmt(x):
    return format(float(x), ".17g")


def run_eoc_mode(cfg, out):
    case = cfg.choice("problem", "case", CASES)
    meshes = cfg.int_list("mesh", "meshes")
    if not meshes or min(meshes) < 1:
        raise ConfigError(f"{cfg._where('mesh', 'meshes')}: need positive mesh sizes")
    report = run_eoc(case, meshes, alpha_stab_scale=cfg.float("solver", "alpha_stab_scale"))
    report.write_csv(out / "eoc.csv")
    report.write_domain_csv(out / "eoc_domain_flux.csv")
    return {"case": case, "meshes": meshes,
            "err_u": report.errors["u"], "err_flux": report.errors["flux"]}


def _inverse_config(cfg, space, phantom):
    raw = cfg.get("inverse", "sigma0")
    if raw == "background":
        sigma0 = background_function(space, phantom)
    else:
        sigma0 = project(space, cfg.float("inverse", "sigma0"))
    try:
        return InverseConfig(alpha_reg=cfg.float("inverse", "alpha"),
                             tau=cfg.float("inverse", "tau"),
                             rho=cfg.float("inverse", "rho"),
                             max_outer=cfg.int("inverse", "max_outer", 1),
                             max_inner=cfg.int("inverse", "max_inner", 1),
                             sigma0=sigma0,
                             cg_norm=cfg.choice("inverse", "cg_norm", ("h1", "l2")),
                             alpha_stab_scale=cfg.float("solver", "alpha_stab_scale"))
    except InvalidArgumentError as exc:
        raise ConfigError(f"{cfg.source}: [inverse] {exc}") from exc


def run_reconstruct_mode(cfg, out):
    phantom = _phantom(cfg)
    box = _box(cfg)
    nx, ny = cfg.int("mesh", "nx", 1), cfg.int("mesh", "ny", 1)
    factor = cfg.int("mesh", "fine_factor", 2)
    eps = cfg.float("noise", "epsilon")
    if eps < 0:
        raise ConfigError(f"{cfg._where('noise', 'epsilon')}: must be nonnegative")
    seed = cfg.int("run", "seed", 0)
    scale = cfg.float("solver", "alpha_stab_scale")
    space = DgSpace(build_mesh(box, nx, ny))
    fine = build_mesh(box, factor * nx, factor * ny)
    meas = generate_data(phantom, fine, space, NoiseModel(eps, seed), alpha_stab_scale=scale)
    write_measurements_csv(meas, out / "measurements.csv")
    icfg = _inverse_config(cfg, space, phantom)
    state = gauss_newton(meas, icfg, space)
    write_history_csv(state, out / "iterations.csv")
    write_center_csv(state.sigma, out / "sigma.csv")
    write_coefficients_csv(state.sigma, out / "sigma_coefficients.csv")
    return {"phantom": phantom.name, "height": blob_height(state.sigma),
            "center_of_mass": list(center_of_mass(state.sigma, phantom.background_sigma)),
            "misfit": state.misfit, "delta": meas.delta, "threshold": icfg.tau * meas.delta,
            "iterations": state.k, "stop_reason": state.stop_reason}


def run_forward_mode(cfg, out):
    phantom = _phantom(cfg)
    box = _box(cfg)
    space = DgSpace(build_mesh(box, cfg.int("mesh", "nx", 1), cfg.int("mesh", "ny", 1)))
    which = cfg.get("problem", "measurement")
    if which == "zero":
        f = BoundaryTrace(space, np.zeros(space.trace_shape))
    else:
        j = cfg._convert("problem", "measurement", int, "1-4 or 'zero'")
        if not 1 <= j <= len(MEASUREMENTS):
            raise ConfigError(f"{cfg._where('problem', 'measurement')} = {j}: expected 1-4 or 'zero'")
        f = BoundaryTrace.from_function(space, MEASUREMENTS[j - 1][1])
    cache = build_cache(project(space, phantom), [f],
                        alpha_stab_scale=cfg.float("solver", "alpha_stab_scale"))
    u = cache.u(0)
    write_center_csv(u, out / "solution.csv")
    write_coefficients_csv(u, out / "solution_coefficients.csv")
    flux = cache.flux(0)
    pts = space.boundary_points
    edges = space.mesh.boundary_edges
    with open(out / "boundary_flux.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["edge", "qp", "x", "y", "f", "flux"])
        for e in range(pts.shape[0]):
            for k in range(pts.shape[1]):
                w.writerow([int(edges[e]), k, _fmt(pts[e, k, 0]), _fmt(pts[e, k, 1]),
                            _fmt(f.values[e, k]), _fmt(flux.values[e, k])])
    return {"phantom": phantom.name, "measurement": which, "flux_norm": flux.norm()}


RUNNERS = {"eoc": run_eoc_mode, "reconstruct": run_reconstruct_mode, "forward": run_forward_mode}


def build_parser():
    p = argparse.ArgumentParser(prog="dgeit", description=__doc__.splitlines()[0])
    p.add_argument("--config", metavar="PATH", help="INI run configuration")
    p.add_argument("--seed", type=int, metavar="N", help="noise seed (overrides [run] seed)")
    p.add_argument("--threads", type=int, metavar="N", help="cap BLAS/OpenMP worker threads")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides [run] out)")
    p.add_argument("--mode", choices=MODES, help="overrides [run] mode")
    p.add_argument("-v", "--verbose", action="store_true", help="log iterations to stderr")
    return p


def run(cfg):
    """Execute a resolved config; returns the summary dict."""
    mode = cfg.choice("run", "mode", MODES)
    out = Path(cfg.get("run", "out"))
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "manifest.ini")
    t0 = time.perf_counter()
    summary = {"mode": mode}
    summary.update(RUNNERS[mode](cfg, out))
    summary["wall_time_s"] = time.perf_counter() - t0
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.set("run", "seed", args.seed)
        if args.out is not None:
            cfg.set("run", "out", args.out)
        if args.mode is not None:
            cfg.set("run", "mode", args.mode)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        with threadpool_limits(limits=args.threads):
            summary = run(cfg)
    except ConfigError as exc:
        print(f"dgeit: config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, CoefficientRangeError, InvalidArgumentError) as exc:
        print(f"dgeit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
