"""Batch command line interface.

    holddmm shoot       --config c.json --output out/
    holddmm flow-grid   --config c.json --output out/ --format both
    holddmm match-points --config c.json --output out/ --lambda 100
    holddmm match-image --config c.json --output out/ --seed 0
    holddmm diagnose    --config c.json --output out/

Every command exits with status 0 on success and prints a one-line error to
standard error with a nonzero status otherwise.
"""

import argparse
import logging
import os
import sys

import numpy as np

from ..epdiff import shoot
from ..errors import InputError, IntegrationError
from ..momenta import energy
from ..registration import (
    DEFAULT_IMAGE_LAMBDA,
    IMAGE_REVERSED,
    POINTS_FORWARD,
    RegistrationProblem,
    register,
)
from ..similarity import (
    ImageGrid,
    PointTargets,
    build_stencil,
    image_similarity_report,
    random_stencil,
)
from . import io
from .diagnostics import (
    GridSpec,
    atom_log_jacobians,
    cauchy_green_trace,
    divergence_at_atoms,
    flow_grid,
    log_jacobian_from_flow,
)

log = logging.getLogger("holddmm")


class CommandError(Exception):
    """A command ran but could not produce a valid result."""


def _load(args):
    doc = io.load_config(args.config)
    steps = args.steps if args.steps is not None else doc.steps
    if steps < 1:
        raise InputError("--steps must be positive")
    os.makedirs(args.output, exist_ok=True)
    return doc, steps


def _out(args, name):
    return os.path.join(args.output, name)


def cmd_shoot(args):
    doc, steps = _load(args)
    path = shoot(doc.config, steps, doc.direction)
    io.write_trajectories(_out(args, "trajectory.csv"), path)
    end = path.endpoint
    io.write_json(
        _out(args, "endpoint.json"),
        {"t": end.t, "x": end.x.tolist(), "J": end.J.tolist(),
         "mu": end.mu.tolist(), "W": end.W.tolist()},
    )
    print(f"shot {doc.config.n_atoms} atoms over {steps} steps; energy {energy(doc.config):.10g}")


def _default_grid(config, n):
    x = config.positions
    lo, hi = x.min(axis=0), x.max(axis=0)
    half = 0.5 * float(np.max(hi - lo)) + 2.0 * config.kernel.sigma
    return GridSpec.around(0.5 * (lo + hi), half, n)


def cmd_flow_grid(args):
    doc, steps = _load(args)
    config = doc.config
    if args.grid_half_width is not None or args.grid_center is not None:
        center = args.grid_center if args.grid_center is not None else config.positions.mean(axis=0)
        half = args.grid_half_width if args.grid_half_width is not None else 2.0 * config.kernel.sigma
        if len(center) != config.dim or half <= 0:
            raise InputError("grid centre must match the dimension and half width be positive")
        grid = GridSpec.around(center, half, args.grid_nodes)
    else:
        grid = _default_grid(config, args.grid_nodes)
    path = shoot(config, steps, doc.direction)
    flow = flow_grid(path, grid)
    logjac = log_jacobian_from_flow(flow)
    strain = cauchy_green_trace(flow.jacobians, grid)
    if args.format in ("csv", "both"):
        io.write_points(_out(args, "warped_grid.csv"), grid.points(), flow.points)
        io.write_field(_out(args, "log_jacobian.csv"), logjac)
        io.write_field(_out(args, "strain.csv"), strain)
    if args.format in ("pgm", "both"):
        if grid.dim != 2:
            raise InputError("PGM rendering is only available for 2D grids")
        io.write_pgm(_out(args, "log_jacobian.pgm"), io.field_image(logjac), args.window)
        io.write_pgm(_out(args, "strain.pgm"), io.field_image(strain), args.window)
    print(
        f"log-Jacobian range [{logjac.values.min():.6g}, {logjac.values.max():.6g}] "
        f"on {np.prod(grid.shape)} nodes"
    )


def _lambda(args, sim, default):
    if args.lam is not None:
        return args.lam
    return float(sim.get("lambda", default))


def _report(result, extra=None):
    rep = {
        "converged": result.converged,
        "message": result.message,
        "iterations": result.iterations,
        "initial_similarity": result.initial_similarity,
        "similarity": result.similarity,
        "energy": result.energy,
        "objective_history": result.history.tolist(),
    }
    rep.update(extra or {})
    return rep


def _finish_registration(args, doc, result, steps, extra=None):
    report = _report(result, extra)
    integrator = dict(doc.integrator, steps=steps)
    io.write_json(
        _out(args, "result.json"),
        {"config": io.config_to_dict(result.config, integrator, doc.similarity, doc.optimizer),
         "report": report},
    )
    io.write_trajectories(_out(args, "trajectory.csv"), result.path)
    if result.failed:
        raise CommandError(f"registration failed: {result.message}")
    return report


def cmd_match_points(args):
    doc, steps = _load(args)
    sim = doc.similarity
    if sim.get("type") != "points":
        raise InputError("match-points needs a similarity section of type 'points'")
    try:
        targets = sim["targets"]
        y = [t["y"] for t in targets]
        Ys = [t.get("Y") for t in targets]
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed point targets: {exc}") from exc
    if any(Y is None for Y in Ys) and not all(Y is None for Y in Ys):
        raise InputError("either all or none of the targets must carry a Jacobian 'Y'")
    Y = None if Ys[0] is None else np.array(Ys, dtype=float)
    problem = RegistrationProblem(
        POINTS_FORWARD, doc.config, _lambda(args, sim, 1.0), PointTargets(np.array(y, dtype=float), Y),
        optimizer=doc.optimizer_options(), steps=steps,
    )
    result = register(problem)
    _finish_registration(args, doc, result, steps)
    print(
        f"U {result.initial_similarity:.6g} -> {result.similarity:.6g} "
        f"in {result.iterations} iterations ({result.message})"
    )


def _stencil(kernel, spec, seed):
    kind = spec.get("kind", "grid")
    radius = float(spec.get("radius_factor", 2.0))
    if kind == "grid":
        return build_stencil(kernel, radius, float(spec.get("spacing", 1.0)))
    if kind == "random":
        s = seed if seed is not None else int(spec.get("seed", 0))
        return random_stencil(kernel, int(spec.get("pairs", 500)), radius, s)
    raise InputError(f"unknown stencil kind {kind!r}")


def cmd_match_image(args):
    doc, steps = _load(args)
    sim = doc.similarity
    if sim.get("type") != "image":
        raise InputError("match-image needs a similarity section of type 'image'")
    try:
        moving_path, fixed_path = doc.resolve(sim["moving"]), doc.resolve(sim["fixed"])
    except KeyError as exc:
        raise InputError(f"image similarity needs {exc}") from exc
    spacing = float(sim.get("pixel_spacing", 1.0))
    moving = ImageGrid(io.read_pgm(moving_path), spacing)
    fixed = ImageGrid(io.read_pgm(fixed_path), spacing)
    stencil = _stencil(doc.config.kernel, sim.get("stencil", {}), args.seed)
    F = sim.get("F", "squared")
    problem = RegistrationProblem(
        IMAGE_REVERSED, doc.config, _lambda(args, sim, DEFAULT_IMAGE_LAMBDA),
        moving=moving, fixed=fixed, stencil=stencil, F=F,
        optimizer=doc.optimizer_options(), steps=steps,
    )
    result = register(problem)
    final = image_similarity_report(
        result.path.endpoint, moving, fixed, doc.config.positions, stencil, F
    )
    u0 = result.initial_similarity
    reduction = 1.0 - result.similarity / u0 if u0 > 0 else 0.0
    extra = {
        "reduction": reduction,
        "out_of_bounds_fraction": final.out_of_bounds,
        "atom_log_jacobians": atom_log_jacobians(result.path).tolist(),
        "divergence_at_atoms": divergence_at_atoms(result.config).tolist(),
    }
    _finish_registration(args, doc, result, steps, extra)
    print(
        f"dissimilarity {u0:.6g} -> {result.similarity:.6g} "
        f"({100.0 * reduction:.1f}% reduction, {result.iterations} iterations)"
    )


def cmd_diagnose(args):
    doc, steps = _load(args)
    config = doc.config
    path = shoot(config, steps, doc.direction)
    e = path.energies()
    report = {
        "energy": energy(config),
        "energy_drift": float(np.max(np.abs(e - e[0])) / e[0]) if e[0] > 0 else 0.0,
        "constraint_drift": path.constraint_drift(),
        "divergence_at_atoms": divergence_at_atoms(config).tolist(),
        "atom_log_jacobians": atom_log_jacobians(path).tolist(),
        "direction": doc.direction,
    }
    io.write_json(_out(args, "diagnostics.json"), report)
    div = np.array(report["divergence_at_atoms"])
    lj = np.array(report["atom_log_jacobians"])
    print(f"energy {report['energy']:.10g}; mean divergence {div.mean():.6g}; "
          f"mean log-Jacobian {lj.mean():.6g}")


COMMANDS = {
    "shoot": (cmd_shoot, "integrate the geodesic and write the trajectory"),
    "flow-grid": (cmd_flow_grid, "warp a grid and write log-Jacobian and strain fields"),
    "match-points": (cmd_match_points, "register points with optional Jacobian targets"),
    "match-image": (cmd_match_image, "register a moving image onto a fixed image"),
    "diagnose": (cmd_diagnose, "report energy, divergence and log-Jacobians at atoms"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="holddmm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--output", default=".", help="output directory")
        p.add_argument("--steps", type=int, help="RK4 steps (overrides the config)")
        p.add_argument("--lambda", dest="lam", type=float, help="similarity weight")
        p.add_argument("--seed", type=int, help="seed for randomised stencils")
        p.add_argument("--format", choices=("csv", "pgm", "both"), default="csv")
        p.add_argument("--verbose", "-v", action="store_true")
        if name == "flow-grid":
            p.add_argument("--grid-nodes", type=int, default=41)
            p.add_argument("--grid-center", type=float, nargs="+")
            p.add_argument("--grid-half-width", type=float)
            p.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"),
                           help="value range mapped to black..white in PGM output")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.lam is not None and args.lam < 0:
        print("holddmm: error: --lambda must be non-negative", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command][0](args)
    except (InputError, IntegrationError, CommandError, OSError, ValueError, TypeError, KeyError) as exc:
        print(f"holddmm: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
