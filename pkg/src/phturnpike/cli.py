"""Command line entry point: ``phturnpike {solve,simulate,certify,diagnose,sweep}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure (solver
not converged, integration failure, inconclusive certificate, failed check).
"""
import argparse
import contextlib
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import artifacts, config, diagnose, manifold, transcribe
from .errors import ConfigError, IntegrationError, InconclusiveCertificateError, PHTurnpikeError
from .solver import solve

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 1, 2
HULL_PAD = 0.1


class _Failure(Exception):
    """Numerical failure carrying a message; mapped to exit code 2."""


@contextlib.contextmanager
def _capture_log(name="phturnpike.solver"):
    buf = io.StringIO()
    handler = logging.StreamHandler(buf)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger = logging.getLogger(name)
    old_level = logger.level
    logger.addHandler(handler)
    logger.setLevel(logging.INFO)
    try:
        yield buf
    finally:
        logger.removeHandler(handler)
        logger.setLevel(old_level)


def _out_dir(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _hull_box(X):
    lo, hi = X.min(axis=0), X.max(axis=0)
    pad = HULL_PAD * np.maximum(hi - lo, 1.0)
    return lo - pad, hi + pad


def _certify(cfg, dm, X=None):
    box = cfg.certify["box"]
    if box is None:
        lo, hi = _hull_box(X) if X is not None else (np.full(dm.system.n, -3.0), np.full(dm.system.n, 3.0))
    else:
        lo, hi = config._box(box, dm.system.n, "certify.box")
    shell = cfg.certify["shell_width"]
    cert = manifold.certify(
        dm, (lo, hi), int(cfg.certify["samples"]),
        shell_width=np.inf if shell is None else float(shell), seed=cfg.seed,
    )
    return cert, (lo, hi)


def _certificate_doc(cert, box):
    doc = cert.to_dict()
    doc["box"] = [box[0].tolist(), box[1].tolist()]
    doc["unit_c_violations"] = len(cert.violations_for(1.0))
    return doc


def _reports(cfg, system, traj, dm):
    """Energy, turnpike and dissipativity reports plus the certificate used for ``c``."""
    dists = diagnose.point_distances(traj, dm)
    energy = diagnose.energy_balance(traj, system)
    turnpike = diagnose.turnpike_measure(traj, dm, cfg.epsilon, distances=dists)
    cert, box = _certify(cfg, dm, traj.x)
    cert_doc = _certificate_doc(cert, box)
    # the certified region must contain the trajectory for c to apply along it
    inside = bool(np.all((traj.x >= box[0]) & (traj.x <= box[1])) and np.all(dists[0] <= cert.shell_width))
    cert_doc["trajectory_inside"] = inside
    if not inside:
        print("phturnpike: warning: trajectory leaves the certified region", file=sys.stderr)
    if cert.c > 0:
        dissip = diagnose.dissipativity_check(
            traj, dm, cert.c, cfg.dissipativity_tol, cert.empirical_constant, distances=dists
        ).to_dict()
    else:
        dissip = None
    return {
        "energy": energy.to_dict(),
        "turnpike": turnpike.to_dict(),
        "dissipativity": dissip,
        "certificate": cert_doc,
    }


def _node_distances(traj, dm):
    return np.array([manifold.distance(dm, x) for x in traj.x])


def cmd_solve(cfg, sys, ocp):
    nlp = transcribe.transcribe(ocp)
    with _capture_log() as buf:
        sol = solve(nlp, transcribe.initial_guess(ocp), config.solver_options(cfg))
    traj = transcribe.decode(ocp, sol.w_star)
    dm = manifold.DissipationMap(sys)
    reports = _reports(cfg, sys, traj, dm)
    out = _out_dir(cfg)
    summary = {
        "command": "solve",
        "config": cfg.to_dict(),
        **sol.summary(),
        "terminal_error": float(np.max(np.abs(traj.x[-1] - ocp.xT))),
        "max_accepted_increase": sol.max_accepted_increase,
        **reports,
    }
    artifacts.write_trajectory(out / "trajectory.csv", traj, sys, _node_distances(traj, dm))
    artifacts.atomic_write_text(out / "solver.log", buf.getvalue())
    artifacts.write_json(out / "certificate.json", reports["certificate"])
    artifacts.write_json(out / "summary.json", summary)
    if not sol.converged:
        raise _Failure(f"solver did not converge: {sol.status}")


def _simulation_controls(cfg, sys, ocp):
    ctl = cfg.control
    if ctl.get("csv"):
        prior = artifacts.read_trajectory(ctl["csv"], sys.n, sys.m, cfg.theta)
        if len(prior.u) != ocp.N:
            raise ConfigError(f"control CSV has {len(prior.u)} intervals, config N is {ocp.N}")
        return prior.u
    const = ctl.get("constant")
    return np.zeros(sys.m) if const is None else np.broadcast_to(np.array(const, dtype=float), (sys.m,))


def cmd_simulate(cfg, sys, ocp):
    U = _simulation_controls(cfg, sys, ocp)
    try:
        traj = transcribe.simulate(sys, ocp.x0, U, ocp.T, ocp.N, ocp.theta)
    except IntegrationError as exc:
        raise _Failure(f"integration failed at step {exc.step}: {exc}") from exc
    dm = manifold.DissipationMap(sys)
    out = _out_dir(cfg)
    summary = {
        "command": "simulate",
        "config": cfg.to_dict(),
        "energy": diagnose.energy_balance(traj, sys).to_dict(),
    }
    artifacts.write_trajectory(out / "trajectory.csv", traj, sys, _node_distances(traj, dm))
    artifacts.write_json(out / "summary.json", summary)


def cmd_certify(cfg, sys, ocp):
    dm = manifold.DissipationMap(sys)
    try:
        cert, box = _certify(cfg, dm)
    except InconclusiveCertificateError as exc:
        raise _Failure(str(exc)) from exc
    out = _out_dir(cfg)
    artifacts.write_json(out / "certificate.json", _certificate_doc(cert, box))
    if not cert.passed:
        raise _Failure(f"certificate inconclusive: s={cert.s}, n={cert.n}, violations={len(cert.bound_violations)}")


def cmd_diagnose(cfg, sys, ocp):
    path = Path(cfg.trajectory) if cfg.trajectory else Path(cfg.out) / "trajectory.csv"
    try:
        traj = artifacts.read_trajectory(path, sys.n, sys.m, cfg.theta)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read trajectory {path}: {exc}") from exc
    dm = manifold.DissipationMap(sys)
    reports = _reports(cfg, sys, traj, dm)
    out = _out_dir(cfg)
    artifacts.write_json(out / "diagnostics.json", {"command": "diagnose", "config": cfg.to_dict(), **reports})
    if reports["dissipativity"] is None or not reports["dissipativity"]["passed"]:
        raise _Failure("dissipativity check failed")


SWEEP_COLUMNS = [
    "T", "N", "status", "cost", "eq_violation", "epsilon",
    "measure_outside", "fraction_outside", "max_distance", "entry_time", "exit_time", "nonconverged",
]


def cmd_sweep(cfg, sys, ocp):
    with _capture_log() as buf:
        result = diagnose.horizon_sweep(
            ocp, cfg.sweep["horizons"], cfg.epsilon, config.solver_options(cfg)
        )
    out = _out_dir(cfg)
    doc = result.to_dict()
    artifacts.write_json(out / "sweep.json", {"command": "sweep", "config": cfg.to_dict(), **doc})
    artifacts.atomic_write_text(out / "sweep.csv", artifacts.table_csv(doc["rows"], SWEEP_COLUMNS))
    artifacts.atomic_write_text(out / "solver.log", buf.getvalue())
    if not result.passed:
        raise _Failure("horizon sweep flagged: " + ("non-converged solve" if not result.all_converged else "measure not bounded"))


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "certify": cmd_certify,
    "diagnose": cmd_diagnose,
    "sweep": cmd_sweep,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="phturnpike", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    parser.add_argument("--epsilon", type=float, metavar="REAL", help="turnpike radius (overrides config)")
    parser.add_argument("--seed", type=int, metavar="INT", help="sampling seed (overrides config)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg, sys_, ocp = config.load(
            args.config, {"out": args.out, "epsilon": args.epsilon, "seed": args.seed}
        )
        COMMANDS[args.command](cfg, sys_, ocp)
    except ConfigError as exc:
        print(f"phturnpike: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (_Failure, PHTurnpikeError, ArithmeticError) as exc:
        print(f"phturnpike: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
