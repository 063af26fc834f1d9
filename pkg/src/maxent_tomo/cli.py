"""Command-line front end: simulate, reconstruct, wigner, report.

Exit codes: 0 success, 1 bad input or I/O, 2 reconstruction did not
converge (a result is still written so the partial fit can be inspected).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io as tio
from .hilbert import (
    DensityOperator,
    FockSpace,
    PureState,
    entropy,
    expectation,
    fidelity,
    ladder_operators,
    make_state,
)
from .maxent import fit
from .measurement import build_observation_level
from .simulate import NoiseSpec, add_noise, prepare_free_expansion, simulate_ideal
from .wigner import wigner_eval, write_wigner_csv, write_wigner_json

__all__ = ["main"]


def _build_state(config: tio.RunConfig, space: FockSpace):
    kind, arg = config.state_spec()
    if kind == "free_expansion":
        t1 = float(arg) * 1e-6
        return prepare_free_expansion(config.trap_config(), t1, space)
    if kind == "fock":
        return make_state("fock", space, k=int(arg))
    if kind == "superposition":
        coeffs = [complex(tok.strip()) for tok in arg.split(",")]
        return make_state("superposition", space, coeffs=coeffs)
    if kind == "even_cat":
        return make_state("even_cat", space, alpha=float(arg))
    if kind == "thermal":
        return make_state("thermal", space, nbar=float(arg))
    raise ValueError(f"unknown state spec {config.state!r}")


def _state_nbar(state, space: FockSpace) -> float:
    return expectation(state, ladder_operators(space).n)


def _apply_overrides(config: tio.RunConfig, args) -> tio.RunConfig:
    if getattr(args, "nbar", None) is not None:
        config.nbar = args.nbar
    if getattr(args, "wnbar", None) is not None:
        config.weight_nbar = args.wnbar
    if getattr(args, "eta", None) is not None:
        config.eta = args.eta
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "dim", None) is not None:
        config.dim = args.dim
    if getattr(args, "no_background_subtraction", False):
        config.subtract_background = False
    if getattr(args, "fixed_center", None) is not None:
        config.fixed_center_m = args.fixed_center
    return config


def _outdir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_simulate(args) -> int:
    config = _apply_overrides(tio.read_config(args.config), args)
    space = config.space()
    cfg = config.trap_config()
    state = _build_state(config, space)
    nbar_true = _state_nbar(state, space)
    grid = config.grid(nbar_hint=nbar_true)
    observables = build_observation_level(
        cfg, grid, config.rotations(), None, space,
        weight_nbar=config.weight_nbar,
        gh_nodes=config.gh_nodes, gl_nodes=config.gl_nodes,
    )
    record = simulate_ideal(state, observables)
    if config.eta > 0:
        record = add_noise(
            record, NoiseSpec(eta=config.eta, seed=config.seed),
            nbar_noisy=config.noisy_nbar,
        )
    out = _outdir(args)
    record_path = os.path.join(out, "record.csv")
    tio.write_record(record, record_path)
    rho = state.density() if isinstance(state, PureState) else state
    state_path = os.path.join(out, "state_true.json")
    tio.write_density_matrix(rho, state_path)
    print(f"simulated {record.values.shape[0]} rotations x "
          f"{record.values.shape[1]} bins, nbar={record.nbar:.6g}")
    print(f"wrote {record_path}")
    print(f"wrote {state_path}")
    return 0


def _cmd_reconstruct(args) -> int:
    config = _apply_overrides(tio.read_config(args.config), args)
    space = config.space()
    cfg = config.trap_config()

    if args.record and args.cut:
        raise ValueError("pass either --record or --cut files, not both")
    if args.record:
        record = tio.read_record(args.record)
        nbar = config.nbar if config.nbar is not None else record.nbar
        observables = build_observation_level(
            cfg, record.grid, record.rotations, nbar, space,
            weight_nbar=config.weight_nbar,
            gh_nodes=config.gh_nodes, gl_nodes=config.gl_nodes,
        )
        means = record.flat_means()
        means[-1] = nbar
        observables = observables.with_means(means)
    elif args.cut:
        if config.nbar is None:
            raise ValueError(
                "a measured mean excitation number is required to reconstruct "
                "from image cuts: it anchors the fit and bounds the occupied "
                "levels; pass --nbar or set nbar in the config"
            )
        cuts = [tio.read_cut_file(p) for p in args.cut]
        nbar = config.nbar
        grid = config.grid(nbar_hint=nbar)
        rotations = tuple(config.omega_z * c.tau_s for c in cuts)
        rows = [
            tio.preprocess(
                c, grid,
                subtract_background=config.subtract_background,
                recenter=config.recenter,
                fixed_center=config.fixed_center_m,
            )
            for c in cuts
        ]
        observables = build_observation_level(
            cfg, grid, rotations, nbar, space,
            weight_nbar=config.weight_nbar,
            gh_nodes=config.gh_nodes, gl_nodes=config.gl_nodes,
        )
        means = np.concatenate([np.concatenate(rows), [nbar]])
        observables = observables.with_means(means)
    else:
        raise ValueError("reconstruct needs --record or at least one --cut")

    state, report = fit(
        observables, max_iter=config.max_iter, grad_tol=config.grad_tol,
    )
    out = _outdir(args)
    rho_path = os.path.join(out, "rho.json")
    report_path = os.path.join(out, "report.json")
    tio.write_density_matrix(state.rho, rho_path)
    with open(report_path, "w") as fh:
        import json
        json.dump(report.to_dict(), fh, indent=1)
        fh.write("\n")
    print(f"delta_f = {report.delta_f:.6g}")
    print(f"entropy = {report.entropy:.6g}")
    print(f"nbar_fit = {report.nbar_fit:.6g}")
    print(f"converged = {report.converged} after {report.iterations} iterations")
    print(f"wrote {rho_path}")
    print(f"wrote {report_path}")
    return 0 if report.converged else 2


def _cmd_wigner(args) -> int:
    rho = tio.read_density_matrix(args.rho)
    grid = wigner_eval(rho, span=args.span, points=args.points)
    out = _outdir(args)
    csv_path = os.path.join(out, "wigner.csv")
    json_path = os.path.join(out, "wigner.json")
    write_wigner_csv(grid, csv_path)
    write_wigner_json(grid, json_path)
    print(f"wigner grid {grid.values.shape[0]}x{grid.values.shape[1]}, "
          f"plane integral {grid.integral():.6f} (2pi = {2 * np.pi:.6f})")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return 0


def _cmd_report(args) -> int:
    rho = tio.read_density_matrix(args.rho)
    space = FockSpace(rho.dim)
    nbar = expectation(rho, ladder_operators(space).n)
    print(f"dim = {rho.dim}")
    print(f"entropy = {entropy(rho):.6g}")
    print(f"nbar = {nbar:.6g}")
    if args.fit:
        import json
        with open(args.fit) as fh:
            rep = json.load(fh)
        print(f"delta_f = {rep.get('delta_f'):.6g}")
        print(f"converged = {rep.get('converged')}")
    if args.reference:
        ref = tio.read_density_matrix(args.reference)
        if ref.dim != rho.dim:
            raise ValueError("reference and state dimensions differ")
        print(f"fidelity = {fidelity(ref, rho):.9g}")
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxent-tomo",
        description="maximum-entropy motional-state reconstruction from "
                    "time-of-flight data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic record")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", default=None)
    sim.add_argument("--nbar", type=float, default=None)
    sim.add_argument("--wnbar", type=float, default=None)
    sim.add_argument("--eta", type=float, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--dim", type=int, default=None)
    sim.set_defaults(func=_cmd_simulate)

    rec = sub.add_parser("reconstruct", help="fit a state to a record or cuts")
    rec.add_argument("--config", required=True)
    rec.add_argument("--record", default=None)
    rec.add_argument("--cut", action="append", default=None,
                     help="image-cut CSV, one per rotation (repeatable)")
    rec.add_argument("--nbar", type=float, default=None)
    rec.add_argument("--wnbar", type=float, default=None)
    rec.add_argument("--dim", type=int, default=None)
    rec.add_argument("--out", default=None)
    rec.add_argument("--no-background-subtraction", action="store_true")
    rec.add_argument("--fixed-center", type=float, default=None,
                     help="use this cloud center (m) for every cut instead of "
                          "per-image Gaussian fits")
    rec.set_defaults(func=_cmd_reconstruct)

    wig = sub.add_parser("wigner", help="evaluate the Wigner function of a "
                                        "stored density matrix")
    wig.add_argument("--rho", required=True)
    wig.add_argument("--out", default=None)
    wig.add_argument("--span", type=float, default=6.0)
    wig.add_argument("--points", type=int, default=257)
    wig.set_defaults(func=_cmd_wigner)

    rep = sub.add_parser("report", help="summarize a stored density matrix")
    rep.add_argument("--rho", required=True)
    rep.add_argument("--reference", default=None,
                     help="density matrix to compare against (fidelity)")
    rep.add_argument("--fit", default=None, help="fit report JSON to echo")
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
