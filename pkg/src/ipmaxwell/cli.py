"""Command-line entry point: mesh generation, boundary value runs and eigenvalue runs."""
import argparse
import logging
import sys

from . import harness
from .geometry import MeshError, make_mesh, write_mesh


def _floats(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _output_options():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--format", choices=("csv", "md"), default="csv", help="table format")
    p.add_argument("--out", help="write the table to this file instead of stdout")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def _penalty_options():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--gamma", type=float, default=10.0, help="tangential jump penalty")
    p.add_argument("--c-alpha", type=float, default=1.0, help="stabilisation scale")
    p.add_argument("--degree", type=int, choices=(1, 2), default=1, help="polynomial degree")
    p.add_argument("--style", choices=("structured", "powell-sabin", "hct"), default="structured")
    return p


def _bvp_options():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--domain", choices=("lshape", "square"), default="lshape")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--lambda", dest="lam", type=float, help="singular exponent of the exact field")
    g.add_argument("--eps-r", type=float, help="contrast; the exponent is solved for")
    p.add_argument("--theta", type=int, choices=(-1, 0, 1), default=1, help="adjoint consistency sign")
    return p


def build_parser():
    out, pen, bvp = _output_options(), _penalty_options(), _bvp_options()
    parser = argparse.ArgumentParser(prog="ipmaxwell", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = msub.add_parser("gen", help="generate a structured or split mesh")
    gen.add_argument("--domain", choices=sorted(harness.DOMAINS), required=True)
    gen.add_argument("--h", type=float, required=True)
    gen.add_argument("--style", choices=("structured", "powell-sabin", "hct"), default="structured")
    gen.add_argument("--out", required=True)

    p = sub.add_parser("bvp", parents=[out, pen, bvp], help="one boundary value solve")
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--mesh", help="read the mesh from a file instead of generating it")

    p = sub.add_parser("bvp-sweep", parents=[out, pen, bvp], help="convergence study")
    p.add_argument("--alpha-list", type=_floats, default=(0.9,))
    p.add_argument("--h-list", type=_floats, default=(0.2, 0.1, 0.05, 0.025, 0.0125))

    eig_common = argparse.ArgumentParser(add_help=False)
    eig_common.add_argument("--domain", choices=("checkerboard",), default="checkerboard")
    eig_common.add_argument("--eps-r", type=float, default=0.5)
    eig_common.add_argument("--alpha", type=float, default=0.7)
    eig_common.add_argument("--num", type=int, default=10, help="number of eigenvalues")
    eig_common.add_argument("--tol", type=float, default=1e-8)
    eig_common.add_argument("--allow-alpha-one", action="store_true",
                            help="permit alpha = 1 (spectrally polluted)")
    eig_common.add_argument("--backend", choices=("lanczos", "arpack"), default="lanczos")

    p = sub.add_parser("eig", parents=[out, pen, eig_common], help="checkerboard eigenvalues")
    p.add_argument("--h", type=float, default=0.05)
    p.add_argument("--mesh", help="read the mesh from a file instead of generating it")

    p = sub.add_parser("eig-sweep", parents=[out, pen, eig_common], help="eigenvalue convergence study")
    p.add_argument("--h-list", type=_floats, default=(0.2, 0.1, 0.05, 0.025))
    return parser


def _bvp_config(args, alphas, hs, mesh_files=None):
    if args.domain == "lshape" and args.lam is None and args.eps_r is None:
        raise ValueError("the L-shape benchmark needs --lambda or --eps-r")
    return harness.BvpConfig(
        domain=args.domain, lam=args.lam, eps_r=args.eps_r, degree=args.degree, alphas=alphas,
        hs=hs, style="file" if mesh_files else args.style, gamma=args.gamma,
        c_alpha=args.c_alpha, theta=args.theta, mesh_files=mesh_files,
    )


def _eig_config(args, hs, mesh_files=None):
    return harness.EigConfig(
        eps_r=args.eps_r, alpha=args.alpha, degree=args.degree, hs=hs, k=args.num, tol=args.tol,
        style="file" if mesh_files else args.style, gamma=args.gamma, c_alpha=args.c_alpha,
        allow_alpha_one=args.allow_alpha_one, backend=args.backend, mesh_files=mesh_files,
    )


def _run(args):
    if args.command == "mesh":
        mesh = make_mesh(harness.DOMAINS[args.domain], args.h, args.style)
        write_mesh(mesh, args.out)
        print(f"wrote {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, h={mesh.h:.6g} to {args.out}",
              file=sys.stderr)
        return None
    if args.command == "bvp":
        files = (args.mesh,) if args.mesh else None
        report = harness.run_bvp_sweep(_bvp_config(args, (args.alpha,), (args.h,), files))
        run = report.runs[args.alpha][0]
        print(f"dofs={run.n_dofs} backward_error={run.residual:.3e}", file=sys.stderr)
        return harness.bvp_report_table(report, args.format)
    if args.command == "bvp-sweep":
        report = harness.run_bvp_sweep(_bvp_config(args, args.alpha_list, args.h_list))
        return harness.bvp_report_table(report, args.format)
    if args.command == "eig":
        files = (args.mesh,) if args.mesh else None
        tables = harness.run_eig_sweep(_eig_config(args, (args.h,), files))
        return harness.eigen_table(tables[0], args.format)
    if args.command == "eig-sweep":
        tables = harness.run_eig_sweep(_eig_config(args, args.h_list))
        return harness.eigen_sweep_table(tables, args.format)
    raise AssertionError(args.command)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = _run(args)
    except (ValueError, KeyError, MeshError, OSError, harness.SweepError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if text is not None:
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
