"""Command-line entry point: ``mfdp <command> [flags]``.

Exit codes: 0 on success, 2 on usage or input errors, 1 on numerical
failures.  Every command is deterministic given its flags and ``--seed``.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from mfdp import (fftmech, mechlab, optfact, participation, reports, treestamp,
                  workloads)
from mfdp.errors import (ConfigurationError, ContractViolation, InvalidSchemaError,
                         MFDPError, NonnegativityViolated, TooLargeError)

log = logging.getLogger("mfdp")

USAGE_ERRORS = (ContractViolation, ConfigurationError, InvalidSchemaError,
                NonnegativityViolated, TooLargeError)


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _dump_json(obj, stream=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    (stream or sys.stdout).write(text)
    return text


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _out_dir(args):
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


def _write_matrix(args, name, M):
    """Writes M into --out-dir as MAT64 or CSV per --format; returns the path."""
    d = _out_dir(args)
    if args.format == "csv":
        path = os.path.join(d, f"{name}.csv")
        with open(path, "w", newline="") as f:
            f.write(mechlab.matrix_to_csv(M))
    else:
        path = os.path.join(d, f"{name}.mat64")
        mechlab.write_mat64(path, M)
    return path


def _write_text(args, name, text):
    path = os.path.join(_out_dir(args), name)
    with open(path, "w", newline="") as f:
        f.write(text)
    return path


def _read_matrix(path):
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    return mechlab.read_mat64(path)


def _schema(args):
    n = args.n if getattr(args, "n", None) else args.k * args.b
    return participation.make_schema(n, args.k, args.b)


def _workload_spec(args):
    kind = args.workload if hasattr(args, "workload") else args.kind
    return workloads.WorkloadSpec(n=args.n, kind=kind, beta=args.beta,
                                  cooldown_fraction=args.cooldown_fraction,
                                  cooldown_floor=args.cooldown_floor)


def cmd_workload(args):
    A = _workload_spec(args).build()
    path = _write_matrix(args, "workload", A)
    _dump_json({"path": path, "rows": A.shape[0], "cols": A.shape[1], "kind": args.kind})


def cmd_sensitivity(args):
    C = _read_matrix(args.matrix)
    schema = participation.make_schema(C.shape[1], args.k, args.b)
    r = participation.sensitivity(C, schema, args.method)
    _dump_json({"value": r.value, "method": r.method,
                "pattern": [i + 1 for i in r.pattern],
                "corner": list(r.corner) if r.corner is not None else None})


def cmd_factorize(args):
    A = _workload_spec(args).build()
    schema = participation.make_schema(args.n, args.k, args.b)
    opts = optfact.SolverOptions(gap_tol=args.gap_tol, max_iter=args.max_iter)
    f, st = optfact.solve(A, schema, args.mode, opts)
    X = f.C.T @ f.C
    _write_matrix(args, "B", f.B)
    _write_matrix(args, "C", f.C)
    diag = {
        "workload": args.workload, "n": args.n, "k": args.k, "b": args.b,
        "mode": args.mode, "dual_value": st.dual_value, "primal_value": st.primal_value,
        "gap": st.gap, "iterations": st.iterations, "min_x": float(np.min(X)),
        "min_x_constrained": optfact.min_constrained_entry(X, schema, args.mode)
        if args.mode != "full_corners" else None,
        "kkt_residual": optfact.kkt_residual(st),
        "sens": f.sens, "sens_method": f.sens_method, "loss": f.loss(),
        "root_loss": float(np.sqrt(f.loss())),
    }
    _write_text(args, "diagnostics.json", json.dumps(diag, indent=2, sort_keys=True) + "\n")
    _dump_json(diag)


def cmd_loss(args):
    B = _read_matrix(args.B)
    C = _read_matrix(args.C)
    schema = participation.make_schema(C.shape[1], args.k, args.b)
    rep = mechlab.mechanism_report(args.name, B, C, schema, args.method, args.sigma,
                                   args.delta)
    _dump_json({"mechanism": rep.mechanism_name, "n": rep.n, "k": rep.k, "b": rep.b,
                "loss": rep.loss, "root_loss": rep.root_loss, "sens": rep.sens,
                "sens_method": rep.sens_method, "zcdp_rho": rep.zcdp_rho,
                "epsilon_at_delta": rep.epsilon_at_delta,
                "per_iterate_variance": rep.per_iterate_variance})


def cmd_sweep_stamps(args):
    schema = _schema(args)
    rows, best = treestamp.sweep_stamps(args.family, schema.n, schema, args.stamps)
    name = reports.TABLE1_FAMILY_NAMES[args.family]
    text = mechlab.write_loss_table(
        [mechlab.loss_row(name, schema, r.s, r.decoder_kind, r.sens, r.sens_method, r.loss)
         for r in rows])
    if args.out_dir:
        _write_text(args, f"sweep_{args.family}.csv", text)
    sys.stdout.write(text)
    log.info("best stamp count: %d", best.s)


def cmd_fft(args):
    if args.emit == "mse-table":
        ns = args.ns or [2 ** i for i in range(4, 13)]
        lines = ["n,analytic_mse,lower_bound,ratio\n"]
        for n, a, lb, ratio in fftmech.mse_table(ns, args.rho, args.kappa):
            lines.append(f"{n},{a:.10g},{lb:.10g},{ratio:.10g}\n")
        text = "".join(lines)
        if args.out_dir:
            _write_text(args, "fft_mse_table.csv", text)
        sys.stdout.write(text)
    elif args.emit == "encoder":
        C = fftmech.real_fft_encoder(args.n)
        B = fftmech.real_fft_decoder(args.n)
        _dump_json({"encoder": _write_matrix(args, "C_fft", C),
                    "decoder": _write_matrix(args, "B_fft", B)})
    else:
        x = _read_matrix(args.input).ravel() if args.input else np.full(args.n, args.kappa)
        y = fftmech.fft_prefix_release(x, args.rho, args.kappa, args.seed)
        path = _write_matrix(args, "release", y[:, None])
        _dump_json({"path": path, "n": int(x.size), "noise_scale":
                    fftmech.noise_scale(x.size, args.rho, args.kappa)})


def cmd_tree(args):
    B, C = treestamp.tree_factorization(args.n, args.decoder)
    info = {"encoder": _write_matrix(args, "C_tree", C),
            "decoder": _write_matrix(args, "B_tree", B),
            "n": args.n, "nodes": C.shape[0], "decoder_kind": args.decoder}
    if args.k and args.b:
        schema = participation.make_schema(args.n, args.k, args.b)
        sr = participation.sensitivity(C, schema, "nonneg")
        info.update(sens=sr.value, sens_method=sr.method,
                    loss=float(sr.value ** 2 * np.sum(B ** 2)))
    _dump_json(info)


def cmd_noise(args):
    B = _read_matrix(args.B)
    Z = mechlab.sample_noise(B, args.d, args.sigma, args.seed)
    _dump_json({"path": _write_matrix(args, "noise", Z), "rows": Z.shape[0],
                "cols": Z.shape[1]})


def cmd_account(args):
    rho = mechlab.zcdp(args.sens, args.sigma)
    _dump_json({"sens": args.sens, "sigma": args.sigma, "rho": rho, "delta": args.delta,
                "epsilon": mechlab.zcdp_to_epsilon(rho, args.delta)})


def cmd_demo_train(args):
    mechs = tuple(args.mechanisms.split(","))
    cfg = reports.DemoConfig(m=args.m, d=args.d, k=args.k, b=args.b, rho=args.rho,
                             clip_norm=args.clip_norm, data_seed=args.data_seed,
                             mechanisms=mechs)
    run = reports.demo_train(cfg, seed=args.seed)
    lines = ["mechanism,step,squared_error\n"]
    for name in cfg.mechanisms:
        for t, e in enumerate(run["mechanisms"][name]["per_step_error"], start=1):
            lines.append(f"{name},{t},{e:.10g}\n")
    if args.out_dir:
        _write_text(args, "demo_per_step.csv", "".join(lines))
    summary = {"n": cfg.n, "k": cfg.k, "b": cfg.b, "rho": cfg.rho, "seed": args.seed,
               "final_mse": {k: v["final_mse"] for k, v in run["mechanisms"].items()},
               "last_step_mse": {k: v["last_step_mse"] for k, v in run["mechanisms"].items()}}
    if args.compare_seeds:
        summary["comparison"] = reports.demo_compare(cfg, args.compare_seeds)
    _dump_json(summary)


def cmd_repro_table1(args):
    rows = reports.table1_rows(args.n, args.k, args.b, args.stamps,
                               mf_stamps=() if args.skip_mf else args.mf_stamps,
                               mf_gap_tol=args.mf_gap_tol)
    text = mechlab.write_loss_table(rows)
    if args.out_dir:
        _write_text(args, "table1.csv", text)
    sys.stdout.write(text)


def cmd_repro_table3(args):
    rows = reports.table3_rows(args.n, args.k, args.b, args.beta)
    cols = mechlab.LOSS_COLUMNS + reports.TABLE3_EXTRA_COLUMNS
    lines = [",".join(cols) + "\n"]
    for r in rows:
        lines.append(",".join(f"{r[c]:.10g}" if isinstance(r[c], float) else str(r[c])
                              for c in cols) + "\n")
    text = "".join(lines)
    if args.out_dir:
        _write_text(args, "table3.csv", text)
    sys.stdout.write(text)


def _add_workload_flags(p, kind_flag):
    p.add_argument(kind_flag, default="prefix", choices=workloads.KINDS,
                   help="workload kind (default: %(default)s)")
    p.add_argument("--beta", type=float, default=0.0, help="momentum (default: %(default)s)")
    p.add_argument("--cooldown-fraction", type=float, default=0.25,
                   help="fraction of final steps cooled (default: %(default)s)")
    p.add_argument("--cooldown-floor", type=float, default=0.05,
                   help="final learning-rate multiplier (default: %(default)s)")


def _add_output_flags(p, required=True):
    p.add_argument("--out-dir", required=required, default=None,
                   help="directory for output files (default: %(default)s)")
    p.add_argument("--format", choices=("mat64", "csv"), default="mat64",
                   help="matrix output format (default: %(default)s)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mfdp", description="Matrix-factorization mechanisms for private streams.")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    dflt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("workload", help="write a workload matrix", formatter_class=dflt)
    p.add_argument("--n", type=int, required=True, help="number of steps")
    _add_workload_flags(p, "--kind")
    _add_output_flags(p)
    p.set_defaults(func=cmd_workload)

    p = sub.add_parser("sensitivity", help="sensitivity of an encoder", formatter_class=dflt)
    p.add_argument("--matrix", required=True, help="encoder C (MAT64)")
    p.add_argument("--k", type=int, required=True, help="max participations")
    p.add_argument("--b", type=int, required=True, help="participation separation")
    p.add_argument("--method", choices=participation.METHODS, default="brute",
                   help="sensitivity method")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("factorize", help="optimal factorization via the dual",
                       formatter_class=dflt)
    p.add_argument("--n", type=int, required=True, help="number of steps")
    _add_workload_flags(p, "--workload")
    p.add_argument("--k", type=int, required=True, help="max participations")
    p.add_argument("--b", type=int, required=True, help="participation separation")
    p.add_argument("--mode", choices=optfact.MODES, default="full_corners",
                   help="constraint mode")
    p.add_argument("--gap-tol", type=float, default=1e-6, help="relative duality gap target")
    p.add_argument("--max-iter", type=int, default=50_000, help="iteration cap")
    _add_output_flags(p)
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("loss", help="loss and privacy report for (B, C)",
                       formatter_class=dflt)
    p.add_argument("--B", required=True, help="decoder (MAT64)")
    p.add_argument("--C", required=True, help="encoder (MAT64)")
    p.add_argument("--k", type=int, required=True, help="max participations")
    p.add_argument("--b", type=int, required=True, help="participation separation")
    p.add_argument("--method", choices=participation.METHODS, default="brute",
                   help="sensitivity method")
    p.add_argument("--sigma", type=float, default=1.0, help="noise multiplier")
    p.add_argument("--delta", type=float, default=1e-6, help="delta for epsilon")
    p.add_argument("--name", default="mechanism", help="label in the report")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("sweep-stamps", help="loss over stamp counts", formatter_class=dflt)
    p.add_argument("--family", choices=treestamp.FAMILIES, required=True,
                   help="mechanism family")
    p.add_argument("--n", type=int, default=None, help="total steps (default: k*b)")
    p.add_argument("--k", type=int, required=True, help="max participations")
    p.add_argument("--b", type=int, required=True, help="participation separation")
    p.add_argument("--stamps", type=_int_list, default=[1], help="comma-separated stamp counts")
    p.add_argument("--out-dir", default=None, help="also write the CSV here")
    p.set_defaults(func=cmd_sweep_stamps)

    p = sub.add_parser("fft", help="FFT mechanism utilities", formatter_class=dflt)
    p.add_argument("--n", type=int, default=16, help="number of steps")
    p.add_argument("--rho", type=float, default=1.0, help="zCDP budget")
    p.add_argument("--kappa", type=float, default=1.0, help="per-step bound")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--emit", choices=("release", "encoder", "mse-table"), default="release",
                   help="what to produce")
    p.add_argument("--input", default=None, help="stream x (MAT64); default all kappa")
    p.add_argument("--ns", type=_int_list, default=None,
                   help="n values for mse-table (default: 16..4096 powers of two)")
    _add_output_flags(p, required=False)
    p.set_defaults(func=cmd_fft)

    p = sub.add_parser("tree", help="binary-tree mechanism", formatter_class=dflt)
    p.add_argument("--n", type=int, required=True, help="number of steps")
    p.add_argument("--decoder", choices=("online", "online_uncompleted", "optimal"),
                   default="online", help="decoder")
    p.add_argument("--k", type=int, default=None, help="max participations (for the loss)")
    p.add_argument("--b", type=int, default=None, help="participation separation")
    _add_output_flags(p)
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("noise", help="sample correlated noise B Z", formatter_class=dflt)
    p.add_argument("--B", required=True, help="decoder (MAT64)")
    p.add_argument("--d", type=int, default=1, help="noise dimension")
    p.add_argument("--sigma", type=float, default=1.0, help="noise standard deviation")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    _add_output_flags(p)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("account", help="zCDP and epsilon", formatter_class=dflt)
    p.add_argument("--sens", type=float, default=1.0, help="sensitivity")
    p.add_argument("--sigma", type=float, required=True, help="noise standard deviation")
    p.add_argument("--delta", type=float, default=1e-6, help="delta")
    p.set_defaults(func=cmd_account)

    p = sub.add_parser("demo-train", help="private mean-estimation demo",
                       formatter_class=dflt)
    d = reports.DemoConfig()
    p.add_argument("--m", type=int, default=d.m, help="examples")
    p.add_argument("--d", type=int, default=d.d, help="dimension")
    p.add_argument("--k", type=int, default=d.k, help="epochs")
    p.add_argument("--b", type=int, default=d.b, help="batches per epoch")
    p.add_argument("--rho", type=float, default=d.rho, help="zCDP budget")
    p.add_argument("--clip-norm", type=float, default=d.clip_norm, help="clipping bound")
    p.add_argument("--data-seed", type=int, default=d.data_seed, help="dataset seed")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--mechanisms", default=",".join(d.mechanisms),
                   help="comma-separated mechanisms")
    p.add_argument("--compare-seeds", type=int, default=0,
                   help="also run the paired ordering test over this many seeds")
    p.add_argument("--out-dir", default=None, help="also write per-step errors here")
    p.set_defaults(func=cmd_demo_train)

    p = sub.add_parser("repro-table1", help="stamped mechanism loss table",
                       formatter_class=dflt)
    p.add_argument("--n", type=int, default=2000, help="total steps")
    p.add_argument("--k", type=int, default=20, help="max participations")
    p.add_argument("--b", type=int, default=100, help="participation separation")
    p.add_argument("--stamps", type=_int_list, default=[1, 2, 5, 10, 20],
                   help="stamp counts for tree and FFT families")
    p.add_argument("--mf-stamps", type=_int_list, default=[2, 4, 5, 10, 20],
                   help="stamp counts for the k=1 optimal factorization")
    p.add_argument("--mf-gap-tol", type=float, default=1e-4,
                   help="duality gap for the k=1 factorizations")
    p.add_argument("--skip-mf", action="store_true", help="omit the optimal-factorization rows")
    p.add_argument("--out-dir", default=None, help="also write table1.csv here")
    p.set_defaults(func=cmd_repro_table1)

    p = sub.add_parser("repro-table3", help="small optimal-factorization table",
                       formatter_class=dflt)
    p.add_argument("--n", type=int, default=6, help="steps")
    p.add_argument("--k", type=int, default=3, help="max participations")
    p.add_argument("--b", type=int, default=2, help="participation separation")
    p.add_argument("--beta", type=float, default=0.95, help="momentum")
    p.add_argument("--out-dir", default=None, help="also write table3.csv here")
    p.set_defaults(func=cmd_repro_table3)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError,) + USAGE_ERRORS as e:
        print(f"mfdp {args.command}: error: {e}", file=sys.stderr)
        return 2
    except MFDPError as e:
        print(f"mfdp {args.command}: numerical failure: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
