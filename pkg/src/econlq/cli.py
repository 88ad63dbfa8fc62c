"""Command-line front-end.

Exit codes: 0 success (``analyze``/``dissipativity check``: strictly
pre-dissipative with a stable optimal loop), 1 input error, 2 pre-dissipative
only, 3 neither (``dare verify``: not a CGDARE solution), 4 solver failure.
"""

import argparse
import json
import math
import sys
import warnings

import numpy as np

from . import __version__, matkit
from .dissipativity import (
    SdpKind,
    Tier,
    certify_strict,
    check_pre_dissipativity,
    check_regularized,
    check_strict_a4,
    export_sdp,
)
from .errors import EconLQError, InvalidDimensions, InvalidMatrix, NotSymmetric, ProblemFormatError
from .mpc import (
    FeedbackPolicy,
    RhConfig,
    SequencePolicy,
    ZeroPolicy,
    design_terminal_cost,
    simulate,
    stability_report,
)
from .problem import load_matrix, load_problem, load_vector_sequence
from .riccati import (
    cgdare_projector,
    cgdare_residual,
    classify_closed_loop,
    rcgdare_solve_stabilizing,
    rdare_solve_stabilizing,
    solve_cgdare,
)
from .system import controllability_rank, kalman_decompose, prestabilize

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_PRE = 2
EXIT_NONE = 3
EXIT_FAILURE = 4

INPUT_ERRORS = (ProblemFormatError, InvalidMatrix, InvalidDimensions, NotSymmetric)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return 0.0 if x == 0 else x
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def _solution_doc(sol):
    doc = {
        "P": sol.P,
        "K": sol.K,
        "G": sol.G,
        "residual": sol.residual,
        "kernel_ok": sol.kernel_ok,
        "solves_cgdare": sol.solves_cgdare,
        "classification": sol.classification.value,
        "closed_loop_spectral_radius": sol.closed_loop_spectral_radius,
        "equation": sol.equation,
        "iterations": sol.iterations,
    }
    if not math.isnan(sol.rdare_residual):
        doc["rdare_residual"] = sol.rdare_residual
    extra = {k: v for k, v in sol.diagnostics.items() if k in ("prestabilized", "BG_norm", "antistabilizing_crosscheck")}
    if extra:
        doc["diagnostics"] = extra
    return doc


def _error_doc(exc):
    return {"error": f"{type(exc).__name__}: {exc}"}


def _certificate_doc(cert):
    diag = {k: v for k, v in cert.diagnostics.items() if k != "riccati_pair_margins"}
    return {
        "tier": cert.tier.value,
        "method": cert.method,
        "Lambda": cert.Lambda,
        "Lambda1": cert.Lambda1,
        "Lambda2": cert.Lambda2,
        "witness_eigs": cert.witness_eigs,
        "BG_zero": cert.BG_zero,
        "diagnostics": diag,
    }


def _stability_doc(rep):
    return {
        "horizon": rep.horizon,
        "nominal_spectral_radius": rep.nominal_radius,
        "nominal_stable": rep.nominal_stable,
        "BG_norm": rep.BG_norm,
        "BG_zero": rep.BG_zero,
        "worst_probe": rep.worst_probe,
        "worst_probe_spectral_radius": rep.worst_probe_radius,
        "probes": {name: r for name, r in rep.probes},
        "min_stable_horizon": rep.min_stable_horizon,
        "verdict": rep.verdict,
    }


def _render(doc, indent=0):
    pad = "  " * indent
    lines = []
    for key, value in doc.items():
        if isinstance(value, dict):
            lines.append(f"{pad}{key}:")
            lines.extend(_render(value, indent + 1))
        elif isinstance(value, list) and value and isinstance(value[0], list):
            arr = np.array(value, dtype=float)
            text = np.array2string(arr, precision=6, suppress_small=True, separator=", ")
            lines.append(f"{pad}{key}:")
            lines.extend(f"{pad}  {row}" for row in text.splitlines())
        else:
            lines.append(f"{pad}{key}: {value}")
    return lines


def _emit(doc, args, out=None):
    out = out or sys.stdout
    doc = _jsonable(doc)
    if args.json:
        out.write(json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n")
    else:
        out.write("\n".join(_render(doc)) + "\n")


def _tol(args, problem):
    return problem.tol.with_overrides(
        rank_rel_tol=args.tol_rank_rel,
        psd_tol=args.tol_psd,
        convergence_tol=args.tol_convergence,
        max_iterations=args.tol_max_iterations,
        spectral_margin=args.tol_spectral_margin,
    )


def _load(args):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        problem = load_problem(args.problem)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return problem, _tol(args, problem)


def _closed_loop_from(sys_, cost, tol, P):
    """Stability analysis of the infinite-horizon loop given by a CGDARE solution ``P``."""
    return stability_report(sys_, cost, RhConfig(1, P), tol)


def _prestabilized_doc(S, C, tol, K_hat):
    """CGDARE and G-regularized check after ``u = -K_hat x + w``, next to the check without it."""
    pre = prestabilize(S, C, K_hat, tol)
    doc = {"K_hat": K_hat, "Q_hat": pre.cost.Q, "S_hat": pre.cost.S}
    try:
        sol = solve_cgdare(pre.system, pre.cost, tol)
    except EconLQError as exc:
        doc["cgdare"] = _error_doc(exc)
        return doc
    doc["cgdare"] = _solution_doc(sol)
    doc["regularized_check_before"] = check_regularized(S, C, sol.G, tol).holds
    after = check_regularized(pre.system, pre.cost, sol.G, tol)
    doc["regularized_check_after"] = after.holds
    if after.holds:
        doc["regularized_witness"] = after.Lambda
    return doc


def cmd_analyze(args):
    problem, tol = _load(args)
    S, C = problem.system, problem.cost
    doc = {"problem": problem.name or args.problem, "n": S.n, "m": S.m}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        kd = kalman_decompose(S, tol)
    doc["controllability"] = {
        "rank": controllability_rank(S, tol),
        "controllable_dimension": kd.n_c,
        "stabilizable": kd.stabilizable,
        "uncontrollable_eigenvalues": sorted(
            [[float(z.real), float(z.imag)] for z in kd.uncontrollable_eigs]
        ),
    }
    if caught:
        doc["controllability"]["warnings"] = [str(w.message) for w in caught]

    cg = None
    try:
        cg = solve_cgdare(S, C, tol, problem.Lambda)
        doc["cgdare"] = _solution_doc(cg)
        G, g_source = cg.G, "cgdare"
    except EconLQError as exc:
        doc["cgdare"] = _error_doc(exc)
        G, g_source = cgdare_projector(S, C, tol)
    doc["G_source"] = g_source
    BG = S.B @ G
    doc["BG"] = BG
    doc["BG_zero"] = matkit.frob(BG) <= 1e-9 * max(1.0, matkit.frob(S.B))

    stab = None
    try:
        stab = rdare_solve_stabilizing(S, C, G, tol)
        doc["stabilizing"] = _solution_doc(stab)
    except EconLQError as exc:
        doc["stabilizing"] = _error_doc(exc)
    try:
        doc["antistabilizing"] = _solution_doc(rcgdare_solve_stabilizing(S, C, tol, G=G))
    except EconLQError as exc:
        doc["antistabilizing"] = _error_doc(exc)

    try:
        cert = certify_strict(S, C, tol, problem.Lambda)
        doc["certificate"] = _certificate_doc(cert)
        tier = cert.tier
    except EconLQError as exc:
        doc["certificate"] = {"tier": Tier.NONE.value, **_error_doc(exc)}
        tier = Tier.NONE

    if cg is not None:
        doc["closed_loop"] = _stability_doc(_closed_loop_from(S, C, tol, cg.P))
    if problem.K_hat is not None:
        try:
            doc["prestabilized"] = _prestabilized_doc(S, C, tol, problem.K_hat)
        except EconLQError as exc:
            doc["prestabilized"] = _error_doc(exc)

    stable = stab is not None and stab.stabilizing and stab.solves_cgdare
    if tier is Tier.STRICT and stable:
        code, verdict = EXIT_OK, "strictly pre-dissipative: every optimal closed loop is exponentially stable"
    elif tier is Tier.STRICT:
        code, verdict = EXIT_PRE, "strictly pre-dissipative certificate but no stabilizing CGDARE solution found"
    elif tier is Tier.PRE_DISSIPATIVE:
        code = EXIT_PRE
        verdict = "pre-dissipative only: an optimal cost-to-go exists, stability of all optimal loops is not guaranteed"
    else:
        code, verdict = EXIT_NONE, "no dissipativity certificate found"
    doc["verdict"] = verdict
    doc["exit_code"] = code
    _emit(doc, args)
    return code


def cmd_dare(args):
    problem, tol = _load(args)
    S, C = problem.system, problem.cost
    if args.which == "verify":
        if args.p is not None:
            P = load_matrix(args.p, "--p")
        elif problem.P is not None:
            P = problem.P
        else:
            raise UsageError("dare verify needs --p <file or matrix> or a 'P' entry in the problem file")
        if P.shape != (S.n, S.n):
            raise InvalidDimensions(f"--p: expected {S.n}x{S.n}, got {P.shape[0]}x{P.shape[1]}")
        P = matkit.check_symmetric(P, tol, "P")
        residual, K, G, kernel_ok = cgdare_residual(S, C, P, tol)
        cls, rho = classify_closed_loop(S, K, tol)
        ok = bool(kernel_ok and residual <= 1e-8 * (1.0 + matkit.frob(P)))
        doc = {
            "P": P,
            "K": K,
            "G": G,
            "BG": S.B @ G,
            "residual": residual,
            "kernel_ok": kernel_ok,
            "solves_cgdare": ok,
            "classification": cls.value,
            "closed_loop_spectral_radius": rho,
        }
        _emit(doc, args)
        return EXIT_OK if ok else EXIT_NONE

    G, source = cgdare_projector(S, C, tol, problem.Lambda)
    if args.which == "stabilizing":
        sol = rdare_solve_stabilizing(S, C, G, tol)
    else:
        sol = rcgdare_solve_stabilizing(S, C, tol, G=G)
    doc = _solution_doc(sol)
    doc["G_source"] = source
    doc["BG"] = S.B @ sol.G
    _emit(doc, args)
    return EXIT_OK


def _parse_feedback(text, m, n):
    t = text.strip().replace(" ", "")
    if t in ("I", "+I", "-I"):
        return (-1.0 if t.startswith("-") else 1.0) * np.eye(m, n)
    if t.endswith("I") and t[:-1]:
        try:
            return float(t[:-1].rstrip("*")) * np.eye(m, n)
        except ValueError:
            pass
    return load_matrix(text, "--v feedback")


def _policy(args, S):
    choice = args.v
    if choice is None or choice == "zero":
        return ZeroPolicy()
    if choice.startswith("feedback:"):
        L = _parse_feedback(choice[len("feedback:"):], S.m, S.n)
        if L.shape != (S.m, S.n):
            raise InvalidDimensions(f"--v feedback: L must be {S.m}x{S.n}, got {L.shape[0]}x{L.shape[1]}")
        return FeedbackPolicy(L)
    if choice.startswith("file:"):
        seq = load_vector_sequence(choice[len("file:"):], "--v file")
        if seq.ndim != 2 or seq.shape[1] != S.m:
            raise InvalidDimensions(f"--v file: vectors must have length {S.m}")
        return SequencePolicy(seq)
    raise UsageError(f"--v: expected zero, feedback:<matrix> or file:<path>, got {choice!r}")


def _parse_x0(text, n):
    if text is None:
        return np.ones(n)
    try:
        x0 = np.array([float(t) for t in text.replace(";", ",").split(",") if t.strip()])
    except ValueError:
        raise UsageError(f"--x0: expected comma-separated numbers, got {text!r}") from None
    if x0.shape != (n,):
        raise InvalidDimensions(f"--x0: expected {n} entries, got {x0.size}")
    if not np.all(np.isfinite(x0)):
        raise UsageError("--x0: entries must be finite")
    return x0


def _terminal_cost(problem, tol, margin):
    """Problem-file ``P_f``, else the designed one, else the CGDARE solution."""
    if problem.P_f is not None:
        return problem.P_f, "problem file"
    S, C = problem.system, problem.cost
    try:
        return design_terminal_cost(S, C, margin, tol), "designed (P_bar_s + margin I)"
    except EconLQError as exc:
        print(f"note: terminal-cost design unavailable ({exc}); using the CGDARE solution", file=sys.stderr)
    return solve_cgdare(S, C, tol, problem.Lambda).P, "CGDARE solution"


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None


def cmd_mpc(args):
    problem, tol = _load(args)
    S, C = problem.system, problem.cost
    if args.margin <= 0 or not math.isfinite(args.margin):
        raise UsageError("--margin must be a positive number")
    if args.horizon < 1:
        raise UsageError("--horizon must be a positive integer")
    if args.action == "design":
        P_f = design_terminal_cost(S, C, args.margin, tol)
        doc = {"P_f": P_f, "margin": args.margin}
        if args.out:
            _write_text(args.out, json.dumps(_jsonable({"P_f": P_f})) + "\n")
        _emit(doc, args)
        return EXIT_OK

    P_f, source = _terminal_cost(problem, tol, args.margin)
    if args.action == "simulate":
        if args.steps < 0:
            raise UsageError("--steps must be non-negative")
        cfg = RhConfig(args.horizon, P_f, _policy(args, S))
        traj = simulate(S, C, cfg, _parse_x0(args.x0, S.n), args.steps, tol)
        text = traj.to_csv()
        if args.out:
            _write_text(args.out, text)
            summary = {
                "out": args.out,
                "steps": traj.steps,
                "terminal_cost_source": source,
                "total_cost": traj.total_cost,
                "final_state": traj.states[-1],
            }
            _emit(summary, args, sys.stderr if not args.json else None)
        else:
            sys.stdout.write(text)
        return EXIT_OK

    rep = stability_report(S, C, RhConfig(args.horizon, P_f), tol)
    doc = _stability_doc(rep)
    doc["terminal_cost_source"] = source
    _emit(doc, args)
    return EXIT_OK


def cmd_dissipativity(args):
    problem, tol = _load(args)
    S, C = problem.system, problem.cost
    Lam = load_matrix(args.lambda_, "--lambda") if args.lambda_ else problem.Lambda
    if args.action == "export-sdp":
        export = export_sdp(S, C, SdpKind.parse(args.kind), args.bound, tol)
        for note in export.warnings:
            print(f"warning: {note}", file=sys.stderr)
        text = export.to_text()
        if args.out:
            _write_text(args.out, text)
        else:
            sys.stdout.write(text)
        return EXIT_OK

    doc = {}
    if Lam is not None:
        pre = check_pre_dissipativity(S, C, Lam, tol)
        a4 = check_strict_a4(S, C, Lam, tol)
        doc["given_Lambda"] = {
            "Lambda": Lam,
            "pre_dissipative": pre.holds,
            "pre_margins": pre.margins,
            "strict_schur": a4.holds,
            "strict_margins": a4.margins,
        }
    cert = certify_strict(S, C, tol, Lam)
    doc["certificate"] = _certificate_doc(cert)
    code = {Tier.STRICT: EXIT_OK, Tier.PRE_DISSIPATIVE: EXIT_PRE, Tier.NONE: EXIT_NONE}[cert.tier]
    doc["exit_code"] = code
    _emit(doc, args)
    return code


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--json", action="store_true", help="machine-readable JSON output")
    p.add_argument("--tol-rank-rel", type=float, help="relative SVD rank threshold")
    p.add_argument("--tol-psd", type=float, help="definiteness margin")
    p.add_argument("--tol-convergence", type=float, help="value-iteration stopping threshold")
    p.add_argument("--tol-max-iterations", type=int, help="value-iteration cap")
    p.add_argument("--tol-spectral-margin", type=float, help="Schur-stability margin")
    return p


def build_parser():
    common = _common()
    parser = _Parser(prog="econlq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"econlq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", parents=[common], help="full analysis and verdict")
    p.add_argument("problem")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("dare", parents=[common], help="Riccati solutions")
    p.add_argument("which", choices=["stabilizing", "antistabilizing", "verify"])
    p.add_argument("problem")
    p.add_argument("--p", help="candidate P for verify: file or inline matrix such as '[[0,0],[0,1]]'")
    p.set_defaults(func=cmd_dare)

    p = sub.add_parser("mpc", parents=[common], help="receding-horizon design and simulation")
    p.add_argument("action", choices=["design", "simulate", "report"])
    p.add_argument("problem")
    p.add_argument("--horizon", type=int, default=50)
    p.add_argument("--margin", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--x0", help="initial state, comma separated (default: all ones)")
    p.add_argument("--v", help="zero | feedback:<matrix> | file:<path>")
    p.add_argument("--out", help="output path (CSV for simulate, JSON for design)")
    p.set_defaults(func=cmd_mpc)

    p = sub.add_parser("dissipativity", parents=[common], help="certificates and SDP export")
    p.add_argument("action", choices=["check", "export-sdp"])
    p.add_argument("problem")
    p.add_argument("--lambda", dest="lambda_", help="rotation matrix: file or inline matrix")
    p.add_argument("--kind", default="slack", help="trace | slack")
    p.add_argument("--bound", type=float, help="upper bound b on Lambda1 - Lambda2")
    p.add_argument("--out", help="output path for the SDPA file")
    p.set_defaults(func=cmd_dissipativity)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, *INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EconLQError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
