"""Command-line front end.

Exit codes: 0 success, 1 a hypothesis or check failed (and is reported),
2 the input could not be read or parsed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .canonical_form import build_canonical_chart, canonical_residuals, restrict_to_w
from .change_of_vars import (
    random_diffeomorphism,
    verify_chain_rules,
    verify_multiplier_invariance,
    verify_second_order_invariance,
)
from .errors import (
    ActivityError,
    DegenerateError,
    HypothesisViolated,
    NLPCanonError,
    ParseError,
    SeparationFailed,
)
from .expr import parse_problem
from .linalg import DEFAULT_TOL
from .nlp_analysis import (
    andreani_certificate,
    check_mfcq,
    check_rank_deviation,
    first_order_multipliers,
    verify_weak_second_order,
)
from .problem import NLPInstance, kkt_residual
from .quadratic_forms import joint_range, semidefinite_separation
from .rank_one import factor_hessian_family

SCHEMA = "nlpcanon/1"
EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Unreadable or malformed input; maps to exit code 2."""


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def _read(path) -> tuple[str, str]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return raw.decode("utf-8"), hashlib.sha256(raw).hexdigest()
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not UTF-8 text") from exc


def _load(path) -> tuple[NLPInstance, str]:
    text, digest = _read(path)
    try:
        P = NLPInstance.from_doc(parse_problem(text))
    except ParseError as exc:
        raise InputError(f"{path}: {exc} (byte {exc.offset})") from exc
    except ActivityError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return P, digest


def read_matrix_pair(text: str):
    """Two symmetric matrices: a line with n, n rows, a blank line, n rows.

    The second block may repeat the dimension line.
    """
    blocks = [b for b in text.strip().split("\n\n") if b.strip()]
    if len(blocks) != 2:
        raise InputError("expected two matrices separated by a blank line")
    head, *rows_a = blocks[0].strip().splitlines()
    try:
        n = int(head.strip())
        rows_b = blocks[1].strip().splitlines()
        if len(rows_b) == n + 1 and len(rows_b[0].split()) == 1:
            if int(rows_b[0]) != n:
                raise InputError("dimension lines disagree")
            rows_b = rows_b[1:]
        A = np.array([[float(v) for v in r.split()] for r in rows_a])
        B = np.array([[float(v) for v in r.split()] for r in rows_b])
    except ValueError as exc:
        raise InputError(f"malformed matrix file: {exc}") from exc
    for M in (A, B):
        if M.shape != (n, n):
            raise InputError(f"expected {n} x {n} matrices")
        if not np.all(np.isfinite(M)) or np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * (1 + np.max(np.abs(M))):
            raise InputError("matrices must be finite and symmetric")
    return A, B


# --------------------------------------------------------------------------
# commands; each returns (exit code, result dict, human lines)


def cmd_check_mfcq(args):
    P, digest = _load(args.path)
    rep = check_mfcq(P, args.tol)
    status = "passed" if rep.satisfied else "failed"
    lines = [f"mfcq: {status}", f"  rank Dh(0) = {rep.rank_Dh} (m = {rep.m})"]
    if rep.witness is not None:
        lines.append(f"  witness d = {_fmt(rep.witness)}, margin {rep.margin:.6g}")
    return (EXIT_OK if rep.satisfied else EXIT_FAIL), {"mfcq": rep.as_dict()}, lines, digest


def cmd_chart(args):
    P, digest = _load(args.path)
    try:
        chart = build_canonical_chart(P, args.tol, args.seed)
    except NLPCanonError as exc:
        return EXIT_FAIL, {"chart": {"error": type(exc).__name__, "message": str(exc)}}, [f"chart: failed ({exc})"], digest
    res = canonical_residuals(chart, args.samples, args.seed)
    ok = res.passed()
    result = {
        "permutation": [P.ineq_names[l] for l in chart.perm],
        "r": chart.r,
        "W": chart.W,
        "radius": chart.radius,
        "residuals": res.as_dict(),
    }
    lines = [
        f"chart: {'passed' if ok else 'failed'}",
        f"  permutation {', '.join(result['permutation']) or '(none)'}; r = {chart.r}; dim w = {chart.k}",
        f"  validity radius {chart.radius:.6g}",
        f"  max |h^ - y| = {res.h_residual:.3e}, max |g^ - z| = {res.g_residual:.3e}",
        f"  ||D_w c(0)|| = {res.dwc_ad:.3e} (finite differences {res.dwc_fd:.3e})",
        f"  {res.evaluated} samples, {res.excluded} excluded",
    ]
    return (EXIT_OK if ok else EXIT_FAIL), {"chart": result}, lines, digest


def cmd_factor_hessians(args):
    P, digest = _load(args.path)
    try:
        chart = build_canonical_chart(P, args.tol, args.seed)
        R = restrict_to_w(chart)
        fam = factor_hessian_family(R.c_tilde, chart.k, args.tol, chart.radius, max(args.samples, 100), args.seed)
    except HypothesisViolated as exc:
        out = {"error": type(exc).__name__, "message": str(exc), "witness": exc.witness}
        return EXIT_FAIL, {"factorization": out}, [f"factor-hessians: failed ({exc})"], digest
    except NLPCanonError as exc:
        out = {"error": type(exc).__name__, "message": str(exc)}
        return EXIT_FAIL, {"factorization": out}, [f"factor-hessians: failed ({exc})"], digest
    names = [P.ineq_names[l] for l in chart.perm[chart.r :]]
    out = {"constraints": names, "alpha": fam.alphas, "H": fam.H, "residual": fam.residual, "zero_family": fam.is_zero_family}
    lines = [
        "factor-hessians: passed",
        f"  constraints {', '.join(names) or '(none)'}",
        f"  alpha = {_fmt(fam.alphas)}",
        f"  H = {_fmt(fam.H)}",
        f"  residual {fam.residual:.3e}",
    ]
    return EXIT_OK, {"factorization": out}, lines, digest


def cmd_separate(args):
    text, digest = _read(args.path)
    A, B = read_matrix_pair(text)
    a, b = args.interval
    if a > b:
        raise InputError("interval must satisfy a <= b")
    try:
        rng = joint_range(A, B, samples=max(args.samples, 10_000), seed=args.seed)
        range_kind = rng.kind
    except DegenerateError:
        range_kind = "degenerate"
    try:
        sep = semidefinite_separation(A, B, (a, b), args.tol)
    except HypothesisViolated as exc:
        out = {
            "error": "HypothesisViolated",
            "message": str(exc),
            "witness": exc.witness,
            "best_gamma": exc.details.get("gamma"),
            "best_lambda_min": exc.details.get("lambda_min"),
            "joint_range": range_kind,
        }
        return EXIT_FAIL, {"separation": out}, [f"separation: failed ({exc})"], digest
    mode = "definite" if sep.certificate_lambda_min > args.tol else "semidefinite"
    out = {
        "gamma_star": sep.gamma_star,
        "lambda_min": sep.certificate_lambda_min,
        "mode": mode,
        "interval": [a, b],
        "regularized_gammas": sep.regularized_gammas,
        "regularized_consistent": sep.regularized_consistent,
        "joint_range": range_kind,
    }
    lines = [
        "separation: passed",
        f"  gamma* = {sep.gamma_star:.10g}, lambda_min(A + gamma* B) = {sep.certificate_lambda_min:.3e} ({mode})",
        f"  joint range: {range_kind}",
    ]
    return EXIT_OK, {"separation": out}, lines, digest


def _parse_vector(text, size, what):
    if text is None:
        return None
    try:
        v = np.array([float(t) for t in text.replace(",", " ").split()])
    except ValueError as exc:
        raise InputError(f"malformed {what}: {text!r}") from exc
    if v.shape != (size,):
        raise InputError(f"{what} needs {size} entries")
    return v


def cmd_invariance(args):
    P, digest = _load(args.path)
    lam = _parse_vector(args.lam, P.m, "--lam")
    mu = _parse_vector(args.mu, P.n_ineq, "--mu")
    if lam is None and mu is None:
        found = first_order_multipliers(P)
        if found is not None:
            lam, mu = found
    if lam is None:
        lam = np.zeros(P.m)
    if mu is None:
        mu = np.zeros(P.n_ineq)
    if np.any(mu < 0):
        raise InputError("--mu entries must be non-negative")
    source_res = kkt_residual(P, None, lam, mu)
    first_order = source_res <= 1e-8
    maps, ok = [], True
    for i in range(args.count):
        seed = args.seed + i
        try:
            q = random_diffeomorphism(P.n, seed, args.magnitude)
        except NLPCanonError as exc:
            maps.append({"seed": seed, "error": type(exc).__name__, "message": str(exc)})
            ok = False
            continue
        rng = np.random.default_rng(seed)
        pts = rng.standard_normal((3, P.n))
        pts *= 0.5 * q.radius / np.linalg.norm(pts, axis=1, keepdims=True)
        entry = {"seed": seed}
        try:
            chain = verify_chain_rules(P, q, pts)
            mult = verify_multiplier_invariance(P, q, lam, mu)
            entry["chain_rules"] = chain.as_dict()
            entry["multipliers"] = mult.as_dict()
            passed = chain.passed() and mult.equivalent
            if first_order:
                so = verify_second_order_invariance(P, q, lam, mu, samples=min(args.samples, 100), seed=seed)
                entry["second_order"] = so.as_dict()
                passed = passed and so.passed
        except NLPCanonError as exc:
            entry.update(error=type(exc).__name__, message=str(exc))
            passed = False
        entry["passed"] = passed
        ok = ok and passed
        maps.append(entry)
    out = {
        "lambda": lam,
        "mu": mu,
        "source_kkt_residual": source_res,
        "first_order": first_order,
        "magnitude": args.magnitude,
        "maps": maps,
    }
    lines = [f"invariance: {'passed' if ok else 'failed'}", f"  source KKT residual {source_res:.3e}"]
    for e in maps:
        if "error" in e:
            lines.append(f"  map seed {e['seed']}: {e['error']}: {e['message']}")
            continue
        c = e["chain_rules"]
        worst = max(c["lin_grad"], c["lin_hess"], c["non_grad"], c["non_hess"])
        line = f"  map seed {e['seed']}: chain {worst:.1e} (fd {max(c['fd_grad'], c['fd_hess']):.1e}), "
        line += f"multipliers {'equivalent' if e['multipliers']['equivalent'] else 'NOT equivalent'}"
        if "second_order" in e:
            line += f", second order {e['second_order']['max_kernel_deviation']:.1e}"
        lines.append(line)
    return (EXIT_OK if ok else EXIT_FAIL), {"invariance": out}, lines, digest


def cmd_analyze(args):
    P, digest = _load(args.path)
    checks = {}
    lines = []

    mfcq = check_mfcq(P, args.tol)
    checks["mfcq"] = mfcq.as_dict()
    lines.append(f"mfcq: {'passed' if mfcq.satisfied else 'failed'}")
    if not mfcq.satisfied:
        return EXIT_FAIL, {"checks": checks, "verdict": "hypothesis_failed"}, lines, digest

    dev = check_rank_deviation(P, max(args.samples, 200), args.tol, args.seed)
    checks["rank_deviation"] = dev.as_dict()
    lines.append(f"rank deviation: {'passed' if dev.holds else 'failed'} (max rank {dev.max_rank}, rank at 0 {dev.rank_at_origin})")
    if not dev.holds:
        return EXIT_FAIL, {"checks": checks, "verdict": "hypothesis_failed"}, lines, digest

    try:
        chart = build_canonical_chart(P, args.tol, args.seed)
        res = canonical_residuals(chart, min(args.samples, 100), args.seed)
    except NLPCanonError as exc:
        checks["chart"] = {"error": type(exc).__name__, "message": str(exc)}
        lines.append(f"chart: failed ({exc})")
        return EXIT_FAIL, {"checks": checks, "verdict": "hypothesis_failed"}, lines, digest
    checks["chart"] = {"permutation": [P.ineq_names[l] for l in chart.perm], "r": chart.r, "radius": chart.radius, "residuals": res.as_dict()}
    lines.append(f"chart: {'passed' if res.passed() else 'failed'} (r = {chart.r}, |h^-y| {res.h_residual:.1e}, |g^-z| {res.g_residual:.1e})")

    try:
        cert = andreani_certificate(P, args.tol, args.seed, max(args.samples, 200))
    except SeparationFailed as exc:
        checks["certificate"] = {
            "error": "SeparationFailed",
            "message": str(exc),
            "witness": exc.witness,
            "reduced_witness": exc.reduced_witness,
            "details": exc.details,
        }
        weak = verify_weak_second_order(P, exc, min(args.samples, 1000), 1e-8, args.seed)
        checks["weak_second_order"] = weak.as_dict()
        lines.append(f"certificate: failed (SeparationFailed, witness {_fmt(exc.witness)})")
        return EXIT_FAIL, {"checks": checks, "verdict": "separation_failed"}, lines, digest
    except NLPCanonError as exc:
        checks["certificate"] = {"error": type(exc).__name__, "message": str(exc), "witness": getattr(exc, "witness", None)}
        lines.append(f"certificate: failed ({type(exc).__name__}: {exc})")
        return EXIT_FAIL, {"checks": checks, "verdict": "hypothesis_failed"}, lines, digest
    checks["certificate"] = cert.as_dict(P)
    lines.append(
        f"certificate: passed (gamma* = {cert.gamma_star:.6g}, mu* = {_fmt(cert.mu)}, lambda* = {_fmt(cert.lam)}, "
        f"KKT residual {cert.kkt_residual:.1e})"
    )
    weak = verify_weak_second_order(P, cert, 1000, 1e-8, args.seed)
    checks["weak_second_order"] = weak.as_dict()
    lines.append(f"weak second order: {'passed' if weak.passed else 'failed'} (min S(d) {weak.min_value:.3e})")
    code = EXIT_OK if weak.passed else EXIT_FAIL
    return code, {"checks": checks, "verdict": "certified" if weak.passed else "verification_failed"}, lines, digest


COMMANDS = {
    "analyze": cmd_analyze,
    "chart": cmd_chart,
    "separate": cmd_separate,
    "invariance": cmd_invariance,
    "factor-hessians": cmd_factor_hessians,
    "check-mfcq": cmd_check_mfcq,
}


def _fmt(v) -> str:
    return np.array2string(np.asarray(v, dtype=float), precision=6, suppress_small=True, separator=", ").replace("\n", "")


# --------------------------------------------------------------------------
# argument parsing and dispatch


def _global_flags(parser, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--json", action="store_true", default=d(False), help="emit a JSON report")
    parser.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")
    parser.add_argument("--tol", type=float, default=d(DEFAULT_TOL), help="rank and feasibility tolerance")
    parser.add_argument("--samples", type=int, default=d(200), help="sample count for sampled checks")
    parser.add_argument("--jobs", type=int, default=d(1), help="parallel workers across input files")
    parser.add_argument("--timing", action="store_true", default=d(False), help="report wall time")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlpcanon", description="Degenerate NLP analysis at an active point.")
    parser.add_argument("--version", action="version", version=f"nlpcanon {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("analyze", parents=[common], help="full pipeline: MFCQ, rank, chart, certificate")
    p.add_argument("paths", nargs="+", metavar="path")
    p = sub.add_parser("chart", parents=[common], help="build the canonical chart")
    p.add_argument("path")
    p = sub.add_parser("separate", parents=[common], help="semidefinite separation of two matrices")
    p.add_argument("path")
    p.add_argument("--interval", nargs=2, type=float, required=True, metavar=("A", "B"))
    p = sub.add_parser("invariance", parents=[common], help="check invariance under random changes of variables")
    p.add_argument("path")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--magnitude", type=float, default=0.1)
    p.add_argument("--lam", help="equality multipliers, space or comma separated")
    p.add_argument("--mu", help="inequality multipliers, space or comma separated")
    p = sub.add_parser("factor-hessians", parents=[common], help="factor the residual constraint Hessians")
    p.add_argument("path")
    p = sub.add_parser("check-mfcq", parents=[common], help="Mangasarian-Fromovitz check")
    p.add_argument("path")
    return parser


def _tolerances(args) -> dict:
    return {"tol": args.tol, "kkt": 1e-8, "chart": 1e-9, "dwc": 1e-6, "weak_second_order": 1e-8}


def run_one(args) -> tuple[int, dict, list]:
    """Run a single command on ``args.path``; never raises."""
    start = time.perf_counter()
    report = {"schema": SCHEMA, "command": args.command, "version": __version__, "input": str(args.path),
              "seed": args.seed, "samples": args.samples, "tolerances": _tolerances(args)}
    try:
        code, result, lines, digest = COMMANDS[args.command](args)
        report["digest"] = digest
        report["result"] = result
    except InputError as exc:
        code, lines = EXIT_INPUT, [f"error: {exc}"]
        report["error"] = {"kind": "input", "message": str(exc)}
    except NLPCanonError as exc:
        code, lines = EXIT_FAIL, [f"error: {type(exc).__name__}: {exc}"]
        report["error"] = {"kind": type(exc).__name__, "message": str(exc)}
    except (ArithmeticError, ValueError) as exc:  # numerical trouble inside a check
        code, lines = EXIT_FAIL, [f"error: {type(exc).__name__}: {exc}"]
        report["error"] = {"kind": type(exc).__name__, "message": str(exc)}
    report["exit_code"] = code
    if args.timing:
        report["seconds"] = round(time.perf_counter() - start, 6)
        lines = lines + [f"time: {time.perf_counter() - start:.3f} s"]
    return code, _clean(report), lines


def _run_path(args, path):
    ns = argparse.Namespace(**vars(args))
    ns.path = path
    return run_one(ns)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    paths = args.paths if args.command == "analyze" else [args.path]
    if len(paths) > 1 and args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_path, [args] * len(paths), paths))
    else:
        results = [_run_path(args, p) for p in paths]
    if args.json:
        payload = results[0][1] if len(results) == 1 else {"schema": SCHEMA, "reports": [r[1] for r in results]}
        sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    else:
        for code, report, lines in results:
            if len(results) > 1:
                print(f"== {report['input']}")
            print("\n".join(lines))
    return max(r[0] for r in results)


if __name__ == "__main__":
    sys.exit(main())
