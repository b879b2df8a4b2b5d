"""Command-line entry point: experiment sweeps, verification suites and audit trails.

Every command writes ``<root>/<command>/<hash>/`` containing CSV data files
and a ``manifest.json``.  The hash covers the full parameter record, so
re-running a command with the same parameters targets the same directory and
reproduces the numeric files bit for bit.  The root is ``--out``, else the
``PERQUAD_OUT`` environment variable, else ``./out``.

Exit codes: 0 success, 1 verification failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bump_lab import (
    BumpSpec,
    adversarial_nodes,
    fooling_ratio,
    full_grid,
    phi_n_fourier,
    reports_to_csv,
)
from .kernels import KernelApprox
from .psd_analysis import is_psd, random_psd, schur_gap_matrix, verify_charact_direction
from .quadrature import (
    QuadratureRule,
    equispaced_error_sq,
    equispaced_rule,
    optimize_nodes,
    rule_from_csv,
    rule_to_csv,
    worst_case_error_sq,
)
from .schur_bounds import (
    BOUND_NAMES,
    applicable_bounds,
    bound_analytic,
    bound_curse_Fd2,
    bound_univariate,
    compute_bound,
)
from .spectra import (
    Explicit,
    Geometric,
    SpectrumSpec,
    TruncationError,
    convolution_square,
    convolve,
    dumps,
    parse_spec_string,
    truncate,
    truncate_at,
)
from .spectral_asymptotics import approximation_numbers, count_N, rate_fit

__all__ = ["main", "parse_grid", "read_config", "run_suite", "SuiteResult", "default_truncation"]

ENV_OUT = "PERQUAD_OUT"
EXIT_OK, EXIT_VERIFY, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# parsing helpers


def parse_grid(text: str) -> list[int]:
    """Integer grids: ``"1..8"``, ``"2^4..2^12"`` (powers of two), ``"1,2,4"``."""
    text = text.strip()
    try:
        if "," in text:
            return [int(t) for t in text.split(",") if t.strip()]
        if ".." in text:
            a, b = text.split("..", 1)
            if a.startswith("2^") and b.startswith("2^"):
                return [2**e for e in range(int(a[2:]), int(b[2:]) + 1)]
            return list(range(int(a), int(b) + 1))
        if text.startswith("2^"):
            return [2 ** int(text[2:])]
        return [int(text)]
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}") from None


def parse_real_grid(text: str) -> list[float]:
    if ".." in text and text.startswith("10^"):
        a, b = text.split("..", 1)
        return [10.0**e for e in range(int(a[3:]), int(b[3:]) + 1)]
    return [float(t) for t in text.split(",") if t.strip()]


def read_config(path: str) -> dict:
    """Line-oriented ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def load_spec(text: str) -> SpectrumSpec:
    try:
        return parse_spec_string(text)
    except (ValueError, OSError) as exc:
        raise UsageError(f"bad --spec {text!r}: {exc}") from None


def default_truncation(spec: SpectrumSpec, radius: float | None = None, rel_tol: float = 1e-12):
    """Fixed radius if given, else the rel_tol truncation capped by dimension."""
    if isinstance(spec, Explicit):
        return truncate_at(spec)
    if radius is not None:
        return truncate_at(spec, radius)
    hyperbolic = hasattr(spec, "enumerate_cross")
    cap = {1: 4096, 2: 4096 if hyperbolic else 48}.get(spec.d, 1024 if hyperbolic else 12)
    try:
        return truncate(spec, rel_tol, cap)
    except TruncationError:
        return truncate_at(spec, cap)


# ---------------------------------------------------------------------------
# output


@dataclass
class Run:
    command: str
    params: dict
    root: Path
    files: list = field(default_factory=list)
    started: float = field(default_factory=time.time)

    @property
    def digest(self) -> str:
        blob = json.dumps({"command": self.command, "params": self.params}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def directory(self) -> Path:
        return self.root / self.command / self.digest

    def write(self, name: str, text: str):
        self.directory.mkdir(parents=True, exist_ok=True)
        (self.directory / name).write_text(text, encoding="utf-8")
        self.files.append(name)

    def write_csv(self, name: str, header: list, rows: list):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
        self.write(name, buf.getvalue())

    def finish(self, extra: dict | None = None) -> Path:
        manifest = {
            "command": self.command,
            "params": self.params,
            "spectrum_hash": self.params.get("spectrum_hash"),
            "seed": self.params.get("seed"),
            "version": __version__,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(self.started)),
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
            "files": sorted(set(self.files)),
        }
        if extra:
            manifest.update(extra)
        self.directory.mkdir(parents=True, exist_ok=True)
        (self.directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
        return self.directory


def _spectrum_params(spec: SpectrumSpec, trunc) -> dict:
    text = dumps(spec)
    return {
        "spectrum": text.strip().splitlines()[0] if not isinstance(spec, Explicit) else text,
        "spectrum_hash": hashlib.sha256(text.encode()).hexdigest()[:16],
        "truncation_shape": list(trunc.support.shape),
        "support_size": len(trunc.support),
    }


def _pool_map(fn, items, jobs: int):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# commands


def cmd_bound(args, root: Path) -> int:
    spec = load_spec(args.spec)
    names = [b.strip() for b in args.bounds.split(",") if b.strip()]
    ok = applicable_bounds(spec)
    for b in names:
        if b not in BOUND_NAMES or b not in ok:
            raise UsageError(f"bound {b!r} not applicable to {spec.family}; applicable: {', '.join(ok) or 'none'}")
    ns = parse_grid(args.n)
    trunc = default_truncation(spec, args.radius)
    run = Run("bound", {"bounds": names, "n": ns, **_spectrum_params(spec, trunc)}, root)

    def one(n):
        return [compute_bound(b, trunc, n) for b in names]

    reports = _pool_map(one, ns, args.jobs)
    rows, payload = [], []
    for n, reps in zip(ns, reports):
        for r in reps:
            rows.append([n, r.bound_name, r.value])
            payload.append(r.to_dict())
            print(f"n={n:<6d} {r.bound_name:<20s} {r.value!r}")
    run.write_csv("bounds.csv", ["n", "bound", "value"], rows)
    run.write("bounds.json", json.dumps(payload, indent=1, sort_keys=True))
    print(run.finish())
    return EXIT_OK


def _parse_rule(text: str, d: int, trunc):
    kind, _, arg = text.partition(":")
    if kind == "equispaced":
        return "equispaced", int(arg)
    if kind == "file":
        return "file", rule_from_csv(Path(arg).read_text())
    raise UsageError(f"unknown rule {text!r}; use equispaced:N or file:PATH")


def cmd_wce(args, root: Path) -> int:
    spec = load_spec(args.spec)
    trunc = default_truncation(spec, args.radius)
    kind, rule = _parse_rule(args.rule, spec.d, trunc)
    K = KernelApprox.from_truncation(trunc)
    run = Run("wce", {"rule": args.rule, "weights": args.weights, **_spectrum_params(spec, trunc)}, root)
    if kind == "equispaced":
        closed = equispaced_error_sq(rule, trunc, spec.d, args.weights)
        rule = equispaced_rule(rule, spec.d, args.weights, trunc)
        print(f"closed form: [{closed.lo!r}, {closed.hi!r}]")
        run.write("closed_form.json", json.dumps(closed.as_dict(), sort_keys=True))
    err = worst_case_error_sq(rule, K)
    print(f"squared worst-case error in [{err.lo!r}, {err.hi!r}] (truncated kernel value {err.value!r})")
    run.write("rule.csv", rule_to_csv(rule))
    run.write("error.json", json.dumps(err.as_dict(), sort_keys=True))
    print(run.finish())
    return EXIT_OK


def cmd_optimize(args, root: Path) -> int:
    spec = load_spec(args.spec)
    trunc = default_truncation(spec, args.radius)
    K = KernelApprox.from_truncation(trunc)
    params = {"n": args.n, "restarts": args.restarts, "seed": args.seed, "budget": args.budget,
              **_spectrum_params(spec, trunc)}
    run = Run("optimize", params, root)
    rule, err = optimize_nodes(args.n, K, args.restarts, args.seed, args.budget, jobs=args.jobs)
    print(f"n={args.n}: squared error in [{err.lo!r}, {err.hi!r}]")
    run.write("rule.csv", rule_to_csv(rule))
    run.write("error.json", json.dumps(err.as_dict(), sort_keys=True))
    print(run.finish())
    return EXIT_OK


def cmd_bumps(args, root: Path) -> int:
    spec = load_spec(args.spec)
    if spec.d != 1:
        raise UsageError("bump experiments are univariate")
    trunc = default_truncation(spec, args.radius)
    ns = parse_grid(args.n)
    placements = [p.strip() for p in args.placement.split(",")]
    run = Run("bumps", {"family": args.family, "degree": args.degree, "n": ns, "placement": placements,
                        "freq_mult": args.freq_mult, **_spectrum_params(spec, trunc)}, root)

    def one(n):
        out = []
        for pl in placements:
            if pl == "adversarial":
                bump = BumpSpec(args.family, n, args.degree)
                table = phi_n_fourier(bump, adversarial_nodes(n), args.freq_mult * n)
            elif pl == "full":
                bump = BumpSpec("paper-phi", n)
                table = phi_n_fourier(bump, full_grid(n), args.freq_mult * n, spec)
            else:
                raise UsageError(f"unknown placement {pl!r}")
            out.append(fooling_ratio(table, trunc, n, pl))
        return out

    reports = [r for rs in _pool_map(one, ns, args.jobs) for r in rs]
    run.write("fooling.csv", reports_to_csv(reports))
    fits = {}
    for pl in placements:
        pts = [(r.n, r.ratio) for r in reports if r.placement == pl]
        try:
            fits[pl] = json.loads(rate_fit(pts, fixed_a=0.5).to_json())
        except ValueError as exc:
            fits[pl] = {"error": str(exc)}
    run.write("fits.json", json.dumps(fits, indent=1, sort_keys=True))
    for r in reports:
        print(f"n={r.n:<6d} {r.placement:<12s} ratio={r.ratio!r}")
    print(run.finish())
    return EXIT_OK


def cmd_approx(args, root: Path) -> int:
    spec = load_spec(args.spec)
    trunc = default_truncation(spec, args.radius)
    run = Run("approx", {"N": args.N, "count": args.count, **_spectrum_params(spec, trunc)}, root)
    N = min(args.N, len(trunc.values))
    a = approximation_numbers(trunc, N)
    run.write_csv("approx.csv", ["n", "a_n"], [[i, float(v)] for i, v in enumerate(a)])
    grid = [n for n in (2**e for e in range(2, 64)) if n < N]
    if len(grid) >= 6:
        try:
            run.write("fit.json", rate_fit([(n, a[n]) for n in grid]).to_json())
        except ValueError as exc:
            print(f"rate fit skipped: {exc}")
    if args.count:
        beta = getattr(spec, "beta", None)
        if beta is None:
            raise UsageError("--count needs a spectrum with a beta parameter")
        rs = parse_real_grid(args.count)
        rows = [[r, count_N(r, spec.d, beta)] for r in rs]
        run.write_csv("count.csv", ["r", "N"], rows)
    print(f"{N} approximation numbers, a_0 = {float(a[0])!r}" if N else "no approximation numbers")
    print(run.finish())
    return EXIT_OK


# ---------------------------------------------------------------------------
# verification suites


@dataclass
class SuiteResult:
    name: str
    trials: int
    failures: int
    details: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0


def random_convolution_square(rng: np.random.Generator, width: int = 3) -> Explicit:
    """``mu * mu`` for a random non-negative ``mu`` on ``{-width..width}``."""
    pts = np.arange(-width, width + 1)[:, None]
    vals = rng.random(len(pts)) * (rng.random(len(pts)) < 0.8)
    vals[width] += 0.1
    mu = Explicit(pts, vals)
    return convolution_square(mu)


def _suite_schur_psd(trials, seed):
    fails, det = 0, []
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        n = int(rng.integers(1, 21))
        M = random_psd(n, rng)
        tol = 1e-10 * float(np.linalg.norm(M, 2)) * n
        v = is_psd(schur_gap_matrix(M), tol)
        if not v.is_psd:
            fails += 1
            det.append({"trial": t, "n": n, "min_eig": v.min_eigenvalue})
    return fails, det


def _suite_charact(trials, seed):
    fails, det = 0, []
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        lam = random_convolution_square(rng)
        K = KernelApprox.from_truncation(truncate_at(lam))
        kappa, lam0 = K.diagonal_value, K.lambda0
        n = int(rng.integers(1, max(int(kappa / lam0), 1) + 1))
        x = rng.random((n, 1))
        for alpha in (kappa / (n * lam0**2), n / kappa):
            try:
                rep = verify_charact_direction(K, x, alpha)
                if not rep.verdict.is_psd:
                    fails += 1
                    det.append({"trial": t, "alpha": alpha, "min_eig": rep.verdict.min_eigenvalue})
            except AssertionError as exc:
                fails += 1
                det.append({"trial": t, "alpha": alpha, "error": str(exc)})
    return fails, det


def _suite_convolution(trials, seed):
    fails, det = 0, []
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        d = int(rng.integers(1, 3))
        pa = np.unique(rng.integers(-4, 5, size=(6, d)), axis=0)
        pb = np.unique(rng.integers(-4, 5, size=(6, d)), axis=0)
        a = Explicit(pa, rng.integers(0, 10, size=len(pa)).astype(float))
        b = Explicit(pb, rng.integers(0, 10, size=len(pb)).astype(float))
        c = convolve(a, b)
        if c.mass != a.mass * b.mass:
            fails += 1
            det.append({"trial": t, "lhs": c.mass, "rhs": a.mass * b.mass})
    return fails, det


def _suite_curse(trials, seed):
    fails, det = 0, []
    for d in range(2, 11):
        for n in range(1, (3**d + 1) // 4 + 3):
            v = bound_curse_Fd2(1.0, n, d)
            expect = 0.5 if 4 * n - 1 <= 3**d else None
            if v != expect:
                fails += 1
                det.append({"d": d, "n": n, "got": v})
    return fails, det


def _suite_analytic(trials, seed):
    fails, det = 0, []
    for c, w in ((1.0, 2.0), (2.0, 3.0)):
        tr = truncate_at(Geometric(c, w), 400)
        for n in range(1, 9):
            u = bound_univariate(tr, n).value
            a = bound_analytic(c, w, n)
            if abs(u - a) > 1e-12 * a:
                fails += 1
                det.append({"c": c, "omega": w, "n": n, "univariate": u, "analytic": a})
    return fails, det


SUITES = {
    "schur-psd": _suite_schur_psd,
    "charact": _suite_charact,
    "convolution": _suite_convolution,
    "curse": _suite_curse,
    "analytic": _suite_analytic,
}


def run_suite(name: str, trials: int, seed: int) -> SuiteResult:
    if name not in SUITES:
        raise UsageError(f"unknown suite {name!r}; available: {', '.join(SUITES)}")
    fails, det = SUITES[name](trials, seed)
    return SuiteResult(name, trials, fails, det)


def cmd_verify(args, root: Path) -> int:
    if args.seed is None:
        raise UsageError("verify needs --seed")
    run = Run("verify", {"suite": args.suite, "trials": args.trials, "seed": args.seed}, root)
    res = run_suite(args.suite, args.trials, args.seed)
    run.write("result.json", json.dumps({"suite": res.name, "trials": res.trials, "failures": res.failures,
                                         "details": res.details[:50]}, indent=1, sort_keys=True, default=float))
    print(f"suite {res.name}: {'PASS' if res.passed else 'FAIL'} ({res.failures} failures)")
    print(run.finish({"passed": res.passed}))
    return EXIT_OK if res.passed else EXIT_VERIFY


def cmd_report(args, root: Path) -> int:
    rows = []
    for m in sorted(root.glob("*/*/manifest.json")):
        data = json.loads(m.read_text())
        if data.get("command") == "report":
            continue
        rows.append([data.get("command"), m.parent.name, data.get("params", {}).get("spectrum", ""),
                     ";".join(data.get("files", []))])
    run = Run("report", {"root": str(root), "entries": [r[:2] for r in rows]}, root)
    run.write_csv("summary.csv", ["command", "hash", "spectrum", "files"], rows)
    for r in rows:
        print(f"{r[0]:<10s} {r[1]} {r[2]}")
    print(run.finish())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perquad", description=__doc__.splitlines()[0])
    p.add_argument("--out", help=f"output root (default ${ENV_OUT} or ./out)")
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, spec=True):
        if spec:
            sp.add_argument("--spec", required=False, help="e.g. geometric:1,2  border:1  iso:2,1  mixed:2,1  file:PATH")
            sp.add_argument("--radius", type=float, help="fixed truncation radius / hyperbolic level")
        sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("bound", help="sweep Schur-technique lower bounds over n")
    common(sp)
    sp.add_argument("--bounds", default="univariate")
    sp.add_argument("--n", default="1..8")
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("wce", help="worst-case error of a quadrature rule")
    common(sp)
    sp.add_argument("--rule", default="equispaced:2")
    sp.add_argument("--weights", default="equal", choices=["equal", "optimal"])
    sp.set_defaults(func=cmd_wce)

    sp = sub.add_parser("optimize", help="node optimization (upper-bound witness)")
    common(sp)
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--restarts", type=int, default=8)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--budget", type=int, default=20)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("bumps", help="fooling-function ratios of bump constructions")
    common(sp)
    sp.add_argument("--family", default="cosine-squared", choices=["cosine-squared", "spline"])
    sp.add_argument("--degree", type=int, default=3)
    sp.add_argument("--n", default="2^3..2^10")
    sp.add_argument("--placement", default="adversarial,full")
    sp.add_argument("--freq-mult", type=int, default=64)
    sp.set_defaults(func=cmd_bumps)

    sp = sub.add_parser("approx", help="approximation numbers and counting function")
    common(sp)
    sp.add_argument("--N", type=int, default=1024)
    sp.add_argument("--count", default=None, help="r grid for N(r, d), e.g. 10^1..10^4")
    sp.set_defaults(func=cmd_approx)

    sp = sub.add_parser("verify", help="run a property suite")
    common(sp, spec=False)
    sp.add_argument("--suite", required=True, choices=sorted(SUITES))
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("report", help="summarize emitted manifests")
    common(sp, spec=False)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        if known.config:
            cfg = read_config(known.config)
            for action in parser._subparsers._group_actions:
                for sp in action.choices.values():
                    dests = {a.dest for a in sp._actions}
                    sp.set_defaults(**{k: v for k, v in cfg.items() if k in dests})
        args = parser.parse_args(argv)
        if args.command == "optimize" and args.seed is None:
            raise UsageError("optimize needs --seed")
        if args.command in ("bound", "wce", "optimize", "bumps", "approx") and not args.spec:
            raise UsageError(f"{args.command} needs --spec")
        root = Path(args.out or os.environ.get(ENV_OUT) or "out")
        return args.func(args, root)
    except UsageError as exc:
        print(f"perquad: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TruncationError, OSError) as exc:
        print(f"perquad: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
