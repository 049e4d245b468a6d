"""Command-line front end.

Exit codes: 0 on success, 1 when a validation fails or a computation breaks
down, 2 on bad configuration.  Diagnostics go to stderr prefixed ``error:``
or ``warning:``.  Files are written atomically (temporary file, then rename).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from typing import Sequence

import numpy as np

from . import analysis, closed_forms as cf, feedback_sim, truncation as tr, worst_case
from .distributions import Family
from .errors import ConfigError, DomainError, GoodhartError
from .records import fmt
from .streams import worker_count

SCENARIOS = {
    "uniform-exp": lambda a: tr.uniform_exponential(a.epsilon),
    "normal-normal": lambda a: tr.normal_normal(a.epsilon),
    "uniform-power": lambda a: tr.uniform_power(_need(a, "beta"), a.epsilon),
    "power-power": lambda a: tr.power_power(_need(a, "gamma"), _need(a, "beta"), a.epsilon),
    "uniform-lognormal": lambda a: tr.uniform_lognormal(a.epsilon),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise ConfigError(message)


def _need(args, name: str) -> float:
    v = getattr(args, name, None)
    if v is None:
        raise ConfigError(f"--{name} is required for scenario {args.scenario}")
    return v


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _finite(obj):
    """NaN and infinities become null so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def dumps(obj) -> str:
    # repr of a float is the shortest round-tripping text, at most 17 significant digits.
    return json.dumps(_finite(json.loads(json.dumps(obj, default=_json_default))), indent=2, allow_nan=False) + "\n"


def write_atomic(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _floats(spec: str, n: int, flag: str) -> list[float]:
    parts = spec.split(":")
    if len(parts) != n:
        raise ConfigError(f"{flag} expects {n} colon-separated values, got {spec!r}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"{flag}: {exc}") from exc


def _points(v: float, flag: str) -> int:
    if v != int(v) or v < 2:
        raise ConfigError(f"{flag}: point count must be an integer >= 2")
    return int(v)


def alpha_grid(spec: str) -> tr.AlphaLogGrid:
    """``max:min:points``, logarithmic in base 2."""
    hi, lo, n = _floats(spec, 3, "--alpha-grid")
    return tr.AlphaLogGrid(hi, lo, _points(n, "--alpha-grid"))


def m_grid(spec: str) -> tr.ThresholdGrid:
    lo, hi, n = _floats(spec, 3, "--m-grid")
    return tr.ThresholdGrid(lo, hi, _points(n, "--m-grid"))


def load_scenario(args) -> tr.Scenario:
    inline = args.scenario is not None
    if inline == (args.config is not None):
        raise ConfigError("give exactly one scenario source: --config FILE or --scenario NAME")
    if args.config is not None:
        try:
            with open(args.config) as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from exc
        return tr.Scenario.from_dict(obj)
    if args.epsilon is None:
        raise ConfigError("--epsilon is required with --scenario")
    try:
        return SCENARIOS[args.scenario](args)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def _add_scenario(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario JSON file")
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    p.add_argument("--epsilon", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--dump-config", metavar="PATH", help="write the resolved scenario as JSON and stop")


def _grid(args):
    if args.alpha_grid is not None and args.m_grid is not None:
        raise ConfigError("give at most one of --alpha-grid and --m-grid")
    if args.m_grid is not None:
        return m_grid(args.m_grid)
    return alpha_grid(args.alpha_grid or "1:1e-9:64")


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha-grid", help="max:min:points, log2-spaced (default 1:1e-9:64)")
    p.add_argument("--m-grid", help="min:max:points, linear in the threshold")
    p.add_argument("--workers", type=int, default=None)


# ---------------------------------------------------------------- subcommands


def cmd_sweep(args) -> int:
    s = load_scenario(args)
    if args.dump_config:
        write_atomic(args.dump_config, dumps(s.to_dict()))
        return 0
    table = tr.sweep(s, _grid(args), workers=worker_count(args.workers))
    write_atomic(args.out, "\n".join(table.csv_lines()) + "\n")
    return 0


def cmd_classify(args) -> int:
    s = load_scenario(args)
    if args.dump_config:
        write_atomic(args.dump_config, dumps(s.to_dict()))
        return 0
    table = tr.sweep(s, _grid(args), workers=worker_count(args.workers))
    verdict = analysis.classify(table, strong_threshold=args.strong_threshold, weak_margin=args.weak_margin)
    out = verdict.to_dict()
    out["double_descent"] = [e.__dict__ for e in analysis.detect_double_descent(table)]
    write_atomic(args.out, dumps(out))
    return 0


def _parse_alphas(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--alphas: {exc}") from exc
    if not vals or any(not 0 < a <= 1 for a in vals):
        raise ConfigError("--alphas must be a comma list of values in (0, 1]")
    return vals


def cmd_validate(args) -> int:
    if args.matrix in ("paper", "reference"):
        scenarios = analysis.reference_scenarios()
    else:
        if args.config is None and args.scenario is None:
            raise ConfigError("--matrix single needs --config or --scenario")
        scenarios = [load_scenario(args)]
    alphas = _parse_alphas(args.alphas)
    budget = None if args.mc_n == 0 else analysis.McBudget(args.mc_n, args.seed, worker_count(args.workers))
    report = analysis.validation_matrix(scenarios, alphas, budget)
    write_atomic(args.out, dumps(report.to_dict()))
    if not report.passed:
        print(
            f"error: validation failed: {report.closed_form_failures} closed-form mismatches, "
            f"Monte Carlo pass fraction {report.mc_pass_fraction:.4f}",
            file=sys.stderr,
        )
        return 1
    return 0


def cmd_worst_case(args) -> int:
    if not (args.m_max > args.m_min > 0) or args.points < 2:
        raise ConfigError("need 0 < m-min < m-max and at least 2 points")
    ms = np.geomspace(args.m_min, args.m_max, args.points)
    vals = worst_case.threshold_curve(ms, args.epsilon)
    lines = ["m,e_g"] + [f"{fmt(m)},{fmt(v)}" for m, v in zip(ms, vals)]
    write_atomic(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_feedback(args) -> int:
    cfg = feedback_sim.ExperimentConfig(
        theta=args.theta,
        addiction_measure=args.alpha_measure,
        addiction_goal=args.alpha_goal,
        horizon=args.horizon,
        delta=args.delta,
        n_draws=args.n,
        omega_lognormal=(args.mu, args.sigma),
        seed=args.seed,
    )
    res = feedback_sim.run_experiment(cfg)
    if args.draws_out:
        lines = ["omega,m,g"] + [
            f"{fmt(o)},{fmt(m)},{fmt(g)}" for o, m, g in zip(res.omega, res.m_value, res.g_value)
        ]
        write_atomic(args.draws_out, "\n".join(lines) + "\n")
    write_atomic(args.out, dumps(res.summary()))
    return 0


def _prediction(s: tr.Scenario, alpha: float) -> cf.AsymptoticPrediction:
    g, x = s.goal, s.discrepancy
    if g.family == Family.NORMAL and x.family == Family.NORMAL:
        return cf.normal_rho_asymptotic(x["sigma"] / g["sigma"], alpha)
    if g.family == Family.UNIFORM01 and x.family == Family.POWER_LAW:
        eps = s.nominal_epsilon
        if eps is None:
            raise ConfigError("the uniform/power-law asymptote needs a calibrated epsilon")
        return cf.uniform_power_rho_asymptotic(x["beta"], eps, alpha)
    if g.family == Family.POWER_LAW and x.family == Family.POWER_LAW:
        eps = s.nominal_epsilon
        if eps is None:
            raise ConfigError("the power-law pair's asymptote needs a calibrated epsilon")
        return cf.power_power_rho_asymptotic(x["beta"], g["beta"], eps, alpha)
    if g.family == Family.UNIFORM01 and x.family == Family.EXPONENTIAL:
        eps = 1.0 / (x["rate"] * math.sqrt(12.0))
        exact = alpha <= cf.uniform_exp_plateau_threshold(eps)
        return cf.AsymptoticPrediction(
            0.0 if exact else math.nan, "alpha below the plateau level", cf.Kind.EXACT,
            {"plateau_e_g": cf.uniform_exp_plateau_e_g(eps), "on_plateau": exact},
        )
    raise ConfigError("no asymptotic prediction for this scenario")


def cmd_asymptote(args) -> int:
    s = load_scenario(args)
    if args.dump_config:
        write_atomic(args.dump_config, dumps(s.to_dict()))
        return 0
    rows = []
    for a in _parse_alphas(args.alphas):
        try:
            pred = _prediction(s, a)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        if pred.details.get("in_regime") is False:
            print(f"warning: alpha={a:g} is outside the asymptote's regime (needs log alpha < "
                  f"{pred.details['log_alpha_onset']:.6g})", file=sys.stderr)
        row = {"alpha": a, "prediction": pred.value, "kind": pred.kind.value, "validity": pred.validity,
               "details": pred.details}
        if not args.no_quadrature:
            q = tr.truncated_stats(s, a)
            row["quadrature_rho"] = q.rho_alpha
            row["m_alpha"] = q.m_alpha
            row["ratio"] = q.rho_alpha / pred.value if pred.value not in (0.0,) and math.isfinite(pred.value) else None
        rows.append(row)
    write_atomic(args.out, dumps({"scenario": s.to_dict(), "rows": rows}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="goodhart", description="Top-alpha selection statistics for M = G + xi.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("sweep", help="truncated statistics over an alpha or threshold grid (CSV)")
    _add_scenario(sp)
    _add_grid(sp)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_sweep)

    cp = sub.add_parser("classify", help="weak/strong regime verdict for a sweep (JSON)")
    _add_scenario(cp)
    _add_grid(cp)
    cp.add_argument("--strong-threshold", type=float, default=analysis.STRONG_THRESHOLD)
    cp.add_argument("--weak-margin", type=float, default=analysis.WEAK_MARGIN)
    cp.add_argument("--out", default="-")
    cp.set_defaults(func=cmd_classify)

    vp = sub.add_parser("validate", help="quadrature vs closed forms vs Monte Carlo (JSON)")
    vp.add_argument("--matrix", choices=("paper", "reference", "single"), help="reference (alias paper): the five standard scenarios", default="paper")
    _add_scenario(vp)
    vp.add_argument("--alphas", default="0.5,0.1,0.01,0.001")
    vp.add_argument("--mc-n", type=int, default=10_000_000, help="0 skips Monte Carlo")
    vp.add_argument("--seed", type=int, default=42)
    vp.add_argument("--workers", type=int, default=None)
    vp.add_argument("--out", default="-")
    vp.set_defaults(func=cmd_validate)

    wp = sub.add_parser("worst-case", help="E[G | M >= m] for the goal-dependent construction (CSV)")
    wp.add_argument("--epsilon", type=float, default=0.1)
    wp.add_argument("--m-min", type=float, default=10.0)
    wp.add_argument("--m-max", type=float, default=1e4)
    wp.add_argument("--points", type=int, default=4)
    wp.add_argument("--out", default="-")
    wp.set_defaults(func=cmd_worst_case)

    fp = sub.add_parser("feedback-sim", help="recommender feedback experiment (JSON summary)")
    fp.add_argument("--theta", type=float, default=0.2)
    fp.add_argument("--alpha-measure", type=float, default=50.0)
    fp.add_argument("--alpha-goal", type=float, default=5.0)
    fp.add_argument("--horizon", type=int, default=100)
    fp.add_argument("--delta", type=float, default=1e-5)
    fp.add_argument("--n", type=int, default=100_000)
    fp.add_argument("--mu", type=float, default=0.0)
    fp.add_argument("--sigma", type=float, default=3.0)
    fp.add_argument("--seed", type=int, default=0)
    fp.add_argument("--draws-out", help="per-draw CSV (omega,m,g)")
    fp.add_argument("--out", default="-")
    fp.set_defaults(func=cmd_feedback)

    ap = sub.add_parser("asymptote", help="leading-order rho predictions next to quadrature (JSON)")
    _add_scenario(ap)
    ap.add_argument("--alphas", default="1e-3,1e-4,1e-5,1e-6")
    ap.add_argument("--no-quadrature", action="store_true")
    ap.add_argument("--out", default="-")
    ap.set_defaults(func=cmd_asymptote)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GoodhartError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
