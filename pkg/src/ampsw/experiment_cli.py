"""Experiment orchestration and command line entry point.

Modes: se (state-evolution traces), amp (AMP runs), sweep (the full
empirical-vs-predicted MSE experiment), diag (concentration checks).
A flat key = value config file fully determines one experiment; exact
rational entries like "3/70" are kept as fractions so configs
round-trip losslessly.  Exit codes: 0 success, 1 check failure,
2 config error.

Seed policy: the config's seeds list enumerates instance seeds, one
AMP run per (k, seed); the first seed doubles as the master seed of
the state-evolution Monte Carlo stream.  Concentration suites use
their own fixed seed range 0..conc_seeds-1.
"""

from __future__ import annotations

import argparse
import ast
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

SCHEMA_VERSION = 1
MODES = ("se", "amp", "sweep", "diag")
BOUNDARIES = ("zero", "median")
TAU_SOURCES = ("se-trace", "empirical")
ENGINES = ("mc", "gauss-hermite")
NOISES = ("gaussian", "uniform")

MC_SUITE = (("square", 0), ("first_last_product", 1))
GAUSS_SUITE = (("sum_squares", 1), ("first_last_product", 2), ("max", 2))
H_CHECK_T = 6


class ConfigError(ValueError):
    pass


_DEFAULTS = {
    "T": 30,
    "mc_samples": 200_000,
    "boundary": "zero",
    "tau_source": "se-trace",
    "se_engine": "mc",
    "gh_nodes": 16,
    "noise": "gaussian",
    "mode": None,
    "out_dir": None,
    "conc_N": 100_000,
    "conc_seeds": 20,
    "diag_tol_scale": 1.0,
}
_REQUIRED = ("states", "transition", "N", "delta", "sigma2", "k", "seeds")


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed config; numeric entries may be Fractions for exactness."""

    states: tuple
    transition: tuple
    N: int
    delta: object
    sigma2: object
    k: tuple
    seeds: tuple
    T: int = _DEFAULTS["T"]
    mc_samples: int = _DEFAULTS["mc_samples"]
    boundary: str = _DEFAULTS["boundary"]
    tau_source: str = _DEFAULTS["tau_source"]
    se_engine: str = _DEFAULTS["se_engine"]
    gh_nodes: int = _DEFAULTS["gh_nodes"]
    noise: str = _DEFAULTS["noise"]
    mode: str | None = None
    out_dir: str | None = None
    conc_N: int = _DEFAULTS["conc_N"]
    conc_seeds: int = _DEFAULTS["conc_seeds"]
    diag_tol_scale: float = _DEFAULTS["diag_tol_scale"]

    def __post_init__(self):
        if len(self.k) == 0:
            raise ConfigError("k list must not be empty")
        if any(int(kk) != kk or kk < 0 for kk in self.k):
            raise ConfigError("k values must be non-negative integers")
        if len(self.seeds) == 0:
            raise ConfigError("seeds list must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        kmax = max(self.k)
        if self.N <= 2 * kmax:
            raise ConfigError("need N > 2 max(k)")
        if float(self.delta) * self.N < 2 * kmax + 1:
            raise ConfigError("need delta * N >= 2k+1")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if not float(self.diag_tol_scale) >= 0:
            raise ConfigError("diag_tol_scale must be >= 0")
        for name, allowed in (("boundary", BOUNDARIES), ("tau_source", TAU_SOURCES),
                              ("se_engine", ENGINES), ("noise", NOISES)):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}")
        if self.mode is not None and self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")

    def chain(self):
        from .markov_signal import FiniteMarkovChain
        # Fractions parsed from "a/b" strings pass through unconverted so
        # exact chain analytics (reversibility violation 0) survive loading.
        trans = [list(row) for row in self.transition]
        return FiniteMarkovChain(states=tuple(float(s) for s in self.states), transition=trans)

    def se_params(self, k: int):
        from .state_evolution import SEParams
        return SEParams(N=self.N, delta=float(self.delta), sigma2=float(self.sigma2),
                        sigma_beta2=self.chain().second_moment(), k=k)

    def engine(self):
        from .state_evolution import GaussHermiteEngine, MonteCarloEngine
        if self.se_engine == "mc":
            return MonteCarloEngine(samples=self.mc_samples, seed=self.seeds[0])
        return GaussHermiteEngine(nodes=self.gh_nodes)


def _parse_value(raw: str):
    """Literal if possible, with rational strings 'a/b' as Fractions;
    bare words fall back to plain strings."""
    raw = raw.strip()
    try:
        return _fractionize(ast.literal_eval(raw))
    except (ValueError, SyntaxError):
        pass
    frac = _try_fraction(raw)
    return raw if frac is None else frac


def _try_fraction(s: str):
    parts = s.split("/")
    if len(parts) == 2:
        try:
            return Fraction(int(parts[0]), int(parts[1]))
        except ValueError:
            return None
    return None


def _fractionize(v):
    if isinstance(v, str):
        frac = _try_fraction(v)
        return v if frac is None else frac
    if isinstance(v, (list, tuple)):
        return tuple(_fractionize(x) for x in v)
    return v


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        for sep in ("=", ":"):
            if sep in stripped:
                key, _, raw = stripped.partition(sep)
                break
        else:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key = key.strip()
        if not key.isidentifier():
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(raw)
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    unknown = set(values) - set(_REQUIRED) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    kwargs = dict(values)
    kwargs["states"] = tuple(kwargs["states"]) if isinstance(kwargs["states"], tuple) else (kwargs["states"],)
    kwargs["k"] = tuple(kwargs["k"]) if isinstance(kwargs["k"], tuple) else (kwargs["k"],)
    kwargs["seeds"] = tuple(kwargs["seeds"]) if isinstance(kwargs["seeds"], tuple) else (kwargs["seeds"],)
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _render_value(v) -> str:
    if isinstance(v, Fraction):
        return f'"{v.numerator}/{v.denominator}"'
    if isinstance(v, tuple):
        return "[" + ", ".join(_render_value(x) for x in v) + "]"
    if isinstance(v, bool):
        return repr(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return v if v.isidentifier() or v in TAU_SOURCES + ENGINES else repr(v)
    raise ConfigError(f"cannot render {v!r}")


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for name in list(_REQUIRED) + [k for k in _DEFAULTS if k not in _REQUIRED]:
        v = getattr(cfg, name)
        if v is None:
            continue
        lines.append(f"{name} = {_render_value(v)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: tuple, rows: list) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _se_traces(cfg: ExperimentConfig):
    from .markov_signal import window_marginal
    from .state_evolution import run_se
    chain = cfg.chain()
    engine = cfg.engine()
    traces = {}
    for k in cfg.k:
        traces[k] = run_se(cfg.se_params(k), window_marginal(chain, k), T=cfg.T, engine=engine)
    return traces


def run_mode_se(cfg: ExperimentConfig, out_dir: Path) -> int:
    traces = _se_traces(cfg)
    rows = []
    summary = {"schema_version": SCHEMA_VERSION, "per_k": {}}
    for k in cfg.k:
        tr = traces[k]
        rows.extend((k,) + r for r in tr.to_rows())
        summary["per_k"][str(k)] = {
            "converged": tr.converged, "converged_at": tr.converged_at,
            "iterations": len(tr) - 1, "final_sigma2": float(tr.sigma2[-1]),
            "engine": tr.engine_info,
        }
    _write_csv(out_dir / "se_trace.csv", ("k", "t", "sigma2", "tau2", "predicted_mse"), rows)
    _write_json(out_dir / "se_summary.json", summary)
    return 0


def _sweep_rows(cfg: ExperimentConfig):
    from .amp_core import generate_instance, run_amp
    from .markov_signal import window_marginal
    from .state_evolution import predicted_middle_mse
    chain = cfg.chain()
    priors = {k: window_marginal(chain, k) for k in cfg.k}
    traces = _se_traces(cfg)
    rows = []
    for seed in cfg.seeds:
        instance = generate_instance(chain, cfg.N, float(cfg.delta), float(cfg.sigma2),
                                     noise=cfg.noise, seed=seed)
        for k in cfg.k:
            run = run_amp(instance, priors[k], T=cfg.T, tau_source=cfg.tau_source,
                          se_trace=traces[k], boundary=cfg.boundary)
            for t in range(cfg.T + 1):
                se_mse = predicted_middle_mse(traces[k].tau2_at(t), cfg.se_params(k))
                rows.append((k, seed, t, float(run.middle_mse[t]), se_mse, float(run.tau2[t])))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows, traces


def run_mode_amp(cfg: ExperimentConfig, out_dir: Path) -> int:
    rows, _ = _sweep_rows(cfg)
    _write_csv(out_dir / "amp_runs.csv", ("k", "seed", "t", "emp_mse", "se_mse", "tau2"), rows)
    finals = {}
    for k, seed, t, emp, _se, _tau2 in rows:
        if t == cfg.T:
            finals.setdefault(str(k), {})[str(seed)] = emp
    _write_json(out_dir / "amp_summary.json",
                {"schema_version": SCHEMA_VERSION, "final_mse": finals})
    return 0


def run_mode_sweep(cfg: ExperimentConfig, out_dir: Path) -> int:
    rows, traces = _sweep_rows(cfg)
    _write_csv(out_dir / "sweep.csv", ("k", "seed", "t", "emp_mse", "se_mse", "tau2"), rows)
    per_kt = {}
    for k, seed, t, emp, se, _tau2 in rows:
        per_kt.setdefault((k, t), []).append((emp, se))
    gaps = {}
    for (k, t), vals in sorted(per_kt.items()):
        emps = [v[0] for v in vals]
        se = vals[0][1]
        mean_emp = sum(emps) / len(emps)
        gaps.setdefault(str(k), {})[str(t)] = {
            "se_mse": se,
            "mean_emp_mse": mean_emp,
            "abs_gap_of_mean": abs(mean_emp - se),
            "mean_abs_gap": sum(abs(e - se) for e in emps) / len(emps),
        }
    final_means = {k: sum(v[0] for v in per_kt[(k, cfg.T)]) / len(per_kt[(k, cfg.T)])
                   for k in cfg.k}
    order = sorted(cfg.k, key=lambda k: final_means[k])
    summary = {
        "schema_version": SCHEMA_VERSION,
        "per_kt_gap": gaps,
        "final_mean_mse": {str(k): final_means[k] for k in cfg.k},
        "final_mse_ordering": order,
        "ordering_decreasing_in_k": order == sorted(cfg.k, reverse=True),
        "se_converged": {str(k): traces[k].converged for k in cfg.k},
    }
    _write_json(out_dir / "sweep_summary.json", summary)
    return 0


def run_mode_diag(cfg: ExperimentConfig, out_dir: Path) -> int:
    import numpy as np

    from . import diagnostics as dg
    from .amp_core import amp_step, generate_instance, initial_state
    from .markov_signal import window_marginal

    chain = cfg.chain()
    scale = float(cfg.diag_tol_scale)
    report = {"schema_version": SCHEMA_VERSION}
    failures = []

    # One instance lives at a time (a full-size measurement matrix runs
    # to hundreds of MB).
    # h-moment checks average each statistic across seeds before
    # comparison; single-instance quadratic forms fluctuate on the 1/sqrt(n)
    # scale, which at N=10^4 is comparable to the tolerance itself.
    traces = _se_traces(replace(cfg, T=H_CHECK_T))
    priors = {k: window_marginal(chain, k) for k in cfg.k}
    q0_reports = []
    stats = {k: {t: [] for t in range(H_CHECK_T)} for k in cfg.k}
    for seed in cfg.seeds:
        inst = generate_instance(chain, cfg.N, float(cfg.delta), float(cfg.sigma2),
                                 noise=cfg.noise, seed=seed)
        q0_reports.append(dg.q0_norm_check(inst, rel_tol=0.05 * scale))
        for k in cfg.k:
            tr = traces[k]
            state = initial_state(inst)
            for t in range(H_CHECK_T):
                h = dg.effective_noise(state, inst)
                stats[k][t].append((float(np.dot(h, h) / inst.N),
                                    float(np.dot(h, inst.beta0) / inst.n),
                                    float(np.mean(np.abs(h) / math.sqrt(tr.tau2_at(t)) > 1.96))))
                state = amp_step(state, inst, priors[k], tr.tau2_at(t), boundary=cfg.boundary)

    q0_mean = dg.ConcentrationReport.make(
        "q0_norm2_over_n_seed_mean",
        sum(r.empirical for r in q0_reports) / len(q0_reports),
        q0_reports[0].theoretical, cfg.N * len(cfg.seeds), rel_tol=0.05 * scale)
    report["q0"] = {"per_seed": [r.as_dict() for r in q0_reports], "mean": q0_mean.as_dict()}
    if not q0_mean.passed:
        failures.append(q0_mean.name)

    h_section = {}
    for k in cfg.k:
        tr = traces[k]
        k_entries = []
        for t in range(H_CHECK_T):
            norm_mean = sum(s[0] for s in stats[k][t]) / len(cfg.seeds)
            dot_mean = sum(s[1] for s in stats[k][t]) / len(cfg.seeds)
            tail_mean = sum(s[2] for s in stats[k][t]) / len(cfg.seeds)
            size = cfg.N * len(cfg.seeds)
            reports = [
                dg.ConcentrationReport.make(f"h_norm2_over_N[k={k},t={t}]", norm_mean,
                                            tr.tau2_at(t), size, rel_tol=0.10 * scale),
                dg.ConcentrationReport.make(f"h_dot_beta0_over_n[k={k},t={t}]", dot_mean,
                                            0.0, size, abs_tol=0.05 * scale),
                dg.ConcentrationReport.make(f"h_tail_fraction[k={k},t={t}]", tail_mean,
                                            0.05, size, abs_tol=scale * 3.0 / math.sqrt(cfg.N)),
            ]
            failures.extend(r.name for r in reports if not r.passed)
            k_entries.append({"t": t, "per_seed": stats[k][t],
                              "reports": [r.as_dict() for r in reports]})
        h_section[str(k)] = k_entries
    report["h_moments"] = h_section

    def suite(entries, runner):
        out = {}
        need = cfg.conc_seeds - 2
        for f, kk in entries:
            reports = [runner(f, kk, s) for s in range(cfg.conc_seeds)]
            passed = sum(r.passed for r in reports)
            ok = passed >= need
            if not ok:
                failures.append(f"suite[{f},{kk}]")
            out[f"{f},{kk}"] = {"passes": passed, "of": cfg.conc_seeds, "needed": need,
                                "ok": ok, "reports": [r.as_dict() for r in reports]}
        return out

    conc_tol = scale * 3.0 / math.sqrt(cfg.conc_N)
    report["mc_window"] = suite(
        MC_SUITE, lambda f, kk, s: dg.mc_window_average(chain, f, kk, cfg.conc_N, seed=s,
                                                        abs_tol=conc_tol))
    report["gaussian_window"] = suite(
        GAUSS_SUITE, lambda f, dd, s: dg.gaussian_window_average(f, dd, cfg.conc_N, seed=s,
                                                                 abs_tol=conc_tol))

    report["failures"] = failures
    report["pass"] = not failures
    _write_json(out_dir / "diag_report.json", report)

    print(q0_mean.row())
    for k in cfg.k:
        for entry in h_section[str(k)]:
            for rd in entry["reports"]:
                print(dg.ConcentrationReport(**rd).row())
    for name, sec in (("mc_window", report["mc_window"]), ("gaussian_window", report["gaussian_window"])):
        for key, val in sec.items():
            print(f"{name}[{key}]: {val['passes']}/{val['of']} within tolerance "
                  f"(need {val['needed']}) {'pass' if val['ok'] else 'FAIL'}")
    return 0 if report["pass"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="amp-sw",
                                     description="AMP with sliding-window denoisers")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None, help="output directory (default: config out_dir or .)")
    parser.add_argument("--seed", type=int, default=None,
                        help="replace the config seed list with this single master seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="thread count hint exported to BLAS/OpenMP before numpy loads")
    args = parser.parse_args(argv)

    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seeds=(args.seed,))
        out_dir = Path(args.out or cfg.out_dir or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        started = time.time()
        runner = {"se": run_mode_se, "amp": run_mode_amp,
                  "sweep": run_mode_sweep, "diag": run_mode_diag}[args.mode]
        code = runner(cfg, out_dir)
        print(f"{args.mode}: exit {code} ({time.time() - started:.1f}s), outputs in {out_dir}")
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
