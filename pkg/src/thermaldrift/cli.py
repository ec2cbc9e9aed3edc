"""Command-line experiment runner.

    thermaldrift scaling --rows 2 --cols 3 --runs 30 --out results/
    thermaldrift levelstats --config level.cfg --seed 7

A config file holds flat ``key = value`` lines (``#`` starts a comment); keys
are the long flag names without dashes. Flags given on the command line win
over file keys. Outputs are CSV (header row, LF endings, repr floats) and JSON
with sorted keys, so equal (config, seed) pairs give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dilation_circuit as dc
from .drift_channel import DriftStepSpec, NumericalError, apply_drift_forced, branch_probabilities
from .operator_kit import gibbs_state, operator_norm, trace_distance
from .pauli import PauliWord
from .sampler import (
    SamplerConfig,
    build_grid_ensemble,
    error_trend,
    run_batch,
    step_count,
)
from .spectra import (
    TooFewLevelsError,
    binned_reference,
    global_parities,
    l1_distance,
    modular_gap_ratios,
    pool,
    sector_gap_ratios,
    symmetry_sectors,
)
from .walk_theory import lattice_bins, theoretical_marginal, total_variation, weighted_histogram

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_VERIFICATION = 0, 1, 2, 3
COMMANDS = ("sample", "scaling", "marginal", "tradeoff", "levelstats", "verify-circuit")
REFERENCE_EPSILON = 1e-6


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


KEYS = {
    "experiment": str,
    "model": str,
    "rows": int,
    "cols": int,
    "h": float,
    "beta": float,
    "beta-min": float,
    "beta-max": float,
    "beta-points": int,
    "k": _floats,
    "step-constant": float,
    "steps": int,
    "runs": int,
    "mc-count": int,
    "seed": int,
    "out": str,
    "dump-states": _bool,
    "paper-scale": _bool,
    "coefficient": str,
    "init-beta": float,
    "resolve-symmetry": _bool,
    "bins": int,
    "cases": int,
    "theta-offset": float,
}

DEFAULTS = {
    "sample": dict(model="heisenberg", rows=2, cols=2, beta=1.0, k=[2.0], **{"step-constant": 500.0, "runs": 5}),
    "scaling": dict(
        model="heisenberg", rows=2, cols=3, k=[1.5, 2.0, 2.5],
        **{"beta-min": 1.0, "beta-max": 6.0, "beta-points": 6, "step-constant": 300.0, "runs": 30},
    ),
    "marginal": dict(model="heisenberg", rows=2, cols=2, beta=2.0, k=[2.0], **{"step-constant": 500.0, "runs": 10000, "mc-count": 10000}),
    "tradeoff": dict(model="heisenberg", rows=2, cols=2, beta=2.0, k=[1.0, 1.5, 2.0, 2.5, 3.0], **{"step-constant": 200.0, "runs": 100}),
    "levelstats": dict(
        model="tfim", rows=2, cols=3, beta=2.0, k=[2.0],
        **{"step-constant": 300.0, "runs": 20, "init-beta": 1.0, "resolve-symmetry": True, "bins": 20},
    ),
    "verify-circuit": dict(cases=20, **{"theta-offset": 0.0}),
}
COMMON = {"h": 1.0, "seed": 0, "out": "thermaldrift-out", "dump-states": False, "paper-scale": False}


def parse_config_file(path: str | Path) -> dict:
    """Read ``key = value`` lines; errors name the file and line."""
    out = {}
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.replace("_", "-").lower()
        if key not in KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return out


@dataclass
class Settings:
    command: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def betas(self) -> list[float]:
        if "beta-min" in self.values or "beta-max" in self.values or "beta-points" in self.values:
            lo = self.values.get("beta-min", self.values.get("beta", 1.0))
            hi = self.values.get("beta-max", lo)
            points = self.values.get("beta-points", 1)
            if points == 1:
                return [float(lo)]
            return [float(b) for b in np.linspace(lo, hi, points)]
        return [float(self.values["beta"])]


def resolve_settings(command: str, file_values: dict, flag_values: dict) -> Settings:
    if file_values.get("experiment", command) != command:
        raise ConfigError(f"config is for experiment {file_values['experiment']!r}, not {command!r}")
    values = {**COMMON, **DEFAULTS[command], **file_values, **flag_values}
    values.pop("experiment", None)
    # an explicit single beta replaces a default sweep
    if "beta" in file_values or "beta" in flag_values:
        if not any(k in {**file_values, **flag_values} for k in ("beta-min", "beta-max", "beta-points")):
            for k in ("beta-min", "beta-max", "beta-points"):
                values.pop(k, None)
    s = Settings(command, values)
    validate(s)
    return s


def validate(s: Settings) -> None:
    v = s.values
    for key in ("rows", "cols", "runs", "mc-count", "beta-points", "cases", "bins", "steps"):
        if key in v and v[key] < 1:
            raise ConfigError(f"{key} must be at least 1, got {v[key]}")
    if not 0 <= v["seed"] < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {v['seed']}")
    if not v["h"] > 0:
        raise ConfigError(f"h must be positive, got {v['h']}")
    if "model" in v and v["model"] not in ("heisenberg", "tfim"):
        raise ConfigError(f"model must be heisenberg or tfim, got {v['model']!r}")
    if "k" in v and not v["k"]:
        raise ConfigError("at least one k exponent is required")
    if "step-constant" in v and not v["step-constant"] > 0:
        raise ConfigError("step-constant must be positive")
    if s.command != "verify-circuit":
        betas = s.betas()
        if not betas or any(not b > 0 for b in betas):
            raise ConfigError(f"beta values must be positive, got {betas}")
        if "beta-max" in v and "beta-min" in v and v["beta-max"] < v["beta-min"]:
            raise ConfigError("beta range is empty (beta-max < beta-min)")
        if v["rows"] * v["cols"] > 10:
            raise ConfigError("grids above 10 qubits are outside the dense simulator's range")


def derive_seed(master: int, *keys: int) -> int:
    """Independent 63-bit seed for a sweep point, keyed by integers."""
    return int(np.random.SeedSequence(master, spawn_key=tuple(keys)).generate_state(1, np.uint64)[0] >> np.uint64(1))


def step_constant(s: Settings, ensemble) -> float:
    if s["paper-scale"]:
        c = ensemble.lam**2 / REFERENCE_EPSILON ** (2 / 3)
        print(f"warning: full-scale C = {c:.3g}; runs may take hours", file=sys.stderr)
        return c
    return s["step-constant"]


# output helpers ---------------------------------------------------------------


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(x) for x in row])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return None if not math.isfinite(x) else float(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, ensure_ascii=False)


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _loglog_slope(x, y) -> float | None:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _report_failures(failures) -> int:
    for i, exc in sorted(failures.items()):
        print(f"run {i}: {exc}", file=sys.stderr)
    return EXIT_NUMERICAL if failures else EXIT_OK


# subcommands -------------------------------------------------------------------


def _ensemble(s: Settings):
    return build_grid_ensemble(s["model"], s["rows"], s["cols"], s["h"])


def cmd_sample(s: Settings, out: Path) -> int:
    ens = _ensemble(s)
    beta = s.betas()[0]
    steps = s.get("steps") or step_count(step_constant(s, ens), beta, s["k"][0])
    res = run_batch(ens, SamplerConfig(beta, steps, seed=s["seed"]), s["runs"], diagnostics=True)
    with open(out / "samples.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for smp in res:
            rec = {
                "ensemble": ens.name,
                "beta": beta,
                "steps": steps,
                "seed": s["seed"],
                "run_index": smp.run_index,
                "coefficients": [[str(w), c] for w, c in zip(ens.words, smp.coefficients)],
                "endpoint": smp.endpoint,
                "diagnostics": smp.diagnostics,
            }
            if s["dump-states"]:
                flat = smp.state.reshape(-1)
                rec["state"] = [[z.real, z.imag] for z in flat]
            fh.write(dumps(rec) + "\n")
    return _report_failures(res.failures)


def cmd_scaling(s: Settings, out: Path) -> int:
    ens = _ensemble(s)
    c = step_constant(s, ens)
    rows, points, failures = [], [], {}
    for bi, beta in enumerate(s.betas()):
        for ki, k in enumerate(s["k"]):
            steps = step_count(c, beta, k)
            cfg = SamplerConfig(beta, steps, seed=derive_seed(s["seed"], bi, ki))
            res = run_batch(ens, cfg, s["runs"], diagnostics=True)
            failures.update({(bi, ki, i): e for i, e in res.failures.items()})
            trend = error_trend(ens.n, steps, cfg.tau(ens))
            eps = [smp.diagnostics["trace_distance"] for smp in res]
            for smp, e in zip(res, eps):
                rows.append((beta, k, steps, smp.run_index, e, trend))
            points.append((beta, k, steps, float(np.mean(eps)) if eps else float("nan"), max(eps, default=float("nan")), trend))
    rows.sort(key=lambda r: (r[0], r[1], r[3]))
    points.sort(key=lambda r: (r[0], r[1]))
    write_csv(out / "scaling.csv", ["beta", "k", "N", "run", "trace_distance", "trend"], rows)
    write_csv(out / "scaling_summary.csv", ["beta", "k", "N", "mean_epsilon", "max_epsilon", "trend"], points)
    slopes = {}
    for k in s["k"]:
        pk = [p for p in points if p[1] == k]
        slopes[repr(float(k))] = {
            "mean_epsilon_slope": _loglog_slope([p[0] for p in pk], [p[3] for p in pk]),
            "max_epsilon_slope": _loglog_slope([p[0] for p in pk], [p[4] for p in pk]),
            "predicted_slope": 2.0 - k,
        }
    write_json(out / "scaling_summary.json", {"ensemble": ens.name, "step_constant": c, "runs": s["runs"], "slopes": slopes})
    return _report_failures(failures)


def _coefficient_axis(s: Settings, ens) -> int:
    key = s.get("coefficient")
    if key is None:
        for j, w in enumerate(ens.words):
            if w.letters.replace("I", "") == "YY":
                return j
        return 0
    if key.isdigit():
        j = int(key)
        if j >= ens.size:
            raise ConfigError(f"coefficient index {j} out of range for {ens.size} words")
        return j
    try:
        return [str(w) for w in ens.words].index(key.upper())
    except ValueError:
        raise ConfigError(f"word {key!r} is not in the {ens.name} ensemble") from None


def marginal_histograms(ens, beta, steps, axis, runs, mc_count, seed):
    """Empirical and theoretical marginals of coefficient ``axis`` on shared bins."""
    res = run_batch(ens, SamplerConfig(beta, steps, seed=seed), runs)
    values = np.array([smp.coefficients[axis] for smp in res])
    spacing = ens.lam / steps
    edges = lattice_bins(values, spacing)
    # a few empty bins either side so the theoretical tails are not cut off
    w = edges[1] - edges[0]
    edges = np.concatenate([edges[0] - w * np.arange(3, 0, -1), edges, edges[-1] + w * np.arange(1, 4)])
    emp = weighted_histogram(values, np.ones_like(values), edges)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2**32,)))
    theo = theoretical_marginal(ens, beta, steps, axis, mc_count, rng, edges=edges)
    return emp, theo, res


def cmd_marginal(s: Settings, out: Path) -> int:
    ens = _ensemble(s)
    beta = s.betas()[0]
    steps = s.get("steps") or step_count(step_constant(s, ens), beta, s["k"][0])
    axis = _coefficient_axis(s, ens)
    emp, theo, res = marginal_histograms(ens, beta, steps, axis, s["runs"], s["mc-count"], s["seed"])
    rows = zip(emp.edges[:-1], emp.edges[1:], emp.density, theo.density)
    write_csv(out / "marginal.csv", ["bin_left", "bin_right", "empirical_density", "theoretical_density"], rows)
    write_json(
        out / "marginal_summary.json",
        {
            "ensemble": ens.name,
            "word": str(ens.words[axis]),
            "beta": beta,
            "steps": steps,
            "samples": len(res),
            "mc_count": s["mc-count"],
            "total_variation": total_variation(emp, theo),
        },
    )
    return _report_failures(res.failures)


def cmd_tradeoff(s: Settings, out: Path) -> int:
    ens = _ensemble(s)
    beta = s.betas()[0]
    c = step_constant(s, ens)
    rows, failures = [], {}
    for ki, k in enumerate(s["k"]):
        steps = step_count(c, beta, k)
        res = run_batch(ens, SamplerConfig(beta, steps, seed=derive_seed(s["seed"], ki)), s["runs"], diagnostics=True)
        failures.update({(ki, i): e for i, e in res.failures.items()})
        eps = np.array([smp.diagnostics["trace_distance"] for smp in res])
        norms = np.array([operator_norm(ens.hamiltonian(smp.coefficients)) for smp in res])
        se = float(norms.std(ddof=1) / math.sqrt(len(norms))) if len(norms) > 1 else float("nan")
        rows.append((k, steps, 1 / eps.mean(), 1 / eps.max(), norms.mean(), se))
    rows.sort(key=lambda r: r[0])
    write_csv(out / "tradeoff.csv", ["k", "N", "inv_epsilon_mean", "inv_epsilon_max", "hnorm_mean", "hnorm_se"], rows)
    return _report_failures(failures)


def levelstats_experiment(s: Settings):
    ens = _ensemble(s)
    init_ens = build_grid_ensemble("heisenberg", s["rows"], s["cols"], s["h"])
    rng = np.random.default_rng(np.random.SeedSequence(s["seed"], spawn_key=(2**32 + 1,)))
    init_coeffs = rng.uniform(-s["h"], s["h"], init_ens.size)
    rho0 = gibbs_state(init_ens.hamiltonian(init_coeffs), s["init-beta"])
    beta = s.betas()[0]
    steps = s.get("steps") or step_count(step_constant(s, ens), beta, s["k"][0])
    res = run_batch(ens, SamplerConfig(beta, steps, seed=s["seed"], initial_state=rho0), s["runs"])
    syms = global_parities(list(ens.words) + list(init_ens.words)) if s["resolve-symmetry"] else []
    sectors = symmetry_sectors(syms, ens.n)
    bins = s["bins"]

    def stats(rho):
        return sector_gap_ratios(rho, sectors) if syms else [modular_gap_ratios(rho, bins=bins)]

    initial = pool(stats(rho0), bins)
    output = pool([st for smp in res for st in stats(smp.state)], bins)
    raw_initial = modular_gap_ratios(rho0, bins=bins)
    raw_output = pool([modular_gap_ratios(smp.state, bins=bins) for smp in res], bins)
    summary = {
        "ensemble": ens.name,
        "beta": beta,
        "steps": steps,
        "runs": len(res),
        "symmetries": [str(p) for p in syms],
        "sectors": len(sectors),
    }
    for name, st, raw in (("initial", initial, raw_initial), ("output", output, raw_output)):
        summary[name] = {
            "mean_r": st.mean_r,
            "count": st.count,
            "merged_levels": st.merged_levels,
            "excluded_levels": st.excluded_levels,
            "l1_poisson": l1_distance(st, "poisson"),
            "l1_goe": l1_distance(st, "goe"),
            "l1_gue": l1_distance(st, "gue"),
            "unresolved_mean_r": raw.mean_r,
        }
    return initial, output, summary, res


def cmd_levelstats(s: Settings, out: Path) -> int:
    initial, output, summary, res = levelstats_experiment(s)
    edges = initial.edges
    refs = {k: binned_reference(k, edges) for k in ("poisson", "goe", "gue")}
    rows = []
    for name, st in (("initial", initial), ("output", output)):
        for i in range(len(edges) - 1):
            rows.append((name, edges[i], edges[i + 1], st.density[i], refs["poisson"][i], refs["goe"][i], refs["gue"][i]))
    write_csv(out / "levelstats.csv", ["ensemble", "bin_left", "bin_right", "density", "poisson_ref", "wd_ref", "gue_ref"], rows)
    write_json(out / "levelstats_summary.json", summary)
    return _report_failures(res.failures)


def random_density_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    d = 1 << n
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_word(n: int, rng: np.random.Generator) -> PauliWord:
    while True:
        w = PauliWord("".join(rng.choice(list("IXYZ"), n)))
        if not w.is_identity:
            return w


def verify_case(word: PauliWord, tau: float, rho: np.ndarray, theta_offset: float = 0.0) -> dict:
    """Exact circuit branches against the closed-form instrument."""
    br = dc.embedded_branch_analysis(word, tau, rho, theta_offset)
    spec = DriftStepSpec(word, tau)
    p_plus, p_minus = branch_probabilities(spec, rho)
    p_loop = br[dc.LOOP][0]
    success = br[dc.UP][0] + br[dc.DOWN][0]
    prob_dev = max(abs(br[dc.UP][0] / success - p_plus), abs(br[dc.DOWN][0] / success - p_minus))
    dist = max(
        trace_distance(br[dc.UP][1], apply_drift_forced(spec, rho, 1).post_state),
        trace_distance(br[dc.DOWN][1], apply_drift_forced(spec, rho, -1).post_state),
        trace_distance(br[dc.LOOP][1], rho),
    )
    loop_dev = abs(p_loop - dc.loop_probability(tau))
    total_dev = abs(p_loop + success - 1)
    return {
        "prob_deviation": prob_dev,
        "trace_distance": dist,
        "loop_deviation": loop_dev,
        "passed": prob_dev <= 1e-9 and dist <= 1e-9 and loop_dev <= 1e-9 and total_dev <= 1e-12,
    }


def cmd_verify(s: Settings, out: Path) -> int:
    rows = []
    for n in (1, 2, 3):
        rng = np.random.default_rng(np.random.SeedSequence(s["seed"], spawn_key=(n,)))
        for case in range(s["cases"]):
            word = random_word(n, rng)
            tau = 1.0 - rng.random()  # (0, 1]
            rho = random_density_matrix(n, rng)
            r = verify_case(word, tau, rho, s["theta-offset"])
            rows.append((n, case, str(word), tau, r["prob_deviation"], r["trace_distance"], r["loop_deviation"], r["passed"]))
    write_csv(
        out / "verify.csv",
        ["n", "case", "word", "tau", "prob_deviation", "trace_distance", "loop_deviation", "passed"],
        rows,
    )
    failed = sum(not r[-1] for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} cases passed")
    return EXIT_VERIFICATION if failed else EXIT_OK


HANDLERS = {
    "sample": cmd_sample,
    "scaling": cmd_scaling,
    "marginal": cmd_marginal,
    "tradeoff": cmd_tradeoff,
    "levelstats": cmd_levelstats,
    "verify-circuit": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermaldrift", description="Thermal-drift Gibbs state sampling experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--model", choices=("heisenberg", "tfim"))
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--h", type=float, help="uniform coefficient bound")
    p.add_argument("--beta", type=float)
    p.add_argument("--beta-min", type=float)
    p.add_argument("--beta-max", type=float)
    p.add_argument("--beta-points", type=int)
    p.add_argument("--k", type=float, action="append", help="step exponent, repeatable")
    p.add_argument("--step-constant", type=float, help="C in N = C * beta**k")
    p.add_argument("--steps", type=int, help="fixed step count (sample, marginal, levelstats)")
    p.add_argument("--runs", type=int)
    p.add_argument("--mc-count", type=int)
    p.add_argument("--coefficient", help="word or index of the marginal coefficient")
    p.add_argument("--init-beta", type=float, help="inverse temperature of the levelstats initial state")
    p.add_argument("--bins", type=int)
    p.add_argument("--cases", type=int, help="verify-circuit cases per system size")
    p.add_argument("--paper-scale", action="store_true", default=None, help="use C = lambda^2 / eps0^(2/3), eps0 = 1e-6")
    p.add_argument("--dump-states", action="store_true", default=None)
    p.add_argument("--no-resolve-symmetry", dest="resolve_symmetry", action="store_false", default=None)
    p.add_argument("--theta-offset", type=float, help=argparse.SUPPRESS)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    flags = {}
    for key in KEYS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            flags[key] = val
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        settings = resolve_settings(args.command, file_values, flags)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        return HANDLERS[args.command](settings, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, TooFewLevelsError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
