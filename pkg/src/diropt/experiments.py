"""Experiment runner: instances, step-size grids, traces, summaries and plot scripts."""

import hashlib
import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata

import numpy as np

from . import analysis, fileio
from .errors import ConfigError, NonFiniteIterate, TraceTooShort
from .graph import (
    MixingMatrix,
    build_mixing_matrix,
    check_positive_definiteness,
    random_network,
    selfish_boost,
)
from .problems import (
    make_geometric_median,
    make_l1_least_squares,
    make_lq_least_squares,
    make_qp,
)
from .prox import golden_min
from .solvers import RunConfig, iterate, run

log = logging.getLogger(__name__)

CONVERGED, SLOW, DIVERGED = "CONVERGED", "SLOW", "DIVERGED"


def package_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - source checkout
        return "0+unknown"


@dataclass
class RunResult:
    label: str
    algorithm: str
    alpha: float
    status: str
    iterations: int = None
    final_dist: float = float("nan")
    diverged_at: int = None
    rate: analysis.RateFit = None
    trace_file: str = ""
    trace: list = field(default_factory=list, repr=False)


@dataclass
class ExperimentReport:
    config: object
    results: list
    manifest: dict
    notes: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)

    @property
    def all_diverged(self):
        return bool(self.results) and all(r.status == DIVERGED for r in self.results)


@dataclass
class SweepTable:
    label: str
    algorithm: str
    rows: list
    critical: float = None


# ---------------------------------------------------------------- setup


def build_network(cfg):
    """Graph and mixing matrix for a config, boosting self-weights if needed."""
    if cfg.graph_file:
        try:
            net = fileio.read_graph(cfg.graph_file)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc), "graph_file") from None
        if net.n != cfg.n:
            raise ConfigError(f"graph has {net.n} nodes but n = {cfg.n}", "graph_file")
    else:
        net, _ = random_network(cfg.n, cfg.graph_prob, cfg.seed)
    mix = build_mixing_matrix(net)
    beta = 0
    if not check_positive_definiteness(mix):
        A, beta = selfish_boost(net, mix.A)
        mix = MixingMatrix.from_matrix(A)
    return net, mix, beta


def build_instances(cfg):
    """List of ``(label, instance)``; one per ``q`` for the lq family."""
    fam = cfg.experiment
    want_oracle = cfg.reference in ("auto", "oracle")
    if fam == "geometric_median":
        return [("gm", make_geometric_median(cfg.n, cfg.p, cfg.seed, reference=want_oracle))]
    if fam == "l1_ls":
        return [("l1", make_l1_least_squares(cfg.n, cfg.p, cfg.m_i, cfg.lam, cfg.seed,
                                             reference=want_oracle, data_scale=cfg.data_scale))]
    if fam == "qp":
        return [("qp", make_qp(cfg.n, cfg.p, cfg.seed, scale=cfg.qp_scale or None,
                               rank=cfg.qp_rank or None, reference=want_oracle))]
    out = []
    for q in cfg.q:
        inst = make_lq_least_squares(cfg.n, cfg.p, cfg.m_i, cfg.lam, q, cfg.seed,
                                     data_scale=cfg.data_scale)
        out.append((q_label(q), inst))
    return out


def q_label(q):
    names = {0.0: "0", 0.5: "1/2", 2.0 / 3.0: "2/3"}
    return "q=" + names.get(q, f"{q:g}")


def initial_state_matrix(inst):
    """Default ``z^0``: the anchors for the geometric median, zero otherwise."""
    if inst.family == "geometric_median":
        return inst.data["b"].copy()
    return np.zeros((inst.n, inst.p))


def primary_algorithm(cfg):
    for a in cfg.algorithms:
        if a != "subgradient_push":
            return a
    return "p_extrapush" if cfg.experiment == "geometric_median" else "pg_extrapush"


def horizon_reference(inst, mix, cfg):
    """Column mean of the iterate after ``reference_horizon`` rounds at ``reference_alpha``."""
    rc = RunConfig(algorithm=primary_algorithm(cfg), alpha=cfg.reference_alpha,
                   max_iter=cfg.reference_horizon, z0=initial_state_matrix(inst))
    try:
        for state in iterate(inst, mix, rc):
            pass
    except NonFiniteIterate:
        raise ConfigError(f"reference run diverged at alpha={cfg.reference_alpha:g}",
                          "reference_alpha") from None
    return state.x.mean(axis=0)


def reference_vector(inst, mix, cfg):
    mode = cfg.reference
    if mode == "auto":
        mode = "horizon" if inst.family == "lq_ls" else "oracle"
    if mode == "oracle":
        return inst.reference.x, "oracle"
    return horizon_reference(inst, mix, cfg), f"iterate at t={cfg.reference_horizon}"


# ---------------------------------------------------------------- single runs


def iterations_to_tolerance(trace, tol):
    if not trace:
        return None
    d0 = trace[0].dist_to_ref
    for r in trace:
        if r.dist_to_ref <= tol * d0:
            return r.t
    return None


def run_cell(inst, mix, label, algorithm, alpha, xref, cfg, schedule=None, keep_trace=True):
    rc = RunConfig(algorithm=algorithm, alpha=alpha, alpha_schedule=schedule,
                   max_iter=cfg.max_iter, record_every=cfg.record_every,
                   z0=initial_state_matrix(inst), reference=xref)
    res = RunResult(label, algorithm, alpha, SLOW)
    try:
        trace = run(inst, mix, rc)
    except NonFiniteIterate as exc:
        res.status = DIVERGED
        res.diverged_at = exc.t
        res.trace = exc.trace
        return res
    res.trace = trace if keep_trace else []
    res.final_dist = trace[-1].dist_to_ref
    res.iterations = iterations_to_tolerance(trace, cfg.tolerance)
    res.status = CONVERGED if res.iterations is not None else SLOW
    try:
        # the reference itself is only accurate to about 1e-10, so ignore the floor
        res.rate = analysis.rate_fit(trace, floor=max(1e-14, 1e-9 * trace[0].dist_to_ref))
    except TraceTooShort:
        res.rate = None
    return res


def sp_cost(res, max_iter):
    """Iterations to tolerance, censored at ``max_iter`` and tie-broken by final accuracy."""
    if res.status == DIVERGED:
        return float(2 * max_iter + 1)
    if res.iterations is not None:
        return float(res.iterations)
    d0 = res.trace[0].dist_to_ref if res.trace else 1.0
    return max_iter + min(1.0, res.final_dist / d0) if d0 > 0 else float(max_iter)


def tune_subgradient_push(inst, mix, xref, cfg, lo, hi, label=""):
    """Golden-section search over ``log alpha`` minimizing the censored iteration count.

    Returns ``(alpha, history)`` with every evaluated ``(alpha, cost)`` pair.
    """
    history = []

    def cost(log_a):
        a = math.exp(log_a)
        res = run_cell(inst, mix, label, "subgradient_push", a, xref, cfg,
                       schedule=cfg.sp_schedule, keep_trace=True)
        c = sp_cost(res, cfg.max_iter)
        history.append((a, c))
        log.info("subgradient-push sweep alpha=%.6g cost=%.6g", a, c)
        return c

    span = math.log(hi) - math.log(lo)
    tol = span * 0.618 ** max(cfg.sp_sweep_iters - 2, 1)
    best_log, _ = golden_min(cost, math.log(lo), math.log(hi), tol=tol,
                              max_iter=cfg.sp_sweep_iters)
    best = min(history, key=lambda h: h[1])
    return best[0], history


# ---------------------------------------------------------------- experiments


def _slug(text):
    return re.sub(r"[^A-Za-z0-9.+-]+", "_", text).strip("_")


def trace_name(label, algorithm, alpha):
    return f"{_slug(label)}_{algorithm}_a{alpha:.6g}.csv"


def graph_digest(net, mix):
    h = hashlib.sha256(fileio.graph_to_text(net).encode())
    h.update(fileio.matrix_to_csv(mix.A).encode())
    return h.hexdigest()


def run_experiment(cfg):
    """Run every ``(algorithm, alpha)`` cell, write traces and return the report."""
    out = cfg.resolved_output_dir()
    (out / "traces").mkdir(parents=True, exist_ok=True)
    net, mix, beta = build_network(cfg)
    fileio.write_graph(net, out / "graph.txt")
    fileio.write_matrix(mix.A, out / "mixing.csv")
    notes = {"boost_beta": beta}
    jobs = []
    instances = build_instances(cfg)
    for label, inst in instances:
        xref, ref_kind = reference_vector(inst, mix, cfg)
        notes[f"{label}.reference"] = ref_kind
        if inst.reference is not None:
            notes[f"{label}.oracle_residual"] = inst.reference.residual
            notes[f"{label}.oracle_label"] = inst.reference.label or inst.reference.method
        notes[f"{label}.theory"] = analysis.theoretical_constants(mix, inst)
        for algorithm in cfg.algorithms:
            if algorithm == "subgradient_push":
                if cfg.sp_alpha:
                    a_sp = cfg.sp_alpha
                else:
                    lo, hi = 1e-3 * max(cfg.alphas), 10.0 * max(cfg.alphas)
                    a_sp, hist = tune_subgradient_push(inst, mix, xref, cfg, lo, hi, label)
                    notes[f"{label}.sp_sweep"] = hist
                jobs.append((inst, label, algorithm, a_sp, xref, cfg.sp_schedule))
            else:
                for a in cfg.alphas:
                    jobs.append((inst, label, algorithm, a, xref, None))

    def work(job):
        inst, label, algorithm, a, xref, sched = job
        return run_cell(inst, mix, label, algorithm, a, xref, cfg, schedule=sched)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    for res in results:
        res.trace_file = f"traces/{trace_name(res.label, res.algorithm, res.alpha)}"
        fileio.write_trace(res.trace, out / res.trace_file)

    manifest = {
        "version": package_version(),
        "seed": cfg.seed,
        "config_sha256": cfg.digest,
        "graph_sha256": graph_digest(net, mix),
        "boost_beta": beta,
        "instances": {label: {"family": inst.family, "resamples": inst.resamples}
                      for label, inst in instances},
        "numpy": np.__version__,
    }
    report = ExperimentReport(cfg, results, manifest, notes)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "config.txt").write_text(cfg.source_text or cfg.canonical() + "\n")
    write_summary(report, out / "summary.csv")
    write_analysis_report(report, out / "report.txt")
    emit_plots(report, out / "plots.py")
    report.files = {"summary": out / "summary.csv", "report": out / "report.txt",
                    "plots": out / "plots.py", "manifest": out / "manifest.json"}
    return report


def write_summary(report, path):
    lines = ["label,algorithm,alpha,status,iterations,final_dist,diverged_at,rho_hat,onset_t,r_squared"]
    for r in report.results:
        rate = r.rate
        lines.append(",".join([
            r.label, r.algorithm, fileio.fmt(r.alpha), r.status,
            "" if r.iterations is None else str(r.iterations),
            fileio.fmt(r.final_dist),
            "" if r.diverged_at is None else str(r.diverged_at),
            "" if rate is None else fileio.fmt(rate.rho_hat),
            "" if rate is None else str(rate.onset_t),
            "" if rate is None else fileio.fmt(rate.r_squared),
        ]))
    path.write_text("\n".join(lines) + "\n")


def _theory_lines(prefix, theory):
    if isinstance(theory, analysis.TheoryInapplicable):
        lines = [f"{prefix}.theory = inapplicable",
                 f"{prefix}.theory.condition = {theory.condition}",
                 f"{prefix}.theory.detail = {theory.detail}"]
        lines += [f"{prefix}.theory.{k} = {fileio.fmt(v)}" for k, v in sorted(theory.values.items())]
        return lines
    keys = ("L_bar", "mu_bar", "c1", "c2", "c3", "a", "eta_bar", "sigma", "alpha_lo",
            "alpha_hi", "delta")
    return [f"{prefix}.theory = admissible"] + [
        f"{prefix}.theory.{k} = {fileio.fmt(getattr(theory, k))}" for k in keys
    ]


def write_analysis_report(report, path):
    lines = [f"version = {report.manifest['version']}",
             f"config_sha256 = {report.manifest['config_sha256']}",
             f"graph_sha256 = {report.manifest['graph_sha256']}"]
    for key, val in report.notes.items():
        if key.endswith(".theory"):
            lines += _theory_lines(key[: -len(".theory")], val)
        elif key.endswith(".sp_sweep"):
            lines += [f"{key}.{k} = {fileio.fmt(a)} {fileio.fmt(c)}" for k, (a, c) in enumerate(val)]
        else:
            lines.append(f"{key} = {val}")
    for r in report.results:
        stem = f"run.{r.label}.{r.algorithm}.{r.alpha:.6g}"
        lines.append(f"{stem}.status = {r.status}")
        if r.iterations is not None:
            lines.append(f"{stem}.iterations = {r.iterations}")
        if r.rate is not None:
            lines.append(f"{stem}.rho_hat = {fileio.fmt(r.rate.rho_hat)}")
            lines.append(f"{stem}.onset_t = {r.rate.onset_t}")
    path.write_text("\n".join(lines) + "\n")


def emit_plots(report, path=None):
    """Write (and return) a matplotlib script drawing semilog distance curves from the trace CSVs.

    One panel per instance label, one curve per run.
    """
    header = [
        "# Semilog convergence plots; run with: python3 plots.py",
        "# Reads the trace CSVs next to this file and writes convergence.png.",
    ]
    results = [] if report is None else [r for r in report.results if r.trace_file]
    if not results:
        text = "\n".join(header) + "\n"
        if path is not None:
            path.write_text(text)
        return text
    labels = list(dict.fromkeys(r.label for r in results))
    body = [
        "import csv",
        "import os",
        "import matplotlib",
        'matplotlib.use("Agg")',
        "import matplotlib.pyplot as plt",
        "",
        "HERE = os.path.dirname(os.path.abspath(__file__))",
        "",
        "",
        "def load(name):",
        "    with open(os.path.join(HERE, name), newline='') as fh:",
        "        rows = list(csv.DictReader(fh))",
        "    return [int(r['t']) for r in rows], [float(r['dist_to_ref']) for r in rows]",
        "",
        "",
        f"fig, axes = plt.subplots(1, {len(labels)}, figsize=({5 * len(labels)}, 4), squeeze=False)",
    ]
    for k, label in enumerate(labels):
        body.append(f"ax = axes[0][{k}]")
        for r in results:
            if r.label != label:
                continue
            tag = f"{r.algorithm} alpha={r.alpha:.4g}" + (" (diverged)" if r.status == DIVERGED else "")
            body.append(f"t, d = load({r.trace_file!r})")
            body.append(f"ax.semilogy(t, d, label={tag!r})")
        body += [f"ax.set_title({label!r})", "ax.set_xlabel('t')",
                 "ax.set_ylabel('||x^t - x*||_F')", "ax.legend(fontsize=7)"]
    body += ["fig.tight_layout()", "fig.savefig(os.path.join(HERE, 'convergence.png'), dpi=120)"]
    text = "\n".join(header + body) + "\n"
    if path is not None:
        path.write_text(text)
    return text


# ---------------------------------------------------------------- sweeps


def critical_alpha(rows):
    """Midpoint between the largest non-diverging grid point and the next diverging one."""
    ok = [r["alpha"] for r in rows if r["status"] != DIVERGED]
    if not ok:
        return None
    top = max(ok)
    above = [r["alpha"] for r in rows if r["status"] == DIVERGED and r["alpha"] > top]
    if not above:
        return None
    return 0.5 * (top + min(above))


def sweep_alpha(cfg, grid, instances=None, network=None):
    """Per-instance table of status and iterations-to-tolerance over a step-size grid."""
    grid = sorted(float(a) for a in grid)
    if not grid:
        raise ConfigError("grid must be nonempty", "grid")
    if network is None:
        _, mix, _ = build_network(cfg)
    else:
        mix = network
    algorithm = primary_algorithm(cfg)
    tables = []
    for label, inst in instances or build_instances(cfg):
        xref, _ = reference_vector(inst, mix, cfg)
        rows = []
        for a in grid:
            res = run_cell(inst, mix, label, algorithm, a, xref, cfg, keep_trace=False)
            rows.append({"alpha": a, "status": res.status, "iterations": res.iterations,
                         "final_dist": res.final_dist, "diverged_at": res.diverged_at})
        tables.append(SweepTable(label, algorithm, rows, critical_alpha(rows)))
    return tables


def format_sweep(tables):
    lines = []
    for tab in tables:
        lines.append(f"# {tab.label} ({tab.algorithm})")
        lines.append("alpha,status,iterations,final_dist,diverged_at")
        for r in tab.rows:
            lines.append(",".join([
                fileio.fmt(r["alpha"]), r["status"],
                "" if r["iterations"] is None else str(r["iterations"]),
                fileio.fmt(r["final_dist"]),
                "" if r["diverged_at"] is None else str(r["diverged_at"]),
            ]))
        crit = "none" if tab.critical is None else fileio.fmt(tab.critical)
        lines.append(f"# critical_alpha = {crit}")
    return "\n".join(lines) + "\n"
