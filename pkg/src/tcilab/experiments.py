"""Config-driven verification campaigns.

A run simulates the coupled pair ``(x, xv)`` for the configured problem and
perturbation, estimates the coupling cost, the relative entropy and
(optionally) the empirical optimal-transport value between the two marginals,
and renders one :class:`~tcilab.bounds.BoundReport` per requested inequality.
Scenarios with a ``yosida`` section repeat this for every ``n`` of the ladder
with the drift replaced by the Yosida drift ``b_n``; the same seed is used on
every rung so that rung-to-rung differences are not swamped by Monte Carlo
noise.

Everything except the ``timing`` block is a deterministic function of the
config and the package version.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .bounds import DEFAULT_C_DAVIS, BoundParams, reports_to_csv, verify_inequality
from .catalog import build_problem, operator_from_spec, perturbation_form
from .config import ExperimentConfig
from .errors import TcilabError
from .girsanov import coupling_cost, entropy_estimate, simulate_coupled
from .monotone import ConcaveLogPotentialGradient, check_problem_dissipativity, min_gap
from .sde import PathEnsemble, TimeGrid, check_lipschitz
from .storage import save_coupled
from .transport import empirical_w2_exact, empirical_w2_sinkhorn, w2_confidence_interval

__all__ = ["ReportBundle", "ExperimentError", "run_experiment", "emit_reports", "exit_code"]

EXIT_OK, EXIT_ERROR, EXIT_VIOLATED, EXIT_INCONCLUSIVE = 0, 1, 2, 3


@dataclass
class ReportBundle:
    config_hash: str
    scenario: str
    seed: int
    environment: dict
    rungs: list = field(default_factory=list)
    ladder: Optional[dict] = None
    status: str = "ok"
    error: Optional[str] = None
    timing: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict, repr=False)

    @property
    def reports(self) -> list:
        return [dict(r, n=rung["n"]) for rung in self.rungs for r in rung["reports"]]

    def to_record(self, timing: bool = True) -> dict:
        rec = {"config_hash": self.config_hash, "scenario": self.scenario, "seed": self.seed,
               "environment": self.environment, "status": self.status, "error": self.error,
               "rungs": self.rungs, "ladder": self.ladder, "reports": self.reports}
        if timing:
            rec["timing"] = self.timing
        return rec

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(_clean(self.to_record(timing)), sort_keys=True, indent=2)

    def csv_text(self) -> str:
        rows = []
        for rung in self.rungs:
            for r in rung["reports"]:
                row = {"tag": r["tag"], "K": r["params"]["K"], "c": r["params"]["c_davis"],
                       "sigma_sup": r["params"]["sigma_sup"], "bracket": r["params"]["bracket"],
                       "H": r["H"], "H_stderr": r["H_stderr"], "lhs": r["lhs"],
                       "lhs_stderr": r["lhs_stderr"], "rhs": r["rhs"], "margin": r["margin"],
                       "verdict": r["verdict"], "n": rung["n"]}
                rows.append(row)
        return reports_to_csv(rows)


class ExperimentError(TcilabError, RuntimeError):
    """A run failed; ``bundle`` holds the partial results with status ``failed``."""

    def __init__(self, message, bundle):
        super().__init__(message)
        self.bundle = bundle


def _clean(obj):
    # JSON has no inf/nan; render them as strings so reports stay parseable
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _bound_params(tag, problem, bounds_cfg):
    if "K" in bounds_cfg:
        K = float(bounds_cfg["K"])
    elif tag == "thm1":
        # one K for drift and diffusion
        K = max(problem.lipschitz_K, problem.b_lipschitz)
    else:
        K = problem.lipschitz_K
    sigma_sup = bounds_cfg.get("sigma_sup", problem.sigma_sup)
    a = bounds_cfg.get("a") if tag == "prop2" else None
    return BoundParams(K=K, sigma_sup=sigma_sup, c_davis=float(bounds_cfg.get("c_davis", DEFAULT_C_DAVIS)),
                       a=a, bracket=bounds_cfg.get("bracket", "nested"))


def _mean_se(a):
    a = np.asarray(a, dtype=float)
    if a.size < 2:
        return float(a.mean()), 0.0
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def _run_rung(cfg: ExperimentConfig, n, op, keep_paths):
    t0 = time.perf_counter()
    doc = cfg.doc
    grid = TimeGrid(doc["grid"]["horizon"], doc["grid"]["n_steps"])
    problem = build_problem(doc["problem"], None if n is None else (op, n))
    pert = perturbation_form(doc.get("perturbation", {"form": "zero"}), problem.dimension)
    coupled = simulate_coupled(problem, pert, grid, cfg.n_paths, cfg.seed)
    cc = coupling_cost(coupled)
    H = entropy_estimate(coupled)
    lr = np.exp(coupled.log_density)
    lr_mean, lr_se = _mean_se(lr)
    est = {
        "coupling_cost": cc.value, "coupling_stderr": cc.stderr, "n_pairs": cc.n,
        "entropy": H.value, "entropy_stderr": H.stderr,
        "density_mean": lr_mean, "density_stderr": lr_se,
        "truncated_pairs": int(coupled.truncated.sum()),
    }
    if isinstance(op, ConcaveLogPotentialGradient) or (op is not None and getattr(op, "kind", "") == "ordered"):
        g, g_se = _mean_se(min_gap(coupled.x))
        est["min_gap_mean"], est["min_gap_stderr"] = g, g_se

    ot = cfg.section("ot", {"solver": "none"})
    solver = ot.get("solver", "exact")
    if solver != "none":
        k = min(cfg.n_paths, int(ot.get("max_pairs", 256)))
        mu, nu = coupled.marginals()
        mu, nu = mu.subset(np.arange(k)), nu.subset(np.arange(k))
        if solver == "exact":
            res = empirical_w2_exact(mu, nu, cap=int(ot.get("cap", 4096 * 4096)))
        else:
            res = empirical_w2_sinkhorn(mu, nu, float(ot.get("epsilon", 1e-2)),
                                        int(ot.get("max_iters", 10000)), float(ot.get("tol", 1e-9)))
        est["ot"] = res.to_record()
        est["ot"]["n_paths"] = k
        est["ot_coupling_cost"] = float(coupling_cost(coupled.subset(np.arange(k))).value)
        nb = int(ot.get("bootstrap", 0))
        if nb:
            lo, hi = w2_confidence_interval(mu, nu, nb, cfg.seed)
            est["ot"]["ci"] = [lo, hi]

    checks = cfg.section("checks")
    if checks:
        probes = min(int(checks.get("probes", 32)), cfg.n_paths)
        ens = PathEnsemble(grid, coupled.x[:probes])
        audit = {}
        if checks.get("lipschitz", True):
            rep = check_lipschitz(problem, ens)
            audit["lipschitz"] = {"worst_quotient": rep.worst_quotient, "component": rep.component,
                                  "flagged": rep.flagged, "declared": rep.declared}
        if checks.get("dissipativity", problem.dissipative):
            rep = check_problem_dissipativity(problem, ens)
            audit["dissipativity"] = {"max_inner": rep.max_inner, "flagged": rep.flagged}
        est["audit"] = audit

    bounds_cfg = cfg.section("bounds")
    reports = []
    for tag in cfg.inequalities:
        params = _bound_params(tag, problem, bounds_cfg)
        rep = verify_inequality(tag, (cc.value, cc.stderr), (H.value, H.stderr), params)
        reports.append(rep.to_record())
    rung = {"n": n, "estimates": est, "reports": reports}
    return rung, time.perf_counter() - t0, (coupled if keep_paths else None)


def _ladder_summary(rungs):
    ns = [r["n"] for r in rungs]
    out = {"n": ns}
    for key in ("coupling_cost", "min_gap_mean", "entropy"):
        vals = [r["estimates"].get(key) for r in rungs]
        if any(v is None for v in vals):
            continue
        diffs = [abs(b - a) for a, b in zip(vals, vals[1:])]
        out[key] = vals
        out[key + "_diffs"] = diffs
        out[key + "_final_rel_diff"] = diffs[-1] / abs(vals[-1]) if diffs and vals[-1] != 0 else None
    return out


def run_experiment(config: ExperimentConfig, threads: int = 1, out_dir=None,
                   formats=("json", "csv"), keep_paths: bool = False) -> ReportBundle:
    """Run every rung of the config and assemble a :class:`ReportBundle`.

    With ``out_dir`` the bundle is written via :func:`emit_reports`, also when
    a rung fails (status ``failed``); the failure is then re-raised as
    :class:`ExperimentError`.
    """
    t0 = time.perf_counter()
    bundle = ReportBundle(
        config_hash=config.hash, scenario=config.scenario, seed=config.seed,
        environment={"package": "tcilab", "version": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__})
    ladder = config.ladder
    op = None
    if ladder is not None:
        op = operator_from_spec(config.doc["yosida"]["operator"], int(config.doc["problem"]["dimension"]))
    rungs_n = ladder if ladder is not None else [None]
    keep = keep_paths or "paths" in formats
    timings = []
    failure = None
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        futures = [pool.submit(_run_rung, config, n, op, keep) for n in rungs_n]
        for n, fut in zip(rungs_n, futures):
            try:
                rung, dt, coupled = fut.result()
            except Exception as e:  # surfaced below with scenario context
                failure = failure or (n, e)
                continue
            if failure is not None:
                continue
            bundle.rungs.append(rung)
            timings.append({"n": n, "seconds": dt})
            if coupled is not None:
                bundle.artifacts["coupled" if n is None else "coupled_n%g" % n] = coupled
    if ladder is not None and bundle.rungs:
        bundle.ladder = _ladder_summary(bundle.rungs)
    bundle.timing = {"total_seconds": time.perf_counter() - t0, "rungs": timings}
    if failure is not None:
        n, e = failure
        bundle.status = "failed"
        bundle.error = "scenario %s%s: %s: %s" % (
            config.scenario, "" if n is None else " (n=%g)" % n, type(e).__name__, e)
    if out_dir is not None:
        emit_reports(bundle, out_dir, formats)
    if failure is not None:
        raise ExperimentError(bundle.error, bundle) from failure[1]
    return bundle


def emit_reports(bundle: ReportBundle, out_dir, formats=("json", "csv")) -> list:
    """Write ``report.json``, ``reports.csv`` and optional ``paths*.npz``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = out / "report.json"
        p.write_text(bundle.to_json() + "\n", encoding="utf-8")
        written.append(p)
    if "csv" in formats:
        p = out / "reports.csv"
        p.write_text(bundle.csv_text(), encoding="utf-8")
        written.append(p)
    if "paths" in formats:
        for name, coupled in sorted(bundle.artifacts.items()):
            written.append(save_coupled(out / ("paths_%s.npz" % name), coupled))
    return written


def exit_code(bundle: ReportBundle) -> int:
    if bundle.status != "ok":
        return EXIT_ERROR
    verdicts = {r["verdict"] for r in bundle.reports}
    if "violated" in verdicts:
        return EXIT_VIOLATED
    if "inconclusive" in verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_OK
