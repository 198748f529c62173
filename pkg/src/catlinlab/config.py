"""Experiment configuration, suite runner, and reproducibility plumbing.

Config files are plain ``key = value`` text (``#`` comments).  Keys:

    domain     = ball | egg2 | egg3 | egg2_perturbed | path/to/file.dom
    suites     = comma list of {lemma32, quasimetric, theorem12, fourpoint,
                 productlemma, visual, charts, normalline, balloracle}
    seed       = unsigned integer (default 0)
    out        = output directory (default audit_out)
    profile    = light | medium | full  (estimator profile, default medium)
    delta_min  = smallest collar height sampled (default 1e-4)
    n.<suite>  = sample-size override for one suite
    tol.<name> = tolerance override (see catlinlab.tolerances.DEFAULTS)

Everything is serializable and round-trips losslessly; the manifest records
a hash of the canonicalized config so runs are traceable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import audits, tolerances
from .domain import (
    DomainError,
    DomainSpec,
    domain_from_file,
    make_domain,
    registry_names,
    validate_domain,
)

__all__ = [
    "ExperimentConfig",
    "RunManifest",
    "load_domain",
    "parse_config",
    "config_hash",
    "run_suites",
    "SUITES",
    "VERSION",
]

VERSION = "0.1.0"

# default sample sizes per suite (desk scale)
_DEFAULT_N = {
    "charts": 50,
    "lemma32": 1000,
    "quasimetric": 10000,
    "theorem12": 500,
    "fourpoint": 10000,
    "productlemma": 100000,
    "visual": 100,
    "normalline": 100,
    "balloracle": 1000,
}


@dataclass
class ExperimentConfig:
    domain: str = "ball"
    suites: list = field(default_factory=list)
    seed: int = 0
    out: str = "audit_out"
    profile: str = "medium"
    delta_min: float = 1e-4
    n: dict = field(default_factory=dict)
    tol: dict = field(default_factory=dict)

    def n_for(self, suite: str) -> int:
        return int(self.n.get(suite, _DEFAULT_N[suite]))

    def canonical_text(self) -> str:
        lines = [
            f"delta_min = {self.delta_min!r}",
            f"domain = {self.domain}",
            f"out = {self.out}",
            f"profile = {self.profile}",
            f"seed = {self.seed}",
            f"suites = {','.join(self.suites)}",
        ]
        for k in sorted(self.n):
            lines.append(f"n.{k} = {int(self.n[k])}")
        for k in sorted(self.tol):
            lines.append(f"tol.{k} = {self.tol[k]!r}")
        return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(cfg.canonical_text().encode()).hexdigest()


def parse_config(path) -> ExperimentConfig:
    cfg = ExperimentConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key == "domain":
                cfg.domain = val
            elif key == "suites":
                cfg.suites = [s.strip() for s in val.split(",") if s.strip()]
            elif key == "seed":
                cfg.seed = int(val)
            elif key == "out":
                cfg.out = val
            elif key == "profile":
                cfg.profile = val
            elif key == "delta_min":
                cfg.delta_min = float(val)
            elif key.startswith("n."):
                cfg.n[key[2:]] = int(val)
            elif key.startswith("tol."):
                cfg.tol[key[4:]] = float(val)
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    for s in cfg.suites:
        if s not in SUITES:
            raise ValueError(f"unknown suite {s!r}; known: {sorted(SUITES)}")
    return cfg


def load_domain(name_or_path: str, validate: bool = True) -> DomainSpec:
    """Resolve a registry name or definition file and validate it."""
    if name_or_path in registry_names():
        dom = make_domain(name_or_path)
    else:
        p = Path(name_or_path)
        if not p.exists():
            raise DomainError(
                f"{name_or_path!r} is neither a registry domain "
                f"({', '.join(registry_names())}) nor a readable file"
            )
        dom = domain_from_file(p)
    if validate and "validated" not in dom._cache:
        dom._cache["validated"] = validate_domain(dom)
    return dom


# -- suite registry ---------------------------------------------------------------

def _suite_charts(dom, cfg):
    return [audits.chart_normal_form_audit(
        dom, n_centers=cfg.n_for("charts"), seed=cfg.seed, tol=cfg.tol)]


def _suite_lemma32(dom, cfg):
    return [
        audits.tau_scaling_audit(
            dom, n_samples=cfg.n_for("lemma32"), seed=cfg.seed, tol=cfg.tol),
        audits.engulfing_audit(
            dom, n_pairs=cfg.n_for("lemma32"), seed=cfg.seed, tol=cfg.tol),
    ]


def _suite_quasimetric(dom, cfg):
    return [
        audits.quasimetric_audit(
            dom, n_samples=cfg.n_for("quasimetric"), seed=cfg.seed,
            tol=cfg.tol),
        audits.dprime_oracle_audit(
            dom, n_pairs=max(cfg.n_for("quasimetric") // 10, 100),
            seed=cfg.seed, tol=cfg.tol),
    ]


def _suite_theorem12(dom, cfg):
    return [audits.estimate_theorem_constant(
        dom, n_pairs=cfg.n_for("theorem12"), delta_min=cfg.delta_min,
        seed=cfg.seed, profile=cfg.profile, tol=cfg.tol)]


def _suite_fourpoint(dom, cfg):
    return [
        audits.hyperbolicity_scan(
            dom, n_quadruples=cfg.n_for("fourpoint"),
            dist_mode="g-surrogate", seed=cfg.seed, tol=cfg.tol),
        audits.hyperbolicity_scan(
            dom, n_quadruples=cfg.n_for("fourpoint"), dist_mode="estimator",
            seed=cfg.seed, pool_size=40, profile=cfg.profile, tol=cfg.tol),
    ]


def _suite_productlemma(dom, cfg):
    return [audits.product_lemma_audit(
        dom, n_quadruples=cfg.n_for("productlemma"), seed=cfg.seed,
        tol=cfg.tol)]


def _suite_visual(dom, cfg):
    return [audits.visual_metric_audit(
        dom, n_pairs=cfg.n_for("visual"), seed=cfg.seed, tol=cfg.tol)]


def _suite_normalline(dom, cfg):
    return [audits.normal_line_audit(
        dom, n_pairs=cfg.n_for("normalline"), seed=cfg.seed, tol=cfg.tol)]


def _suite_balloracle(dom, cfg):
    return [audits.metric_oracle_audit(
        dom, n_samples=cfg.n_for("balloracle"), seed=cfg.seed,
        profile=cfg.profile, tol=cfg.tol)]


SUITES = {
    "charts": _suite_charts,
    "lemma32": _suite_lemma32,
    "quasimetric": _suite_quasimetric,
    "theorem12": _suite_theorem12,
    "fourpoint": _suite_fourpoint,
    "productlemma": _suite_productlemma,
    "visual": _suite_visual,
    "normalline": _suite_normalline,
    "balloracle": _suite_balloracle,
}


@dataclass
class RunManifest:
    version: str
    config_hash: str
    domain: str
    suites: list            # per-suite summaries
    timings: dict
    schema: int = 1

    def to_dict(self):
        return {
            "schema": self.schema,
            "version": self.version,
            "config_hash": self.config_hash,
            "domain": self.domain,
            "suites": self.suites,
            "timings": self.timings,
        }


def _write_csv(path: Path, rows: list):
    if not rows:
        return
    keys = sorted({k for r in rows for k in r})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt_cell(r.get(k)) for k in keys})


def _fmt_cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def run_suites(cfg: ExperimentConfig) -> RunManifest:
    """Execute the configured suites in order, write JSON reports and CSVs.

    Per-suite failures are recorded and the run continues; IO errors
    propagate.  Output is deterministic for a fixed config (timings live
    only in the manifest).
    """
    dom = load_domain(cfg.domain)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    summaries = []
    timings = {}
    for suite in cfg.suites:
        t0 = time.perf_counter()
        reports = SUITES[suite](dom, cfg)
        timings[suite] = round(time.perf_counter() - t0, 3)
        for rep in reports:
            stem = f"{suite}_{rep.name}" if rep.name != suite else suite
            with open(out / f"{stem}.json", "w", encoding="utf-8") as fh:
                json.dump(rep.to_dict(), fh, indent=1, sort_keys=True)
                fh.write("\n")
            if rep.rows:
                _write_csv(out / f"{stem}.csv", rep.rows)
            summaries.append({
                "suite": suite,
                "name": rep.name,
                "passed": bool(rep.passed),
                "constants": rep.constants,
            })
    manifest = RunManifest(
        version=VERSION,
        config_hash=config_hash(cfg),
        domain=cfg.domain,
        suites=summaries,
        timings=timings,
    )
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def exit_code(manifest: RunManifest) -> int:
    return 0 if all(s["passed"] for s in manifest.suites) else 1


def sanitize_floats(obj):
    """Recursive NaN/inf to string conversion for strict-JSON consumers."""
    if isinstance(obj, dict):
        return {k: sanitize_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize_floats(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj
