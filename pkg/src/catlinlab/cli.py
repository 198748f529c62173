"""Command-line interface.

Subcommands: normalize (chart summary), pseudodist (D and g), metric
(pointwise metric value), dist (distance estimate with certificate), audit
(one suite), run (full config).  All output is JSON on stdout.

Exit codes: 0 all checks passed, 1 a threshold failed, 2 configuration or
IO error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import audits, config
from .charts import get_chart, g_function, point_type, pseudodistance_D
from .domain import DomainError, signed_distance_ex
from .estimate import distance_estimate
from .metric import catlin_metric


def _parse_point(text: str) -> np.ndarray:
    vals = [float(t) for t in text.replace(",", " ").split()]
    if len(vals) != 4:
        raise ValueError(
            f"expected 4 reals x1r,x1i,x2r,x2i, got {len(vals)} in {text!r}"
        )
    return np.array([vals[0] + 1j * vals[1], vals[2] + 1j * vals[3]])


def _emit(payload: dict) -> None:
    json.dump(config.sanitize_floats(payload), sys.stdout, indent=1,
              sort_keys=True)
    sys.stdout.write("\n")


def _cmd_normalize(args) -> int:
    dom = config.load_domain(args.domain)
    c = get_chart(dom, _parse_point(args.at))
    _emit({
        "domain": dom.name,
        "center": [c.center[0].real, c.center[0].imag,
                   c.center[1].real, c.center[1].imag],
        "swap": c.swap,
        "a": [[v.real, v.imag] for v in c.a],
        "w2_coeffs": [[v.real, v.imag] for v in c.c],
        "shear_coeffs": [[v.real, v.imag] for v in c.f_coeffs],
        "P_norms": {str(k): v for k, v in sorted(c.P_norms.items())},
        "point_type": point_type(c),
        "re_w1_coeff": c.re_w1_coeff,
        "pure_defect": c.pure_defect,
        "r_center": c.r_center,
    })
    return 0


def _cmd_pseudodist(args) -> int:
    dom = config.load_domain(args.domain)
    x = _parse_point(getattr(args, "from"))
    y = _parse_point(args.to)
    D = pseudodistance_D(dom, x, y)
    _emit({
        "domain": dom.name,
        "D": D.value,
        "branch": D.branch,
        "chart_valid": D.chart_valid,
        "g": g_function(dom, x, y, D=D.value),
    })
    return 0


def _cmd_metric(args) -> int:
    dom = config.load_domain(args.domain)
    z = _parse_point(args.at)
    X = _parse_point(args.dir)
    value = catlin_metric(dom, z, X)
    sd, prov = signed_distance_ex(dom, z)
    _emit({
        "domain": dom.name,
        "value": value,
        "delta": -sd,
        "delta_provenance": prov,
    })
    return 0


def _cmd_dist(args) -> int:
    dom = config.load_domain(args.domain)
    x = _parse_point(getattr(args, "from"))
    y = _parse_point(args.to)
    if args.method == "all":
        out = {}
        for prof in ("light", "medium", "full"):
            est = distance_estimate(dom, x, y, profile=prof)
            out[prof] = est.to_dict()
        _emit({"domain": dom.name, "estimates": out})
    else:
        est = distance_estimate(dom, x, y, profile=args.profile)
        _emit({"domain": dom.name, **est.to_dict()})
    return 0


def _cmd_audit(args) -> int:
    cfg = config.ExperimentConfig(
        domain=args.domain, suites=[args.suite], seed=args.seed,
        out=args.out, profile=args.profile,
    )
    if args.n is not None:
        cfg.n[args.suite] = args.n
    manifest = config.run_suites(cfg)
    _emit(manifest.to_dict())
    if args.csv:
        sys.stderr.write(f"per-sample rows in {cfg.out}/*.csv\n")
    return config.exit_code(manifest)


def _cmd_run(args) -> int:
    cfg = config.parse_config(args.config)
    manifest = config.run_suites(cfg)
    _emit(manifest.to_dict())
    return config.exit_code(manifest)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="catlinlab",
        description="Boundary charts, pseudodistances, Catlin-type metrics "
                    "and hyperbolicity audits on finite-type domains in C^2",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pn = sub.add_parser("normalize", help="chart summary at a point")
    pn.add_argument("--domain", required=True)
    pn.add_argument("--at", required=True, metavar="x1r,x1i,x2r,x2i")
    pn.set_defaults(fn=_cmd_normalize)

    pp = sub.add_parser("pseudodist", help="pseudodistance D and g")
    pp.add_argument("--domain", required=True)
    pp.add_argument("--from", required=True, metavar="PT")
    pp.add_argument("--to", required=True, metavar="PT")
    pp.set_defaults(fn=_cmd_pseudodist)

    pm = sub.add_parser("metric", help="metric value at a point/direction")
    pm.add_argument("--domain", required=True)
    pm.add_argument("--at", required=True, metavar="PT")
    pm.add_argument("--dir", required=True, metavar="VEC")
    pm.set_defaults(fn=_cmd_metric)

    pd = sub.add_parser("dist", help="distance estimate with certificate")
    pd.add_argument("--domain", required=True)
    pd.add_argument("--from", required=True, metavar="PT")
    pd.add_argument("--to", required=True, metavar="PT")
    pd.add_argument("--profile", default="full",
                    choices=["light", "medium", "full"])
    pd.add_argument("--method", default=None, choices=["all"])
    pd.set_defaults(fn=_cmd_dist)

    pa = sub.add_parser("audit", help="run one audit suite")
    pa.add_argument("--domain", required=True)
    pa.add_argument("--suite", required=True, choices=sorted(config.SUITES))
    pa.add_argument("--seed", type=int, default=0)
    pa.add_argument("--n", type=int, default=None)
    pa.add_argument("--out", default="audit_out")
    pa.add_argument("--profile", default="medium",
                    choices=["light", "medium", "full"])
    pa.add_argument("--csv", default=None)
    pa.set_defaults(fn=_cmd_audit)

    pr = sub.add_parser("run", help="run a full experiment config")
    pr.add_argument("--config", required=True)
    pr.set_defaults(fn=_cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (DomainError, ValueError, OSError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
