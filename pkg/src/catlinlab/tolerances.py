"""Central numeric tolerances and audit thresholds.

Every audit and acceptance gate reads its thresholds from here (optionally
overridden by an experiment config), so tuning lives in exactly one place.
"""

DEFAULTS = {
    # stability: relative growth of a fitted max-constant when the sample
    # doubles (doubled samples are supersets, so constants never shrink)
    "stability_drift": 0.10,
    # chart normal form
    "chart_pure_tol": 1e-10,        # pure-term coefficients up to degree m
    "chart_rew1_tol": 1e-12,        # Re w1 coefficient distance from 1
    "chart_roundtrip_tol": 1e-8,    # |rho(Phi(z)) - r(z)| at near points
    # tangential radius scaling: exact inequality slack
    "tau_scaling_slack": 1e-12,
    # closed-form entry scale vs bisection oracle (relative)
    "dprime_oracle_rel": 1e-8,
    # power quasi-triangle: chain ratio bound that must hold for some exponent
    "power_triangle_ratio": 2.0,
    # fiber distance: estimator within this relative error of |log ratio|
    "normal_line_rel": 0.05,
    # two-sided estimate: per-decile max residual slope against log(1/delta)
    "residual_slope_max": 0.05,
    # product lemma: fitted K <= 4 * C1^4 * (1 + slack)
    "product_lemma_slack": 0.01,
    # visual metric: stabilized band max/min bound and per-step Cauchy bound
    "visual_band_max": 1e3,
    "visual_stabilize_rel": 0.20,
}


def resolve(overrides=None) -> dict:
    tol = dict(DEFAULTS)
    if overrides:
        unknown = set(overrides) - set(DEFAULTS)
        if unknown:
            raise KeyError(f"unknown tolerance keys: {sorted(unknown)}")
        tol.update(overrides)
    return tol
