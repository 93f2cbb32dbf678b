"""Lipschitz transport maps along the Ornstein-Uhlenbeck heat flow."""

from ._lipmap import (
    Flow,
    LipmapError,
    Potential,
    Semigroup,
    bump,
    caffarelli_reduction,
    closed_form_integrals,
    empirical_lipschitz,
    gaussian,
    km_lipschitz,
    ks_distance,
    lemma5_lambda,
    lemma6_lambda,
    linear_tail,
    lipschitz_bound,
    lipschitz_regularize,
    mollify,
    monotone_rearrangement,
    normalize,
    run_job,
    sharpness,
    sharpness_check,
    switch_time,
    tabulated,
    vt_check,
    vt_counterexample,
)

__all__ = [
    "Flow",
    "LipmapError",
    "Potential",
    "Semigroup",
    "bump",
    "caffarelli_reduction",
    "closed_form_integrals",
    "empirical_lipschitz",
    "gaussian",
    "km_lipschitz",
    "ks_distance",
    "lemma5_lambda",
    "lemma6_lambda",
    "linear_tail",
    "lipschitz_bound",
    "lipschitz_regularize",
    "mollify",
    "monotone_rearrangement",
    "normalize",
    "run_job",
    "sharpness",
    "sharpness_check",
    "switch_time",
    "tabulated",
    "vt_check",
    "vt_counterexample",
]
