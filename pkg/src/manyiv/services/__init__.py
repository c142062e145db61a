from manyiv.services.confidence_sets import invert, invert_test
from manyiv.services.estimators import (
    ESTIMATORS,
    beta1_ijive,
    beta2_naive,
    beta3_zero_diag,
    concentration,
    estimate,
    jive1,
    jive2,
    jive_se,
    tsls,
    wald_interval,
)
from manyiv.services.power import power_curve, theoretical_power
from manyiv.services.pretest import DegenerateUpsilonError, first_stage_f, pretest_ftilde
from manyiv.services.robust_tests import ar_loo, ar_naive, ar_w, build_test, lm_loo
from manyiv.services.variance import (
    phi1,
    phi2,
    phi3,
    phi_perp,
    phi_w,
    psi1,
    psi2,
    true_phi,
    true_psi,
    upsilon,
)
from manyiv.services.zero_diagonal import check_balanced_design, compute_theta

__all__ = [
    "DegenerateUpsilonError",
    "ESTIMATORS",
    "ar_loo",
    "ar_naive",
    "ar_w",
    "beta1_ijive",
    "beta2_naive",
    "beta3_zero_diag",
    "build_test",
    "check_balanced_design",
    "compute_theta",
    "concentration",
    "estimate",
    "first_stage_f",
    "invert",
    "invert_test",
    "jive1",
    "jive2",
    "jive_se",
    "lm_loo",
    "phi1",
    "phi2",
    "phi3",
    "phi_perp",
    "phi_w",
    "power_curve",
    "pretest_ftilde",
    "psi1",
    "psi2",
    "theoretical_power",
    "true_phi",
    "true_psi",
    "tsls",
    "upsilon",
    "wald_interval",
]
