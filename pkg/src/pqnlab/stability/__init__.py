from .expected import baird_runs, expected_td_train
from .jacobian import (JacobianReport, curvature_matrix, expected_td_vector, max_real_eig, max_real_eig_schur,
                       td_error_norm, td_jacobian)
from .probes import (OFF_POLICY_GUARD_C, ProbeResult, batchnorm_myopia_probe, hessian_norm, hvp, off_policy_probe,
                     off_policy_statistic, off_policy_sup, theorem2_sweep, theorem3_sweep)

__all__ = ["baird_runs", "expected_td_train", "JacobianReport", "curvature_matrix", "expected_td_vector",
           "max_real_eig", "max_real_eig_schur", "td_error_norm", "td_jacobian", "OFF_POLICY_GUARD_C",
           "ProbeResult", "batchnorm_myopia_probe", "hessian_norm", "hvp", "off_policy_probe",
           "off_policy_statistic", "off_policy_sup", "theorem2_sweep", "theorem3_sweep"]
