"""Differentially private conditional-independence tests.

Two tests of ``X independent of Y given Z`` for real X, Y and vector Z:

* :func:`priv_gcm_test` adds Laplace noise to the products of kernel ridge
  regression residuals and reports a Gaussian p-value.
* :func:`priv_crt_test` ranks the observed statistic among resampled copies
  (model-X setting) with Report Noisy Max.

Non-private baselines, the regression machinery, a synthetic data model and a
Monte Carlo harness are included.
"""

from .crt import CrtResult, crt_statistic, crt_test, priv_crt_test
from .dataset import BoundedDataset, Dataset, infer_bound, load_csv, rescale
from .gcm import FitConfig, GcmResult, gcm_statistic, gcm_test, power_shift, priv_gcm_test
from .krr import KernelConfig, KrrModel, krr_fit, krr_predict, sensitivity_crt, sensitivity_gcm
from .mechanisms import PrivacyParams, laplace_mechanism, private_rank, report_noisy_max
from .synth import GroundTruth, SynthParams, generate, make_conditional_model

__all__ = [
    "BoundedDataset",
    "CrtResult",
    "Dataset",
    "FitConfig",
    "GcmResult",
    "GroundTruth",
    "KernelConfig",
    "KrrModel",
    "PrivacyParams",
    "SynthParams",
    "crt_statistic",
    "crt_test",
    "gcm_statistic",
    "gcm_test",
    "generate",
    "infer_bound",
    "krr_fit",
    "krr_predict",
    "laplace_mechanism",
    "load_csv",
    "make_conditional_model",
    "power_shift",
    "priv_crt_test",
    "priv_gcm_test",
    "private_rank",
    "report_noisy_max",
    "rescale",
    "sensitivity_crt",
    "sensitivity_gcm",
]
