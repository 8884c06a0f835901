"""sketchpca: sketch-and-solve PCA with exact asymptotic predictions.

Build sketching operators (orthogonal, iid, sampling, Hadamard/Fourier,
CountSketch, leverage, OSNAP), predict where sketched spiked eigenvalues
and eigenvector overlaps land, and verify the predictions by reproducible
Monte Carlo or on real data via a pivotal ratio statistic.
"""

__version__ = "0.1.0"

from .errors import (
    DataError,
    DimensionError,
    DomainError,
    NumericalError,
    UsageError,
)
from .numerics import RngStream, SpectralTopK, fwht_rows, haar_orthonormal, top_k_spectrum
from .sketch import (
    METHODS,
    SketchOperator,
    SketchSpec,
    SpectralAtoms,
    apply_sketch,
    bucket_counts,
    build_sketch,
    operator_gram_esd,
)
from .theory import (
    AspectRatios,
    CovSummary,
    SpikePrediction,
    StieltjesSolution,
    classic_cos2_forward,
    classic_spike_forward,
    cov_summary,
    effective_xi_countsketch,
    predict_iid,
    predict_large_signal,
    predict_orthogonal_family,
    shrinker,
    solve_self_consistent,
    spike_inverse,
)
from .model import CovarianceModel, SpikedModelSpec, SpikedDataset, generate, make_sigma
from .harness import ExperimentConfig, ExperimentRecord, compare_methods, run, write_csv
from .fielddata import StandardizedMatrix, TStatResult, center_columns, load_matrix, standardize, t_statistic
