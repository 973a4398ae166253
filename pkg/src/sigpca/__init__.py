"""Estimate how many principal components of a data matrix are
statistically significant.

The pipeline fits a variational Bayesian PCA to the (possibly partially
observed) matrix, picks the component count with the best posterior-mean
reconstruction, samples null spectra from the elementwise posterior of
the reconstruction, and counts the leading eigenvalues that exceed their
null distribution under a sequential Holm-Bonferroni test.
"""

from .errors import (
    ConfigError,
    DataError,
    LoadError,
    NumericalError,
    ShapeError,
    SigpcaError,
)
from .ingest import (
    ColumnSchema,
    Dataset,
    center_scale,
    drop_sparse_columns,
    load_csv,
    one_hot,
    preprocess,
    read_schema,
    write_csv,
    write_schema,
)
from .linalg import MaskedMatrix, frobenius_sq_masked, sym_eigvals
from .pipeline import (
    AnalysisOptions,
    AnalysisResult,
    ValidationRun,
    analyze_dataset,
    analyze_matrix,
    analyze_numeric,
    build_report,
    format_p,
    rank_table_to_csv,
    report_to_json,
    run_validation,
    summarize_validation,
    validation_summary_to_csv,
)
from .rng import RngStream, derive_seed, standard_normal
from .significance import (
    NullSpectra,
    SigTestConfig,
    Spectrum,
    SpectrumTestResult,
    count_significant,
    holm_bonferroni,
    normalized_eigenvalues,
    reconstruction_spectrum,
    sample_null_spectra,
)
from .synthetic import SyntheticSpec, draw_factors, generate, scenario_grid
from .vbpca import (
    RankScan,
    Reconstruction,
    VbpcaConfig,
    VbpcaModel,
    fit,
    reconstruct,
    select_n_components,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisOptions",
    "AnalysisResult",
    "ColumnSchema",
    "ConfigError",
    "DataError",
    "Dataset",
    "LoadError",
    "MaskedMatrix",
    "NullSpectra",
    "NumericalError",
    "RankScan",
    "Reconstruction",
    "RngStream",
    "ShapeError",
    "SigTestConfig",
    "SigpcaError",
    "Spectrum",
    "SpectrumTestResult",
    "SyntheticSpec",
    "ValidationRun",
    "VbpcaConfig",
    "VbpcaModel",
    "analyze_dataset",
    "analyze_matrix",
    "analyze_numeric",
    "build_report",
    "format_p",
    "center_scale",
    "count_significant",
    "derive_seed",
    "draw_factors",
    "drop_sparse_columns",
    "fit",
    "frobenius_sq_masked",
    "generate",
    "holm_bonferroni",
    "load_csv",
    "normalized_eigenvalues",
    "one_hot",
    "preprocess",
    "rank_table_to_csv",
    "read_schema",
    "reconstruct",
    "reconstruction_spectrum",
    "report_to_json",
    "run_validation",
    "sample_null_spectra",
    "scenario_grid",
    "select_n_components",
    "standard_normal",
    "summarize_validation",
    "sym_eigvals",
    "validation_summary_to_csv",
    "write_csv",
    "write_schema",
    "__version__",
]
