"""LPV embedding of control-affine nonlinear systems.

The pipeline fits sparse polynomial approximants to every entry of F and
G, factorises the polynomial parts and the residuals into rows that
multiply the state, and compresses the residual signals with PCA into a
few scheduling variables. See :func:`lpvembed.pipeline.embed`.
"""
from .exprlang import ParseError, parse_expr, evaluate
from .sysmodel import NlSystem, load_system, parse_system, sample_box, sample_domain, eval_system
from .polyreg import PolyModel, make_basis, fit_lasso, approximate_system
from .factor import factorize_system
from .schedpca import normalize_rows, pca_fit, select_scheduling, vm_fraction
from .lpvcore import LpvModel, eval_lpv, lpv_matrices, export_model, import_model
from .pipeline import RunConfig, embed, prepare

__version__ = "0.1.0"

__all__ = [
    "ParseError", "parse_expr", "evaluate",
    "NlSystem", "load_system", "parse_system", "sample_box", "sample_domain", "eval_system",
    "PolyModel", "make_basis", "fit_lasso", "approximate_system",
    "factorize_system",
    "normalize_rows", "pca_fit", "select_scheduling", "vm_fraction",
    "LpvModel", "eval_lpv", "lpv_matrices", "export_model", "import_model",
    "RunConfig", "embed", "prepare",
]
