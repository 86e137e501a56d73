"""tnzip: weight-matrix compression onto 2-D grid tensor networks.

The pipeline: factor a matrix's dimensions onto a rectangular grid of sites
(`gridspec`), decompose it into an open-boundary lattice of local tensors
(`decompose` / `lattice`), evaluate and coarse-grain networks (`trg`), wrap a
lattice as a trainable linear layer (`layer`), and run the desk-scale
compress-then-heal experiment (`toymodel`).  `bench` holds baselines and
storage accounting, `io`/`cli` persistence and the command line, and
`estimators` the scikit-learn facade.
"""

__version__ = "0.1.0"

from .bench import (
    CompressionReport,
    CutEntropy,
    entanglement_profile,
    quant_baseline,
    solve_mixed_fraction,
    svd_baseline,
    table1_accounting,
)
from .decompose import DecomposeReport, als_refine, decompose_weight
from .estimators import LatticeCompressor, QuantCompressor, SvdCompressor
from .gridspec import (
    GridSpec,
    factor_dimension,
    grid_tensor_to_weight,
    make_grid_spec,
    weight_to_grid_tensor,
)
from .io import load_lattice, load_tensor, save_lattice, save_tensor
from .lattice import (
    DEFAULT_ORACLE_BUDGET,
    PepsLattice,
    SiteTensor,
    exact_contract_to_dense,
    lattice_matrix,
    parameter_count,
    random_lattice,
    validate_lattice,
)
from .layer import TensorizedLinear, finite_diff_check, site_gradients
from .tensor_ops import SvdResult, contract, dematricize, matricize, permute, reshape, svd_truncate
from .toymodel import (
    ToyConfig,
    TrainReport,
    build_toy_model,
    choose_chi_for_ratio,
    compress_and_heal,
    evaluate,
    train,
)
from .trg import (
    TrgNetwork,
    TrgValue,
    contract_adjoint,
    contract_forward,
    exact_network_value,
    random_network,
    track_intermediates,
    trg_contract,
    trg_step,
)

__all__ = [
    "__version__",
    "CompressionReport",
    "CutEntropy",
    "DecomposeReport",
    "DEFAULT_ORACLE_BUDGET",
    "GridSpec",
    "LatticeCompressor",
    "PepsLattice",
    "QuantCompressor",
    "SiteTensor",
    "SvdCompressor",
    "SvdResult",
    "TensorizedLinear",
    "ToyConfig",
    "TrainReport",
    "TrgNetwork",
    "TrgValue",
    "als_refine",
    "build_toy_model",
    "choose_chi_for_ratio",
    "compress_and_heal",
    "contract",
    "contract_adjoint",
    "contract_forward",
    "decompose_weight",
    "dematricize",
    "entanglement_profile",
    "evaluate",
    "exact_contract_to_dense",
    "exact_network_value",
    "factor_dimension",
    "finite_diff_check",
    "grid_tensor_to_weight",
    "lattice_matrix",
    "load_lattice",
    "load_tensor",
    "make_grid_spec",
    "matricize",
    "parameter_count",
    "permute",
    "quant_baseline",
    "random_lattice",
    "random_network",
    "reshape",
    "save_lattice",
    "save_tensor",
    "site_gradients",
    "solve_mixed_fraction",
    "svd_baseline",
    "svd_truncate",
    "table1_accounting",
    "track_intermediates",
    "train",
    "trg_contract",
    "trg_step",
    "validate_lattice",
    "weight_to_grid_tensor",
]
