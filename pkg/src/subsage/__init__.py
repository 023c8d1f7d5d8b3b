"""Sub-SAGE feature importance with bootstrap confidence intervals for
tree-ensemble models, exact interventional SHAP/ERFC ranking, a synthetic
benchmark with analytic oracles, and a minimal boosted-tree trainer."""

from .bootstrap import (
    BootstrapConfig,
    BootstrapResult,
    bca_interval,
    paired_bootstrap,
    percentile_interval,
)
from .cond_expect import SubsetMask, cond_exp_batch, cond_exp_ensemble, cond_exp_tree
from .dataset import (
    Dataset,
    FeatureKind,
    ResampleIndex,
    concat_rows,
    empirical_prob_below,
    load_csv,
    resample,
    split,
    write_csv,
)
from .errors import InputError, NumericalError, SubsageError
from .estimator import (
    LossKind,
    SubsetFamily,
    SubSageEstimate,
    build_subset_family,
    delta_loss_cross_entropy,
    delta_loss_squared,
    subsage_estimate,
    subsage_stumps,
)
from .shap_erfc import ErfcScores, ShapMatrix, erfc, rank_features, shap_exact
from .synthetic import (
    SyntheticConfig,
    TrueMoments,
    generate_synthetic,
    linreg_population_subsage,
    linreg_sample_subsage,
    true_shap,
)
from .trainer import TrainConfig, train
from .tree_model import (
    Ensemble,
    Node,
    Tree,
    annotate_probabilities,
    branch,
    import_xgb_dump,
    leaf,
    load_model,
    predict_margin,
    trees_containing,
    write_model,
)

__version__ = "0.1.0"
