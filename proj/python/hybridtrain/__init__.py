"""Desk-scale reproduction of the hybrid sync/async training study.

Thin re-export of the pybind11 core module `_hybridtrain`.
"""

try:
    from . import _hybridtrain  # installed layout: extension inside the package
except ImportError:
    import _hybridtrain  # build-tree layout: extension on PYTHONPATH

import sys as _sys

_sys.modules.setdefault("_hybridtrain", _hybridtrain)

from _hybridtrain import (  # noqa: F401,E402
    BoxPrediction,
    BoxTarget,
    ClimateDataset,
    ClusterPlan,
    HepDataset,
    Network,
    RunLog,
    RunRecord,
    build_climate_mini,
    build_hep_mini,
    cli_main,
    gen_climate,
    gen_hep,
    hep_forward_logits,
    infer_boxes,
    load_hep_dataset,
    load_runlog_csv,
    model_flops,
    peak_sustained,
    plan_cluster,
    roc_tpr_at_fpr,
    run_reference_sync,
    run_training,
    save_hep_dataset,
    save_runlog_csv,
    split_indices,
)

__all__ = [n for n in dir() if not n.startswith("_")]
