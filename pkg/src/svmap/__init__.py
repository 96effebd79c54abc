"""Iterative map/reduce training of binary SVMs with support-vector exchange."""

from .dataset import (
    DataError,
    Dataset,
    PartitionSet,
    Sample,
    binarize,
    kfold_split,
    minmax_scale,
    parse_csv,
    parse_sparse,
    serialize_sparse,
    stratified_partition,
)
from .distributed import (
    DistributedConfig,
    DistributedResult,
    GlobalSvStore,
    IterationRecord,
    map_task,
    reduce_merge,
    run_map_phase,
    select_hypothesis,
    train_distributed,
)
from .evaluation import CvReport, SpeedupReport, cross_validate, speedup_benchmark
from .kernel import KernelSpec, gram_row, kernel_eval
from .metrics import accuracy, empirical_risk, hinge_loss
from .solver import (
    SvmModel,
    TrainConfig,
    TrainingError,
    decision_value,
    extract_svs,
    oracle_solve,
    predict,
    read_model,
    train_svm,
    write_model,
)

__version__ = "0.1.0"
