"""Post-hoc uncertainty layer for pretrained classifiers.

Fits per-class diagonal Gaussians over network activation vectors in one
streaming pass, labels test vectors Certain / Uncertain / Outlier via a
hierarchical chi-square rule, quantifies class-distribution overlap, and
evaluates detection quality. File-driven: nothing here depends on any
model runtime.
"""

from .decision import (Category, DecisionConfig, Orientation, Top2Source,
                       Verdict, decide, decide_batch, read_verdicts,
                       select_top2, write_verdicts)
from .errors import FormatError, KavError, UsageError
from .evaluate import (RocCurve, SweepReport, accuracy, auroc, outlier_rate,
                       sweep_report)
from .geometry import (JointStats, OverlapMatrix, bhattacharyya_diag,
                       joint_distance, joint_stats, mahalanobis_diag,
                       outlier_threshold, overlap_matrix, standardize,
                       write_overlap_csv)
from .stats import (ClassStats, FittedModel, MemberStore, MomentAccumulator,
                    accumulate, build_member_store, finalize, fit,
                    load_members, load_stats, merge, merge_models,
                    retrieve_members, save_members, save_stats)
from .store import (UNLABELED, KavDataset, KavReader, KavRecord, ScoreRow,
                    read_kav, read_kav_csv, read_scores, write_kav,
                    write_kav_csv, write_scores)

__version__ = "0.1.0"

__all__ = [
    "Category", "ClassStats", "DecisionConfig", "FittedModel", "FormatError",
    "JointStats", "KavDataset", "KavError", "KavReader", "KavRecord",
    "MemberStore", "MomentAccumulator", "Orientation", "OverlapMatrix",
    "RocCurve", "ScoreRow", "SweepReport", "Top2Source", "UNLABELED",
    "UsageError", "Verdict", "accumulate", "accuracy", "auroc",
    "bhattacharyya_diag", "build_member_store", "decide", "decide_batch",
    "finalize", "fit", "joint_distance", "joint_stats", "load_members",
    "load_stats", "mahalanobis_diag", "merge", "merge_models",
    "outlier_rate", "outlier_threshold", "overlap_matrix", "read_kav",
    "read_kav_csv", "read_scores", "read_verdicts", "retrieve_members",
    "save_members", "save_stats", "select_top2", "standardize",
    "sweep_report", "write_kav", "write_kav_csv", "write_overlap_csv",
    "write_scores", "write_verdicts",
]
