import numpy as np

from kavguard.stats import ClassStats, FittedModel


def make_stats(class_id, mean, variance, floor=1e-12):
    mean = np.asarray(mean, dtype=np.float64)
    variance = np.asarray(variance, dtype=np.float64)
    return ClassStats(class_id=class_id, count=1, mean=mean,
                      variance=variance, variance_floor=floor)


def make_model(*stats_list, floor=1e-12):
    classes = {s.class_id: s for s in stats_list}
    dim = len(stats_list[0].mean)
    return FittedModel(dim=dim, classes=classes, variance_floor=floor)
