from .metrics import CEILING_DB, FLOOR_DB, sdr, si_sdr, si_sdr_loss
from .report import MetricReport, get_metric, known_metrics, register_metric
from .evaluate import ORACLE, evaluate

__all__ = [
    "CEILING_DB", "FLOOR_DB", "sdr", "si_sdr", "si_sdr_loss",
    "MetricReport", "get_metric", "known_metrics", "register_metric",
    "ORACLE", "evaluate",
]
