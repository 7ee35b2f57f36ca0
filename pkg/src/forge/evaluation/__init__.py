from .breadth import BreadthReport, motif_coverage
from .clarke import ZONES, ClarkeSummary, clarke_summary, clarke_zone, clarke_zones
from .distributions import pca2, principal_axes, variance_distribution
from .glycemic import METRICS, GlycemicReport, glycemic_metrics, per_trace_metrics, welch_test
from .report import REPORT_SCHEMA, EvaluationBundle, evaluate, write_bundle
from .tstr import TstrConfig, TstrReport, persistence_rmse, sliding_windows, tstr
