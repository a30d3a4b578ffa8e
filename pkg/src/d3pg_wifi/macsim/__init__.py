from .bianchi import bianchi_fixed_point, saturation_throughput
from .sim import (CW_LADDER, MacControl, PeriodMetrics, SimConfig, Simulator, ppdu_duration,
                  sim_new, write_metrics_csv)

__all__ = [
    "CW_LADDER", "MacControl", "PeriodMetrics", "SimConfig", "Simulator", "bianchi_fixed_point",
    "ppdu_duration", "saturation_throughput", "sim_new", "write_metrics_csv",
]
