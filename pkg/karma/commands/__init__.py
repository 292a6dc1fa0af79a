from karma.commands.cluster import rediagnose, run_cluster
from karma.commands.export import ExportKind, export_plotdata
from karma.commands.simulate import simulate_dataset
from karma.commands.study import run_calibrate, run_outlier, run_recover, run_vanish

__all__ = [
    "ExportKind",
    "export_plotdata",
    "rediagnose",
    "run_calibrate",
    "run_cluster",
    "run_outlier",
    "run_recover",
    "run_vanish",
    "simulate_dataset",
]
