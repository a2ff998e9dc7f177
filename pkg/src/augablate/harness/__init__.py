from .config import GridConfig, RunConfig, load_grid_config, load_run_config
from .grid import ResultRecord, load_datasets, read_results_csv, run_grid, run_one
from .pipeline import BatchPipeline
from .report import aggregate, check_claims, emit_report
from .train import evaluate, evaluate_tta, predict_views, train
