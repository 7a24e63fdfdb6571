from .config import ExperimentConfig, load_config, parse_config_text
from .experiments import REGISTRY
from .fitting import RateFit, fit_rate
from .report import Check, CertificateReport, verify_summary, write_reports
from .runner import run_and_write, run_configs, run_experiment
