"""Task-difficulty measurement by random weight guessing on planar arm tasks."""
from .config import ExperimentConfig, load_config
from .dynamics import ArmTask, ObstacleSpec, RewardSpec
from .errors import ConfigError, DegenerateWarning, UsageError
from .metrics import MetricReport, PicConfig, PoicConfig, metric_report, pic, poic
from .policy import PolicySpec, PriorSpec, sample_parameters
from .rwg import ReturnMatrix, RwgConfig, aggregate, evaluate
from .stats import BootstrapResult, bootstrap_metric, compare_tasks, welch_test

__version__ = "0.1.0"
