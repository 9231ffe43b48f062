"""End-to-end evaluation and mapping optimization for simulated
reconfigurable DNN inference accelerators."""

from ._kernels import backend_name
from .config import HardwareConfig, ValidatedConfig, load_config, save_config, validate_config
from .graph import Model, infer_shapes, load_bundled, parse_model, serialize_model
from .mapping import ConvMapping, FcMapping, default_mapping, enumerate_space, validate_mapping
from .runner import RunReport, run_model, verify_against_reference
from .simulator import SimReport, count_psums
from .tuner import TuneResult, TunerOptions, sweep_hardware, tune_layer, tune_model

__version__ = "0.1.0"

__all__ = [
    "HardwareConfig", "ValidatedConfig", "load_config", "save_config", "validate_config",
    "Model", "infer_shapes", "load_bundled", "parse_model", "serialize_model",
    "ConvMapping", "FcMapping", "default_mapping", "enumerate_space", "validate_mapping",
    "RunReport", "run_model", "verify_against_reference",
    "SimReport", "count_psums",
    "TuneResult", "TunerOptions", "sweep_hardware", "tune_layer", "tune_model",
    "backend_name", "__version__",
]
