"""Config-driven command line front end for the experiment pipelines."""

from .config import OUTPUT_ROOT_ENV, ConfigError, manifest_text, parse_config_file, resolve
from .main import build_parser, main
from .report import MergeError, merge_runs

__all__ = [
    "OUTPUT_ROOT_ENV",
    "ConfigError",
    "MergeError",
    "build_parser",
    "main",
    "manifest_text",
    "merge_runs",
    "parse_config_file",
    "resolve",
]
