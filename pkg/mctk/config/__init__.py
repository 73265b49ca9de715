"""Configuration package for mctk."""

from mctk.config.settings import PipelineConfig, load_config

__all__ = ["PipelineConfig", "load_config"]
