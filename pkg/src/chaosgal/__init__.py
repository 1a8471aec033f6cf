"""Generative adversarial learning from trajectories of chaotic systems."""

from .errors import AuditFailure, ConfigError, DegenerateGeneratorError, InputError, TrainingError

__version__ = "0.1.0"
