"""
Configuration settings for fastcorr.
"""
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from dotenv import load_dotenv

from services.exceptions import InputError

# Load environment variables from .env file
load_dotenv()


class Config:
    """Base configuration class with all settings."""

    FASTCORR_ENV = os.getenv('FASTCORR_ENV', 'development')
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')

    # Quantization defaults
    DEFAULT_BASE = int(os.getenv('DEFAULT_BASE', '10'))
    DEFAULT_DIGITS = int(os.getenv('DEFAULT_DIGITS', '2'))

    # Classification defaults
    DEFAULT_THRESHOLD = float(os.getenv('DEFAULT_THRESHOLD', '0.8'))
    DEFAULT_SEED = int(os.getenv('DEFAULT_SEED', '0'))

    # Synthesis
    CSE_MAX_PASSES = int(os.getenv('CSE_MAX_PASSES', '64'))
    VERIFY_TRIALS = int(os.getenv('VERIFY_TRIALS', '20'))  # Oracle checks before a plan is written

    # Benchmark sweeps
    BENCH_WORKERS = int(os.getenv('BENCH_WORKERS', '4'))
    BENCH_STREAM_WINDOWS = int(os.getenv('BENCH_STREAM_WINDOWS', '64'))


class DevelopmentConfig(Config):
    """Development-specific configuration."""
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production-specific configuration."""
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')


class TestingConfig(Config):
    """Testing-specific configuration."""
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'WARNING')
    BENCH_WORKERS = 1
    BENCH_STREAM_WINDOWS = 16
    VERIFY_TRIALS = 5


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}


def get_config():
    """
    Get the appropriate configuration based on FASTCORR_ENV.

    Returns:
        Configuration class
    """
    env = os.getenv('FASTCORR_ENV', 'development')
    return config.get(env, config['default'])


COMMANDS = ('synth', 'apply', 'stream', 'classify', 'bench', 'verify', 'gen-signal', 'baselines')

# Paths each command cannot run without
REQUIRED_PATHS = {
    'synth': ('matrix',),
    'apply': ('plan', 'vector'),
    'stream': ('plan', 'signal'),
    'classify': ('plan', 'signal'),
    'bench': (),
    'verify': ('plan', 'matrix'),
    'gen-signal': ('matrix', 'out'),
    'baselines': (),
}


@dataclass
class RunConfig:
    """
    One CLI invocation: the command, its paths and numeric options.

    Attributes left as None fall back to the active Config class.
    """
    command: str
    matrix: Optional[str] = None
    plan: Optional[str] = None
    vector: Optional[str] = None
    signal: Optional[str] = None
    out: Optional[str] = None
    base: int = Config.DEFAULT_BASE
    digits: int = Config.DEFAULT_DIGITS
    normalize: bool = True
    threshold: float = Config.DEFAULT_THRESHOLD
    refractory: Optional[int] = None
    seed: int = Config.DEFAULT_SEED
    trials: Optional[int] = None
    sizes: List[Tuple[int, int]] = field(default_factory=list)
    digit_sweep: List[int] = field(default_factory=list)
    workers: int = Config.BENCH_WORKERS
    stream_windows: int = Config.BENCH_STREAM_WINDOWS
    count_shifts_as_multiplies: bool = False
    signal_format: str = 'csv'
    normalized_output: bool = False
    summary: bool = False
    placements: List[Tuple[int, int]] = field(default_factory=list)
    noise_sigma: float = 0.0
    length: Optional[int] = None

    def validate(self) -> 'RunConfig':
        """
        Check the invocation before any work is done.

        Raises:
            InputError: Naming the first invalid option
        """
        if self.command not in COMMANDS:
            raise InputError(f"Unknown command {self.command!r}")
        for name in REQUIRED_PATHS[self.command]:
            if not getattr(self, name):
                raise InputError(f"Command {self.command} requires --{name}")
        if self.base not in (2, 10):
            raise InputError(f"--base must be 2 or 10, got {self.base}")
        if self.digits < 0 or any(d < 0 for d in self.digit_sweep):
            raise InputError("Digit counts must be >= 0")
        if not -1.0 <= self.threshold <= 1.0:
            raise InputError(f"--threshold must be in [-1, 1], got {self.threshold}")
        if self.refractory is not None and self.refractory < 0:
            raise InputError(f"--refractory must be >= 0, got {self.refractory}")
        if self.trials is not None and self.trials < 0:
            raise InputError(f"--trials must be >= 0, got {self.trials}")
        if self.seed < 0:
            raise InputError(f"--seed must be >= 0, got {self.seed}")
        if self.workers < 1:
            raise InputError(f"--workers must be >= 1, got {self.workers}")
        if self.stream_windows < 1:
            raise InputError(f"--stream-windows must be >= 1, got {self.stream_windows}")
        if self.signal_format not in ('csv', 'f64'):
            raise InputError(f"--format must be csv or f64, got {self.signal_format}")
        if self.noise_sigma < 0:
            raise InputError(f"--noise must be >= 0, got {self.noise_sigma}")
        if self.length is not None and self.length < 0:
            raise InputError(f"--length must be >= 0, got {self.length}")
        return self
