"""
Configuration management for the asymflat lab.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, Optional, TypeVar

from dotenv import load_dotenv
from pydantic import BaseModel, Field

__version__ = "0.3.0"

T = TypeVar("T")
R = TypeVar("R")


class AsymflatConfig(BaseModel):
    """Runtime configuration for the lab."""

    # Parallelism
    threads: int = Field(default=1, ge=1, description="Cap on concurrent radius/leaf evaluations")

    # Discretization
    l_max: int = Field(default=8, ge=2, description="Harmonic cutoff for graphs and Galerkin bases")
    l_quad: int = Field(default=24, ge=4, description="Quadrature exactness degree on the sphere")

    # Solver
    tolerance: float = Field(default=1e-10, gt=0, description="Sup-norm residual tolerance for leaves")
    max_iterations: int = Field(default=200, ge=1, description="Iteration cap for the leaf solver")

    # Output
    output_dir: Path = Field(default=Path("results"), description="Directory for CSV/JSON artifacts")
    verbose: bool = Field(default=False, description="Print progress messages on stderr")

    @classmethod
    def from_env(cls, env_file: Optional[Path] = None) -> "AsymflatConfig":
        """Load configuration from environment variables."""
        if env_file and env_file.exists():
            load_dotenv(env_file)
        else:
            load_dotenv()

        return cls(
            threads=int(os.getenv("ASYMFLAT_THREADS", "1")),
            l_max=int(os.getenv("ASYMFLAT_L_MAX", "8")),
            l_quad=int(os.getenv("ASYMFLAT_L_QUAD", "24")),
            tolerance=float(os.getenv("ASYMFLAT_TOLERANCE", "1e-10")),
            max_iterations=int(os.getenv("ASYMFLAT_MAX_ITER", "200")),
            output_dir=Path(os.getenv("ASYMFLAT_OUTPUT_DIR", "results")),
            verbose=os.getenv("ASYMFLAT_VERBOSE", "false").lower() == "true",
        )

    def get_output_file(self, name: str) -> Path:
        """Get a path inside the output directory, creating it if needed."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name


# Global config instance
_config: Optional[AsymflatConfig] = None


def get_config() -> AsymflatConfig:
    """Get or create the global configuration."""
    global _config
    if _config is None:
        _config = AsymflatConfig.from_env()
    return _config


def set_config(config: AsymflatConfig) -> None:
    """Set the global configuration."""
    global _config
    _config = config


def parallel_map(func: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Map func over items with at most `threads` workers, keeping input order."""
    items = list(items)
    threads = min(get_config().threads, max(len(items), 1))
    if threads <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
