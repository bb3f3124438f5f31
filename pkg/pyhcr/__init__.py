#!/usr/bin/env python3
"""Constrained learning through a hyperspherical representation of convex regions."""
import os
import sys
from dataclasses import dataclass
from importlib.metadata import metadata, version
from pathlib import Path

from loguru import logger

logger.remove()
logger.add(
    sys.stderr,
    level=os.environ.get("LOGLEVEL", os.environ.get("LOGURU_LEVEL", "INFO")),
)


@dataclass
class GeneralDefinitions:
    """General definitions for the package."""

    # Main package info
    PACKAGE_NAME = __name__
    VERSION = version(__name__)
    PACKAGE_DESCRIPTION = metadata(__name__)["Summary"]

    # Main package directories
    PACKAGE_CACHE_DIRECTORY = Path.home() / ".cache" / PACKAGE_NAME

    # Env var capping the number of benchmark worker processes
    THREADS_ENV_VAR = "HCR_THREADS"

    @classmethod
    def dataset_cache_directory(cls):
        """Return the directory where generated datasets are cached."""
        return cls.PACKAGE_CACHE_DIRECTORY / "datasets"

    @classmethod
    def max_workers(cls):
        """Return the number of workers benchmark runs may fan out to."""
        n_cpus = os.cpu_count() or 1
        requested = os.environ.get(cls.THREADS_ENV_VAR)
        if requested is None:
            return n_cpus
        try:
            return max(1, min(n_cpus, int(requested)))
        except ValueError:
            logger.warning(
                "Ignoring invalid {}={!r}. Using {} workers.",
                cls.THREADS_ENV_VAR,
                requested,
                n_cpus,
            )
            return n_cpus
