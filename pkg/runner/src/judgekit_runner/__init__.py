"""Test-runner shim package: one stdlib-only script spoken to over stdout."""

from __future__ import annotations

from pathlib import Path

__version__ = "0.1.0"


def shim_path() -> Path:
    """Filesystem path of the shim script, for spawning with a host interpreter."""
    return Path(__file__).with_name("shim.py")
