"""
Environment helpers.

Loads .env once on import and derives the version string recorded in
experiment metadata.
"""

import os
import subprocess
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

PACKAGE_VERSION = "0.3.0"

_REPO_ROOT = Path(__file__).resolve().parent.parent.parent


def get_version() -> str:
    """
    Return a git-describe style version string.

    TBDTRACK_VERSION overrides everything (useful in containers without .git).
    Falls back to the package version when git is unavailable.
    """
    override = os.getenv("TBDTRACK_VERSION")
    if override:
        return override
    try:
        result = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=_REPO_ROOT,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        )
    except (OSError, subprocess.SubprocessError):
        return f"v{PACKAGE_VERSION}"
    described = result.stdout.strip()
    return described or f"v{PACKAGE_VERSION}"
