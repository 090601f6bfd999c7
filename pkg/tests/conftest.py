from __future__ import annotations

import os
import subprocess
import sys
from pathlib import Path

import pytest

from figqa.gateway import load_templates


@pytest.fixture(scope="session")
def templates():
    return load_templates()


@pytest.fixture(scope="session")
def e2e_bundle(tmp_path_factory):
    """Synthetic 3-paper corpus plus a fully scripted mock backend."""
    from e2e_corpus import build_corpus

    root = tmp_path_factory.mktemp("e2e_corpus")
    return build_corpus(root)


@pytest.fixture(scope="session")
def run_cli():
    """Invoke the installed CLI in a subprocess with an optional env overlay."""

    def _run(args, env_extra=None, cwd=None, timeout=120):
        env = os.environ.copy()
        env.pop("FIGQA_MOCK_CRASH_AFTER", None)
        if env_extra:
            env.update(env_extra)
        return subprocess.run(
            [sys.executable, "-m", "figqa", *args],
            capture_output=True,
            text=True,
            env=env,
            cwd=cwd or str(Path.cwd()),
            timeout=timeout,
        )

    return _run
