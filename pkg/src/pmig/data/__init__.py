"""Bundled fixtures: corpora, suites, prompts, drift profiles, fixer snippets."""

from __future__ import annotations

from pathlib import Path

ROOT = Path(__file__).resolve().parent


def path(*parts: str) -> Path:
    """Absolute path to a bundled data file or directory."""
    return ROOT.joinpath(*parts)
