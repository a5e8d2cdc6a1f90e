"""Bundled example programs with expected verdicts per analysis mode."""

import json
from importlib import resources

PROGRAMS = (
    "flag_sync", "loop_reader", "paired_loads", "param_guard",
    "disjoint_chains", "inc_read",
)


def _root():
    return resources.files(__name__)


def source(name: str) -> str:
    return (_root() / f"{name}.mtir").read_text(encoding="utf-8")


def expectations(name: str) -> dict:
    return json.loads((_root() / f"{name}.expect.json").read_text())


def path(name: str) -> str:
    return str(_root() / f"{name}.mtir")
