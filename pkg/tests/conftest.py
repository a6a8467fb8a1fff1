"""Shared fixtures."""

import pytest

from lesets.elemtable import load_table
from lesets.representation import build_graph_set, parse_composition


@pytest.fixture(scope="session")
def table():
    return load_table()


@pytest.fixture
def make_graph_set(table):
    def _make(formula: str, target: float | None = None, target_name: str | None = None):
        return build_graph_set(parse_composition(formula), table, target=target, target_name=target_name)

    return _make


@pytest.fixture(autouse=True)
def _no_table_override(monkeypatch):
    monkeypatch.delenv("LESETS_ELEMENT_TABLE", raising=False)
