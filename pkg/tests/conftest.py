import json
from pathlib import Path

import pytest

from flowmatch.graph import build_flow_graph, merge_alternatives
from flowmatch.parser import parse_program
from flowmatch.table import load_table
from flowmatch.transforms import run_program

FIXTURES = Path(__file__).parent / "fixtures"

PIPELINE = (FIXTURES / "pipeline.fm").read_text()
PIPELINE_NO_FILTER = PIPELINE.replace("filter rpg > 0.5 and r_avg > 2\n", "")
PIPELINE_OMIT_LAST = PIPELINE.rsplit("derive flagged", 1)[0]
PIPELINE_THRESHOLD = PIPELINE.replace("rpg > 0.5", "rpg > 0.45")


@pytest.fixture(scope="session")
def soccer_table():
    return load_table(FIXTURES.joinpath("soccer.csv").read_bytes())


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


def graph_for(table, source):
    _, trace = run_program(table, parse_program(source))
    return build_flow_graph(table, trace)


@pytest.fixture(scope="session")
def pipeline_graph(soccer_table):
    return graph_for(soccer_table, PIPELINE)


@pytest.fixture(scope="session")
def soccer_gt(soccer_table, pipeline_graph):
    return merge_alternatives([pipeline_graph, graph_for(soccer_table, PIPELINE_NO_FILTER)])


@pytest.fixture()
def gt_doc():
    return json.loads((FIXTURES / "gt_soccer.json").read_text())
