import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from consensus_topology.errors import ParseError
from consensus_topology.graph import Graph, erdos_renyi
from consensus_topology.graphio import (
    format_edge_list,
    format_pajek,
    parse_edge_list,
    parse_pajek,
    read_graph,
    write_graph,
)


def test_edge_list_basic():
    g = parse_edge_list("n 4\n# comment\n1 2 0.5\n2 3   # default weight\n\n4 3 2\n")
    assert g.n == 4
    assert g.edges == ((0, 1, 0.5), (1, 2, 1.0), (2, 3, 2.0))


@pytest.mark.parametrize("text,line", [
    ("1 2\n", 1),
    ("n 3\n1 2 x\n", 2),
    ("n 3\n# ok\n1 2 3 4\n", 3),
    ("n 3\n1 1\n", 2),
    ("n 3\n1 2\n2 1\n", 3),
    ("n 3\n1 2 -1\n", 2),
    ("n three\n", 1),
    ("", 1),
])
def test_edge_list_errors_carry_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_edge_list(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_edge_list_node_out_of_range():
    with pytest.raises(IndexError, match="line 2"):
        parse_edge_list("n 3\n1 4\n")


def test_pajek_edges_and_arcs():
    text = """% a comment
*Vertices 4
1 "a"
2 "b"
*Edges
1 2 2.5
*Arcs
3 4
4 3
2 3 7
"""
    g = parse_pajek(text)
    assert g.n == 4
    # arcs are symmetrized and unweighted
    assert g.edges == ((0, 1, 2.5), (1, 2, 1.0), (2, 3, 1.0))


def test_pajek_arc_does_not_override_edge_weight():
    g = parse_pajek("*Vertices 3\n*Edges\n1 2 4\n*Arcs\n2 1\n")
    assert g.edges == ((0, 1, 4.0),)


@pytest.mark.parametrize("text", [
    "*Edges\n1 2\n",
    "1 2\n",
    "*Vertices 3\n*Matrix\n",
    "*Vertices 3\n*Edges\n1\n",
    "*Vertices 3\n*Vertices 3\n",
    "",
])
def test_pajek_errors(text):
    with pytest.raises(ParseError):
        parse_pajek(text)


graphs = st.builds(
    lambda n, p, seed: erdos_renyi(n, p, "uniform(0.1,5)", seed),
    st.integers(2, 15), st.floats(0.3, 1.0), st.integers(0, 2**31),
)


@given(graphs)
def test_round_trip(g):
    assert parse_edge_list(format_edge_list(g)) == g
    assert parse_pajek(format_pajek(g)) == g


@pytest.mark.parametrize("name,fmt", [("g.el", None), ("g.net", None), ("g.txt", "pajek-net")])
def test_read_write_files(tmp_path, name, fmt):
    g = Graph(3, ((0, 1, 0.1), (1, 2, 3.0)))
    path = tmp_path / name
    write_graph(g, path, fmt)
    assert read_graph(path, fmt) == g
    assert os.listdir(tmp_path) == [name]
    if name.endswith(".net") or fmt == "pajek-net":
        assert path.read_text().startswith("*Vertices 3")
    else:
        assert path.read_text().startswith("n 3\n")


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        write_graph(Graph(2), tmp_path / "g", "gml")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_graph(tmp_path / "missing.el")
