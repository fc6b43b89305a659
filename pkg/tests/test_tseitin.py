"""
Tests for the Tseitin encoding.
"""

import itertools

import pytest

from src.circuit_graph import SINK_PIN, SOURCE_PIN, CircuitGraph, GraphError, Node, NodeKind
from src.sat_solver import CdclSolver, SolverStatus
from src.tseitin import CnfFormula, emit_dimacs, tseitin_graph


def single_gate(demo_library, cell: str, pins) -> CircuitGraph:
    graph = CircuitGraph(cell, demo_library.cells)
    definition = demo_library[cell]
    gate = graph.add_node(Node("g", NodeKind.CELL, cell=cell))
    for pin in pins:
        source = graph.add_node(Node(f"in_{pin}", NodeKind.INPUT_PORT))
        graph.add_edge(source, SOURCE_PIN, gate, pin)
    y = graph.add_node(Node("y", NodeKind.OUTPUT_PORT))
    graph.add_edge(gate, definition.output_pins[0], y, SINK_PIN)
    return graph


class TestEncoding:
    """Test clause generation."""

    def test_inverter_chain_aliases(self, demo_library):
        """Test inverters and buffers introduce no variables or clauses."""
        graph = CircuitGraph("chain", demo_library.cells)
        a = graph.add_node(Node("a", NodeKind.INPUT_PORT))
        u1 = graph.add_node(Node("u1", NodeKind.CELL, cell="INV_X1"))
        u2 = graph.add_node(Node("u2", NodeKind.CELL, cell="BUF_X1"))
        y = graph.add_node(Node("y", NodeKind.OUTPUT_PORT))
        graph.add_edge(a, SOURCE_PIN, u1, "A")
        graph.add_edge(u1, "ZN", u2, "A")
        graph.add_edge(u2, "Z", y, SINK_PIN)

        cnf = tseitin_graph(graph, y)
        assert cnf.num_vars == 1
        assert cnf.var_map[(u1, "ZN")] == -cnf.var_map[(a, SOURCE_PIN)]
        assert cnf.clauses == [[-1]]

    def test_clause_bound(self, random_circuit_factory):
        """Test at most four clauses per encoded binary operator."""
        for seed in range(10):
            graph = random_circuit_factory(seed, inputs=5, gates=20, outputs=1)
            cnf = tseitin_graph(graph, graph.node_id("o0"))
            assert len(cnf.clauses) <= 4 * cnf.operator_count

    def test_constant_node(self, demo_library):
        """Test constants are fixed by a unit clause."""
        graph = CircuitGraph("const", demo_library.cells)
        zero = graph.add_node(Node("zero", NodeKind.CONST, value=0))
        y = graph.add_node(Node("y", NodeKind.OUTPUT_PORT))
        graph.add_edge(zero, SOURCE_PIN, y, SINK_PIN)
        cnf = tseitin_graph(graph, y)
        assert CdclSolver().solve(cnf).status == SolverStatus.UNSAT

    def test_unconnected_pin(self, demo_library):
        """Test a gate with a floating input cannot be encoded."""
        graph = single_gate(demo_library, "NAND2_X1", ["A1"])
        with pytest.raises(GraphError):
            tseitin_graph(graph, graph.node_id("y"))


class TestEquisatisfiability:
    """Test the encoding agrees with the reference evaluator."""

    @pytest.mark.parametrize("cell,pins", [
        ("NAND2_X1", ["A1", "A2"]),
        ("NOR2_X1", ["A1", "A2"]),
        ("XOR2_X1", ["A", "B"]),
        ("XNOR2_X1", ["A", "B"]),
        ("AOI21_X1", ["A1", "B1", "B2"]),
    ])
    def test_single_gate_models(self, demo_library, cell, pins):
        """Test each input assignment forced by unit clauses yields the cell function."""
        graph = single_gate(demo_library, cell, pins)
        y = graph.node_id("y")
        inputs = [graph.node_id(f"in_{pin}") for pin in pins]
        for values in itertools.product((0, 1), repeat=len(pins)):
            expected = graph.evaluate(dict(zip(inputs, values)))[(y, SOURCE_PIN)]
            cnf = tseitin_graph(graph, y)
            units = [[cnf.var_map[(node, SOURCE_PIN)] * (1 if value else -1)]
                     for node, value in zip(inputs, values)]
            result = CdclSolver().solve_clauses(cnf.num_vars, cnf.clauses + units)
            assert (result.status == SolverStatus.SAT) == bool(expected)

    def test_random_circuits(self, random_circuit_factory):
        """Test SAT exactly when some assignment sets the output, and models are witnesses."""
        for seed in range(25):
            graph = random_circuit_factory(seed, inputs=5, gates=15, outputs=1)
            y = graph.node_id("o0")
            inputs = [graph.node_id(f"i{index}") for index in range(5)]

            mask = (1 << 32) - 1
            patterns = {node: sum(((row >> index) & 1) << row for row in range(32))
                        for index, node in enumerate(inputs)}
            reachable = graph.evaluate(patterns, mask)[(y, SOURCE_PIN)] != 0

            cnf = tseitin_graph(graph, y)
            result = CdclSolver(seed=seed).solve(cnf)
            assert result.satisfiable == reachable
            if result.satisfiable:
                assignment = {}
                for node in inputs:
                    literal = cnf.var_map[(node, SOURCE_PIN)]
                    value = result.model[abs(literal)]
                    assignment[node] = int(value if literal > 0 else not value)
                assert graph.evaluate(assignment)[(y, SOURCE_PIN)] == 1


class TestDimacs:
    """Test DIMACS serialization."""

    def test_header_and_terminators(self):
        """Test the problem line and zero-terminated clauses."""
        cnf = CnfFormula(num_vars=3, clauses=[[1, -2], [3]])
        assert emit_dimacs(cnf) == "p cnf 3 2\n1 -2 0\n3 0\n"
