"""
Tseitin transformation of circuit graphs into CNF.

Every node output gets a literal. Buffers and inverters alias their driver's
literal (a negated literal for inverters) instead of introducing clauses.
N-ary AND/OR use the direct n-ary clause schemas; XOR chains are encoded as
binary XORs.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .boolexpr import And, BoolExpr, Const, Not, Or, Var, Xor
from .circuit_graph import SOURCE_PIN, CircuitGraph, GraphError, NodeKind

logger = logging.getLogger(__name__)

Literal = int
Clause = List[Literal]


@dataclass
class CnfFormula:
    """
    CNF formula with the literal of every node output.

    Attributes:
        num_vars: Number of variables (indices 1..num_vars)
        clauses: Clauses as lists of nonzero signed variable indices
        var_map: (node id, output pin) to signed literal
        root: Literal asserted true
        operator_count: Encoded operators, counted as binary operators
    """
    num_vars: int = 0
    clauses: List[Clause] = field(default_factory=list)
    var_map: Dict[Tuple[int, str], Literal] = field(default_factory=dict)
    root: Literal = 0
    operator_count: int = 0

    def new_var(self) -> Literal:
        self.num_vars += 1
        return self.num_vars

    def add(self, *literals: Literal) -> None:
        self.clauses.append(list(literals))


class _Encoder:
    def __init__(self, cnf: CnfFormula):
        self.cnf = cnf
        self._true: Literal = 0

    def true_literal(self) -> Literal:
        if not self._true:
            self._true = self.cnf.new_var()
            self.cnf.add(self._true)
            self.cnf.operator_count += 1
        return self._true

    def encode(self, expr: BoolExpr, pins: Dict[str, Literal]) -> Literal:
        if isinstance(expr, Var):
            return pins[expr.name]
        if isinstance(expr, Not):
            return -self.encode(expr.arg, pins)
        if isinstance(expr, Const):
            return self.true_literal() if expr.value else -self.true_literal()
        if isinstance(expr, And):
            return self._and([self.encode(arg, pins) for arg in expr.args])
        if isinstance(expr, Or):
            return -self._and([-self.encode(arg, pins) for arg in expr.args])
        if isinstance(expr, Xor):
            literals = [self.encode(arg, pins) for arg in expr.args]
            if not literals:
                return -self.true_literal()
            result = literals[0]
            for literal in literals[1:]:
                result = self._xor(result, literal)
            return result
        raise GraphError(f"Cannot encode expression {expr!r}")

    def _and(self, literals: List[Literal]) -> Literal:
        if not literals:
            return self.true_literal()
        if len(literals) == 1:
            return literals[0]
        y = self.cnf.new_var()
        for literal in literals:
            self.cnf.add(-y, literal)
        self.cnf.add(y, *(-literal for literal in literals))
        self.cnf.operator_count += len(literals) - 1
        return y

    def _xor(self, a: Literal, b: Literal) -> Literal:
        y = self.cnf.new_var()
        self.cnf.add(-y, a, b)
        self.cnf.add(-y, -a, -b)
        self.cnf.add(y, -a, b)
        self.cnf.add(y, a, -b)
        self.cnf.operator_count += 1
        return y


def tseitin_graph(graph: CircuitGraph, root: int, root_pin: str = SOURCE_PIN) -> CnfFormula:
    """
    Encode an acyclic circuit graph and assert one of its signals.

    Free sources get one variable each; constant nodes get a variable fixed
    by a unit clause.

    Raises:
        CyclicGraphError: If the graph has a cycle
        GraphError: If an input pin is unconnected
    """
    cnf = CnfFormula()
    encoder = _Encoder(cnf)

    for node_id in graph.topological_order():
        node = graph.node(node_id)
        if node.kind.is_source:
            cnf.var_map[(node_id, SOURCE_PIN)] = cnf.new_var()
            continue
        if node.kind == NodeKind.CONST:
            literal = cnf.new_var()
            cnf.add(literal if node.value else -literal)
            cnf.operator_count += 1
            cnf.var_map[(node_id, SOURCE_PIN)] = literal
            continue

        pins: Dict[str, Literal] = {}
        for edge in graph.in_edges(node_id):
            pins[edge.dst_pin] = cnf.var_map[(edge.src, edge.src_pin)]
        for pin, function in graph.output_functions(node_id).items():
            missing = function.variables() - pins.keys()
            if missing:
                raise GraphError(f"Input pins {sorted(missing)} of {node.name} are unconnected")
            cnf.var_map[(node_id, pin)] = encoder.encode(function, pins)

    cnf.root = cnf.var_map[(root, root_pin)]
    cnf.add(cnf.root)
    cnf.operator_count += 1
    logger.debug(f"Tseitin encoding of {graph.name}: {cnf.num_vars} variables, {len(cnf.clauses)} clauses")
    return cnf


def tseitin(diff) -> CnfFormula:
    """Encode a differential graph with its root asserted true."""
    return tseitin_graph(diff.graph, diff.root)


def emit_dimacs(cnf: CnfFormula) -> str:
    """
    Serialize to DIMACS CNF.

    >>> emit_dimacs(CnfFormula(num_vars=2, clauses=[[-1, 2]]))
    'p cnf 2 1\\n-1 2 0\\n'
    """
    lines = [f"p cnf {cnf.num_vars} {len(cnf.clauses)}"]
    lines.extend(" ".join(str(literal) for literal in clause) + " 0" for clause in cnf.clauses)
    return "\n".join(lines) + "\n"
