"""
Directed multigraph model of a gate-level circuit.

Nodes are ports, cells, constants and the synthetic nodes introduced by
extraction and differential construction. Edges connect a source pin of one
node to an input pin of another; parallel edges are allowed. The graph is
stored in a networkx MultiDiGraph keyed by dense integer ids.
"""

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Set, Tuple

import networkx as nx
from jinja2 import Environment, FileSystemLoader

from .boolexpr import BoolExpr, Const, Not, Var, parse_bool_expr
from .cell_library import CellDefinition

logger = logging.getLogger(__name__)

SOURCE_PIN = "O"
SINK_PIN = "I"

_BUS_BIT = re.compile(r"^(?P<base>.+)\[(?P<index>\d+)\]$")


class GraphError(Exception):
    """Base exception for circuit graph errors."""
    pass


class UnknownNode(GraphError):
    """Raised when a node id or name does not exist in the graph."""

    def __init__(self, node):
        self.node = node
        super().__init__(f"Unknown node: {node}")


class CyclicGraphError(GraphError):
    """Raised when an operation needs an acyclic graph."""
    pass


class NodeKind(Enum):
    """Kinds of circuit graph nodes, with their JSON keyword."""
    INPUT_PORT = "input"
    OUTPUT_PORT = "output"
    CELL = "cell"
    PASS_THROUGH = "pass_through"
    AUX_INPUT = "aux_input"
    CONST = "const"
    STATE_INPUT = "state_input"
    STATE_OUTPUT = "state_output"
    OUTPUT_LOGIC = "output_logic"

    @property
    def is_source(self) -> bool:
        """Free inputs: their value comes from an assignment."""
        return self in (NodeKind.INPUT_PORT, NodeKind.AUX_INPUT, NodeKind.STATE_INPUT)

    @property
    def is_sink(self) -> bool:
        return self in (NodeKind.OUTPUT_PORT, NodeKind.STATE_OUTPUT)


@dataclass(frozen=True)
class Node:
    """
    One circuit graph node.

    Attributes:
        name: Unique node name (instance, port bit, or synthetic name)
        kind: Node kind
        cell: Cell name for CELL nodes
        value: Constant value for CONST nodes
        inverted: Output pins carrying the negated value (pass-throughs, state inputs)
        data_pin: Input pin of a pass-through
        outputs: Output pins of a pass-through
        function: Output function of an OUTPUT_LOGIC node over its input pins
        origin: Name of the node this one was derived from
    """
    name: str
    kind: NodeKind
    cell: Optional[str] = None
    value: Optional[int] = None
    inverted: FrozenSet[str] = frozenset()
    data_pin: Optional[str] = None
    outputs: Tuple[str, ...] = ()
    function: Optional[BoolExpr] = None
    origin: Optional[str] = None


class Edge(NamedTuple):
    """Connection from a source pin to a destination pin."""
    src: int
    src_pin: str
    dst: int
    dst_pin: str


class CircuitGraph:
    """
    Circuit graph with pin-annotated edges.

    Cell semantics are looked up in ``cells``, which holds the definition of
    every cell type (or submodule) instantiated in the graph.
    """

    def __init__(self, name: str = "circuit", cells: Optional[Mapping[str, CellDefinition]] = None):
        self.name = name
        self.graph = nx.MultiDiGraph()
        self.cells: Dict[str, CellDefinition] = dict(cells or {})
        self.diagnostics: List[str] = []
        self._next_id = 0
        self._ids_by_name: Dict[str, int] = {}

    # -- construction -----------------------------------------------------

    def add_node(self, node: Node) -> int:
        """
        Add a node and return its id.

        Raises:
            GraphError: If the name is already used or a cell is unknown
        """
        if node.name in self._ids_by_name:
            raise GraphError(f"Duplicate node name: {node.name}")
        if node.kind == NodeKind.CELL and node.cell not in self.cells:
            raise GraphError(f"Node {node.name} uses undefined cell {node.cell}")
        node_id = self._next_id
        self._next_id += 1
        self.graph.add_node(node_id, node=node)
        self._ids_by_name[node.name] = node_id
        return node_id

    def replace_node(self, node_id: int, node: Node) -> None:
        """Replace the data of a node, keeping its id and edges."""
        old = self.node(node_id)
        if node.name != old.name:
            if node.name in self._ids_by_name:
                raise GraphError(f"Duplicate node name: {node.name}")
            del self._ids_by_name[old.name]
            self._ids_by_name[node.name] = node_id
        self.graph.nodes[node_id]['node'] = node

    def remove_node(self, node_id: int) -> None:
        node = self.node(node_id)
        del self._ids_by_name[node.name]
        self.graph.remove_node(node_id)

    def add_edge(self, src: int, src_pin: str, dst: int, dst_pin: str) -> None:
        """
        Connect ``src.src_pin`` to ``dst.dst_pin``.

        Raises:
            UnknownNode: If an endpoint does not exist
        """
        self.node(src)
        self.node(dst)
        self.graph.add_edge(src, dst, src_pin=src_pin, dst_pin=dst_pin)

    def remove_in_edges(self, node_id: int, pins: Optional[Iterable[str]] = None) -> None:
        """Remove incoming edges of a node, optionally only on the given pins."""
        pin_filter = None if pins is None else set(pins)
        doomed = [
            (src, dst, key) for src, dst, key, data in self.graph.in_edges(node_id, keys=True, data=True)
            if pin_filter is None or data['dst_pin'] in pin_filter
        ]
        self.graph.remove_edges_from(doomed)

    def move_out_edges(self, old: int, new: int, pins: Optional[Iterable[str]] = None,
                       new_pin: Optional[str] = None) -> None:
        """Re-source the outgoing edges of ``old`` from ``new``."""
        pin_filter = None if pins is None else set(pins)
        moved = [
            (src, dst, key, data) for src, dst, key, data in self.graph.out_edges(old, keys=True, data=True)
            if pin_filter is None or data['src_pin'] in pin_filter
        ]
        for src, dst, key, data in moved:
            self.graph.remove_edge(src, dst, key)
            self.graph.add_edge(new, dst, src_pin=new_pin or data['src_pin'], dst_pin=data['dst_pin'])

    def move_in_edges(self, old: int, new: int, pins: Optional[Iterable[str]] = None,
                      new_pin: Optional[str] = None) -> None:
        """Re-target the incoming edges of ``old`` to ``new``."""
        pin_filter = None if pins is None else set(pins)
        moved = [
            (src, dst, key, data) for src, dst, key, data in self.graph.in_edges(old, keys=True, data=True)
            if pin_filter is None or data['dst_pin'] in pin_filter
        ]
        for src, dst, key, data in moved:
            self.graph.remove_edge(src, dst, key)
            self.graph.add_edge(src, new, src_pin=data['src_pin'], dst_pin=new_pin or data['dst_pin'])

    def copy(self) -> 'CircuitGraph':
        """Return an independent copy sharing the (immutable) cell definitions."""
        clone = CircuitGraph(self.name, self.cells)
        clone.graph = self.graph.copy()
        clone.diagnostics = list(self.diagnostics)
        clone._next_id = self._next_id
        clone._ids_by_name = dict(self._ids_by_name)
        return clone

    # -- queries ------------------------------------------------------------

    def node(self, node_id: int) -> Node:
        """
        Return the node with the given id.

        Raises:
            UnknownNode: If the id does not exist
        """
        try:
            return self.graph.nodes[node_id]['node']
        except KeyError:
            raise UnknownNode(node_id) from None

    def node_id(self, name: str) -> int:
        """
        Return the id of the node with the given name.

        Raises:
            UnknownNode: If no node has the name
        """
        try:
            return self._ids_by_name[name]
        except KeyError:
            raise UnknownNode(name) from None

    def has_name(self, name: str) -> bool:
        return name in self._ids_by_name

    def nodes(self) -> List[int]:
        return sorted(self.graph.nodes)

    def nodes_of_kind(self, *kinds: NodeKind) -> List[int]:
        return [node_id for node_id in self.nodes() if self.node(node_id).kind in kinds]

    def edges(self) -> List[Edge]:
        """All edges in a deterministic order."""
        return sorted(
            Edge(src, data['src_pin'], dst, data['dst_pin'])
            for src, dst, data in self.graph.edges(data=True)
        )

    def in_edges(self, node_id: int) -> List[Edge]:
        return sorted(
            Edge(src, data['src_pin'], dst, data['dst_pin'])
            for src, dst, data in self.graph.in_edges(node_id, data=True)
        )

    def out_edges(self, node_id: int) -> List[Edge]:
        return sorted(
            Edge(src, data['src_pin'], dst, data['dst_pin'])
            for src, dst, data in self.graph.out_edges(node_id, data=True)
        )

    def driver(self, node_id: int, pin: str) -> Optional[Tuple[int, str]]:
        """Return the (node, pin) driving an input pin, or None when unconnected."""
        for edge in self.in_edges(node_id):
            if edge.dst_pin == pin:
                return edge.src, edge.src_pin
        return None

    @property
    def num_nodes(self) -> int:
        return self.graph.number_of_nodes()

    @property
    def num_edges(self) -> int:
        return self.graph.number_of_edges()

    def is_sequential(self, node_id: int) -> bool:
        node = self.node(node_id)
        return node.kind == NodeKind.CELL and self.cells[node.cell].is_sequential

    def input_pins(self, node_id: int) -> List[str]:
        """Input pins a node reads, in positional order."""
        node = self.node(node_id)
        if node.kind == NodeKind.CELL:
            return list(self.cells[node.cell].input_pins)
        if node.kind == NodeKind.PASS_THROUGH:
            return [node.data_pin]
        if node.kind.is_sink:
            return [SINK_PIN]
        if node.kind == NodeKind.OUTPUT_LOGIC:
            return sorted(node.function.variables())
        return []

    def output_pins(self, node_id: int) -> List[str]:
        node = self.node(node_id)
        if node.kind == NodeKind.CELL:
            return list(self.cells[node.cell].output_pins)
        if node.kind == NodeKind.PASS_THROUGH:
            return list(node.outputs)
        return [SOURCE_PIN]

    def output_functions(self, node_id: int) -> Dict[str, BoolExpr]:
        """
        Functions of every output pin over the node's input pins.

        Free sources have no functions.

        Raises:
            GraphError: For sequential cells, which must be preprocessed first
        """
        node = self.node(node_id)
        kind = node.kind
        if kind == NodeKind.CELL:
            cell = self.cells[node.cell]
            if cell.is_sequential:
                raise GraphError(f"Sequential node {node.name} has no combinational semantics")
            return dict(cell.functions)
        if kind == NodeKind.PASS_THROUGH:
            data = Var(node.data_pin)
            return {pin: Not(data) if pin in node.inverted else data for pin in node.outputs}
        if kind.is_sink:
            return {SOURCE_PIN: Var(SINK_PIN)}
        if kind == NodeKind.OUTPUT_LOGIC:
            return {SOURCE_PIN: node.function}
        if kind == NodeKind.CONST:
            return {SOURCE_PIN: Const(node.value)}
        return {}

    def observed_pin(self, node_id: int) -> str:
        """
        Output pin whose value represents the node as a target output.

        Raises:
            GraphError: If the node has several outputs
        """
        pins = self.output_pins(node_id)
        if len(pins) != 1:
            raise GraphError(f"Node {self.node(node_id).name} has outputs {pins}; name a single-output node")
        return pins[0]

    def resolve(self, name: str, role: str = "input") -> List[List[int]]:
        """
        Resolve a specification name to node bits, LSB first.

        A name resolves to the node of that name, to the split halves of a
        loop register (state inputs for ``role == "input"``, the next-state
        sink for ``role == "output"``), or to the bits ``name[i]`` of a bus.
        Each bit is the list of nodes carrying it (a split register with both
        Q and QN fan-out has two state inputs).

        Raises:
            UnknownNode: If the name matches nothing
        """
        bit = self._resolve_bit(name, role)
        if bit:
            return [bit]

        indexed: Dict[int, str] = {}
        for candidate in self._bit_names(name):
            match = _BUS_BIT.match(candidate)
            indexed[int(match.group('index'))] = candidate
        if not indexed:
            raise UnknownNode(name)

        bits = []
        for index in sorted(indexed):
            resolved = self._resolve_bit(indexed[index], role)
            if not resolved:
                raise UnknownNode(indexed[index])
            bits.append(resolved)
        return bits

    def _resolve_bit(self, name: str, role: str) -> List[int]:
        if name in self._ids_by_name:
            return [self._ids_by_name[name]]
        wanted = NodeKind.STATE_INPUT if role == "input" else NodeKind.STATE_OUTPUT
        return [
            node_id for node_id in self.nodes()
            if self.node(node_id).origin == name and self.node(node_id).kind == wanted
        ]

    def _bit_names(self, base: str) -> Set[str]:
        names = set()
        for node_id in self.graph.nodes:
            node = self.node(node_id)
            for candidate in (node.name, node.origin):
                if candidate is None:
                    continue
                match = _BUS_BIT.match(candidate)
                if match and match.group('base') == base:
                    names.add(candidate)
        return names

    # -- algorithms -----------------------------------------------------------

    def nodes_between(self, sources: Iterable[int], sinks: Iterable[int]) -> Set[int]:
        """
        Nodes on some directed path from any source to any sink.

        Computed as forward-reachable(sources) intersected with
        backward-reachable(sinks).

        Raises:
            UnknownNode: If a source or sink does not exist
        """
        forward: Set[int] = set()
        for source in sources:
            self.node(source)
            forward.add(source)
            forward |= nx.descendants(self.graph, source)

        backward: Set[int] = set()
        for sink in sinks:
            self.node(sink)
            backward.add(sink)
            backward |= nx.ancestors(self.graph, sink)

        return forward & backward

    def sequential_cycle_nodes(self) -> Set[int]:
        """Sequential nodes lying on a directed cycle."""
        on_cycle: Set[int] = set()
        for component in nx.strongly_connected_components(self.graph):
            if len(component) > 1:
                on_cycle |= component
        on_cycle |= {node_id for node_id in self.graph.nodes if self.graph.has_edge(node_id, node_id)}
        return {node_id for node_id in on_cycle if self.is_sequential(node_id)}

    def induced_subgraph(self, keep: Iterable[int]) -> 'CircuitGraph':
        """Copy restricted to ``keep`` and the edges between kept nodes; ids are preserved."""
        keep_set = set(keep)
        for node_id in keep_set:
            self.node(node_id)
        sub = CircuitGraph(self.name, self.cells)
        sub.graph = self.graph.subgraph(keep_set).copy()
        sub._next_id = self._next_id
        sub._ids_by_name = {self.node(node_id).name: node_id for node_id in keep_set}
        used = {self.node(node_id).cell for node_id in keep_set if self.node(node_id).kind == NodeKind.CELL}
        sub.cells = {name: cell for name, cell in self.cells.items() if name in used}
        return sub

    def topological_order(self) -> List[int]:
        """
        Deterministic topological order.

        Raises:
            CyclicGraphError: If the graph has a directed cycle
        """
        try:
            return list(nx.lexicographical_topological_sort(self.graph))
        except nx.NetworkXUnfeasible:
            raise CyclicGraphError(f"Graph {self.name} contains a directed cycle") from None

    def is_acyclic(self) -> bool:
        return nx.is_directed_acyclic_graph(self.graph)

    def evaluate(self, assignment: Mapping[int, int], mask: int = 1) -> Dict[Tuple[int, str], int]:
        """
        Reference evaluator.

        Args:
            assignment: Value of every free source node (bit-parallel when mask > 1)
            mask: All-ones mask of the evaluation width

        Returns:
            Value of every (node, output pin)

        Raises:
            GraphError: If a source is unassigned, an input pin is unconnected,
                or the graph still contains sequential cells
            CyclicGraphError: If the graph has a cycle
        """
        values: Dict[Tuple[int, str], int] = {}
        for node_id in self.topological_order():
            node = self.node(node_id)
            if node.kind.is_source:
                if node_id not in assignment:
                    raise GraphError(f"No value assigned to source {node.name}")
                values[(node_id, SOURCE_PIN)] = assignment[node_id] & mask
                continue

            pins: Dict[str, int] = {}
            for edge in self.in_edges(node_id):
                pins[edge.dst_pin] = values[(edge.src, edge.src_pin)]
            for pin, function in self.output_functions(node_id).items():
                missing = function.variables() - pins.keys()
                if missing:
                    raise GraphError(f"Input pins {sorted(missing)} of {node.name} are unconnected")
                values[(node_id, pin)] = function.evaluate(pins, mask)
        return values

    def gate_count(self) -> int:
        return len(self.nodes_of_kind(NodeKind.CELL))

    def total_area(self) -> Optional[float]:
        """Summed area of all cell nodes, or None when any cell lacks area data."""
        total = 0.0
        for node_id in self.nodes_of_kind(NodeKind.CELL):
            area = self.cells[self.node(node_id).cell].area
            if area is None:
                return None
            total += area
        return total

    # -- export ---------------------------------------------------------------

    def to_json(self) -> dict:
        """Export in the ``Nodes``/``Edges`` JSON graph shape."""
        nodes = {}
        for node_id in self.nodes():
            nodes[self.node(node_id).name] = _node_to_json(self.node(node_id))
        edges = {}
        for index, edge in enumerate(self.edges(), start=1):
            edges[str(index)] = {
                'out': {'node': self.node(edge.src).name, 'port': edge.src_pin},
                'in': {'node': self.node(edge.dst).name, 'port': edge.dst_pin},
            }
        return {'Nodes': nodes, 'Edges': edges}

    @classmethod
    def from_json(cls, data: dict, cells: Mapping[str, CellDefinition], name: str = "circuit") -> 'CircuitGraph':
        """
        Build a graph from the ``Nodes``/``Edges`` JSON shape.

        A node ``type`` is either a node-kind keyword or a cell name.

        Raises:
            GraphError: On unknown cell types or edge endpoints
        """
        graph = cls(name)
        for node_name, entry in data.get('Nodes', {}).items():
            node = _node_from_json(node_name, entry, cells)
            if node.kind == NodeKind.CELL and node.cell not in graph.cells:
                graph.cells[node.cell] = cells[node.cell]
            graph.add_node(node)

        raw_edges = data.get('Edges', {})
        edge_entries = raw_edges.values() if isinstance(raw_edges, dict) else raw_edges
        for entry in edge_entries:
            src = graph.node_id(entry['out']['node'])
            dst = graph.node_id(entry['in']['node'])
            graph.add_edge(src, entry['out']['port'], dst, entry['in']['port'])
        logger.debug(f"Loaded graph {name} from JSON: {graph.num_nodes} nodes, {graph.num_edges} edges")
        return graph

    def to_dot(self) -> str:
        """Render the graph as Graphviz dot text."""
        return render_dot(self)

    def write(self, stem: Path) -> List[Path]:
        """Write ``stem.json`` and ``stem.dot``; return the written paths."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        json_path = stem.with_suffix('.json')
        dot_path = stem.with_suffix('.dot')
        json_path.write_text(json.dumps(self.to_json(), indent=2))
        dot_path.write_text(self.to_dot())
        return [json_path, dot_path]

    def __repr__(self) -> str:
        return f"CircuitGraph(name='{self.name}', nodes={self.num_nodes}, edges={self.num_edges})"


def _node_to_json(node: Node) -> dict:
    if node.kind == NodeKind.CELL:
        entry = {'type': node.cell}
    elif node.kind == NodeKind.CONST:
        entry = {'type': f"const{node.value}"}
    else:
        entry = {'type': node.kind.value}
    if node.kind == NodeKind.PASS_THROUGH:
        entry['data_pin'] = node.data_pin
        entry['outputs'] = list(node.outputs)
    if node.inverted:
        entry['inverted'] = sorted(node.inverted)
    if node.function is not None:
        entry['function'] = node.function.to_string()
    if node.origin is not None:
        entry['origin'] = node.origin
    return entry


def _node_from_json(name: str, entry: dict, cells: Mapping[str, CellDefinition]) -> Node:
    node_type = entry.get('type')
    if node_type in ('const0', 'const1'):
        return Node(name, NodeKind.CONST, value=int(node_type[-1]), origin=entry.get('origin'))
    keywords = {kind.value: kind for kind in NodeKind if kind not in (NodeKind.CELL, NodeKind.CONST)}
    if node_type in keywords:
        function = entry.get('function')
        return Node(
            name=name,
            kind=keywords[node_type],
            inverted=frozenset(entry.get('inverted', [])),
            data_pin=entry.get('data_pin'),
            outputs=tuple(entry.get('outputs', [])),
            function=parse_bool_expr(function) if function else None,
            origin=entry.get('origin'),
        )
    if node_type not in cells:
        raise GraphError(f"Node {name} has unknown type {node_type}")
    return Node(name, NodeKind.CELL, cell=node_type, origin=entry.get('origin'))


_DOT_SHAPES = {
    NodeKind.INPUT_PORT: "invhouse",
    NodeKind.OUTPUT_PORT: "house",
    NodeKind.CELL: "box",
    NodeKind.PASS_THROUGH: "cds",
    NodeKind.AUX_INPUT: "circle",
    NodeKind.CONST: "plaintext",
    NodeKind.STATE_INPUT: "invtrapezium",
    NodeKind.STATE_OUTPUT: "trapezium",
    NodeKind.OUTPUT_LOGIC: "diamond",
}


def render_dot(graph: CircuitGraph, highlight: Iterable[int] = ()) -> str:
    """Render a graph with the ``graph.dot.j2`` template, highlighting the given nodes."""
    template_dir = Path(__file__).parent.parent / "templates"
    env = Environment(loader=FileSystemLoader(template_dir), trim_blocks=True,
                      lstrip_blocks=True, keep_trailing_newline=True)
    template = env.get_template("graph.dot.j2")

    marked = set(highlight)
    nodes = []
    for node_id in graph.nodes():
        node = graph.node(node_id)
        if node.kind == NodeKind.CELL:
            label = f"{node.name}\\n{node.cell}"
        elif node.kind == NodeKind.CONST:
            label = str(node.value)
        elif node.kind == NodeKind.OUTPUT_LOGIC:
            label = f"{node.name}\\n{node.function.to_string()}"
        else:
            label = node.name
        nodes.append({
            'id': node_id,
            'label': label.replace('"', '\\"'),
            'shape': _DOT_SHAPES[node.kind],
            'highlight': node_id in marked,
        })
    edges = [
        {'src': edge.src, 'dst': edge.dst, 'label': f"{edge.src_pin}->{edge.dst_pin}"}
        for edge in graph.edges()
    ]
    return template.render(name=graph.name.replace('"', ''), nodes=nodes, edges=edges)
