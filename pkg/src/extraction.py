"""
Target extraction and preprocessing.

Preprocessing removes time dependencies: registers on a sequential loop are
split into a state input (current state) and a next-state sink, every other
register becomes a pass-through element. Extraction then cuts the
combinational target between the inputs and outputs named by a fault model
and records the value bindings of its boundary.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set

import networkx as nx

from .cell_library import CellLibrary
from .circuit_graph import (
    SINK_PIN, SOURCE_PIN, CircuitGraph, GraphError, Node, NodeKind, UnknownNode
)
from .fault_spec import BitVector, FaultSpecError, FaultSpecification, UnresolvedNode

logger = logging.getLogger(__name__)


class ExtractionError(Exception):
    """Base exception for extraction errors."""
    pass


class UnknownSequentialSemantics(ExtractionError):
    """Raised when the data pin of a sequential cell cannot be determined."""

    def __init__(self, cell: str):
        self.cell = cell
        super().__init__(f"Cannot determine the data pin of sequential cell {cell}; "
                         f"set it under [library] data_pins")


class EmptyTarget(ExtractionError):
    """Raised when no target input reaches any target output."""
    pass


class CombinationalLoop(ExtractionError):
    """Raised when a cycle without a register remains after preprocessing."""
    pass


@dataclass(frozen=True)
class ObservedBit:
    """One compared bit: the signal (node, pin) and the value it is compared against."""
    name: str
    node: int
    pin: str
    value: int


@dataclass
class TargetGraph:
    """
    Extracted, acyclic target circuit with its boundary bindings.

    Attributes:
        graph: Combinational target graph
        name: Fault model name
        defined_inputs: Source node id to its bound value
        undefined_inputs: Free source node ids (unbound stage inputs and auxiliary inputs)
        outputs: Expected output bits (O_E)
        fault_outputs: Target output bits of a specific-effect analysis (O_EF)
        alerts: Expected alert bits (O_EA)
        ge: Circuit size in gate equivalents
        warnings: Repaired or suspicious conditions found while extracting
    """
    graph: CircuitGraph
    name: str
    defined_inputs: Dict[int, int] = field(default_factory=dict)
    undefined_inputs: List[int] = field(default_factory=list)
    outputs: List[ObservedBit] = field(default_factory=list)
    fault_outputs: List[ObservedBit] = field(default_factory=list)
    alerts: List[ObservedBit] = field(default_factory=list)
    ge: float = 0.0
    warnings: List[str] = field(default_factory=list)

    @property
    def cell_nodes(self) -> List[int]:
        return self.graph.nodes_of_kind(NodeKind.CELL)

    def summary(self) -> dict:
        return {
            'name': self.name,
            'nodes': self.graph.num_nodes,
            'edges': self.graph.num_edges,
            'cells': len(self.cell_nodes),
            'defined_inputs': len(self.defined_inputs),
            'undefined_inputs': [self.graph.node(node_id).name for node_id in self.undefined_inputs],
            'ge': round(self.ge, 2),
            'warnings': list(self.warnings),
        }


def preprocess(graph: CircuitGraph) -> CircuitGraph:
    """
    Remove registers so the graph becomes purely combinational.

    Registers on a directed cycle are split into one state input per used
    output pin (named ``R:PIN``) and a next-state sink (``R:DATA_PIN``); all
    other registers become pass-through elements mapping their data input to
    the (possibly negated) outputs. Clock, reset and enable connections are
    dropped.

    Args:
        graph: Graph built from a netlist; cell semantics come from its own cell table

    Returns:
        Preprocessed copy of the graph

    Raises:
        UnknownSequentialSemantics: If a register has no known data pin
        CombinationalLoop: If a cycle remains
    """
    result = graph.copy()
    loop_registers = result.sequential_cycle_nodes()
    split = passed = 0

    for node_id in result.nodes():
        if not result.is_sequential(node_id):
            continue
        node = result.node(node_id)
        cell = result.cells[node.cell]
        if cell.data_pin is None or cell.data_pin not in cell.input_pins:
            raise UnknownSequentialSemantics(cell.name)

        if node_id in loop_registers:
            _split_register(result, node_id)
            split += 1
        else:
            result.remove_in_edges(node_id, [pin for pin in cell.input_pins if pin != cell.data_pin])
            result.replace_node(node_id, Node(
                name=node.name,
                kind=NodeKind.PASS_THROUGH,
                cell=node.cell,
                data_pin=cell.data_pin,
                outputs=tuple(cell.output_pins),
                inverted=frozenset(cell.inverted_outputs),
                origin=node.origin,
            ))
            passed += 1

    if not result.is_acyclic():
        cycle = nx.find_cycle(result.graph)
        names = [result.node(src).name for src, _dst, *_ in cycle]
        raise CombinationalLoop(f"Combinational loop through {' -> '.join(names)}")

    logger.info(f"Preprocessed {graph.name}: {split} loop register(s) split, "
                f"{passed} register(s) turned into pass-throughs")
    return result


def _split_register(graph: CircuitGraph, node_id: int) -> None:
    node = graph.node(node_id)
    cell = graph.cells[node.cell]

    sink_id = graph.add_node(Node(f"{node.name}:{cell.data_pin}", NodeKind.STATE_OUTPUT, origin=node.name))
    graph.move_in_edges(node_id, sink_id, pins=[cell.data_pin], new_pin=SINK_PIN)

    used_pins = sorted({edge.src_pin for edge in graph.out_edges(node_id)},
                       key=cell.output_pins.index)
    for pin in used_pins:
        state_id = graph.add_node(Node(
            f"{node.name}:{pin}",
            NodeKind.STATE_INPUT,
            inverted=frozenset({SOURCE_PIN}) if pin in cell.inverted_outputs else frozenset(),
            origin=node.name,
        ))
        graph.move_out_edges(node_id, state_id, pins=[pin], new_pin=SOURCE_PIN)

    if len(used_pins) > 1:
        message = f"SplitRegister({node.name}: {', '.join(used_pins)})"
        graph.diagnostics.append(message)
        logger.warning(f"{message}: register state used through several outputs; split per output pin")

    graph.remove_node(node_id)


def _resolve(graph: CircuitGraph, name: str, role: str) -> List[List[int]]:
    try:
        return graph.resolve(name, role)
    except UnknownNode:
        raise UnresolvedNode(name) from None


def _make_source(graph: CircuitGraph, node_id: int) -> None:
    """Turn a non-source node named as a target input into an input node."""
    node = graph.node(node_id)
    if node.kind.is_source or node.kind == NodeKind.CONST:
        return
    pin = graph.observed_pin(node_id)
    graph.remove_in_edges(node_id)
    graph.move_out_edges(node_id, node_id, pins=[pin], new_pin=SOURCE_PIN)
    for edge in graph.out_edges(node_id):
        if edge.src_pin != SOURCE_PIN:
            raise GraphError(f"Target input {node.name} drives logic through several outputs")
    graph.replace_node(node_id, Node(node.name, NodeKind.INPUT_PORT, origin=node.origin or node.name))


def _unique_name(graph: CircuitGraph, base: str) -> str:
    name = base
    suffix = 1
    while graph.has_name(name):
        suffix += 1
        name = f"{base}#{suffix}"
    return name


def extract_target(graph: CircuitGraph, spec: FaultSpecification,
                   library: Optional[CellLibrary] = None) -> TargetGraph:
    """
    Extract the target circuit of a fault model.

    Keeps the nodes on a path from a stage's inputs to its outputs (alerts
    count as outputs of every stage) and attaches an auxiliary input to every
    kept input pin whose driver was cut away.

    Args:
        graph: Preprocessed circuit graph
        spec: Fault model naming the target boundary
        library: Library used for gate-equivalent normalization

    Returns:
        Extracted target with its value bindings

    Raises:
        UnresolvedNode: If a name does not resolve in the graph
        WidthMismatch: If a value's width differs from its node's
        EmptyTarget: If no input reaches any output
    """
    work = graph.copy()
    warnings: List[str] = []
    _inputs, _outputs, connected = spec.boundary()

    for name in connected:
        as_input = {node_id for bit in _resolve(work, name, "input") for node_id in bit}
        as_output = {node_id for bit in _resolve(work, name, "output") for node_id in bit}
        if as_input != as_output:
            raise FaultSpecError(f"Stages connect through {name}, which is a split loop register")

    stage_sources: List[Set[int]] = []
    for stage in spec.stages:
        sources: Set[int] = set()
        for name in stage.inputs:
            for bit in _resolve(work, name, "input"):
                for node_id in bit:
                    if name not in connected:
                        _make_source(work, node_id)
                    sources.add(node_id)
        stage_sources.append(sources)

    alert_nodes: Set[int] = set()
    for name in spec.alert_values:
        alert_nodes |= {bit[0] for bit in _resolve(work, name, "output")}

    keep: Set[int] = set()
    sinks_all: Set[int] = set(alert_nodes)
    for stage, sources in zip(spec.stages, stage_sources):
        sinks = set(alert_nodes)
        for name in stage.outputs:
            sinks |= {bit[0] for bit in _resolve(work, name, "output")}
        sinks_all |= sinks
        keep |= work.nodes_between(sources, sinks)

    if not keep & sinks_all:
        raise EmptyTarget(f"No input of fault model {spec.name} reaches any of its outputs")

    for sink in sorted(sinks_all - keep):
        name = work.node(sink).name
        message = f"UnreachableOutput({name})"
        warnings.append(message)
        logger.warning(f"{message}: output not reachable from the target inputs; kept with free fan-in")
        keep.add(sink)

    target = work.induced_subgraph(keep)
    aux_count = 0
    for node_id in target.nodes():
        connected_pins = {edge.dst_pin for edge in target.in_edges(node_id)}
        for pin in target.input_pins(node_id):
            if pin in connected_pins:
                continue
            owner = target.node(node_id).name
            aux_id = target.add_node(Node(_unique_name(target, f"aux:{owner}.{pin}"),
                                          NodeKind.AUX_INPUT, origin=owner))
            target.add_edge(aux_id, SOURCE_PIN, node_id, pin)
            aux_count += 1

    kept_origins = {target.node(node_id).origin for node_id in target.nodes()}
    warnings.extend(
        message for message in graph.diagnostics
        if message.startswith("SplitRegister(") and message[len("SplitRegister("):].split(':')[0] in kept_origins
    )

    result = TargetGraph(graph=target, name=spec.name, warnings=warnings)
    _bind_inputs(result, work, spec)
    result.outputs = _observe(target, work, spec.output_values)
    result.fault_outputs = _observe(target, work, spec.output_fault_values or {})
    result.alerts = _observe(target, work, spec.alert_values)
    result.undefined_inputs = [
        node_id for node_id in target.nodes()
        if target.node(node_id).kind.is_source and node_id not in result.defined_inputs
    ]
    result.ge = gate_equivalents(target, library)

    logger.info(f"Extracted target {spec.name}: {len(result.cell_nodes)} cells, "
                f"{len(result.defined_inputs)} defined / {len(result.undefined_inputs)} undefined input bit(s), "
                f"{aux_count} auxiliary input(s), {result.ge:.2f} GE")
    return result


def _bind_inputs(result: TargetGraph, work: CircuitGraph, spec: FaultSpecification) -> None:
    target = result.graph
    for name, vector in spec.input_values.items():
        bits = _resolve(work, name, "input")
        fitted = vector.fit(len(bits), name)
        for node_ids, value in zip(bits, fitted.bits):
            for node_id in node_ids:
                if node_id not in target.graph:
                    logger.debug(f"Input bit of {name} does not reach the target outputs")
                    continue
                inverted = SOURCE_PIN in target.node(node_id).inverted
                result.defined_inputs[node_id] = value ^ int(inverted)


def _observe(target: CircuitGraph, work: CircuitGraph,
             values: Dict[str, BitVector]) -> List[ObservedBit]:
    observed: List[ObservedBit] = []
    for name, vector in values.items():
        bits = _resolve(work, name, "output")
        fitted = vector.fit(len(bits), name)
        for node_ids, value in zip(bits, fitted.bits):
            node_id = node_ids[0]
            observed.append(ObservedBit(
                name=target.node(node_id).name,
                node=node_id,
                pin=target.observed_pin(node_id),
                value=value,
            ))
    return observed


def gate_equivalents(graph: CircuitGraph, library: Optional[CellLibrary]) -> float:
    """
    Size of a graph in gate equivalents.

    Summed cell area over the smallest 2-input NAND area; the plain cell
    count when area data is missing.
    """
    nand2_area = library.nand2_area if library is not None else None
    area = graph.total_area()
    if nand2_area and area is not None:
        return area / nand2_area
    return float(graph.gate_count())
