"""
Fault configurations, fault injection and differential graphs.

A differential graph holds a non-faulty reference copy and a faulty copy of
the target, an input layer binding both copies to the same defined values
and shared free inputs, and an output-logic layer whose single root is 1
exactly when the fault is effective under the selected evaluation mode.
"""

import logging
from dataclasses import dataclass, field, replace
from itertools import combinations, product
from math import prod
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from .boolexpr import And, BoolExpr, Const, Not, Or, Var
from .cell_library import CellDefinition, CellLibrary
from .circuit_graph import SINK_PIN, SOURCE_PIN, CircuitGraph, Node, NodeKind, UnknownNode
from .extraction import ObservedBit, TargetGraph
from .fault_spec import (
    EvaluationMode, FaultSpecification, Replacement, default_mappings, replacements_for
)
from .sat_solver import SolverStatus
from .tseitin import tseitin

logger = logging.getLogger(__name__)

REFERENCE_PREFIX = "nf/"
FAULTY_PREFIX = "f/"
INPUT_PREFIX = "in/"
ROOT_NAME = "root"


class InjectionError(Exception):
    """Base exception for fault injection errors."""
    pass


class NoMappableLocations(InjectionError):
    """Raised when a fault model has no location with a fault mapping."""
    pass


class ArityMismatch(InjectionError):
    """Raised when a replacement cell needs more pins than the faulted node offers."""
    pass


class MissingFaultTarget(InjectionError):
    """Raised when a specific-effect analysis has no target output values."""
    pass


@dataclass(frozen=True)
class FaultConfig:
    """
    One fault configuration: k distinct locations with one replacement each.

    Replacements are cell names (transient fault) or the ints 0/1 (stuck-at).
    """
    faults: Tuple[Tuple[int, Replacement], ...]

    @property
    def locations(self) -> List[int]:
        return [location for location, _ in self.faults]

    def describe(self, graph: CircuitGraph) -> List[Dict[str, object]]:
        """Location names and mappings for reports."""
        described = []
        for location, replacement in self.faults:
            node = graph.node(location)
            described.append({
                'location': node.name,
                'cell': node.cell,
                'mapping': replacement,
            })
        return described


@dataclass(frozen=True)
class FaultLocation:
    node: int
    name: str
    replacements: Tuple[Replacement, ...]


def _mapping_table(spec: FaultSpecification, library: CellLibrary) -> Mapping[str, Tuple[Replacement, ...]]:
    if spec.fault_mappings is not None:
        return spec.fault_mappings
    return default_mappings(library)


def fault_locations(target: TargetGraph, spec: FaultSpecification,
                    library: CellLibrary) -> List[FaultLocation]:
    """
    Locations of a fault model with their resolved replacements.

    Explicit locations keep file order; exhaustive injection uses every cell
    of the target that has a mapping, ordered by name.

    Raises:
        NoMappableLocations: If no location has a replacement
        InjectionError: If an explicit location is not a gate of the target
    """
    graph = target.graph
    mappings = _mapping_table(spec, library)
    known_cells: Dict[str, CellDefinition] = dict(library.cells)
    known_cells.update(graph.cells)

    if spec.fault_locations:
        candidates = []
        for name in spec.fault_locations:
            try:
                node_id = graph.node_id(name)
            except UnknownNode:
                raise InjectionError(f"Fault location {name} is not part of target {target.name}") from None
            if graph.node(node_id).kind not in (NodeKind.CELL, NodeKind.PASS_THROUGH):
                raise InjectionError(f"Fault location {name} is not a gate or register")
            candidates.append(node_id)
    else:
        candidates = sorted(target.cell_nodes, key=lambda node_id: graph.node(node_id).name)

    locations = []
    for node_id in candidates:
        node = graph.node(node_id)
        replacements = replacements_for(node.cell, mappings, known_cells) if node.cell else ()
        if replacements:
            locations.append(FaultLocation(node_id, node.name, replacements))
        elif spec.fault_locations:
            logger.warning(f"Fault location {node.name} ({node.cell}) has no fault mapping; skipped")

    if not locations:
        raise NoMappableLocations(f"Fault model {spec.name} has no location with a fault mapping")
    return locations


def enumerate_fault_configs(target: TargetGraph, spec: FaultSpecification,
                            library: CellLibrary) -> Iterator[FaultConfig]:
    """
    Yield every fault configuration in deterministic order.

    Every k-subset of locations (in location order) crossed with every
    per-location replacement choice.

    Raises:
        NoMappableLocations: If no location has a replacement
    """
    locations = fault_locations(target, spec, library)
    for subset in combinations(locations, spec.simultaneous_faults):
        for choice in product(*(location.replacements for location in subset)):
            yield FaultConfig(tuple(
                (location.node, replacement) for location, replacement in zip(subset, choice)
            ))


def count_fault_configs(target: TargetGraph, spec: FaultSpecification, library: CellLibrary) -> int:
    """Number of configurations enumerate_fault_configs yields."""
    locations = fault_locations(target, spec, library)
    return sum(
        prod(len(location.replacements) for location in subset)
        for subset in combinations(locations, spec.simultaneous_faults)
    )


def inject_faults(target: TargetGraph, config: FaultConfig,
                  library: Optional[Mapping[str, CellDefinition]] = None) -> TargetGraph:
    """
    Return a copy of the target with the faults of a configuration applied.

    A stuck-at replacement turns the node into a constant source and drops its
    fan-in. A cell replacement binds the replacement's input and output pins
    positionally to the node's pins; surplus original inputs are disconnected.

    Raises:
        ArityMismatch: If the replacement has more inputs than the node, or
            fewer outputs than the node drives
    """
    graph = target.graph.copy()
    cells: Dict[str, CellDefinition] = dict(library or {})
    for location, replacement in config.faults:
        node = graph.node(location)
        if isinstance(replacement, int):
            graph.remove_in_edges(location)
            graph.move_out_edges(location, location, new_pin=SOURCE_PIN)
            graph.replace_node(location, Node(node.name, NodeKind.CONST, value=replacement,
                                              origin=node.origin or node.name))
            continue

        new_cell = graph.cells.get(replacement) or cells.get(replacement)
        if new_cell is None:
            raise InjectionError(f"Replacement cell {replacement} is not defined")
        _rebind_pins(graph, location, new_cell)
        graph.cells.setdefault(new_cell.name, new_cell)
        graph.replace_node(location, Node(node.name, NodeKind.CELL, cell=new_cell.name,
                                          origin=node.origin))

    return replace(target, graph=graph)


def _rebind_pins(graph: CircuitGraph, location: int, new_cell: CellDefinition) -> None:
    old_inputs = graph.input_pins(location)
    old_outputs = graph.output_pins(location)
    name = graph.node(location).name

    if new_cell.arity > len(old_inputs):
        raise ArityMismatch(f"{new_cell.name} needs {new_cell.arity} inputs, {name} has {len(old_inputs)}")
    input_map = dict(zip(old_inputs, new_cell.input_pins))

    used_outputs = {edge.src_pin for edge in graph.out_edges(location)}
    output_map = dict(zip(old_outputs, new_cell.output_pins))
    unmapped = used_outputs - output_map.keys()
    if unmapped:
        raise ArityMismatch(f"{new_cell.name} cannot drive outputs {sorted(unmapped)} of {name}")

    in_edges = graph.in_edges(location)
    out_edges = graph.out_edges(location)
    graph.remove_in_edges(location)
    graph.graph.remove_edges_from(list(graph.graph.out_edges(location, keys=True)))
    for edge in in_edges:
        if edge.dst_pin in input_map:
            graph.add_edge(edge.src, edge.src_pin, location, input_map[edge.dst_pin])
    for edge in out_edges:
        graph.add_edge(location, output_map[edge.src_pin], edge.dst, edge.dst_pin)


@dataclass
class DifferentialGraph:
    """
    Reference and faulty copies joined by an input layer and an output-logic root.

    Attributes:
        graph: The combined graph
        root: Output-logic root node id (boolean, output pin ``O``)
        mode: Evaluation mode the output logic implements
        reference: Target node id to reference-copy node id
        faulty: Target node id to faulty-copy node id
        shared_inputs: Name of each free target input to its shared input-layer node
        bindings: Compared signals per symbol (O_NF, O_F, O_NFA, O_FA)
        config: Fault configuration of the faulty copy
    """
    graph: CircuitGraph
    root: int
    mode: EvaluationMode
    reference: Dict[int, int] = field(default_factory=dict)
    faulty: Dict[int, int] = field(default_factory=dict)
    shared_inputs: Dict[str, int] = field(default_factory=dict)
    bindings: Dict[str, List[Tuple[int, str]]] = field(default_factory=dict)
    config: Optional[FaultConfig] = None

    @property
    def input_names(self) -> List[str]:
        return list(self.shared_inputs)

    def evaluate_root(self, assignment: Mapping[str, int], mask: int = 1) -> int:
        """Evaluate the root under an assignment of the shared inputs (by name)."""
        values = self.graph.evaluate(
            {node_id: assignment[name] for name, node_id in self.shared_inputs.items()}, mask
        )
        return values[(self.root, SOURCE_PIN)]


def _copy_into(diff: CircuitGraph, source: CircuitGraph, prefix: str,
               input_layer: Mapping[int, int]) -> Dict[int, int]:
    """Copy a target into the differential graph; sources become buffers fed by the input layer."""
    ids: Dict[int, int] = {}
    for node_id in source.nodes():
        node = source.node(node_id)
        name = prefix + node.name
        if node.kind.is_source:
            copied = Node(name, NodeKind.PASS_THROUGH, data_pin=SINK_PIN, outputs=(SOURCE_PIN,),
                          origin=node.name)
        else:
            copied = replace(node, name=name, origin=node.name)
        if copied.kind == NodeKind.CELL and copied.cell not in diff.cells:
            diff.cells[copied.cell] = source.cells[copied.cell]
        ids[node_id] = diff.add_node(copied)
        if node.kind.is_source:
            diff.add_edge(input_layer[node_id], SOURCE_PIN, ids[node_id], SINK_PIN)
    for edge in source.edges():
        diff.add_edge(ids[edge.src], edge.src_pin, ids[edge.dst], edge.dst_pin)
    return ids


def _compare_node(diff: CircuitGraph, name: str, signals: Sequence[Tuple[int, str]],
                  expected: Sequence[int], equal: bool) -> int:
    """
    Output-logic node comparing signals against constant bits.

    Equality is the conjunction of per-bit XNORs with the expected bits,
    inequality the disjunction of per-bit XORs; XNOR/XOR with a constant
    reduce to the signal or its negation.
    """
    literals: List[BoolExpr] = []
    for index, bit in enumerate(expected):
        var = Var(f"I{index}")
        matches = var if bit else Not(var)
        literals.append(matches if equal else Not(matches))

    if not literals:
        function: BoolExpr = Const(1 if equal else 0)
    elif len(literals) == 1:
        function = literals[0]
    else:
        function = And(tuple(literals)) if equal else Or(tuple(literals))

    node_id = diff.add_node(Node(name, NodeKind.OUTPUT_LOGIC, function=function))
    for index, (signal, pin) in enumerate(signals):
        diff.add_edge(signal, pin, node_id, f"I{index}")
    return node_id


def _faulty_pin(reference: CircuitGraph, faulty: CircuitGraph, bit: ObservedBit) -> str:
    """Pin of the faulty copy carrying an observed bit; injected nodes may rename their outputs."""
    pins = faulty.output_pins(bit.node)
    if bit.pin in pins:
        return bit.pin
    index = reference.output_pins(bit.node).index(bit.pin)
    return pins[min(index, len(pins) - 1)]


def build_differential(target: TargetGraph, faulty: TargetGraph, mode: EvaluationMode,
                       config: Optional[FaultConfig] = None) -> DifferentialGraph:
    """
    Assemble the differential graph of a target and its faulty copy.

    Output logic per mode:
        UNSPECIFIC:             (O_NF == O_E) and (O_F != O_E)
        UNSPECIFIC_WITH_ALERTS: the above and (O_NFA == O_EA) and (O_FA == O_EA)
        SPECIFIC:               (O_NF == O_E) and (O_F == O_EF)
        SPECIFIC_WITH_ALERTS:   the above and (O_NFA == O_EA) and (O_FA == O_EA)

    Raises:
        MissingFaultTarget: If a specific mode has no O_EF bits
    """
    if mode.is_specific and not target.fault_outputs:
        raise MissingFaultTarget(f"Specific-effect analysis of {target.name} needs output_fault_values")

    diff = CircuitGraph(f"{target.name}_diff")

    input_layer: Dict[int, int] = {}
    shared_inputs: Dict[str, int] = {}
    for node_id in target.graph.nodes():
        node = target.graph.node(node_id)
        if not node.kind.is_source:
            continue
        layer_name = INPUT_PREFIX + node.name
        if node_id in target.defined_inputs:
            layer_id = diff.add_node(Node(layer_name, NodeKind.CONST,
                                          value=target.defined_inputs[node_id], origin=node.name))
        else:
            layer_id = diff.add_node(Node(layer_name, NodeKind.AUX_INPUT, origin=node.name))
            shared_inputs[node.name] = layer_id
        input_layer[node_id] = layer_id

    reference = _copy_into(diff, target.graph, REFERENCE_PREFIX, input_layer)
    faulty_ids = _copy_into(diff, faulty.graph, FAULTY_PREFIX, input_layer)

    def signals(bits: List[ObservedBit], ids: Dict[int, int]) -> List[Tuple[int, str]]:
        if ids is reference:
            return [(ids[bit.node], bit.pin) for bit in bits]
        return [(ids[bit.node], _faulty_pin(target.graph, faulty.graph, bit)) for bit in bits]

    bindings = {
        'O_NF': signals(target.outputs, reference),
        'O_F': signals(target.outputs, faulty_ids),
        'O_NFA': signals(target.alerts, reference),
        'O_FA': signals(target.alerts, faulty_ids),
    }
    expected = [bit.value for bit in target.outputs]

    terms = [_compare_node(diff, "eq(O_NF,O_E)", bindings['O_NF'], expected, equal=True)]
    if mode.is_specific:
        bindings['O_F'] = signals(target.fault_outputs, faulty_ids)
        terms.append(_compare_node(diff, "eq(O_F,O_EF)", bindings['O_F'],
                                   [bit.value for bit in target.fault_outputs], equal=True))
    else:
        terms.append(_compare_node(diff, "neq(O_F,O_E)", bindings['O_F'], expected, equal=False))
    if mode.uses_alerts:
        alert_values = [bit.value for bit in target.alerts]
        terms.append(_compare_node(diff, "eq(O_NFA,O_EA)", bindings['O_NFA'], alert_values, equal=True))
        terms.append(_compare_node(diff, "eq(O_FA,O_EA)", bindings['O_FA'], alert_values, equal=True))

    root = diff.add_node(Node(ROOT_NAME, NodeKind.OUTPUT_LOGIC,
                              function=And(tuple(Var(f"I{index}") for index in range(len(terms))))))
    for index, term in enumerate(terms):
        diff.add_edge(term, SOURCE_PIN, root, f"I{index}")

    return DifferentialGraph(
        graph=diff,
        root=root,
        mode=mode,
        reference=reference,
        faulty=faulty_ids,
        shared_inputs=shared_inputs,
        bindings=bindings,
        config=config,
    )


@dataclass
class Verdict:
    """
    Outcome of one fault configuration.

    ``effective`` is None when the evaluation was inconclusive (resource limit
    or failure); ``witness`` is present exactly when the fault is effective.
    """
    effective: Optional[bool]
    witness: Optional[Dict[str, int]] = None
    stats: Dict[str, object] = field(default_factory=dict)
    reason: Optional[str] = None

    @property
    def inconclusive(self) -> bool:
        return self.effective is None


def evaluate(diff: DifferentialGraph, solver) -> Verdict:
    """
    Decide whether the root of a differential graph can be 1.

    Args:
        diff: Differential graph
        solver: Object with ``solve(cnf) -> SolverResult`` (see sat_solver)

    Returns:
        Verdict with the shared-input witness of an effective fault

    Raises:
        SolverError: If the solver fails
    """
    cnf = tseitin(diff)
    result = solver.solve(cnf)
    stats = dict(result.stats)
    stats.update({'variables': cnf.num_vars, 'clauses': len(cnf.clauses)})

    if result.status == SolverStatus.UNKNOWN:
        return Verdict(effective=None, stats=stats, reason=result.reason or "resource limit reached")
    if result.status == SolverStatus.UNSAT:
        return Verdict(effective=False, stats=stats)

    witness = {}
    for name, node_id in diff.shared_inputs.items():
        literal = cnf.var_map[(node_id, SOURCE_PIN)]
        value = result.model.get(abs(literal), False)
        witness[name] = int(value if literal > 0 else not value)
    return Verdict(effective=True, witness=witness, stats=stats)
