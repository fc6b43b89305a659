"""
Shared fixtures for the netlist-fi test suite.
"""

import json
import random
from pathlib import Path
from typing import Dict, List, Optional

import pytest

from src.cell_library import CellLibrary, load_library
from src.circuit_graph import SINK_PIN, SOURCE_PIN, CircuitGraph, Node, NodeKind
from src.demo_circuits import sanity_demo
from src.extraction import extract_target, preprocess
from src.fault_spec import BitVector, FaultSpecification, Stage, parse_fault_spec

RESOURCE_DIR = Path(__file__).parent.parent / "resources"
DEMO_LIBRARY_PATH = RESOURCE_DIR / "demo_cells.lib"

# Combinational cells used by the random circuit factory
RANDOM_CELLS = ['INV_X1', 'BUF_X1', 'NAND2_X1', 'NOR2_X1', 'AND2_X1', 'OR2_X1',
                'XOR2_X1', 'XNOR2_X1', 'AOI21_X1']


@pytest.fixture(scope="session")
def demo_library() -> CellLibrary:
    """The bundled demo cell library."""
    return load_library(DEMO_LIBRARY_PATH)


def build_loop_graph(library: CellLibrary) -> CircuitGraph:
    """
    Circuit with a pipeline register and a loop register.

    U2 = NAND(In1, In2) feeds U1 next to the loop register U3; U1 and U3
    feed U4, which closes the loop into U3 and feeds the pipeline register
    U6 driving Out1 through U7. In3 clocks both registers.
    """
    data = {
        'Nodes': {
            'In1': {'type': 'input'}, 'In2': {'type': 'input'}, 'In3': {'type': 'input'},
            'Out1': {'type': 'output'},
            'U1': {'type': 'NAND2_X1'},
            'U2': {'type': 'NAND2_X1'},
            'U3': {'type': 'DFF_X1'},
            'U4': {'type': 'XOR2_X1'},
            'U6': {'type': 'DFF_X1'},
            'U7': {'type': 'INV_X1'},
        },
        'Edges': [
            {'out': {'node': 'In1', 'port': 'O'}, 'in': {'node': 'U2', 'port': 'A1'}},
            {'out': {'node': 'In2', 'port': 'O'}, 'in': {'node': 'U2', 'port': 'A2'}},
            {'out': {'node': 'U3', 'port': 'Q'}, 'in': {'node': 'U1', 'port': 'A1'}},
            {'out': {'node': 'U2', 'port': 'ZN'}, 'in': {'node': 'U1', 'port': 'A2'}},
            {'out': {'node': 'U1', 'port': 'ZN'}, 'in': {'node': 'U4', 'port': 'A'}},
            {'out': {'node': 'U3', 'port': 'Q'}, 'in': {'node': 'U4', 'port': 'B'}},
            {'out': {'node': 'U4', 'port': 'Z'}, 'in': {'node': 'U3', 'port': 'D'}},
            {'out': {'node': 'U4', 'port': 'Z'}, 'in': {'node': 'U6', 'port': 'D'}},
            {'out': {'node': 'In3', 'port': 'O'}, 'in': {'node': 'U3', 'port': 'CK'}},
            {'out': {'node': 'In3', 'port': 'O'}, 'in': {'node': 'U6', 'port': 'CK'}},
            {'out': {'node': 'U6', 'port': 'Q'}, 'in': {'node': 'U7', 'port': 'A'}},
            {'out': {'node': 'U7', 'port': 'ZN'}, 'in': {'node': 'Out1', 'port': 'I'}},
        ],
    }
    return CircuitGraph.from_json(data, library.cells, name="loop_circuit")


@pytest.fixture
def loop_graph(demo_library) -> CircuitGraph:
    return build_loop_graph(demo_library)


def random_circuit(library: CellLibrary, rng: random.Random, inputs: int, gates: int,
                   outputs: int, name: str = "random") -> CircuitGraph:
    """
    Random acyclic circuit: inputs i0.., gates g0.. over earlier signals, outputs o0..

    Output ``oN`` is driven by one of the last gates, so every output is
    reachable from the inputs.
    """
    graph = CircuitGraph(name, {cell: library[cell] for cell in RANDOM_CELLS})
    signals: List[tuple] = []
    for index in range(inputs):
        signals.append((graph.add_node(Node(f"i{index}", NodeKind.INPUT_PORT)), SOURCE_PIN))

    gate_outputs = []
    for index in range(gates):
        cell = library[rng.choice(RANDOM_CELLS)]
        node_id = graph.add_node(Node(f"g{index}", NodeKind.CELL, cell=cell.name))
        for pin in cell.input_pins:
            src, src_pin = rng.choice(signals)
            graph.add_edge(src, src_pin, node_id, pin)
        signals.append((node_id, cell.output_pins[0]))
        gate_outputs.append((node_id, cell.output_pins[0]))

    tail = gate_outputs[-max(outputs, gates // 3):]
    for index in range(outputs):
        src, src_pin = tail[index % len(tail)]
        sink = graph.add_node(Node(f"o{index}", NodeKind.OUTPUT_PORT))
        graph.add_edge(src, src_pin, sink, SINK_PIN)
    return graph


def random_spec(rng: random.Random, inputs: int, outputs: int, specific: bool, alerts: bool,
                simultaneous_faults: int = 1, defined: Optional[int] = None) -> FaultSpecification:
    """
    Fault model over a random circuit.

    The last output serves as alert when ``alerts`` is set; ``defined`` inputs
    (random subset) get random values, the rest stay free.
    """
    names = [f"i{index}" for index in range(inputs)]
    compared = [f"o{index}" for index in range(outputs - 1 if alerts else outputs)]
    defined_count = rng.randint(0, inputs // 2) if defined is None else defined
    input_values: Dict[str, BitVector] = {
        name: BitVector.from_int(rng.randint(0, 1), 1) for name in rng.sample(names, defined_count)
    }
    output_values = {name: BitVector.from_int(rng.randint(0, 1), 1) for name in compared}
    fault_values = None
    if specific:
        fault_values = {name: BitVector.from_int(rng.randint(0, 1), 1) for name in compared}
    alert_values = {f"o{outputs - 1}": BitVector.from_int(0, 1)} if alerts else {}
    return FaultSpecification(
        name="random",
        stages=(Stage("stage_0", tuple(names), tuple(compared)),),
        input_values=input_values,
        output_values=output_values,
        output_fault_values=fault_values,
        alert_values=alert_values,
        simultaneous_faults=simultaneous_faults,
    )


def sanity_target(library: CellLibrary, **model_overrides):
    """Extracted sanity target with its fault model and mode; overrides patch the model entry."""
    _module, data, document = sanity_demo()
    document['fimodels']['sanity_fe'].update(model_overrides)
    graph = preprocess(CircuitGraph.from_json(data, library.cells, name="sanity"))
    _name, spec, mode = parse_fault_spec(json.dumps(document))[0]
    return extract_target(graph, spec, library), spec, mode


@pytest.fixture
def random_circuit_factory(demo_library):
    """Factory ``(seed, inputs, gates, outputs) -> CircuitGraph``."""
    def factory(seed: int, inputs: int = 6, gates: int = 12, outputs: int = 3) -> CircuitGraph:
        return random_circuit(demo_library, random.Random(seed), inputs, gates, outputs)
    return factory
