"""
Demo circuits.

Small mapped netlists (demo_cells.lib) with matching fault specifications:

- ``sanity``: two gates, one free input, the JSON graph shape next to the Verilog
- ``sp2v``: 3-bit multi-bit encoded valid signal driven by three independent rails
- ``tmr_counter``: triple-redundant up/down round counter with a sum-check alert
- ``sparse_fsm``: next-state logic of a sparsely encoded 6-bit FSM, faulted on its current state
- ``tmr_counter_wide``: the counter at a width of roughly 500 gates
"""

import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from jinja2 import Environment, FileSystemLoader

logger = logging.getLogger(__name__)

RESOURCE_DIR = Path(__file__).parent.parent / "resources"
TEMPLATE_DIR = Path(__file__).parent.parent / "templates"
DEMO_LIBRARY = "demo_cells.lib"

SP2V_HIGH = 0b011
SP2V_LOW = 0b100

FSM_STATES = {
    'IDLE': 0b001001,
    'INIT': 0b100011,
    'ROUND': 0b111101,
    'FINISH': 0b010000,
    'PRNG_RESEED': 0b100100,
    'CLEAR_S': 0b111010,
    'CLEAR_KD': 0b001110,
    'ERROR': 0b010111,
}
FSM_WIDTH = 6

COUNTER_WIDTH = 4
COUNTER_ROUNDS = 10
WIDE_COUNTER_WIDTH = 23

# Output pin of each demo cell
_OUTPUT_PIN = {
    'INV_X1': 'ZN', 'BUF_X1': 'Z', 'NAND2_X1': 'ZN', 'NOR2_X1': 'ZN', 'AND2_X1': 'ZN',
    'OR2_X1': 'ZN', 'XOR2_X1': 'Z', 'XNOR2_X1': 'ZN', 'AOI21_X1': 'ZN',
}
_INPUT_PINS = {
    'INV_X1': ('A',), 'BUF_X1': ('A',), 'NAND2_X1': ('A1', 'A2'), 'NOR2_X1': ('A1', 'A2'),
    'AND2_X1': ('A1', 'A2'), 'OR2_X1': ('A1', 'A2'), 'XOR2_X1': ('A', 'B'), 'XNOR2_X1': ('A', 'B'),
    'AOI21_X1': ('A1', 'B1', 'B2'),
}


def binary(value: int, width: int) -> str:
    """Sized binary literal, e.g. ``binary(4, 3) == "3'b100"``."""
    return f"{width}'b{value:0{width}b}"


def _escape(name: str) -> str:
    return f"\\{name} " if '[' in name else name


@dataclass
class DemoModule:
    """A structural module under construction; gates get sequential names U1, U2, ..."""
    name: str
    description: str = ""
    ports: List[Dict[str, Any]] = field(default_factory=list)
    wires: List[Dict[str, Any]] = field(default_factory=list)
    instances: List[Dict[str, Any]] = field(default_factory=list)
    _gates: int = 0
    _nets: int = 0

    def port(self, direction: str, name: str, width: Optional[int] = None) -> List[str]:
        self.ports.append({'direction': direction, 'name': name, 'width': width})
        return [f"{name}[{index}]" for index in range(width)] if width else [name]

    def wire(self, name: str, width: Optional[int] = None) -> List[str]:
        self.wires.append({'name': name, 'width': width})
        return [f"{name}[{index}]" for index in range(width)] if width else [name]

    def net(self) -> str:
        self._nets += 1
        name = f"n{self._nets}"
        self.wires.append({'name': name, 'width': None})
        return name

    def gate(self, cell: str, *inputs: str, out: Optional[str] = None, name: Optional[str] = None) -> str:
        """Instantiate a combinational cell and return its output net."""
        if name is None:
            self._gates += 1
            name = f"U{self._gates}"
        out = out or self.net()
        connections = list(zip(_INPUT_PINS[cell], inputs)) + [(_OUTPUT_PIN[cell], out)]
        self.instances.append({'cell': cell, 'name': _escape(name), 'connections': connections})
        return out

    def register(self, name: str, d: str, q: str, clock: str) -> None:
        self.instances.append({'cell': 'DFF_X1', 'name': _escape(name),
                               'connections': [('D', d), ('CK', clock), ('Q', q)]})

    def render(self) -> str:
        env = Environment(loader=FileSystemLoader(TEMPLATE_DIR), trim_blocks=True, lstrip_blocks=True,
                          keep_trailing_newline=True)
        return env.get_template("netlist.v.j2").render(
            name=self.name, description=self.description, ports=self.ports,
            wires=self.wires, instances=self.instances,
        )

    @property
    def gate_count(self) -> int:
        return sum(1 for instance in self.instances if instance['cell'] != 'DFF_X1')


def _fault_model(inputs: List[str], outputs: List[str], input_values: Dict[str, Any],
                 output_values: Dict[str, Any], simultaneous_faults: int = 1, **extra) -> Dict[str, Any]:
    model: Dict[str, Any] = {
        'simultaneous_faults': simultaneous_faults,
        'stages': {'stage_0': {'inputs': inputs, 'outputs': outputs, 'type': 'inout'}},
        'input_values': input_values,
        'output_values': output_values,
        'alert_values': {},
    }
    model.update(extra)
    return model


def sanity_demo() -> Tuple[DemoModule, Dict[str, Any], Dict[str, Any]]:
    """
    NAND2 feeding an AOI21: ``y = !(!(a & b) & (c | d))``.

    With a = b = c = 1 the NAND output is 0 and y = 1 for either value of the
    free input d; replacing the NAND by an AND flips y.
    """
    module = DemoModule("sanity", "Two-gate sanity circuit")
    a, b, c, d = (module.port('input', name)[0] for name in "abcd")
    y = module.port('output', 'y')[0]
    n1 = module.gate('NAND2_X1', a, b, out=module.wire('n1')[0], name='U1')
    module.gate('AOI21_X1', n1, c, d, out=y, name='U2')

    graph = {
        'Nodes': {
            'a': {'type': 'input'}, 'b': {'type': 'input'}, 'c': {'type': 'input'}, 'd': {'type': 'input'},
            'y': {'type': 'output'},
            'U1': {'type': 'NAND2_X1'},
            'U2': {'type': 'AOI21_X1'},
        },
        'Edges': {
            '1': {'out': {'node': 'a', 'port': 'O'}, 'in': {'node': 'U1', 'port': 'A1'}},
            '2': {'out': {'node': 'b', 'port': 'O'}, 'in': {'node': 'U1', 'port': 'A2'}},
            '3': {'out': {'node': 'U1', 'port': 'ZN'}, 'in': {'node': 'U2', 'port': 'A1'}},
            '4': {'out': {'node': 'c', 'port': 'O'}, 'in': {'node': 'U2', 'port': 'B1'}},
            '5': {'out': {'node': 'd', 'port': 'O'}, 'in': {'node': 'U2', 'port': 'B2'}},
            '6': {'out': {'node': 'U2', 'port': 'ZN'}, 'in': {'node': 'y', 'port': 'I'}},
        },
    }
    spec = {'fimodels': {
        'sanity_fe': _fault_model(
            ['a', 'b', 'c', 'd'], ['y'],
            {'a': {'i': {'0': 1}}, 'b': 1, 'c': "1'b1"},
            {'y': {'o': {'0': 1}}},
            node_fault_mapping={'NAND': ['AND', 0]},
            fault_locations=[],
        ),
    }}
    return module, graph, spec


def sp2v_demo() -> Tuple[DemoModule, Dict[str, Any]]:
    """
    Encoded ``out_valid_o = advance_i & last_round_i``.

    Bits 0 and 1 carry the value, bit 2 its inverse (HIGH = 3'b011,
    LOW = 3'b100); every bit has its own gate, so forging HIGH from LOW
    needs three faults.
    """
    module = DemoModule("sp2v_driver", "Multi-bit encoded valid signal")
    advance = module.port('input', 'advance_i')[0]
    last = module.port('input', 'last_round_i')[0]
    out = module.port('output', 'out_valid_o', 3)
    for bit in range(3):
        positive = (SP2V_HIGH >> bit) & 1
        module.gate('AND2_X1' if positive else 'NAND2_X1', advance, last, out=out[bit], name=f"u_rail_{bit}")

    spec = {'fimodels': {
        'sp2v_low_to_high': _fault_model(
            ['advance_i', 'last_round_i'], ['out_valid_o'],
            {'advance_i': 1, 'last_round_i': 0},
            {'out_valid_o': binary(SP2V_LOW, 3)},
            simultaneous_faults=3,
            output_fault_values={'out_valid_o': binary(SP2V_HIGH, 3)},
        ),
    }}
    return module, spec


def _incrementer(module: DemoModule, q: List[str]) -> List[str]:
    d = [module.gate('INV_X1', q[0])]
    carry = q[0]
    for bit in range(1, len(q)):
        d.append(module.gate('XOR2_X1', q[bit], carry))
        if bit < len(q) - 1:
            carry = module.gate('AND2_X1', q[bit], carry)
    return d


def _decrementer(module: DemoModule, q: List[str]) -> List[str]:
    d = [module.gate('INV_X1', q[0])]
    nonzero = q[0]
    for bit in range(1, len(q)):
        d.append(module.gate('XNOR2_X1', q[bit], nonzero))
        if bit < len(q) - 1:
            nonzero = module.gate('OR2_X1', nonzero, q[bit])
    return d


def _sum_check(module: DemoModule, a: List[str], b: List[str], expected: int, alert: str) -> None:
    """alert = (a + b mod 2**width) != expected"""
    total = [module.gate('XOR2_X1', a[0], b[0])]
    carry = module.gate('AND2_X1', a[0], b[0])
    for bit in range(1, len(a)):
        half = module.gate('XOR2_X1', a[bit], b[bit])
        total.append(module.gate('XOR2_X1', half, carry))
        if bit < len(a) - 1:
            generate = module.gate('AND2_X1', a[bit], b[bit])
            propagate = module.gate('AND2_X1', half, carry)
            carry = module.gate('OR2_X1', generate, propagate)

    literals = [s if (expected >> bit) & 1 else module.gate('INV_X1', s) for bit, s in enumerate(total)]
    match = literals[0]
    for literal in literals[1:-1]:
        match = module.gate('AND2_X1', match, literal)
    module.gate('NAND2_X1', match, literals[-1], out=alert)


def tmr_counter_demo(width: int = COUNTER_WIDTH, rounds: Optional[int] = None,
                     name: str = "tmr_counter") -> Tuple[DemoModule, Dict[str, Any]]:
    """
    Round counter with a redundant down counter, three redundant copies and a sum check.

    Each copy computes ``cnt + 1`` and ``rem - 1``; the copies are OR-combined
    per bit and the alert fires when the combined ``cnt + rem`` differs from
    the number of rounds.
    """
    if width < 2:
        raise ValueError("counter width must be at least 2")
    rounds = rounds if rounds is not None else min(COUNTER_ROUNDS, (1 << width) - 1)

    module = DemoModule(name, f"Triple-redundant {width}-bit round counter with sum-check alert")
    clock = module.port('input', 'clk_i')[0]
    alert = module.port('output', 'alert_o')[0]
    counter_out = module.port('output', 'rnd_ctr_o', width)
    cnt_q = module.wire('cnt_q_w', width)
    rem_q = module.wire('rem_q_w', width)
    cnt_d = module.wire('cnt_d', width)
    rem_d = module.wire('rem_d', width)

    copies = []
    for _copy in range(3):
        copies.append((_incrementer(module, cnt_q), _decrementer(module, rem_q)))

    for bit in range(width):
        for combined, index in ((cnt_d, 0), (rem_d, 1)):
            first = module.gate('OR2_X1', copies[0][index][bit], copies[1][index][bit])
            module.gate('OR2_X1', first, copies[2][index][bit], out=combined[bit])

    _sum_check(module, cnt_d, rem_d, rounds % (1 << width), alert)

    for bit in range(width):
        module.register(f"cnt_q[{bit}]", cnt_d[bit], cnt_q[bit], clock)
        module.register(f"rem_q[{bit}]", rem_d[bit], rem_q[bit], clock)
        module.gate('BUF_X1', cnt_q[bit], out=counter_out[bit], name=f"u_out_buf_{bit}")

    mask = (1 << width) - 1
    inputs = {'cnt_q': binary(1, width), 'rem_q': binary((rounds - 1) & mask, width)}
    outputs = {'cnt_q': binary(2, width), 'rem_q': binary((rounds - 2) & mask, width)}
    spec = {'fimodels': {
        f"{name}_fd": _fault_model(
            ['cnt_q', 'rem_q'], ['cnt_q', 'rem_q'], inputs, outputs,
            alert_values={'alert_o': 0},
        ),
        f"{name}_fe": _fault_model(['cnt_q', 'rem_q'], ['cnt_q', 'rem_q'], inputs, outputs),
    }}
    return module, spec


def _and_all(module: DemoModule, signals: List[str]) -> str:
    result = signals[0]
    for signal in signals[1:]:
        result = module.gate('AND2_X1', result, signal)
    return result


def _or_all(module: DemoModule, signals: List[str]) -> str:
    result = signals[0]
    for signal in signals[1:]:
        result = module.gate('OR2_X1', result, signal)
    return result


def sparse_fsm_demo() -> Tuple[DemoModule, Dict[str, Any]]:
    """
    Next-state logic of a sparsely encoded FSM, analyzed in state ROUND.

    Every state code is decoded from the current state; codes that decode
    to no state go to ERROR. Each current-state bit enters the decoder
    through its own buffer, the fault locations of both models. Valid codes
    are at least three bits apart, so one or two flipped bits always land
    in ERROR; flipping the three bits between ROUND and CLEAR_S is decoded
    as CLEAR_S, which stays in CLEAR_S until ``last_round_i``.
    """
    module = DemoModule("aes_fsm_sparse", "Sparsely encoded FSM next-state logic")
    clock = module.port('input', 'clk_i')[0]
    advance = module.port('input', 'advance_i')[0]
    last = module.port('input', 'last_round_i')[0]
    state_out = module.port('output', 'state_o', FSM_WIDTH)
    q = module.wire('state_q_w', FSM_WIDTH)
    d = module.wire('state_d', FSM_WIDTH)

    current = [module.gate('BUF_X1', q[bit], name=f"u_state_in_{bit}") for bit in range(FSM_WIDTH)]
    inverted = [module.gate('INV_X1', signal) for signal in current]
    decoded = {
        state: _and_all(module, [current[bit] if (code >> bit) & 1 else inverted[bit]
                                 for bit in reversed(range(FSM_WIDTH))])
        for state, code in FSM_STATES.items() if state != 'ERROR'
    }

    not_advance = module.gate('INV_X1', advance)
    not_last = module.gate('INV_X1', last)
    finish_cond = module.gate('AND2_X1', advance, last)
    valid = _or_all(module, list(decoded.values()))
    targets = {
        'IDLE': _or_all(module, [module.gate('AND2_X1', decoded['IDLE'], not_advance),
                                 decoded['CLEAR_KD'], decoded['PRNG_RESEED']]),
        'INIT': module.gate('AND2_X1', decoded['IDLE'], advance),
        'ROUND': module.gate('OR2_X1', decoded['INIT'],
                             module.gate('AND2_X1', decoded['ROUND'], module.gate('INV_X1', finish_cond))),
        'FINISH': module.gate('AND2_X1', decoded['ROUND'], finish_cond),
        'CLEAR_S': module.gate('OR2_X1', decoded['FINISH'],
                               module.gate('AND2_X1', decoded['CLEAR_S'], not_last)),
        'CLEAR_KD': module.gate('AND2_X1', decoded['CLEAR_S'], last),
        'ERROR': module.gate('INV_X1', valid),
    }

    for bit in range(FSM_WIDTH):
        terms = [signal for state, signal in targets.items() if (FSM_STATES[state] >> bit) & 1]
        module.gate('BUF_X1', _or_all(module, terms), out=d[bit], name=f"u_state_buf_{bit}")
        module.register(f"state_q[{bit}]", d[bit], q[bit], clock)
        module.gate('BUF_X1', q[bit], out=state_out[bit], name=f"u_state_out_{bit}")

    inputs = {'state_q': binary(FSM_STATES['ROUND'], FSM_WIDTH), 'advance_i': 1, 'last_round_i': 0}
    expected = {'state_q': binary(FSM_STATES['ROUND'], FSM_WIDTH)}
    locations = {f"u_state_in_{bit}": ['stage_0'] for bit in range(FSM_WIDTH)}
    boundary = (['state_q', 'advance_i', 'last_round_i'], ['state_q'])
    spec = {'fimodels': {
        'sparse_fsm_round_skip': _fault_model(
            *boundary, inputs, expected,
            simultaneous_faults=3,
            output_fault_values={'state_q': binary(FSM_STATES['CLEAR_S'], FSM_WIDTH)},
            fault_locations=locations,
        ),
        'sparse_fsm_round_error': _fault_model(
            *boundary, inputs, expected,
            output_fault_values={'state_q': binary(FSM_STATES['ERROR'], FSM_WIDTH)},
            fault_locations=locations,
        ),
    }}
    return module, spec


def _write(directory: Path, stem: str, module: DemoModule, spec: Dict[str, Any]) -> List[Path]:
    netlist = directory / f"{stem}.v"
    netlist.write_text(module.render())
    spec_path = directory / f"{stem}_spec.json"
    spec_path.write_text(json.dumps(spec, indent=2) + "\n")
    logger.info(f"Demo {stem}: {module.gate_count} gates -> {netlist}, {spec_path}")
    return [netlist, spec_path]


def generate_demos(out_dir: Union[str, Path]) -> List[Path]:
    """
    Write every demo netlist and fault specification plus the demo library.

    Returns:
        Written files
    """
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)

    library = directory / DEMO_LIBRARY
    shutil.copyfile(RESOURCE_DIR / DEMO_LIBRARY, library)
    written = [library]

    module, graph, spec = sanity_demo()
    written += _write(directory, "sanity", module, spec)
    graph_path = directory / "sanity_graph.json"
    graph_path.write_text(json.dumps(graph, indent=2) + "\n")
    written.append(graph_path)

    written += _write(directory, "sp2v", *sp2v_demo())
    written += _write(directory, "tmr_counter", *tmr_counter_demo())
    written += _write(directory, "sparse_fsm", *sparse_fsm_demo())
    written += _write(directory, "tmr_counter_wide",
                      *tmr_counter_demo(WIDE_COUNTER_WIDTH, rounds=(1 << 20) + 12345, name="tmr_counter_wide"))

    logger.info(f"Wrote {len(written)} demo files to {directory}")
    return written
