"""
Structural gate-level Verilog frontend.

Parses the subset of Verilog that synthesis tools emit for mapped designs
(module/port/wire declarations, cell instances with named connections and
``assign`` aliases) and builds a CircuitGraph against a cell library.
"""

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

from .cell_library import CellDefinition, CellLibrary, parse_library_json
from .circuit_graph import SINK_PIN, SOURCE_PIN, CircuitGraph, Node, NodeKind

logger = logging.getLogger(__name__)

CONST0 = "1'b0"
CONST1 = "1'b1"

_REJECTED_KEYWORDS = {
    'always': 'always block',
    'initial': 'initial block',
    'reg': 'reg declaration',
    'generate': 'generate block',
    'genvar': 'genvar declaration',
    'parameter': 'parameter',
    'localparam': 'localparam',
    'function': 'function',
    'task': 'task',
    'inout': 'inout port',
    'specify': 'specify block',
    'supply0': 'supply net',
    'supply1': 'supply net',
    'tri': 'tri net',
}

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<newline>\n)
  | (?P<escaped>\\\S+)
  | (?P<number>\d*'[sS]?[bBhHdDoO][0-9a-fA-FxXzZ_?]+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<symbol>[()\[\]:;,.={}\#@?+\-*/&|^~!<>])
""", re.VERBOSE)

_COMMENT = re.compile(r"//[^\n]*|/\*.*?\*/", re.DOTALL)


class NetlistError(Exception):
    """Base exception for netlist errors."""
    pass


class VerilogSyntaxError(NetlistError):
    """Raised when the netlist text does not follow the structural subset grammar."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"Syntax error at line {line}: {message}")


class UnknownConstruct(NetlistError):
    """Raised for Verilog features outside the structural subset."""

    def __init__(self, line: int, feature: str):
        self.line = line
        self.feature = feature
        super().__init__(f"Unsupported construct at line {line}: {feature}")


class UnresolvedCell(NetlistError):
    """Raised when an instance refers to a cell or module with no known function."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Unresolved cell or submodule: {name}")


class MultipleDrivers(NetlistError):
    """Raised when a net bit has more than one driver."""

    def __init__(self, net: str, drivers: List[str]):
        self.net = net
        self.drivers = drivers
        super().__init__(f"Net {net} has multiple drivers: {', '.join(drivers)}")


@dataclass
class Port:
    name: str
    direction: str
    msb: Optional[int] = None
    lsb: Optional[int] = None

    @property
    def width(self) -> int:
        return 1 if self.msb is None else abs(self.msb - self.lsb) + 1

    def bits(self) -> List[str]:
        """Net bits of the port, LSB first."""
        return _bit_names(self.name, self.msb, self.lsb)


@dataclass
class Wire:
    name: str
    msb: Optional[int] = None
    lsb: Optional[int] = None

    @property
    def width(self) -> int:
        return 1 if self.msb is None else abs(self.msb - self.lsb) + 1

    def bits(self) -> List[str]:
        return _bit_names(self.name, self.msb, self.lsb)


@dataclass
class Instance:
    """A cell or submodule instance with named pin connections (None = left open)."""
    name: str
    cell: str
    connections: Dict[str, Optional[str]]
    line: int = 0


@dataclass
class NetlistModule:
    """
    One parsed Verilog module, bit-blasted.

    Attributes:
        name: Module name
        ports: Port declarations in header order
        wires: Wire declarations
        instances: Cell and submodule instances
        aliases: Net-bit pairs joined by ``assign``
        constant_ties: Net bits tied to a constant by ``assign``
    """
    name: str
    ports: List[Port] = field(default_factory=list)
    wires: List[Wire] = field(default_factory=list)
    instances: List[Instance] = field(default_factory=list)
    aliases: List[Tuple[str, str]] = field(default_factory=list)
    constant_ties: Dict[str, int] = field(default_factory=dict)

    def port(self, name: str) -> Optional[Port]:
        for port in self.ports:
            if port.name == name:
                return port
        return None

    def port_bits(self, direction: str) -> List[str]:
        bits: List[str] = []
        for port in self.ports:
            if port.direction == direction:
                bits.extend(port.bits())
        return bits

    def net_bits(self) -> List[str]:
        """Every declared net bit (ports first, then wires)."""
        bits: List[str] = []
        for declared in list(self.ports) + list(self.wires):
            bits.extend(declared.bits())
        return bits

    def instantiated_names(self) -> List[str]:
        return [instance.cell for instance in self.instances]

    def __str__(self) -> str:
        return (f"NetlistModule({self.name}: {len(self.ports)} ports, "
                f"{len(self.wires)} wires, {len(self.instances)} instances)")


def _bit_names(name: str, msb: Optional[int], lsb: Optional[int]) -> List[str]:
    if msb is None:
        return [name]
    low, high = min(msb, lsb), max(msb, lsb)
    return [f"{name}[{index}]" for index in range(low, high + 1)]


@dataclass
class _Token:
    kind: str
    text: str
    line: int


def _tokenize(text: str) -> List[_Token]:
    # Comments are blanked out but keep their newlines so line numbers stay valid.
    stripped = _COMMENT.sub(lambda match: "\n" * match.group(0).count("\n"), text)
    tokens: List[_Token] = []
    line = 1
    position = 0
    while position < len(stripped):
        match = _TOKEN.match(stripped, position)
        if match is None:
            raise VerilogSyntaxError(line, f"unexpected character {stripped[position]!r}")
        kind = match.lastgroup
        value = match.group(kind)
        position = match.end()
        if kind == 'newline':
            line += 1
            continue
        if kind == 'ws':
            continue
        if kind == 'escaped':
            kind, value = 'ident', value[1:]
        tokens.append(_Token(kind, value, line))
    return tokens


class _Parser:
    """Recursive-descent parser over the token list."""

    def __init__(self, tokens: List[_Token]):
        self.tokens = tokens
        self.position = 0

    @property
    def current(self) -> Optional[_Token]:
        return self.tokens[self.position] if self.position < len(self.tokens) else None

    @property
    def line(self) -> int:
        if self.current is not None:
            return self.current.line
        return self.tokens[-1].line if self.tokens else 1

    def peek(self, text: str) -> bool:
        return self.current is not None and self.current.text == text

    def accept(self, text: str) -> bool:
        if self.peek(text):
            self.position += 1
            return True
        return False

    def expect(self, text: str) -> _Token:
        token = self.current
        if token is None or token.text != text:
            found = "end of file" if token is None else repr(token.text)
            raise VerilogSyntaxError(self.line, f"expected {text!r}, found {found}")
        self.position += 1
        return token

    def identifier(self) -> str:
        token = self.current
        if token is None or token.kind != 'ident':
            found = "end of file" if token is None else repr(token.text)
            raise VerilogSyntaxError(self.line, f"expected identifier, found {found}")
        if token.text in _REJECTED_KEYWORDS:
            raise UnknownConstruct(token.line, _REJECTED_KEYWORDS[token.text])
        self.position += 1
        return token.text

    def integer(self) -> int:
        token = self.current
        if token is None or token.kind != 'number' or not token.text.isdigit():
            raise VerilogSyntaxError(self.line, "expected integer")
        self.position += 1
        return int(token.text)

    def parse_modules(self) -> List[NetlistModule]:
        modules = []
        while self.current is not None:
            if self.current.text in _REJECTED_KEYWORDS:
                raise UnknownConstruct(self.line, _REJECTED_KEYWORDS[self.current.text])
            if self.current.text != 'module':
                raise VerilogSyntaxError(self.line, f"expected 'module', found {self.current.text!r}")
            modules.append(self.parse_module())
        return modules

    def parse_module(self) -> NetlistModule:
        self.expect('module')
        module = NetlistModule(name=self.identifier())
        if self.peek('#'):
            raise UnknownConstruct(self.line, 'parameterized module')

        header_names: List[str] = []
        if self.accept('('):
            if not self.peek(')'):
                self.parse_port_list(module, header_names)
            self.expect(')')
        self.expect(';')

        while not self.accept('endmodule'):
            if self.current is None:
                raise VerilogSyntaxError(self.line, "missing 'endmodule'")
            self.parse_item(module)

        declared = {port.name for port in module.ports}
        undeclared = [name for name in header_names if name not in declared]
        if undeclared:
            raise VerilogSyntaxError(self.line, f"ports without direction in module {module.name}: {undeclared}")
        order = {name: index for index, name in enumerate(header_names)}
        if order:
            module.ports.sort(key=lambda port: order.get(port.name, len(order)))
        return module

    def parse_port_list(self, module: NetlistModule, header_names: List[str]) -> None:
        if self.current is not None and self.current.text in ('input', 'output', 'inout'):
            # ANSI style header
            direction = None
            msb = lsb = None
            while True:
                if self.current is not None and self.current.text in ('input', 'output', 'inout'):
                    direction = self.identifier()
                    self.accept('wire')
                    msb, lsb = self.parse_range()
                name = self.identifier()
                module.ports.append(Port(name, direction, msb, lsb))
                if not self.accept(','):
                    break
            return

        while True:
            header_names.append(self.identifier())
            if not self.accept(','):
                break

    def parse_range(self) -> Tuple[Optional[int], Optional[int]]:
        if not self.accept('['):
            return None, None
        msb = self.integer()
        self.expect(':')
        lsb = self.integer()
        self.expect(']')
        return msb, lsb

    def parse_item(self, module: NetlistModule) -> None:
        token = self.current
        if token.text in ('input', 'output'):
            direction = self.identifier()
            self.accept('wire')
            msb, lsb = self.parse_range()
            for name in self.parse_name_list():
                existing = module.port(name)
                if existing is not None:
                    existing.direction, existing.msb, existing.lsb = direction, msb, lsb
                else:
                    module.ports.append(Port(name, direction, msb, lsb))
            return

        if token.text == 'wire':
            self.position += 1
            msb, lsb = self.parse_range()
            for name in self.parse_name_list():
                if module.port(name) is None:
                    module.wires.append(Wire(name, msb, lsb))
            return

        if token.text == 'assign':
            self.position += 1
            while True:
                self.parse_assignment(module)
                if not self.accept(','):
                    break
            self.expect(';')
            return

        if token.kind == 'ident':
            module.instances.append(self.parse_instance())
            return

        raise VerilogSyntaxError(token.line, f"unexpected {token.text!r}")

    def parse_name_list(self) -> List[str]:
        names = [self.identifier()]
        while self.accept(','):
            names.append(self.identifier())
        if self.peek('='):
            raise UnknownConstruct(self.line, 'net declaration assignment')
        self.expect(';')
        return names

    def parse_assignment(self, module: NetlistModule) -> None:
        line = self.line
        lhs = self.parse_net_reference()
        self.expect('=')
        rhs = self.parse_connection_value()
        if rhs is None:
            raise VerilogSyntaxError(line, "assign without right-hand side")
        module.aliases.append((lhs, rhs))

    def parse_net_reference(self) -> str:
        if self.peek('{'):
            raise UnknownConstruct(self.line, 'concatenation')
        name = self.identifier()
        if self.accept('['):
            index = self.integer()
            if self.peek(':'):
                raise UnknownConstruct(self.line, 'part-select')
            self.expect(']')
            return f"{name}[{index}]"
        return name

    def parse_connection_value(self) -> Optional[str]:
        token = self.current
        if token is None:
            raise VerilogSyntaxError(self.line, "unexpected end of file")
        if token.kind == 'number':
            self.position += 1
            return _constant_literal(token)
        if token.text == '{':
            raise UnknownConstruct(token.line, 'concatenation')
        if token.kind == 'ident':
            return self.parse_net_reference()
        if token.text in ('~', '!', '&', '|', '^', '+', '-', '?'):
            raise UnknownConstruct(token.line, 'expression')
        return None

    def parse_instance(self) -> Instance:
        line = self.line
        cell = self.identifier()
        if self.peek('#'):
            raise UnknownConstruct(self.line, 'parameter override')
        name = self.identifier()
        if self.peek('['):
            raise UnknownConstruct(self.line, 'instance array')
        self.expect('(')
        connections: Dict[str, Optional[str]] = {}
        if not self.peek(')'):
            while True:
                if not self.accept('.'):
                    raise UnknownConstruct(self.line, 'positional port connection')
                pin = self.identifier()
                self.expect('(')
                value = None if self.peek(')') else self.parse_connection_value()
                self.expect(')')
                if pin in connections:
                    raise VerilogSyntaxError(self.line, f"pin {pin} of {name} connected twice")
                connections[pin] = value
                if not self.accept(','):
                    break
        self.expect(')')
        self.expect(';')
        return Instance(name=name, cell=cell, connections=connections, line=line)


def _constant_literal(token: _Token) -> str:
    match = re.fullmatch(r"(\d*)'[sS]?([bBhHdDoO])([0-9a-fA-F_]+)", token.text)
    if match is None:
        raise UnknownConstruct(token.line, f"constant {token.text}")
    width = int(match.group(1)) if match.group(1) else None
    value = int(match.group(3).replace('_', ''), {'b': 2, 'o': 8, 'd': 10, 'h': 16}[match.group(2).lower()])
    if width not in (None, 1) or value > 1:
        raise UnknownConstruct(token.line, f"multi-bit constant {token.text}")
    return CONST1 if value else CONST0


def parse_netlist(text: str) -> List[NetlistModule]:
    """
    Parse structural Verilog into modules, in file order.

    Whole-bus ``assign`` statements between equally wide buses are expanded
    bit by bit.

    Raises:
        VerilogSyntaxError: On malformed text
        UnknownConstruct: On Verilog features outside the structural subset
    """
    tokens = _tokenize(text)
    modules = _Parser(tokens).parse_modules()
    for module in modules:
        _expand_assignments(module)
        _check_instance_names(module)
    logger.debug(f"Parsed {len(modules)} module(s): {', '.join(module.name for module in modules)}")
    return modules


def _widths(module: NetlistModule) -> Dict[str, Tuple[Optional[int], Optional[int]]]:
    return {declared.name: (declared.msb, declared.lsb) for declared in list(module.ports) + list(module.wires)}


def _expand_assignments(module: NetlistModule) -> None:
    ranges = _widths(module)
    expanded: List[Tuple[str, str]] = []
    for lhs, rhs in module.aliases:
        lhs_bits = _bit_names(lhs, *ranges[lhs]) if lhs in ranges else [lhs]
        if rhs in (CONST0, CONST1):
            if len(lhs_bits) != 1:
                raise UnknownConstruct(0, f"multi-bit constant assignment to {lhs}")
            module.constant_ties[lhs_bits[0]] = 1 if rhs == CONST1 else 0
            continue
        rhs_bits = _bit_names(rhs, *ranges[rhs]) if rhs in ranges else [rhs]
        if len(lhs_bits) != len(rhs_bits):
            raise NetlistError(f"Width mismatch in assign {lhs} = {rhs}")
        expanded.extend(zip(lhs_bits, rhs_bits))
    module.aliases = expanded


def _check_instance_names(module: NetlistModule) -> None:
    seen = set()
    for instance in module.instances:
        if instance.name in seen:
            raise NetlistError(f"Duplicate instance name {instance.name} in module {module.name}")
        seen.add(instance.name)


def select_top(modules: List[NetlistModule], name: Optional[str] = None) -> NetlistModule:
    """
    Pick the module to analyze.

    Args:
        modules: Parsed modules
        name: Requested module name; default is the last module no other module instantiates

    Raises:
        NetlistError: If the file has no modules or the name is unknown
    """
    if not modules:
        raise NetlistError("Netlist contains no modules")
    if name is not None:
        for module in modules:
            if module.name == name:
                return module
        raise NetlistError(f"Module {name} not found in netlist")
    instantiated = {cell for module in modules for cell in module.instantiated_names()}
    candidates = [module for module in modules if module.name not in instantiated]
    return (candidates or modules)[-1]


class _NetClasses:
    """Union-find over net bits joined by assign aliases."""

    def __init__(self):
        self.parent: Dict[str, str] = {}

    def find(self, net: str) -> str:
        self.parent.setdefault(net, net)
        root = net
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[net] != root:
            self.parent[net], net = root, self.parent[net]
        return root

    def union(self, a: str, b: str) -> None:
        root_a, root_b = self.find(a), self.find(b)
        if root_a != root_b:
            # Keep the lexicographically smaller name as representative for stable output
            if root_b < root_a:
                root_a, root_b = root_b, root_a
            self.parent[root_b] = root_a


def build_graph(module: NetlistModule, library: CellLibrary,
                submodule_functions: Optional[Mapping[str, CellDefinition]] = None) -> CircuitGraph:
    """
    Build the circuit graph of a module.

    One node per port bit and instance, a constant node per used constant, and
    an auxiliary input for every input pin that has no driver. One edge per
    (driver, sink pin) pair.

    Raises:
        UnresolvedCell: If an instance type is neither a library cell nor a submodule
        MultipleDrivers: If a net bit has more than one driver
        NetlistError: If an instance connects a pin its cell does not have
    """
    definitions: Dict[str, CellDefinition] = {}
    for instance in module.instances:
        definition = None
        if submodule_functions and instance.cell in submodule_functions:
            definition = submodule_functions[instance.cell]
        elif instance.cell in library:
            definition = library[instance.cell]
        if definition is None:
            raise UnresolvedCell(instance.cell)
        definitions[instance.cell] = definition

    graph = CircuitGraph(module.name, definitions)
    nets = _NetClasses()
    for lhs, rhs in module.aliases:
        nets.union(lhs, rhs)

    drivers: Dict[str, List[Tuple[int, str, str]]] = {}
    sinks: Dict[str, List[Tuple[int, str]]] = {}
    open_pins: List[Tuple[int, str, str]] = []

    def add_driver(net: str, node_id: int, pin: str, label: str) -> None:
        drivers.setdefault(nets.find(net), []).append((node_id, pin, label))

    def add_sink(net: str, node_id: int, pin: str) -> None:
        sinks.setdefault(nets.find(net), []).append((node_id, pin))

    const_ids: Dict[int, int] = {}

    def const_node(value: int) -> int:
        if value not in const_ids:
            const_ids[value] = graph.add_node(Node(CONST1 if value else CONST0, NodeKind.CONST, value=value))
        return const_ids[value]

    for bit in module.port_bits('input'):
        node_id = graph.add_node(Node(bit, NodeKind.INPUT_PORT))
        add_driver(bit, node_id, SOURCE_PIN, f"input {bit}")

    output_nodes = []
    for bit in module.port_bits('output'):
        node_id = graph.add_node(Node(bit, NodeKind.OUTPUT_PORT))
        output_nodes.append((bit, node_id))

    for net, value in module.constant_ties.items():
        add_driver(net, const_node(value), SOURCE_PIN, f"constant {value}")

    for instance in module.instances:
        definition = definitions[instance.cell]
        node_id = graph.add_node(Node(instance.name, NodeKind.CELL, cell=instance.cell))
        for pin in instance.connections:
            if pin not in definition.input_pins and pin not in definition.output_pins:
                raise NetlistError(f"Instance {instance.name} ({instance.cell}) has no pin {pin}")

        for pin in definition.output_pins:
            net = instance.connections.get(pin)
            if net is None:
                continue
            if net in (CONST0, CONST1):
                raise NetlistError(f"Output {instance.name}.{pin} is tied to a constant")
            add_driver(net, node_id, pin, f"{instance.name}.{pin}")

        for pin in definition.input_pins:
            net = instance.connections.get(pin)
            if net is None:
                open_pins.append((node_id, pin, instance.name))
            elif net in (CONST0, CONST1):
                graph.add_edge(const_node(1 if net == CONST1 else 0), SOURCE_PIN, node_id, pin)
            else:
                add_sink(net, node_id, pin)

    for bit, node_id in output_nodes:
        add_sink(bit, node_id, SINK_PIN)

    for net, net_drivers in drivers.items():
        if len(net_drivers) > 1:
            raise MultipleDrivers(net, [label for _, _, label in net_drivers])

    for net in sorted(sinks):
        net_drivers = drivers.get(net)
        for sink_id, sink_pin in sinks[net]:
            if net_drivers:
                driver_id, driver_pin, _ = net_drivers[0]
                graph.add_edge(driver_id, driver_pin, sink_id, sink_pin)
            else:
                open_pins.append((sink_id, sink_pin, graph.node(sink_id).name))

    for node_id, pin, owner in open_pins:
        _attach_aux_input(graph, node_id, pin, owner)

    logger.info(f"Built graph for module {module.name}: {graph.num_nodes} nodes, "
                f"{graph.num_edges} edges, {len(graph.diagnostics)} dangling input(s)")
    return graph


def _attach_aux_input(graph: CircuitGraph, node_id: int, pin: str, owner: str) -> None:
    """Repair an undriven input pin with a fresh auxiliary input node."""
    aux_id = graph.add_node(Node(f"aux:{owner}.{pin}", NodeKind.AUX_INPUT, origin=owner))
    graph.add_edge(aux_id, SOURCE_PIN, node_id, pin)
    message = f"DanglingInput({owner}, {pin})"
    graph.diagnostics.append(message)
    logger.warning(f"{message}: attached auxiliary input")


def load_submodule_functions(path: Union[str, Path]) -> Dict[str, CellDefinition]:
    """
    Load user-provided submodule functions (cell-library JSON shape).

    Raises:
        NetlistError: If the file cannot be read
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise NetlistError(f"Cannot read submodule functions {path}: {e}") from e
    return dict(parse_library_json(text).cells)


def load_netlist(path: Union[str, Path], library: CellLibrary, top: Optional[str] = None,
                 submodule_functions: Optional[Mapping[str, CellDefinition]] = None) -> CircuitGraph:
    """
    Load a ``.v`` netlist or a ``.json`` graph and return its circuit graph.

    Raises:
        NetlistError: If the file cannot be read or parsed
    """
    netlist_path = Path(path)
    try:
        text = netlist_path.read_text()
    except OSError as e:
        raise NetlistError(f"Cannot read netlist {netlist_path}: {e}") from e

    if netlist_path.suffix.lower() == '.json':
        cells = dict(library.cells)
        cells.update(submodule_functions or {})
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise NetlistError(f"Invalid JSON graph {netlist_path}: {e}") from e
        return CircuitGraph.from_json(data, cells, name=netlist_path.stem)

    module = select_top(parse_netlist(text), top)
    logger.info(f"Selected top module {module}")
    return build_graph(module, library, submodule_functions)
