"""
Standard cell library handling for netlist-fi.

Converts a liberty-format library (or the JSON cell-library format) into
CellDefinition objects whose boolean functions give netlist nodes their
semantics. Only the subset needed for logical analysis is interpreted:
``library``, ``cell``, ``pin``, ``ff``, ``latch``, ``area``, ``direction``,
``function`` and ``clock``. Every other group or attribute is parsed
generically and ignored.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

from lark import Lark, Transformer, Token
from lark.exceptions import UnexpectedInput

from .boolexpr import (
    BoolExpr, ExpressionError, Not, Var, parse_bool_expr, truth_table
)

logger = logging.getLogger(__name__)

# Truth table of a 2-input NAND as produced by boolexpr.truth_table
NAND2_TRUTH_TABLE = 0b0111

# Conventional state variables of liberty ff/latch groups
STATE_VARIABLES = ("IQ", "IQN")


class LibraryError(Exception):
    """Base exception for cell library errors."""
    pass


class MalformedLiberty(LibraryError):
    """Raised for unbalanced groups or unparsable function strings."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"Malformed liberty at line {line}: {reason}")


class DuplicateCell(LibraryError):
    """Raised when a cell name is defined twice."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Duplicate cell definition: {name}")


class MissingPin(LibraryError):
    """Raised when an evaluation assignment lacks an input pin."""
    pass


class NoFunctionForPin(LibraryError):
    """Raised when evaluating an output pin that has no function."""
    pass


class InvalidCell(LibraryError):
    """Raised when a cell definition violates its invariants."""
    pass


@dataclass
class CellDefinition:
    """
    Logical view of one standard cell.

    Attributes:
        name: Cell name, e.g. AOI21_X2
        input_pins: Input pins in library order (used for positional binding)
        output_pins: Output pins in library order
        functions: Output pin to boolean function (combinational cells)
        is_sequential: True for flip-flops and latches
        clock_pin: Clock or enable pin of a sequential cell
        data_pin: Data pin of a sequential cell
        area: Cell area in library units
        inverted_outputs: Outputs of a sequential cell that carry the negated state
    """
    name: str
    input_pins: List[str]
    output_pins: List[str]
    functions: Dict[str, BoolExpr] = field(default_factory=dict)
    is_sequential: bool = False
    clock_pin: Optional[str] = None
    data_pin: Optional[str] = None
    area: Optional[float] = None
    inverted_outputs: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        """Validate the cell after initialization."""
        self.validate()

    def validate(self) -> None:
        """
        Validate cell data.

        Raises:
            InvalidCell: If validation fails
        """
        if not self.name:
            raise InvalidCell("Cell name cannot be empty")

        pins = list(self.input_pins) + list(self.output_pins)
        if len(set(pins)) != len(pins):
            raise InvalidCell(f"Pin names must be unique within cell {self.name}")

        declared = set(self.input_pins)
        for pin, function in self.functions.items():
            if pin not in self.output_pins:
                raise InvalidCell(f"Function given for unknown output {self.name}.{pin}")
            undeclared = function.variables() - declared
            if undeclared:
                raise InvalidCell(
                    f"Function of {self.name}.{pin} references undeclared pins {sorted(undeclared)}"
                )

        if not self.is_sequential:
            missing = [pin for pin in self.output_pins if pin not in self.functions]
            if missing:
                raise InvalidCell(f"Combinational cell {self.name} lacks functions for {missing}")

        if self.area is not None and self.area < 0:
            raise InvalidCell(f"Area of {self.name} cannot be negative")

        stray = [pin for pin in self.inverted_outputs if pin not in self.output_pins]
        if stray:
            raise InvalidCell(f"Inverted outputs {stray} of {self.name} are not output pins")

    @property
    def arity(self) -> int:
        """Number of input pins."""
        return len(self.input_pins)

    def evaluate(self, output_pin: str, assignment: Mapping[str, int], mask: int = 1) -> int:
        """
        Evaluate one output of the cell.

        Args:
            output_pin: Output pin to evaluate
            assignment: Input pin values
            mask: Evaluation width mask (see BoolExpr.evaluate)

        Returns:
            Output value

        Raises:
            NoFunctionForPin: If the pin has no function
            MissingPin: If an input the function needs is not assigned
        """
        function = self.functions.get(output_pin)
        if function is None:
            raise NoFunctionForPin(f"Cell {self.name} has no function for pin {output_pin}")
        try:
            return function.evaluate(assignment, mask)
        except KeyError as e:
            raise MissingPin(f"Assignment for {self.name} lacks pin {e.args[0]}") from None

    def to_dict(self) -> dict:
        """Convert to the JSON cell-library entry shape."""
        data: Dict[str, Any] = {
            'input_pins': list(self.input_pins),
            'output_pins': list(self.output_pins),
            'boolean_function': {pin: expr.to_string() for pin, expr in self.functions.items()},
        }
        if self.area is not None:
            data['area'] = self.area
        if self.is_sequential:
            data['sequential'] = {
                'data_pin': self.data_pin,
                'clock_pin': self.clock_pin,
                'inverted_outputs': list(self.inverted_outputs),
            }
        return data

    @classmethod
    def from_dict(cls, name: str, data: dict) -> 'CellDefinition':
        """
        Create a CellDefinition from a JSON cell-library entry.

        ``boolean_function`` may be a map ``pin -> expression``, a single
        ``"OUT = EXPR"`` string, or a list of such strings.
        """
        input_pins = _as_list(data.get('input_pins', []))
        output_pins = _as_list(data.get('output_pins', []))
        raw_functions = data.get('boolean_function', {})

        if isinstance(raw_functions, str):
            raw_functions = [raw_functions]
        if isinstance(raw_functions, list):
            parsed: Dict[str, str] = {}
            for entry in raw_functions:
                if '=' not in entry:
                    if len(output_pins) != 1:
                        raise InvalidCell(f"Cell {name}: function '{entry}' does not name its output")
                    parsed[output_pins[0]] = entry
                    continue
                pin, expression = entry.split('=', 1)
                parsed[pin.strip()] = expression.strip()
            raw_functions = parsed

        functions = {}
        for pin, expression in raw_functions.items():
            try:
                functions[pin] = parse_bool_expr(expression, input_pins)
            except ExpressionError as e:
                raise InvalidCell(f"Cell {name}, pin {pin}: {e}") from e

        sequential = data.get('sequential')
        return cls(
            name=name,
            input_pins=input_pins,
            output_pins=output_pins,
            functions=functions,
            is_sequential=bool(sequential),
            clock_pin=(sequential or {}).get('clock_pin'),
            data_pin=(sequential or {}).get('data_pin'),
            area=data.get('area'),
            inverted_outputs=list((sequential or {}).get('inverted_outputs', [])),
        )


def _as_list(value: Union[str, Iterable[str]]) -> List[str]:
    if isinstance(value, str):
        return [value]
    return list(value)


class CellLibrary:
    """
    Collection of cell definitions keyed by name.

    The library is treated as immutable once loaded.
    """

    def __init__(self, cells: Optional[Iterable[CellDefinition]] = None, name: str = "library"):
        self.name = name
        self.cells: Dict[str, CellDefinition] = {}
        for cell in cells or []:
            self.add(cell)

    def add(self, cell: CellDefinition) -> None:
        """
        Add a cell.

        Raises:
            DuplicateCell: If the name is already present
        """
        if cell.name in self.cells:
            raise DuplicateCell(cell.name)
        self.cells[cell.name] = cell

    def __contains__(self, name: str) -> bool:
        return name in self.cells

    def __getitem__(self, name: str) -> CellDefinition:
        return self.cells[name]

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells.values())

    def get(self, name: str) -> Optional[CellDefinition]:
        return self.cells.get(name)

    @property
    def nand2_area(self) -> Optional[float]:
        """
        Area of the smallest 2-input NAND, used to normalize gate equivalents.

        Falls back to the smallest cell area when the library has area data
        but no NAND2; None when no cell has an area.
        """
        areas = [cell.area for cell in self.cells.values() if cell.area]
        if not areas:
            return None

        nand_areas = [
            cell.area for cell in self.cells.values()
            if cell.area and is_nand2(cell)
        ]
        if nand_areas:
            return min(nand_areas)

        logger.warning(f"Library {self.name} has no 2-input NAND; using smallest cell area for GE")
        return min(areas)

    def to_dict(self) -> dict:
        """Convert to the JSON cell-library format."""
        return {name: cell.to_dict() for name, cell in self.cells.items()}


def is_nand2(cell: CellDefinition) -> bool:
    """Check whether a cell computes a 2-input NAND on its single output."""
    if cell.is_sequential or cell.arity != 2 or len(cell.output_pins) != 1:
        return False
    function = cell.functions[cell.output_pins[0]]
    return truth_table(function, cell.input_pins) == NAND2_TRUTH_TABLE


def evaluate_cell(cell: CellDefinition, output_pin: str, assignment: Mapping[str, int]) -> int:
    """
    Evaluate one output of a cell under a complete input assignment.

    Raises:
        MissingPin: If the assignment lacks an input pin
        NoFunctionForPin: If the output pin has no function
    """
    missing = [pin for pin in cell.input_pins if pin not in assignment]
    if missing:
        raise MissingPin(f"Assignment for {cell.name} lacks pins {missing}")
    return cell.evaluate(output_pin, assignment)


# Generic liberty syntax: groups, simple attributes and complex attributes.
_LIBERTY_GRAMMAR = r"""
    start: group

    group: WORD "(" [arguments] ")" "{" _statement* "}"
    _statement: group
              | simple_attribute
              | complex_attribute
    simple_attribute: WORD ":" _value ";"?
    complex_attribute: WORD "(" [arguments] ")" ";"?
    arguments: _value ("," _value)*
    _value: STRING | WORD

    STRING: /"(?:[^"\\]|\\.)*"/s
    WORD: /[^\s"(){};:,\\]+/
    COMMENT.2: /\/\*(.|\n)*?\*\// | /\/\/[^\n]*/
    CONTINUATION.2: /\\\r?\n/

    %import common.WS
    %ignore WS
    %ignore COMMENT
    %ignore CONTINUATION
"""

_liberty_parser: Optional[Lark] = None


def _get_liberty_parser() -> Lark:
    global _liberty_parser
    if _liberty_parser is None:
        _liberty_parser = Lark(_LIBERTY_GRAMMAR, parser="lalr", propagate_positions=True)
    return _liberty_parser


@dataclass
class LibertyGroup:
    """One ``name(args) { ... }`` group of a liberty file."""
    kind: str
    args: List[str]
    line: int
    attributes: Dict[str, Any] = field(default_factory=dict)
    groups: List['LibertyGroup'] = field(default_factory=list)

    def subgroups(self, kind: str) -> List['LibertyGroup']:
        return [group for group in self.groups if group.kind == kind]


def _unquote(token: Token) -> str:
    text = str(token)
    if text.startswith('"') and text.endswith('"'):
        text = text[1:-1].replace('\\\n', '').replace('\\\r\n', '')
    return text.strip()


class _LibertyTreeBuilder(Transformer):
    """Builds LibertyGroup objects from the generic parse tree."""

    def arguments(self, children) -> List[str]:
        return [_unquote(child) for child in children if child is not None]

    def simple_attribute(self, children) -> Tuple[str, str, Any]:
        return ('simple', str(children[0]), _unquote(children[1]))

    def complex_attribute(self, children) -> Tuple[str, str, Any]:
        return ('complex', str(children[0]), children[1] or [])

    def group(self, children) -> LibertyGroup:
        kind_token = children[0]
        group = LibertyGroup(
            kind=str(kind_token),
            args=children[1] or [],
            line=getattr(kind_token, 'line', 0) or 0,
        )
        for child in children[2:]:
            if isinstance(child, LibertyGroup):
                group.groups.append(child)
            elif isinstance(child, tuple):
                _, name, value = child
                group.attributes[name] = value
        return group

    def start(self, children) -> LibertyGroup:
        return children[0]


def parse_liberty(text: str,
                  sequential_overrides: Optional[Mapping[str, str]] = None,
                  data_pins: Optional[Mapping[str, str]] = None,
                  inverted_outputs: Optional[Mapping[str, Iterable[str]]] = None) -> CellLibrary:
    """
    Parse a liberty-subset library.

    Args:
        text: Liberty source text
        sequential_overrides: Cell name to data pin for sequential cells that
            lack ``ff``/``latch`` groups
        data_pins: Cell name to data pin for sequential cells whose next-state
            function is not a single pin
        inverted_outputs: Cell name to the outputs of a sequential cell that carry
            the negated state, for cells whose pins do not say so through ``IQN``

    Returns:
        Library holding every cell with logical semantics

    Raises:
        MalformedLiberty: On syntax errors or unparsable function strings
        DuplicateCell: If a cell is defined twice
    """
    try:
        tree = _get_liberty_parser().parse(text)
    except UnexpectedInput as e:
        line = getattr(e, 'line', -1)
        if line is None or line < 0:
            line = text.count('\n') + 1
        raise MalformedLiberty(line, _describe_unexpected(e)) from e

    root = _LibertyTreeBuilder().transform(tree)
    library = CellLibrary(name=root.args[0] if root.args else "library")
    sequential_overrides = dict(sequential_overrides or {})
    data_pins = dict(data_pins or {})
    inverted_outputs = {cell: list(pins) for cell, pins in (inverted_outputs or {}).items()}

    skipped = 0
    for cell_group in root.subgroups('cell'):
        cell = _convert_cell(cell_group, sequential_overrides, data_pins, inverted_outputs)
        if cell is None:
            skipped += 1
            continue
        library.add(cell)

    logger.info(f"Parsed liberty library {library.name}: {len(library)} cells "
                f"({skipped} without logical function skipped)")
    return library


def _describe_unexpected(error: UnexpectedInput) -> str:
    token = getattr(error, 'token', None)
    if token is not None and getattr(token, 'type', None) == '$END':
        return "unexpected end of input (unbalanced braces?)"
    if token is not None:
        return f"unexpected token {str(token)!r}"
    char = getattr(error, 'char', None)
    if char is not None:
        return f"unexpected character {char!r}"
    return "unexpected input"


def _convert_cell(group: LibertyGroup, sequential_overrides: Dict[str, str], data_pins: Dict[str, str],
                  inverted_outputs: Dict[str, List[str]]) -> Optional[CellDefinition]:
    """Convert a liberty ``cell`` group, returning None for cells without logic."""
    name = group.args[0] if group.args else ""
    area = group.attributes.get('area')
    try:
        area_value = float(area) if area not in (None, "") else None
    except (TypeError, ValueError):
        raise MalformedLiberty(group.line, f"cell {name} has a non-numeric area {area!r}") from None

    input_pins: List[str] = []
    output_pins: List[str] = []
    function_text: Dict[str, str] = {}
    clock_pin: Optional[str] = None

    for pin_group in group.subgroups('pin'):
        direction = pin_group.attributes.get('direction', '')
        for pin_name in pin_group.args:
            if direction in ('input', 'in'):
                input_pins.append(pin_name)
                if pin_group.attributes.get('clock') == 'true':
                    clock_pin = pin_name
            elif direction in ('output', 'out', 'inout'):
                output_pins.append(pin_name)
                if 'function' in pin_group.attributes:
                    function_text[pin_name] = pin_group.attributes['function']

    state_groups = group.subgroups('ff') + group.subgroups('latch')

    if state_groups:
        return _sequential_cell(name, group, state_groups[0], input_pins, output_pins,
                                function_text, clock_pin, area_value, data_pins,
                                inverted_outputs.get(name, []))

    if name in sequential_overrides:
        data_pin = sequential_overrides[name]
        return CellDefinition(
            name=name, input_pins=input_pins, output_pins=output_pins,
            is_sequential=True, clock_pin=clock_pin, data_pin=data_pin, area=area_value,
            inverted_outputs=_override_inversion(name, output_pins, function_text, inverted_outputs.get(name, [])),
        )

    if not function_text:
        logger.debug(f"Skipping cell {name}: no logical function")
        return None

    functions: Dict[str, BoolExpr] = {}
    for pin, text in function_text.items():
        try:
            functions[pin] = parse_bool_expr(text, input_pins)
        except ExpressionError as e:
            raise MalformedLiberty(group.line, f"cell {name} pin {pin}: {e}") from e

    return CellDefinition(
        name=name,
        input_pins=input_pins,
        output_pins=[pin for pin in output_pins if pin in functions],
        functions=functions,
        area=area_value,
    )


def _override_inversion(name: str, output_pins: List[str], function_text: Dict[str, str],
                       configured: List[str]) -> List[str]:
    """
    Inverting outputs of a sequential cell named in ``sequential_cells``.

    Such cells have no ``ff``/``latch`` group, so only the configured pins and
    pins whose function is the conventional negated state ``IQN`` (or ``!IQ``)
    are inverting.
    """
    inverted = list(configured)
    for pin in output_pins:
        text = function_text.get(pin)
        if text is None or pin in inverted:
            continue
        try:
            expr = parse_bool_expr(text, STATE_VARIABLES)
        except ExpressionError:
            logger.warning(f"Cell {name}: output {pin} function {text!r} is not a state variable; "
                           f"treated as non-inverting")
            continue
        if expr == Var(STATE_VARIABLES[1]) or expr == Not(Var(STATE_VARIABLES[0])):
            inverted.append(pin)
    return inverted


def _sequential_cell(name: str, group: LibertyGroup, state_group: LibertyGroup,
                     input_pins: List[str], output_pins: List[str],
                     function_text: Dict[str, str], clock_pin: Optional[str],
                     area: Optional[float], data_pins: Dict[str, str],
                     inverted_outputs: List[str]) -> CellDefinition:
    """Build the definition of a flip-flop or latch cell."""
    state_vars = [arg for arg in state_group.args if arg]
    declared = set(input_pins) | set(state_vars)
    state_var = state_vars[0] if state_vars else None
    state_var_negated = state_vars[1] if len(state_vars) > 1 else None

    data_pin = data_pins.get(name)
    if data_pin is None:
        next_state = state_group.attributes.get('next_state') or state_group.attributes.get('data_in')
        if next_state:
            try:
                expr = parse_bool_expr(next_state, input_pins)
            except ExpressionError as e:
                raise MalformedLiberty(state_group.line, f"cell {name} next state: {e}") from e
            if isinstance(expr, Var):
                data_pin = expr.name

    if clock_pin is None:
        clocked_on = state_group.attributes.get('clocked_on') or state_group.attributes.get('enable')
        if clocked_on:
            try:
                expr = parse_bool_expr(clocked_on, input_pins)
                if isinstance(expr, Var):
                    clock_pin = expr.name
            except ExpressionError:
                logger.debug(f"Cell {name}: clock expression {clocked_on!r} not a single pin")

    if data_pin is None:
        candidates = [pin for pin in input_pins if pin != clock_pin]
        if len(candidates) == 1:
            data_pin = candidates[0]

    inverted: List[str] = list(inverted_outputs)
    for pin in output_pins:
        text = function_text.get(pin)
        if text is None or pin in inverted:
            continue
        try:
            expr = parse_bool_expr(text, declared)
        except ExpressionError as e:
            raise MalformedLiberty(group.line, f"cell {name} pin {pin}: {e}") from e
        if expr == Var(state_var_negated or "") or expr == Not(Var(state_var or "")):
            inverted.append(pin)
        elif expr != Var(state_var or ""):
            logger.warning(f"Cell {name}: output {pin} function {text!r} treated as non-inverting state output")

    return CellDefinition(
        name=name,
        input_pins=input_pins,
        output_pins=output_pins,
        is_sequential=True,
        clock_pin=clock_pin,
        data_pin=data_pin,
        area=area,
        inverted_outputs=inverted,
    )


def parse_library_json(text: str) -> CellLibrary:
    """
    Parse the JSON cell-library format.

    Example entry::

        {"AOI21_X2": {"input_pins": ["A1", "B1", "B2"], "output_pins": "ZN",
                      "boolean_function": "ZN = !(A1 & (B1 | B2))"}}

    An optional top-level ``"Cell Library"`` wrapper is accepted.

    Raises:
        LibraryError: If the document is not valid JSON or a cell is invalid
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise LibraryError(f"Invalid JSON cell library: {e}") from e

    if isinstance(data, dict) and set(data) == {"Cell Library"}:
        data = data["Cell Library"]
    if not isinstance(data, dict):
        raise LibraryError("JSON cell library must be an object of cells")

    library = CellLibrary(name="json")
    for name, entry in data.items():
        library.add(CellDefinition.from_dict(name, entry))

    logger.info(f"Parsed JSON cell library: {len(library)} cells")
    return library


def load_library(path: Union[str, Path],
                 sequential_overrides: Optional[Mapping[str, str]] = None,
                 data_pins: Optional[Mapping[str, str]] = None,
                 inverted_outputs: Optional[Mapping[str, Iterable[str]]] = None) -> CellLibrary:
    """
    Load a cell library from a ``.lib`` or ``.json`` file.

    Raises:
        LibraryError: If the file cannot be read or parsed
    """
    library_path = Path(path)
    try:
        text = library_path.read_text()
    except OSError as e:
        raise LibraryError(f"Cannot read cell library {library_path}: {e}") from e

    if library_path.suffix.lower() == '.json':
        library = parse_library_json(text)
    else:
        library = parse_liberty(text, sequential_overrides, data_pins, inverted_outputs)
    library.name = library_path.stem if library.name in ("json", "library") else library.name
    return library
