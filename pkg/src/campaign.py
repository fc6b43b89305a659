"""
Fault-injection campaigns.

Runs the whole pipeline for a library, a netlist and a fault specification:
load the library and netlist, preprocess, then for every fault model extract
the target, enumerate fault configurations and decide each one through its
differential graph. Configurations are evaluated inline or by a worker pool
fed one window at a time; outcomes are folded in stream order as they
arrive, so the report does not depend on the number of workers and only
effective or inconclusive configurations are kept.
"""

import json
import logging
import multiprocessing
import time
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple, Union

import pandas as pd

from .boolexpr import ExpressionError
from .cell_library import CellDefinition, CellLibrary, LibraryError, load_library
from .circuit_graph import CircuitGraph, GraphError, render_dot
from .differential import (
    FaultConfig, InjectionError, Verdict, build_differential, count_fault_configs,
    enumerate_fault_configs, evaluate, inject_faults
)
from .extraction import ExtractionError, TargetGraph, extract_target, preprocess
from .fault_spec import EvaluationMode, FaultSpecError, FaultSpecification, load_fault_spec
from .netlist import NetlistError, load_netlist, load_submodule_functions
from .oracle import DEFAULT_MAX_INPUTS, brute_force_verdict, replay_witness
from .sat_solver import SolverError, make_solver
from .tseitin import emit_dimacs, tseitin

logger = logging.getLogger(__name__)

EXIT_CLEAN = 0
EXIT_ERROR = 1
EXIT_EFFECTIVE = 2

# Deterministic solver counters summed per model
SOLVER_COUNTERS = ('conflicts', 'decisions', 'propagations', 'variables', 'clauses')

# Worker chunks queued per process
WINDOW_CHUNKS = 4

_PIPELINE_ERRORS = (LibraryError, ExpressionError, NetlistError, GraphError, FaultSpecError,
                    ExtractionError, InjectionError, SolverError, OSError)


class CampaignError(Exception):
    """Raised when a pipeline stage fails; carries the stage name and the cause."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


@dataclass
class CampaignOptions:
    """
    Settings of one campaign run.

    Attributes:
        jobs: Worker processes (1 evaluates inline)
        max_faults: Evaluate at most this many configurations per model (0 = all)
        chunk_size: Configurations per worker task
        verify_witnesses: Replay every witness through the reference evaluator
        simultaneous_faults: Override of every model's k
        solver_backend: ``internal`` or ``external:PATH``
        seed: Decision-order seed of the internal solver
        max_conflicts: Per-configuration conflict budget (0 = unlimited)
        time_limit: Per-configuration time budget in seconds (0 = unlimited)
        oracle_max_inputs: Decide solver-inconclusive configurations with at most
            this many free inputs by enumeration (0 = never)
        top: Top module name
        submodules: JSON file with functions of non-library submodules
        sequential_cells: CELL to data pin overrides for sequential cells
        data_pins: CELL to data pin for non-D-type sequential cells
        inverted_outputs: CELL to the outputs of a sequential cell that carry the negated state
    """
    jobs: int = 1
    max_faults: int = 0
    chunk_size: int = 16
    verify_witnesses: bool = True
    simultaneous_faults: Optional[int] = None
    solver_backend: str = "internal"
    seed: int = 0
    max_conflicts: int = 0
    time_limit: float = 0.0
    oracle_max_inputs: int = DEFAULT_MAX_INPUTS
    top: Optional[str] = None
    submodules: Optional[str] = None
    sequential_cells: Dict[str, str] = field(default_factory=dict)
    data_pins: Dict[str, str] = field(default_factory=dict)
    inverted_outputs: Dict[str, List[str]] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config, **overrides) -> 'CampaignOptions':
        """Build options from a ConfigManager; non-None overrides win."""
        solver = config.get_solver_config()
        campaign = config.get_campaign_config()
        library = config.get_library_config()
        options = cls(
            jobs=campaign['jobs'],
            max_faults=campaign['max_faults'],
            chunk_size=campaign['chunk_size'],
            verify_witnesses=campaign['verify_witnesses'],
            solver_backend=solver['backend'],
            seed=solver['seed'],
            max_conflicts=solver['max_conflicts'],
            time_limit=solver['time_limit'],
            oracle_max_inputs=config.get_oracle_config()['max_inputs'],
            sequential_cells=library['sequential_cells'],
            data_pins=library['data_pins'],
            inverted_outputs=library['inverted_outputs'],
        )
        for key, value in overrides.items():
            if value is not None:
                setattr(options, key, value)
        return options


@dataclass
class FaultRecord:
    """One evaluated configuration that is effective or inconclusive."""
    index: int
    faults: List[Dict[str, Any]]
    witness: Optional[Dict[str, int]] = None
    reason: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'index': self.index, 'faults': self.faults}
        if self.witness is not None:
            data['witness'] = dict(self.witness)
        if self.reason is not None:
            data['reason'] = self.reason
        return data


@dataclass
class ModelReport:
    """
    Results of one fault model.

    Attributes:
        name: Fault model name
        setting: FE, FD or FS
        mode: Evaluation mode value
        simultaneous_faults: k
        total: Evaluated configurations
        available: Configurations before truncation
        effective: Effective configurations
        inconclusive: Configurations without a verdict
        truncated: Whether max_faults cut the configuration stream
        ge: Target size in gate equivalents
        target: Target summary (nodes, inputs, warnings)
        effective_faults: Effective configuration records
        inconclusive_faults: Inconclusive configuration records
        solver: Summed deterministic solver counters
        execution_seconds: Wall-clock time of the model
    """
    name: str
    setting: str
    mode: str
    simultaneous_faults: int
    total: int = 0
    available: int = 0
    effective: int = 0
    inconclusive: int = 0
    truncated: bool = False
    ge: float = 0.0
    target: Dict[str, Any] = field(default_factory=dict)
    effective_faults: List[FaultRecord] = field(default_factory=list)
    inconclusive_faults: List[FaultRecord] = field(default_factory=list)
    solver: Dict[str, int] = field(default_factory=dict)
    execution_seconds: float = 0.0

    @property
    def percentage(self) -> float:
        return 100.0 * self.effective / self.total if self.total else 0.0

    def to_dict(self, include_timing: bool = True) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'name': self.name,
            'setting': self.setting,
            'mode': self.mode,
            'simultaneous_faults': self.simultaneous_faults,
            'total': self.total,
            'available': self.available,
            'truncated': self.truncated,
            'effective': self.effective,
            'effective_percent': round(self.percentage, 4),
            'inconclusive': self.inconclusive,
            'ge': round(self.ge, 4),
            'target': self.target,
            'solver': dict(self.solver),
            'effective_faults': [record.to_dict() for record in self.effective_faults],
            'inconclusive_faults': [record.to_dict() for record in self.inconclusive_faults],
        }
        if include_timing:
            data['execution_seconds'] = round(self.execution_seconds, 3)
        return data


@dataclass
class CampaignReport:
    """Report of a campaign: one section per fault model, in file order."""
    library: str
    netlist: str
    spec: str
    models: List[ModelReport] = field(default_factory=list)
    execution_seconds: float = 0.0

    @property
    def effective_total(self) -> int:
        return sum(model.effective for model in self.models)

    def to_dict(self, include_timing: bool = True) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'library': self.library,
            'netlist': self.netlist,
            'spec': self.spec,
            'models': [model.to_dict(include_timing) for model in self.models],
        }
        if include_timing:
            data['execution_seconds'] = round(self.execution_seconds, 3)
        return data

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2) + "\n"

    def save(self, path: Union[str, Path]) -> Path:
        output = Path(path)
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(self.to_json())
        logger.info(f"Report written to {output}")
        return output


@dataclass
class _ModelContext:
    """Everything a worker needs to evaluate configurations of one model."""
    target: TargetGraph
    mode: EvaluationMode
    cells: Dict[str, CellDefinition]
    solver_backend: str
    seed: int
    max_conflicts: int
    time_limit: float
    oracle_max_inputs: int
    verify_witnesses: bool


@dataclass
class _Outcome:
    index: int
    effective: Optional[bool]
    witness: Optional[Dict[str, int]] = None
    reason: Optional[str] = None
    stats: Dict[str, Any] = field(default_factory=dict)


_WORKER_CONTEXT: Optional[_ModelContext] = None


def _init_worker(context: _ModelContext) -> None:
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = context


def _evaluate_in_worker(task: Tuple[int, FaultConfig]) -> _Outcome:
    return evaluate_config(_WORKER_CONTEXT, *task)


def evaluate_config(context: _ModelContext, index: int, config: FaultConfig) -> _Outcome:
    """
    Decide one configuration; failures become inconclusive outcomes.
    """
    try:
        faulty = inject_faults(context.target, config, context.cells)
        diff = build_differential(context.target, faulty, context.mode, config)
        solver = make_solver(context.solver_backend, context.seed, context.max_conflicts, context.time_limit)
        verdict: Verdict = evaluate(diff, solver)
        enumerable = 0 < context.oracle_max_inputs and len(diff.input_names) <= context.oracle_max_inputs
        if verdict.inconclusive and enumerable:
            logger.debug(f"Configuration {index}: {verdict.reason}; deciding by enumeration")
            decided = brute_force_verdict(diff, context.oracle_max_inputs)
            decided.stats = {**verdict.stats, **decided.stats}
            verdict = decided
        if verdict.effective and context.verify_witnesses and not replay_witness(diff, verdict.witness):
            return _Outcome(index, None, reason="witness failed replay", stats=verdict.stats)
        return _Outcome(index, verdict.effective, verdict.witness, verdict.reason, verdict.stats)
    except Exception as e:
        logger.error(f"Configuration {index} failed: {e}")
        return _Outcome(index, None, reason=f"{type(e).__name__}: {e}")


def _stage(name: str, function, *args, **kwargs):
    try:
        return function(*args, **kwargs)
    except _PIPELINE_ERRORS as e:
        raise CampaignError(name, e) from e


def _indexed(configs: Iterable[FaultConfig], limit: int) -> Iterator[Tuple[int, FaultConfig]]:
    stream = enumerate(configs)
    return islice(stream, limit) if limit else stream


def feed_window(options: CampaignOptions) -> int:
    """Configurations handed to the worker pool at a time."""
    return max(1, options.jobs) * max(1, options.chunk_size) * WINDOW_CHUNKS


def _evaluate_all(context: _ModelContext, tasks: Iterator[Tuple[int, FaultConfig]],
                  options: CampaignOptions) -> Iterator[Tuple[FaultConfig, _Outcome]]:
    """
    Yield (config, outcome) pairs in stream order.

    The pool is fed one window at a time, so at most ``feed_window(options)``
    configurations are in flight.
    """
    if options.jobs <= 1:
        for index, config in tasks:
            yield config, evaluate_config(context, index, config)
        return

    window = feed_window(options)
    chunk_size = max(1, options.chunk_size)
    with multiprocessing.Pool(processes=options.jobs, initializer=_init_worker, initargs=(context,)) as pool:
        while True:
            batch = list(islice(tasks, window))
            if not batch:
                return
            outcomes = pool.imap(_evaluate_in_worker, batch, chunksize=chunk_size)
            for (_index, config), outcome in zip(batch, outcomes):
                yield config, outcome


def _fold(report: ModelReport, target: TargetGraph, config: FaultConfig, outcome: _Outcome) -> None:
    """Add one outcome to its model report; ineffective configurations leave no record."""
    report.total += 1
    for counter in SOLVER_COUNTERS:
        report.solver[counter] += int(outcome.stats.get(counter, 0))
    if outcome.effective is None:
        report.inconclusive += 1
        report.inconclusive_faults.append(FaultRecord(
            outcome.index, config.describe(target.graph), reason=outcome.reason))
    elif outcome.effective:
        report.effective += 1
        report.effective_faults.append(FaultRecord(
            outcome.index, config.describe(target.graph), witness=outcome.witness))
    logger.debug(f"{report.name} config {outcome.index}: effective={outcome.effective}")


def run_model(graph: CircuitGraph, library: CellLibrary, spec: FaultSpecification,
              mode: EvaluationMode, options: CampaignOptions,
              cells: Optional[Dict[str, CellDefinition]] = None) -> ModelReport:
    """
    Run one fault model against a preprocessed graph.

    Raises:
        CampaignError: If extraction or configuration enumeration fails
    """
    started = time.monotonic()
    target = _stage(f"extraction of {spec.name}", extract_target, graph, spec, library)
    available = _stage(f"injection of {spec.name}", count_fault_configs, target, spec, library)
    configs = enumerate_fault_configs(target, spec, library)

    known_cells: Dict[str, CellDefinition] = dict(library.cells)
    known_cells.update(cells or {})
    context = _ModelContext(
        target=target,
        mode=mode,
        cells=known_cells,
        solver_backend=options.solver_backend,
        seed=options.seed,
        max_conflicts=options.max_conflicts,
        time_limit=options.time_limit,
        oracle_max_inputs=options.oracle_max_inputs,
        verify_witnesses=options.verify_witnesses,
    )

    report = ModelReport(
        name=spec.name,
        setting=mode.setting,
        mode=mode.value,
        simultaneous_faults=spec.simultaneous_faults,
        available=available,
        truncated=bool(options.max_faults) and available > options.max_faults,
        ge=target.ge,
        target=target.summary(),
        solver={counter: 0 for counter in SOLVER_COUNTERS},
    )
    if report.truncated:
        logger.warning(f"{spec.name}: evaluating the first {options.max_faults} of {available} configurations")

    for config, outcome in _evaluate_all(context, _indexed(configs, options.max_faults), options):
        _fold(report, target, config, outcome)

    report.execution_seconds = time.monotonic() - started
    logger.info(f"{spec.name} ({report.setting}, k={report.simultaneous_faults}): "
                f"{report.effective}/{report.total} effective, {report.inconclusive} inconclusive, "
                f"{report.execution_seconds:.2f}s")
    return report


def load_design(lib_path: Union[str, Path], netlist_path: Union[str, Path],
                options: CampaignOptions) -> Tuple[CellLibrary, CircuitGraph, Dict[str, CellDefinition]]:
    """
    Load the library and netlist and preprocess the netlist graph.

    Raises:
        CampaignError: If a file cannot be loaded or preprocessing fails
    """
    library = _stage("library", load_library, lib_path, options.sequential_cells, options.data_pins,
                     options.inverted_outputs)
    logger.info(f"Loaded cell library {library.name} with {len(library.cells)} cells")

    submodules: Dict[str, CellDefinition] = {}
    if options.submodules:
        submodules = _stage("submodules", load_submodule_functions, options.submodules)

    graph = _stage("netlist", load_netlist, netlist_path, library, options.top, submodules)
    logger.info(f"Built circuit graph {graph.name}: {graph.num_nodes} nodes, {graph.num_edges} edges")
    graph = _stage("preprocessing", preprocess, graph)
    return library, graph, submodules


def run_campaign(lib_path: Union[str, Path], netlist_path: Union[str, Path], spec_path: Union[str, Path],
                 options: Optional[CampaignOptions] = None) -> CampaignReport:
    """
    Run every fault model of a specification against a netlist.

    Args:
        lib_path: Cell library (.lib or .json)
        netlist_path: Netlist (.v or .json graph)
        spec_path: Fault specification (.json)
        options: Campaign settings

    Returns:
        Campaign report with one section per model, in file order

    Raises:
        CampaignError: If any pipeline stage fails
    """
    options = options or CampaignOptions()
    started = time.monotonic()

    library, graph, submodules = load_design(lib_path, netlist_path, options)
    models = _stage("fault specification", load_fault_spec, spec_path, options.simultaneous_faults)

    report = CampaignReport(library=Path(lib_path).name, netlist=Path(netlist_path).name,
                            spec=Path(spec_path).name)
    for _name, spec, mode in models:
        report.models.append(run_model(graph, library, spec, mode, options, submodules))

    report.execution_seconds = time.monotonic() - started
    logger.info(f"Campaign complete: {report.effective_total} effective configuration(s) "
                f"in {len(report.models)} model(s), {report.execution_seconds:.2f}s")
    return report


def summarize(report: CampaignReport) -> str:
    """
    Render a report as a fixed-width table, one row per model.
    """
    rows = [{
        'Target': model.name,
        'Setting': model.setting,
        'Simult. Faults': model.simultaneous_faults,
        'Effective %': f"{model.percentage:.2f} %",
        'Total': f"{model.effective} / {model.total}",
        'Execution': f"{model.execution_seconds:.2f} s",
        'Circuit GE': f"{model.ge:.2f}",
    } for model in report.models]
    columns = ['Target', 'Setting', 'Simult. Faults', 'Effective %', 'Total', 'Execution', 'Circuit GE']
    return pd.DataFrame(rows, columns=columns).to_string(index=False)


def exit_code(report: CampaignReport) -> int:
    return EXIT_EFFECTIVE if report.effective_total else EXIT_CLEAN


def dump_target(lib_path: Union[str, Path], netlist_path: Union[str, Path], spec_path: Union[str, Path],
                stem: Union[str, Path], options: Optional[CampaignOptions] = None) -> List[Path]:
    """
    Write the extracted target of every model as ``<stem>_<model>.json`` and ``.dot``.
    """
    options = options or CampaignOptions()
    library, graph, _ = load_design(lib_path, netlist_path, options)
    models = _stage("fault specification", load_fault_spec, spec_path, options.simultaneous_faults)
    written: List[Path] = []
    stem = Path(stem)
    for name, spec, _mode in models:
        target = _stage(f"extraction of {name}", extract_target, graph, spec, library)
        written.extend(target.graph.write(stem.parent / f"{stem.name}_{name}"))
    return written


def dump_differential(lib_path: Union[str, Path], netlist_path: Union[str, Path], spec_path: Union[str, Path],
                      index: int, out_dir: Union[str, Path],
                      options: Optional[CampaignOptions] = None) -> List[Path]:
    """
    Write the differential graph (.dot) and CNF (.cnf) of configuration ``index`` of every model.
    """
    options = options or CampaignOptions()
    library, graph, submodules = load_design(lib_path, netlist_path, options)
    models = _stage("fault specification", load_fault_spec, spec_path, options.simultaneous_faults)
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    cells: Dict[str, CellDefinition] = dict(library.cells)
    cells.update(submodules)

    written: List[Path] = []
    for name, spec, mode in models:
        target = _stage(f"extraction of {name}", extract_target, graph, spec, library)
        configs = enumerate_fault_configs(target, spec, library)
        config = _stage(f"injection of {name}", next, islice(configs, index, None), None)
        if config is None:
            logger.warning(f"{name}: no configuration with index {index}")
            continue
        faulty = _stage(f"injection of {name}", inject_faults, target, config, cells)
        diff = _stage(f"differential of {name}", build_differential, target, faulty, mode, config)
        locations = {diff.faulty[node_id] for node_id in config.locations}

        dot_path = directory / f"{name}_diff_{index}.dot"
        dot_path.write_text(render_dot(diff.graph, highlight=locations))
        cnf_path = directory / f"{name}_diff_{index}.cnf"
        cnf_path.write_text(emit_dimacs(tseitin(diff)))
        written.extend([dot_path, cnf_path])
        logger.info(f"Wrote differential {index} of {name} to {dot_path} and {cnf_path}")
    return written
