"""
Satisfiability backends.

The internal solver is a conflict-driven clause learning (CDCL) procedure
with two watched literals per clause, first-UIP learning, VSIDS decisions,
phase saving and Luby restarts. An external DIMACS solver can be plugged in
through ``external:PATH``.
"""

import heapq
import logging
import random
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .tseitin import CnfFormula, emit_dimacs

logger = logging.getLogger(__name__)

RESTART_BASE = 100
ACTIVITY_DECAY = 0.95
ACTIVITY_LIMIT = 1e100
# Decision heap entries allowed per variable before a restart compacts it
HEAP_SLACK = 4


class SolverError(Exception):
    """Base exception for solver backends"""
    pass


class SolverFailure(SolverError):
    """A solver crashed or produced unusable output"""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"Solver failure: {reason}")


class SolverStatus(Enum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    UNKNOWN = "UNKNOWN"


@dataclass
class SolverResult:
    """
    Outcome of one satisfiability check.

    Attributes:
        status: SAT, UNSAT or UNKNOWN (resource limit reached)
        model: Total assignment, variable to bool, when SAT
        stats: Solver counters
        reason: Why the result is UNKNOWN
    """
    status: SolverStatus
    model: Dict[int, bool] = field(default_factory=dict)
    stats: Dict[str, float] = field(default_factory=dict)
    reason: Optional[str] = None

    @property
    def satisfiable(self) -> bool:
        return self.status == SolverStatus.SAT


def luby(index: int) -> int:
    """
    Luby sequence 1, 1, 2, 1, 1, 2, 4, ... (1-based).

    >>> [luby(i) for i in range(1, 8)]
    [1, 1, 2, 1, 1, 2, 4]
    """
    k = 1
    while (1 << k) - 1 < index:
        k += 1
    while index != (1 << k) - 1:
        index -= (1 << (k - 1)) - 1
        k = 1
        while (1 << k) - 1 < index:
            k += 1
    return 1 << (k - 1)


class CdclSolver:
    """
    Internal CDCL solver.

    A fresh search state is built on every ``solve`` call, so an instance can
    be reused but never shares learned clauses between formulas.
    """

    def __init__(self, seed: int = 0, max_conflicts: int = 0, time_limit: float = 0.0):
        self.seed = seed
        self.max_conflicts = max_conflicts
        self.time_limit = time_limit

    def solve(self, cnf: CnfFormula) -> SolverResult:
        return _Search(cnf.num_vars, cnf.clauses, self.seed, self.max_conflicts, self.time_limit).run()

    def solve_clauses(self, num_vars: int, clauses: List[List[int]]) -> SolverResult:
        return _Search(num_vars, clauses, self.seed, self.max_conflicts, self.time_limit).run()

    def __repr__(self) -> str:
        return f"CdclSolver(seed={self.seed}, max_conflicts={self.max_conflicts}, time_limit={self.time_limit})"


class _Search:
    def __init__(self, num_vars: int, clauses: List[List[int]], seed: int, max_conflicts: int, time_limit: float):
        self.num_vars = num_vars
        self.max_conflicts = max_conflicts
        self.time_limit = time_limit

        self.values = [0] * (num_vars + 1)  # 1 true, -1 false, 0 unassigned
        self.level = [0] * (num_vars + 1)
        self.reason: List[Optional[int]] = [None] * (num_vars + 1)
        self.polarity = [False] * (num_vars + 1)
        self.watches: Dict[int, List[int]] = {}
        self.clauses: List[List[int]] = []
        self.trail: List[int] = []
        self.trail_lim: List[int] = []
        self.qhead = 0

        rng = random.Random(seed)
        self.activity = [0.0] + [rng.random() * 1e-5 for _ in range(num_vars)]
        self.var_inc = 1.0
        self.heap: List[Tuple[float, int]] = [(-self.activity[v], v) for v in range(1, num_vars + 1)]
        heapq.heapify(self.heap)

        self.stats = {'conflicts': 0, 'decisions': 0, 'propagations': 0, 'restarts': 0, 'learned': 0}
        self.trivially_unsat = False
        for clause in clauses:
            if not self._add_input_clause(clause):
                self.trivially_unsat = True
                break

    def _value(self, literal: int) -> int:
        value = self.values[abs(literal)]
        return value if literal > 0 else -value

    def _decision_level(self) -> int:
        return len(self.trail_lim)

    def _enqueue(self, literal: int, reason: Optional[int]) -> None:
        var = abs(literal)
        self.values[var] = 1 if literal > 0 else -1
        self.level[var] = self._decision_level()
        self.reason[var] = reason
        self.trail.append(literal)

    def _watch(self, clause_index: int) -> None:
        clause = self.clauses[clause_index]
        self.watches.setdefault(clause[0], []).append(clause_index)
        self.watches.setdefault(clause[1], []).append(clause_index)

    def _add_input_clause(self, literals: List[int]) -> bool:
        clause: List[int] = []
        for literal in literals:
            if -literal in clause:
                return True
            if literal not in clause:
                clause.append(literal)
        if not clause:
            return False
        if len(clause) == 1:
            value = self._value(clause[0])
            if value == -1:
                return False
            if value == 0:
                self._enqueue(clause[0], None)
            return True
        self.clauses.append(clause)
        self._watch(len(self.clauses) - 1)
        return True

    def _propagate(self) -> Optional[int]:
        while self.qhead < len(self.trail):
            false_literal = -self.trail[self.qhead]
            self.qhead += 1
            self.stats['propagations'] += 1
            watchers = self.watches.get(false_literal, [])
            kept: List[int] = []
            conflict = None
            position = 0
            while position < len(watchers):
                clause_index = watchers[position]
                position += 1
                clause = self.clauses[clause_index]
                if clause[0] == false_literal:
                    clause[0], clause[1] = clause[1], clause[0]
                first = clause[0]
                if self._value(first) == 1:
                    kept.append(clause_index)
                    continue
                for k in range(2, len(clause)):
                    if self._value(clause[k]) != -1:
                        clause[1], clause[k] = clause[k], clause[1]
                        self.watches.setdefault(clause[1], []).append(clause_index)
                        break
                else:
                    kept.append(clause_index)
                    if self._value(first) == -1:
                        conflict = clause_index
                        kept.extend(watchers[position:])
                        break
                    self._enqueue(first, clause_index)
            self.watches[false_literal] = kept
            if conflict is not None:
                self.qhead = len(self.trail)
                return conflict
        return None

    def _bump(self, var: int) -> None:
        self.activity[var] += self.var_inc
        if self.activity[var] > ACTIVITY_LIMIT:
            for v in range(1, self.num_vars + 1):
                self.activity[v] *= 1e-100
            self.var_inc *= 1e-100
            self._rebuild_heap()
        elif self.values[var] == 0:
            heapq.heappush(self.heap, (-self.activity[var], var))

    def _rebuild_heap(self) -> None:
        """One entry per unassigned variable at its current activity."""
        self.heap = [(-self.activity[v], v) for v in range(1, self.num_vars + 1) if self.values[v] == 0]
        heapq.heapify(self.heap)

    def _restart(self) -> None:
        self._backtrack(0)
        self.stats['restarts'] += 1
        if len(self.heap) > HEAP_SLACK * self.num_vars:
            logger.debug(f"Compacting decision heap of {len(self.heap)} entries")
            self._rebuild_heap()

    def _analyze(self, conflict: int) -> Tuple[List[int], int]:
        """First-UIP conflict analysis; returns the learned clause (asserting literal first) and backjump level."""
        current = self._decision_level()
        seen = set()
        learnt: List[int] = []
        pending = 0
        pivot: Optional[int] = None
        index = len(self.trail) - 1
        clause = self.clauses[conflict]

        while True:
            for literal in clause:
                if literal == pivot:
                    continue
                var = abs(literal)
                if var in seen or self.level[var] == 0:
                    continue
                seen.add(var)
                self._bump(var)
                if self.level[var] >= current:
                    pending += 1
                else:
                    learnt.append(literal)
            while abs(self.trail[index]) not in seen:
                index -= 1
            pivot = self.trail[index]
            index -= 1
            seen.discard(abs(pivot))
            pending -= 1
            if pending == 0:
                break
            clause = self.clauses[self.reason[abs(pivot)]]

        learnt.insert(0, -pivot)
        if len(learnt) == 1:
            return learnt, 0
        deepest = max(range(1, len(learnt)), key=lambda i: self.level[abs(learnt[i])])
        learnt[1], learnt[deepest] = learnt[deepest], learnt[1]
        return learnt, self.level[abs(learnt[1])]

    def _backtrack(self, level: int) -> None:
        if self._decision_level() <= level:
            return
        start = self.trail_lim[level]
        for literal in reversed(self.trail[start:]):
            var = abs(literal)
            self.polarity[var] = literal > 0
            self.values[var] = 0
            self.reason[var] = None
            heapq.heappush(self.heap, (-self.activity[var], var))
        del self.trail[start:]
        del self.trail_lim[level:]
        self.qhead = len(self.trail)

    def _pick_branch_variable(self) -> Optional[int]:
        while self.heap:
            _, var = heapq.heappop(self.heap)
            if self.values[var] == 0:
                return var
        return None

    def _result(self, status: SolverStatus, started: float, reason: Optional[str] = None) -> SolverResult:
        stats = dict(self.stats)
        stats['seconds'] = round(time.monotonic() - started, 6)
        model = {}
        if status == SolverStatus.SAT:
            model = {var: self.values[var] > 0 for var in range(1, self.num_vars + 1)}
        return SolverResult(status=status, model=model, stats=stats, reason=reason)

    def run(self) -> SolverResult:
        started = time.monotonic()
        if self.trivially_unsat:
            return self._result(SolverStatus.UNSAT, started)

        restart_index = 1
        restart_budget = luby(restart_index) * RESTART_BASE
        conflicts_since_restart = 0

        while True:
            conflict = self._propagate()
            if conflict is not None:
                self.stats['conflicts'] += 1
                conflicts_since_restart += 1
                if self._decision_level() == 0:
                    return self._result(SolverStatus.UNSAT, started)

                learnt, backjump = self._analyze(conflict)
                self._backtrack(backjump)
                if len(learnt) == 1:
                    self._enqueue(learnt[0], None)
                else:
                    self.clauses.append(learnt)
                    self._watch(len(self.clauses) - 1)
                    self._enqueue(learnt[0], len(self.clauses) - 1)
                self.stats['learned'] += 1
                self.var_inc /= ACTIVITY_DECAY

                if self.max_conflicts and self.stats['conflicts'] >= self.max_conflicts:
                    return self._result(SolverStatus.UNKNOWN, started, f"conflict limit {self.max_conflicts} reached")
                if self.time_limit and time.monotonic() - started >= self.time_limit:
                    return self._result(SolverStatus.UNKNOWN, started, f"time limit {self.time_limit}s reached")
                continue

            if conflicts_since_restart >= restart_budget:
                self._restart()
                restart_index += 1
                restart_budget = luby(restart_index) * RESTART_BASE
                conflicts_since_restart = 0

            var = self._pick_branch_variable()
            if var is None:
                return self._result(SolverStatus.SAT, started)
            self.stats['decisions'] += 1
            self.trail_lim.append(len(self.trail))
            self._enqueue(var if self.polarity[var] else -var, None)


class ExternalSolver:
    """
    DIMACS solver run as a subprocess.

    Follows the SAT competition conventions: exit code 10 for SAT, 20 for
    UNSAT, an ``s`` status line and ``v`` model lines.
    """

    def __init__(self, path: str, time_limit: float = 0.0, extra_args: Optional[List[str]] = None):
        self.path = path
        self.time_limit = time_limit
        self.extra_args = extra_args or []

    def solve(self, cnf: CnfFormula) -> SolverResult:
        started = time.monotonic()
        with tempfile.TemporaryDirectory(prefix="netlist_fi_") as tmp:
            cnf_path = Path(tmp) / "formula.cnf"
            cnf_path.write_text(emit_dimacs(cnf))
            try:
                completed = subprocess.run(
                    [self.path, *self.extra_args, str(cnf_path)],
                    capture_output=True,
                    text=True,
                    timeout=self.time_limit or None,
                )
            except subprocess.TimeoutExpired:
                return SolverResult(SolverStatus.UNKNOWN, stats={'seconds': time.monotonic() - started},
                                    reason=f"time limit {self.time_limit}s reached")
            except OSError as e:
                raise SolverFailure(f"cannot run {self.path}: {e}")

        stats = {'seconds': round(time.monotonic() - started, 6)}
        status, model = parse_solver_output(completed.stdout, completed.returncode)
        if status == SolverStatus.SAT:
            for var in range(1, cnf.num_vars + 1):
                model.setdefault(var, False)
        if status == SolverStatus.UNKNOWN:
            logger.warning(f"External solver {self.path} returned no verdict (exit {completed.returncode})")
            if completed.returncode not in (0, 10, 20):
                raise SolverFailure(f"{self.path} exited with {completed.returncode}: {completed.stderr.strip()[:200]}")
            return SolverResult(status, stats=stats, reason="external solver reported UNKNOWN")
        return SolverResult(status, model=model, stats=stats)

    def __repr__(self) -> str:
        return f"ExternalSolver(path={self.path!r})"


def parse_solver_output(stdout: str, returncode: int) -> Tuple[SolverStatus, Dict[int, bool]]:
    """
    Parse SAT competition style solver output.

    Returns:
        Status and the (possibly partial) model
    """
    status = SolverStatus.UNKNOWN
    if returncode == 10:
        status = SolverStatus.SAT
    elif returncode == 20:
        status = SolverStatus.UNSAT

    model: Dict[int, bool] = {}
    for line in stdout.splitlines():
        line = line.strip()
        if line.startswith("s "):
            word = line[2:].strip().upper()
            if word == "SATISFIABLE":
                status = SolverStatus.SAT
            elif word == "UNSATISFIABLE":
                status = SolverStatus.UNSAT
        elif line.startswith("v "):
            for token in line[2:].split():
                literal = int(token)
                if literal:
                    model[abs(literal)] = literal > 0
    return status, model


def make_solver(backend: str = "internal", seed: int = 0, max_conflicts: int = 0, time_limit: float = 0.0):
    """
    Build a solver from its configuration name.

    Args:
        backend: ``internal`` or ``external:PATH``

    Raises:
        SolverError: For an unknown backend name
    """
    if backend == "internal":
        return CdclSolver(seed=seed, max_conflicts=max_conflicts, time_limit=time_limit)
    if backend.startswith("external:"):
        path = backend.split(":", 1)[1]
        if not path:
            raise SolverError("external solver backend needs a path: external:PATH")
        return ExternalSolver(path, time_limit=time_limit)
    raise SolverError(f"Unknown solver backend '{backend}'; use 'internal' or 'external:PATH'")
