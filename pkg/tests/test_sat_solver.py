"""
Tests for the satisfiability backends.
"""

import itertools
import random
import subprocess
from unittest.mock import MagicMock, patch

import pytest

from src.sat_solver import (
    HEAP_SLACK, CdclSolver, ExternalSolver, SolverError, SolverFailure, SolverStatus, _Search, luby,
    make_solver, parse_solver_output
)
from src.tseitin import CnfFormula


def random_cnf(rng: random.Random, num_vars: int, num_clauses: int, width: int = 3):
    clauses = []
    for _ in range(num_clauses):
        variables = rng.sample(range(1, num_vars + 1), width)
        clauses.append([var if rng.random() < 0.5 else -var for var in variables])
    return clauses


def satisfies(model, clauses) -> bool:
    return all(any(model[abs(literal)] == (literal > 0) for literal in clause) for clause in clauses)


def brute_force_sat(num_vars: int, clauses) -> bool:
    for values in itertools.product((False, True), repeat=num_vars):
        model = dict(enumerate(values, start=1))
        if satisfies(model, clauses):
            return True
    return False


def pigeonhole(pigeons: int, holes: int):
    """Unsatisfiable when pigeons > holes; variable p*holes+h+1 puts pigeon p in hole h."""
    var = lambda p, h: p * holes + h + 1  # noqa: E731
    clauses = [[var(p, h) for h in range(holes)] for p in range(pigeons)]
    for h in range(holes):
        for p, q in itertools.combinations(range(pigeons), 2):
            clauses.append([-var(p, h), -var(q, h)])
    return pigeons * holes, clauses


class TestLuby:
    """Test the restart sequence."""

    def test_prefix(self):
        """Test the first fifteen terms."""
        assert [luby(i) for i in range(1, 16)] == [1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]


class TestCdclSolver:
    """Test the internal CDCL solver."""

    def test_random_3cnf_matches_enumeration(self):
        """Test verdicts on random 3-CNF near the phase transition."""
        rng = random.Random(7)
        for _ in range(60):
            clauses = random_cnf(rng, 10, 43)
            result = CdclSolver(seed=rng.randint(0, 1000)).solve_clauses(10, clauses)
            assert result.satisfiable == brute_force_sat(10, clauses)
            if result.satisfiable:
                assert satisfies(result.model, clauses)

    def test_seed_does_not_change_verdict(self):
        """Test different decision orders agree."""
        clauses = random_cnf(random.Random(3), 12, 50)
        verdicts = {CdclSolver(seed=seed).solve_clauses(12, clauses).status for seed in range(5)}
        assert len(verdicts) == 1

    def test_pigeonhole_unsat(self):
        """Test a small pigeonhole formula is refuted."""
        num_vars, clauses = pigeonhole(5, 4)
        result = CdclSolver().solve_clauses(num_vars, clauses)
        assert result.status == SolverStatus.UNSAT
        assert result.stats['conflicts'] > 0

    def test_conflict_limit_is_unknown(self):
        """Test an exhausted conflict budget is reported as UNKNOWN."""
        num_vars, clauses = pigeonhole(6, 5)
        result = CdclSolver(max_conflicts=1).solve_clauses(num_vars, clauses)
        assert result.status == SolverStatus.UNKNOWN
        assert "conflict limit" in result.reason

    def test_restart_compacts_decision_heap(self):
        """Test a restart drops stale heap entries once they outnumber the variables."""
        num_vars, clauses = pigeonhole(4, 3)
        search = _Search(num_vars, clauses, seed=0, max_conflicts=0, time_limit=0.0)
        for _ in range(HEAP_SLACK + 1):
            for var in range(1, num_vars + 1):
                search.heap.append((-search.activity[var], var))
        search.activity[5] = 10.0

        search._restart()

        assert sorted(var for _, var in search.heap) == list(range(1, num_vars + 1))
        assert search._pick_branch_variable() == 5
        assert search.stats['restarts'] == 1

    def test_heap_stays_bounded_across_restarts(self):
        """Test the decision heap never exceeds its slack after any restart of a long search."""
        num_vars, clauses = pigeonhole(8, 7)
        sizes = []
        original = _Search._restart

        def restart(search):
            original(search)
            sizes.append(len(search.heap))

        with patch.object(_Search, '_restart', autospec=True, side_effect=restart):
            CdclSolver(max_conflicts=3000).solve_clauses(num_vars, clauses)

        assert len(sizes) >= 3
        assert max(sizes) <= HEAP_SLACK * num_vars

    def test_empty_clause(self):
        """Test an empty clause is unsatisfiable without search."""
        assert CdclSolver().solve_clauses(1, [[1], []]).status == SolverStatus.UNSAT

    def test_contradicting_units(self):
        """Test x and not x."""
        assert CdclSolver().solve_clauses(1, [[1], [-1]]).status == SolverStatus.UNSAT

    def test_tautologies_and_duplicates(self):
        """Test tautological clauses are dropped and duplicate literals merged."""
        result = CdclSolver().solve_clauses(2, [[1, -1], [2, 2]])
        assert result.satisfiable
        assert result.model[2] is True

    def test_model_is_total(self):
        """Test every variable gets a value, even unconstrained ones."""
        result = CdclSolver().solve(CnfFormula(num_vars=4, clauses=[[1]]))
        assert sorted(result.model) == [1, 2, 3, 4]


class TestExternalSolver:
    """Test the subprocess backend with a mocked solver binary."""

    @patch("src.sat_solver.subprocess.run")
    def test_sat_with_model(self, mock_run):
        """Test exit code 10 and v lines."""
        mock_run.return_value = MagicMock(returncode=10, stdout="s SATISFIABLE\nv 1 -2\nv 0\n", stderr="")
        result = ExternalSolver("/opt/kissat").solve(CnfFormula(num_vars=3, clauses=[[1, -2]]))

        assert result.status == SolverStatus.SAT
        assert result.model == {1: True, 2: False, 3: False}
        command = mock_run.call_args[0][0]
        assert command[0] == "/opt/kissat"
        assert command[-1].endswith(".cnf")

    @patch("src.sat_solver.subprocess.run")
    def test_unsat(self, mock_run):
        """Test exit code 20."""
        mock_run.return_value = MagicMock(returncode=20, stdout="s UNSATISFIABLE\n", stderr="")
        result = ExternalSolver("solver").solve(CnfFormula(num_vars=1, clauses=[[1], [-1]]))
        assert result.status == SolverStatus.UNSAT

    @patch("src.sat_solver.subprocess.run")
    def test_timeout_is_unknown(self, mock_run):
        """Test a timeout becomes an UNKNOWN result."""
        mock_run.side_effect = subprocess.TimeoutExpired(cmd="solver", timeout=1)
        result = ExternalSolver("solver", time_limit=1).solve(CnfFormula(num_vars=1, clauses=[[1]]))
        assert result.status == SolverStatus.UNKNOWN

    @patch("src.sat_solver.subprocess.run")
    def test_crash_is_failure(self, mock_run):
        """Test an unexpected exit code without a status line fails."""
        mock_run.return_value = MagicMock(returncode=139, stdout="", stderr="segfault")
        with pytest.raises(SolverFailure):
            ExternalSolver("solver").solve(CnfFormula(num_vars=1, clauses=[[1]]))

    @patch("src.sat_solver.subprocess.run")
    def test_missing_binary(self, mock_run):
        """Test a binary that cannot be started fails."""
        mock_run.side_effect = FileNotFoundError("no such file")
        with pytest.raises(SolverFailure):
            ExternalSolver("missing").solve(CnfFormula(num_vars=1, clauses=[[1]]))


class TestParseSolverOutput:
    """Test SAT competition output parsing."""

    def test_status_line_wins_over_exit_code(self):
        """Test the s line decides when the exit code is 0."""
        status, model = parse_solver_output("c comment\ns SATISFIABLE\nv -1 2 0\n", 0)
        assert status == SolverStatus.SAT
        assert model == {1: False, 2: True}

    def test_unknown(self):
        """Test output without a verdict."""
        assert parse_solver_output("s UNKNOWN\n", 0)[0] == SolverStatus.UNKNOWN


class TestMakeSolver:
    """Test backend selection."""

    def test_internal(self):
        """Test the default backend carries its limits."""
        solver = make_solver("internal", seed=3, max_conflicts=10)
        assert isinstance(solver, CdclSolver)
        assert solver.seed == 3
        assert solver.max_conflicts == 10

    def test_external(self):
        """Test external:PATH."""
        solver = make_solver("external:/usr/bin/cadical")
        assert isinstance(solver, ExternalSolver)
        assert solver.path == "/usr/bin/cadical"

    def test_invalid(self):
        """Test unknown names and a missing path are rejected."""
        with pytest.raises(SolverError):
            make_solver("minisat")
        with pytest.raises(SolverError):
            make_solver("external:")
