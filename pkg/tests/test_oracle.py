"""
Tests for the exhaustive oracle and its agreement with the SAT path.
"""

import random
from collections import Counter
from itertools import islice

import pytest

from src.differential import FaultConfig, build_differential, enumerate_fault_configs, evaluate, inject_faults
from src.extraction import extract_target
from src.fault_spec import EvaluationMode
from src.oracle import TooManyInputs, brute_force_verdict, replay_witness
from src.sat_solver import CdclSolver
from tests.conftest import random_circuit, random_spec, sanity_target

MODES = [(False, False), (False, True), (True, False), (True, True)]


def compare_oracle_and_sat(demo_library, seed: int, configs_per_circuit: int) -> Counter:
    """
    Check one random circuit per mode against the oracle.

    Circuits have 10 to 40 gates and 4 to 16 inputs, up to half of them
    bound. Returns the number of compared configurations per mode.
    """
    compared: Counter = Counter()
    for specific, alerts in MODES:
        rng = random.Random(seed * 31 + specific * 2 + alerts)
        inputs = rng.randint(4, 16)
        graph = random_circuit(demo_library, rng, inputs=inputs, gates=rng.randint(10, 40), outputs=3)
        spec = random_spec(rng, inputs=inputs, outputs=3, specific=specific, alerts=alerts,
                           simultaneous_faults=rng.choice([1, 2]))
        target = extract_target(graph, spec, demo_library)
        for config in islice(enumerate_fault_configs(target, spec, demo_library), configs_per_circuit):
            faulty = inject_faults(target, config, demo_library.cells)
            diff = build_differential(target, faulty, spec.mode, config)

            expected = brute_force_verdict(diff)
            actual = evaluate(diff, CdclSolver(seed=seed))
            assert actual.effective == expected.effective, f"seed {seed}, {spec.mode}, {config}"
            if actual.effective:
                assert replay_witness(diff, actual.witness)
                assert replay_witness(diff, expected.witness)
            compared[spec.mode] += 1
    return compared


class TestBruteForce:
    """Test the enumeration oracle itself."""

    def test_sanity_verdicts(self, demo_library):
        """Test the oracle finds the NAND to AND fault and rejects stuck-at 0."""
        target, spec, mode = sanity_target(demo_library)
        verdicts = []
        for config in enumerate_fault_configs(target, spec, demo_library):
            diff = build_differential(target, inject_faults(target, config, demo_library.cells), mode, config)
            verdicts.append(brute_force_verdict(diff))

        assert [verdict.effective for verdict in verdicts] == [True, False]
        assert verdicts[0].witness == {'d': 0}
        assert verdicts[0].stats == {'assignments': 2, 'satisfying': 2}

    def test_too_many_inputs(self, demo_library):
        """Test the enumeration bound."""
        target, _spec, mode = sanity_target(demo_library)
        diff = build_differential(target, target, mode)
        with pytest.raises(TooManyInputs) as excinfo:
            brute_force_verdict(diff, max_inputs=0)
        assert excinfo.value.count == 1

    def test_replay(self, demo_library):
        """Test replay accepts witnesses of effective faults only."""
        target, _spec, mode = sanity_target(demo_library)
        u1 = target.graph.node_id("U1")
        effective = FaultConfig(((u1, "AND2_X1"),))
        harmless = FaultConfig(((u1, 0),))
        assert replay_witness(build_differential(
            target, inject_faults(target, effective, demo_library.cells), mode), {'d': 1})
        assert not replay_witness(build_differential(
            target, inject_faults(target, harmless, demo_library.cells), mode), {'d': 1})


class TestOracleAgreement:
    """Test SAT verdicts match exhaustive evaluation on random circuits."""

    @pytest.mark.parametrize("seed", range(12))
    def test_random_circuits_all_modes(self, demo_library, seed):
        """Test agreement in every evaluation mode."""
        assert sum(compare_oracle_and_sat(demo_library, seed, configs_per_circuit=4).values()) > 0

    @pytest.mark.slow
    def test_many_random_cases(self, demo_library):
        """Test agreement over at least 500 configurations in every mode."""
        compared: Counter = Counter()
        seed = 1000
        while min(compared[mode] for mode in EvaluationMode) < 500:
            compared.update(compare_oracle_and_sat(demo_library, seed, configs_per_circuit=10))
            seed += 1

        assert set(compared) == set(EvaluationMode)
        assert all(count >= 500 for count in compared.values())
