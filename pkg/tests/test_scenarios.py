"""
Tests for the scenario registry, run configuration and end-to-end runs
"""

import json
from unittest.mock import MagicMock, patch

import pytest

from porchain.crypto import SECTOR_WIDTH_BYTES
from porchain.errors import ParameterError
from porchain.models import Scheme, VerdictOutcome, VerdictReason
from porchain.por import detection_probability
from porchain.scenarios import (
    ALIASES,
    SCENARIOS,
    ScenarioConfig,
    ScenarioRunner,
    execute_scenario,
    generate_file,
    list_scenarios,
    outcome_matches,
    resolve_scenario,
    run_scenario,
)
from porchain.settings import PorchainSettings

from conftest import SEED

AUB_NAMES = sorted(SCENARIOS)
PPAUB_NAMES = sorted(name for name, spec in SCENARIOS.items() if Scheme.PPAUB in spec.schemes)


class TestRegistry:
    """Test scenario lookup"""

    def test_names(self):
        assert len(SCENARIOS) == 13
        assert "honest" in SCENARIOS
        assert {spec.case for spec in SCENARIOS.values()} == {None, 1, 2, 3, 4, 5, 6}

    def test_aliases(self):
        assert set(ALIASES) == {f"case{i}" for i in range(1, 7)}
        assert resolve_scenario("case2", Scheme.AUB).name == "case2-overquery"
        assert resolve_scenario("case2", Scheme.PPAUB).name == "case2-misrecord"
        assert resolve_scenario(" Case6 ", Scheme.AUB).name == "case6-collude"

    def test_scheme_restriction(self):
        assert "case2-overquery" not in PPAUB_NAMES
        with pytest.raises(ParameterError):
            resolve_scenario("case2-overquery", Scheme.PPAUB)

    def test_unknown(self):
        with pytest.raises(ParameterError):
            resolve_scenario("case7", Scheme.AUB)

    def test_listing(self):
        listing = list_scenarios()
        assert [item["name"] for item in listing][0] == "honest"
        overquery = next(item for item in listing if item["name"] == "case2-overquery")
        assert overquery["schemes"] == ["aub"]
        assert overquery["expected"]["reason"] == "privacy_cap"
        json.dumps(listing)


class TestScenarioConfig:
    """Test run parameters and their validation"""

    def test_generated_size(self):
        config = ScenarioConfig(sectors=4, query_size=3)
        assert config.generated_size == 2 * 3 * 4 * SECTOR_WIDTH_BYTES
        assert config.check(config.generated_size).n == 6
        assert ScenarioConfig(file_size=99).generated_size == 99

    def test_ppaub_uses_one_sector(self):
        config = ScenarioConfig(scheme=Scheme.PPAUB, sectors=8)
        assert config.block_sectors == 1
        assert config.check(200).s == 1

    def test_query_size_above_block_count(self):
        with pytest.raises(ParameterError):
            ScenarioConfig(query_size=5).check(62)

    def test_audit_count_above_cap(self):
        with pytest.raises(ParameterError):
            ScenarioConfig(query_size=3, audit_count=3, max_queries=2).check(1000)
        with pytest.raises(ParameterError):
            ScenarioConfig(query_size=3, audit_count=3).with_query_cap(privacy_cap=True).check(1000)
        ScenarioConfig(query_size=3, audit_count=3, max_queries=3).check(1000)
        ScenarioConfig(scheme=Scheme.PPAUB, query_size=3, audit_count=10).check(1000)

    def test_query_cap_lifted_to_audit_count(self):
        config = ScenarioConfig(query_size=5, audit_count=10).with_query_cap()
        assert config.max_queries == 10
        assert config.terms().max_queries == 10
        assert config.check(1000).l == 5
        assert ScenarioConfig(query_size=5, audit_count=2).with_query_cap().max_queries == 4
        assert ScenarioConfig(query_size=5, audit_count=10, max_queries=6).with_query_cap().max_queries == 6
        assert ScenarioConfig(scheme=Scheme.PPAUB, audit_count=10).with_query_cap().max_queries is None

    def test_over_query_keeps_strict_cap(self):
        with pytest.raises(ParameterError):
            execute_scenario("case2-overquery", ScenarioConfig(query_size=3, audit_count=3), seed=SEED)

    def test_from_settings(self):
        settings = PorchainSettings(query_size=7, audit_count=4, c_s=10)
        config = ScenarioConfig.from_settings(settings, audit_count=None, c_s=20)
        assert config.query_size == 7
        assert config.audit_count == 4
        assert config.c_s == 20
        assert config.terms().payout == 20 + settings.c_a

    def test_generate_file(self):
        master = bytes.fromhex(SEED)
        assert generate_file(master, 64) == generate_file(master, 64)
        assert generate_file(master, 64) != generate_file(b"\x01" * 32, 64)
        assert len(generate_file(master, 100)) == 100


class TestAuBScenarios:
    """Test every scenario reaches its expected outcome under AuB"""

    @pytest.mark.parametrize("name", AUB_NAMES)
    def test_matches_expected(self, name, small_config):
        report = run_scenario(name, small_config, seed=SEED)
        assert report.matched, report.model_dump(exclude={"events"})
        assert report.assertions["conservation"]
        assert report.supply_before == report.supply_after

    def test_honest_balances(self, small_config):
        run = execute_scenario("honest", small_config, seed=SEED)
        assert run.report.outcome == VerdictOutcome.PAID_BOTH
        assert run.report.balances["server"] == 1000 + small_config.c_s
        assert run.report.balances["auditor"] == 1000 + small_config.c_a
        assert run.report.balances["owner"] == 1000 - small_config.c_s - small_config.c_a
        assert run.fetched == run.data
        assert run.metrics.query_count == small_config.audit_count
        assert run.metrics.close_payload_bytes > 0

    def test_detection_probability(self, small_config):
        report = run_scenario("case1-dropblock", small_config, seed=SEED)
        n = small_config.check(small_config.generated_size).n
        assert report.detection_probability == pytest.approx(
            detection_probability(n, small_config.query_size, small_config.audit_count)
        )
        assert run_scenario("honest", small_config, seed=SEED).detection_probability is None

    def test_aborted_upload(self, small_config):
        report = run_scenario("case1-wronghash", small_config, seed=SEED)
        assert report.aborted_phase == "upload"
        assert report.assertions["open_rejected"]
        [verdict] = report.verdicts
        assert (verdict.outcome, verdict.reason) == (
            VerdictOutcome.TERMINATED,
            VerdictReason.UPLOAD_ABORTED,
        )
        assert verdict.net_flows() == {
            "contract:escrow": -small_config.terms().payout,
            "owner": small_config.terms().payout,
        }
        assert report.balances["owner"] == small_config.initial_balance

    def test_withheld_countersignature_terminates(self, small_config):
        report = run_scenario("case3-nocountersign", small_config, seed=SEED)
        assert report.outcome == VerdictOutcome.TERMINATED
        assert report.assertions["server_anchor_rejected"]
        assert report.assertions["escrow_refunded"]

    def test_escrow_locked_after_anchoring(self, small_config):
        run = execute_scenario("case3-denypay", small_config, seed=SEED)
        assert run.report.assertions["escrow_locked"]
        refused = [e for e in run.report.events if e.phase == "terminate"]
        assert [(e.kind, e.detail["reason"]) for e in refused] == [("rejected", "escrow_locked")]
        assert run.report.outcome == VerdictOutcome.PAID_BOTH

    def test_reproducible(self, small_config):
        first = run_scenario("case6-collude", small_config, seed=SEED)
        second = run_scenario("case6-collude", small_config, seed=SEED)
        assert first.to_jsonl() == second.to_jsonl()

    def test_explicit_data(self, small_config):
        data = b"\x5a" * 200
        run = execute_scenario("honest", small_config, data=data, seed=SEED)
        assert run.data == data
        assert run.fetched == data
        with pytest.raises(ParameterError):
            execute_scenario("honest", small_config, data=b"", seed=SEED)

    def test_owner_as_auditor(self, small_config):
        config = small_config.model_copy(update={"owner_as_auditor": True})
        run = execute_scenario("honest", config, seed=SEED)
        assert run.report.matched
        assert run.ledger.contract.auditor_id == "owner"
        assert "auditor" not in run.report.balances

    def test_report_jsonl(self, small_config):
        report = run_scenario("case1-dropblock", small_config, seed=SEED)
        lines = [json.loads(line) for line in report.to_jsonl().splitlines()]
        assert lines[-1]["kind"] == "summary"
        assert lines[-1]["reason"] == VerdictReason.REBUTTAL_FAILED.value
        assert [line["seq"] for line in lines[:-1]] == list(range(len(lines) - 1))

    def test_mismatch_detected(self, small_config):
        report = run_scenario("honest", small_config, seed=SEED)
        tampered = report.model_copy(update={"reason": VerdictReason.UNDER_AUDIT})
        assert not outcome_matches(tampered)


@pytest.mark.slow
class TestPPAuBScenarios:
    """Test every applicable scenario under PPAuB"""

    @pytest.mark.parametrize("name", PPAUB_NAMES)
    def test_matches_expected(self, name, small_config):
        config = small_config.model_copy(update={"scheme": Scheme.PPAUB})
        report = run_scenario(name, config, seed=SEED)
        assert report.matched, report.model_dump(exclude={"events"})


class TestScenarioRunner:
    """Test the async runner and its cache"""

    @pytest.fixture
    def runner(self):
        return ScenarioRunner(PorchainSettings(seed=None))

    @pytest.mark.asyncio
    async def test_seeded_runs_are_cached(self, runner, small_config):
        with patch("porchain.scenarios.execute_scenario", return_value=MagicMock()) as mock_exec:
            first = await runner.run_scenario("honest", small_config, seed=SEED)
            second = await runner.run_scenario("honest", small_config, seed=SEED)
            assert first is second
            assert mock_exec.call_count == 1
            await runner.run_scenario("case1", small_config, seed=SEED)
            assert mock_exec.call_count == 2
            assert len(runner._cache) == 2

    @pytest.mark.asyncio
    async def test_unseeded_runs_are_not_cached(self, runner, small_config):
        with patch("porchain.scenarios.execute_scenario", return_value=MagicMock()) as mock_exec:
            await runner.run_scenario("honest", small_config)
            await runner.run_scenario("honest", small_config)
            assert mock_exec.call_count == 2
            assert runner._cache == {}

    def test_cache_key(self, runner, small_config):
        key = runner._get_cache_key("honest", small_config, SEED, None)
        assert key == runner._get_cache_key("honest", small_config, SEED, None)
        assert key != runner._get_cache_key("honest", small_config, SEED, b"x")
        other = small_config.model_copy(update={"audit_count": 1})
        assert key != runner._get_cache_key("honest", other, SEED, None)

    @pytest.mark.asyncio
    async def test_matrix_skips_inapplicable(self, runner, small_config):
        with patch("porchain.scenarios.execute_scenario", return_value=MagicMock()) as mock_exec:
            runs = await runner.run_matrix(
                ["case2-overquery", "case2"], [Scheme.AUB, Scheme.PPAUB], small_config, seed=SEED
            )
        assert len(runs) == 3
        schemes = sorted(call.args[1].scheme.value for call in mock_exec.call_args_list)
        assert schemes == ["aub", "aub", "ppaub"]

    @pytest.mark.asyncio
    async def test_matrix_runs(self, runner, small_config):
        runs = await runner.run_matrix(["honest", "case5"], [Scheme.AUB], small_config, seed=SEED)
        assert [run.report.scenario for run in runs] == ["honest", "case5-collude"]
        assert all(run.report.matched for run in runs)


class TestLargeFiles:
    """Test byte-identical round trips and per-audit cost on larger files"""

    # py_ecc pairings and multi-exponentiations run in pure Python
    MAX_AUDIT_SECONDS = 30.0

    @pytest.mark.parametrize(
        "size,sectors",
        [
            pytest.param(1 << 10, 1, id="1K"),
            pytest.param(64 << 10, 64, id="64K"),
            pytest.param(1 << 20, 1000, id="1M", marks=pytest.mark.slow),
            pytest.param(10 << 20, 1000, id="10M", marks=pytest.mark.slow),
        ],
    )
    def test_round_trip(self, size, sectors, small_config):
        config = small_config.model_copy(update={"sectors": sectors, "file_size": None})
        data = generate_file(bytes.fromhex(SEED), size)
        run = execute_scenario("honest", config, data=data, seed=SEED)
        assert run.report.matched
        assert run.fetched == data

    @pytest.mark.slow
    def test_audit_time_at_one_megabyte(self, small_config):
        config = small_config.model_copy(update={"sectors": 1000, "file_size": 1_000_000})
        run = execute_scenario("honest", config, seed=SEED)
        assert run.ledger.contract.params.s == 1000
        assert run.metrics.query_count == config.audit_count
        per_audit = run.metrics.mean_proof_time + run.metrics.mean_verify_time
        assert 0 < per_audit < self.MAX_AUDIT_SECONDS
