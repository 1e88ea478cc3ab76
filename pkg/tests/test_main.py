"""
Tests for the porchain MCP server tools
"""

from unittest.mock import AsyncMock, Mock, patch

import pytest
from pydantic import ValidationError

from porchain.main import RunMatrixArgs, RunScenarioArgs
from porchain.models import RunMetrics, Scheme, VerdictOutcome, VerdictReason

from conftest import SEED


def fake_run(scenario="honest", scheme=Scheme.AUB, matched=True):
    report = Mock(
        scenario=scenario,
        scheme=scheme,
        outcome=VerdictOutcome.PAID_BOTH,
        reason=VerdictReason.AUDIT_PASSED,
        aborted_phase=None,
        matched=matched,
    )
    report.model_dump = Mock(return_value={"scenario": scenario})
    return Mock(report=report, metrics=RunMetrics(query_count=2))


class TestToolArgs:
    """Test tool argument models"""

    def test_defaults(self):
        args = RunScenarioArgs(scenario="honest")
        assert (args.scheme, args.audit_count, args.query_size, args.file_size) == ("aub", 2, 3, 256)
        assert RunMatrixArgs(scenarios=["case1"]).schemes == ["aub", "ppaub"]

    def test_bounds(self):
        with pytest.raises(ValidationError):
            RunScenarioArgs(scenario="honest", audit_count=0)


@pytest.mark.asyncio
class TestMCPIntegration:
    """Test MCP server integration"""

    async def test_run_scenario_tool(self):
        """Test the run_scenario MCP tool"""
        from porchain.main import run_scenario

        with patch("porchain.main.runner") as mock_runner:
            mock_runner.run_scenario = AsyncMock(return_value=fake_run())
            result = await run_scenario(RunScenarioArgs(scenario="honest", seed=SEED))

            assert result["status"] == "matched"
            assert result["report"] == {"scenario": "honest"}
            assert result["metrics"]["query_count"] == 2
            name, config = mock_runner.run_scenario.call_args.args
            assert name == "honest"
            assert config.scheme == Scheme.AUB
            assert config.file_size == 256
            assert mock_runner.run_scenario.call_args.kwargs["seed"] == SEED

    async def test_run_scenario_failure(self):
        from porchain.main import run_scenario

        result = await run_scenario(RunScenarioArgs(scenario="honest", scheme="rsa"))
        assert result["status"] == "failed"
        assert "rsa" in result["error"]

    async def test_run_scenario_end_to_end(self):
        """A real run through the module runner"""
        from porchain.main import run_scenario

        result = await run_scenario(RunScenarioArgs(scenario="case6", seed=SEED))
        assert result["status"] == "matched"
        assert result["report"]["reason"] == "false_complaint"
        assert "events" not in result["report"]

    async def test_run_matrix_tool(self):
        from porchain.main import run_matrix

        runs = [fake_run("honest", Scheme.AUB), fake_run("honest", Scheme.PPAUB, matched=False)]
        with patch("porchain.main.runner") as mock_runner:
            mock_runner.run_matrix = AsyncMock(return_value=runs)
            result = await run_matrix(RunMatrixArgs(scenarios=["honest"]))

            assert result["status"] == "success"
            assert result["all_matched"] is False
            assert [r["scheme"] for r in result["results"]] == ["aub", "ppaub"]
            assert result["results"][0]["outcome"] == "paid_both"
            schemes = mock_runner.run_matrix.call_args.args[1]
            assert schemes == [Scheme.AUB, Scheme.PPAUB]

    async def test_list_scenarios_tool(self):
        from porchain.main import list_scenarios

        result = await list_scenarios()
        assert result["status"] == "success"
        assert len(result["scenarios"]) == 13

    async def test_get_protocol_info_tool(self):
        """Test the get_protocol_info MCP tool"""
        from porchain.main import get_protocol_info

        result = await get_protocol_info()

        assert set(result["schemes"]) == {"aub", "ppaub"}
        assert result["curve"] == "BLS12-381"
        assert result["gt_bytes"] == 576
        assert result["sector_width_bytes"] == 31
        assert result["schemes"]["ppaub"]["query_cap"] is None
        assert "c_s" in result["terms"]
