"""
Tests for the porchain command-line interface
"""

import io
import json
from unittest.mock import AsyncMock, Mock, patch

import pytest

from porchain.cli import EXIT_MISMATCH, EXIT_OK, EXIT_USAGE, PorchainCLI, build_parser, main
from porchain.formats import OWNER_KEY_FILE, PUBLIC_KEY_FILE
from porchain.models import BenchRow, Scheme
from porchain.scenarios import SCENARIOS, ScenarioConfig
from porchain.settings import PorchainSettings

from conftest import SEED

RUN_ARGS = [
    "run",
    "--scheme", "aub",
    "--sectors", "1",
    "--query-size", "3",
    "--audit-count", "2",
    "--file-size", "256",
    "--seed", SEED,
]


@pytest.fixture
def cli():
    return PorchainCLI(PorchainSettings(seed=None), io.StringIO())


class TestParser:
    """Test argument parsing"""

    def test_positive_integers(self):
        parser = build_parser()
        args = parser.parse_args(["run", "--scenario", "honest", "--query-size", "4"])
        assert args.query_size == 4
        with pytest.raises(SystemExit):
            parser.parse_args(["run", "--scenario", "honest", "--query-size", "0"])

    def test_file_sources_exclusive(self, tmp_path):
        with pytest.raises(SystemExit):
            build_parser().parse_args(
                ["run", "--scenario", "honest", "--file", str(tmp_path), "--file-size", "1K"]
            )


@pytest.mark.asyncio
class TestMain:
    """Test commands and their exit codes"""

    async def test_usage_errors(self):
        out = io.StringIO()
        assert await main(["run"], out) == EXIT_USAGE
        assert await main([], out) == EXIT_USAGE
        assert await main(["keygen", "--scheme", "rsa", "--out", "x"], out) == EXIT_USAGE

    async def test_keygen(self, tmp_path):
        out = io.StringIO()
        base = ["keygen", "--scheme", "aub", "--sectors", "2", "--seed", "01"]
        argv = base + ["--out", str(tmp_path / "k")]
        assert await main(argv, out) == EXIT_OK
        assert (tmp_path / "k" / OWNER_KEY_FILE).exists()
        assert (tmp_path / "k" / PUBLIC_KEY_FILE).exists()
        digest = out.getvalue().strip().splitlines()[-1].split(": ")[1]

        again = io.StringIO()
        await main(base + ["--out", str(tmp_path / "k2")], again)
        assert digest in again.getvalue()

    async def test_run_matched(self, tmp_path):
        out = io.StringIO()
        report = tmp_path / "report.jsonl"
        metrics = tmp_path / "metrics.json"
        tx_log = tmp_path / "tx.log"
        argv = RUN_ARGS + ["--scenario", "honest", "--report", str(report), "--metrics", str(metrics),
                           "--tx-log", str(tx_log)]
        assert await main(argv, out) == EXIT_OK
        summary = json.loads(report.read_text().splitlines()[-1])
        assert summary["matched"] is True
        assert summary["outcome"] == "paid_both"
        assert json.loads(metrics.read_text())["query_count"] == 2
        assert tx_log.stat().st_size > 0

    async def test_run_to_stdout(self):
        out = io.StringIO()
        assert await main(RUN_ARGS + ["--scenario", "case1"], out) == EXIT_OK
        lines = [json.loads(line) for line in out.getvalue().splitlines()]
        assert lines[-1]["kind"] == "metrics"
        assert lines[-2]["kind"] == "summary"
        assert lines[-2]["reason"] == "rebuttal_failed"

    @pytest.mark.slow
    async def test_run_more_audits_than_query_size(self):
        out = io.StringIO()
        argv = ["run", "--scenario", "honest", "--scheme", "aub", "--sectors", "1",
                "--query-size", "5", "--audit-count", "10", "--seed", SEED]
        assert await main(argv, out) == EXIT_OK
        lines = [json.loads(line) for line in out.getvalue().splitlines()]
        assert lines[-2]["outcome"] == "paid_both"
        assert lines[-2]["matched"] is True
        assert lines[-1]["query_count"] == 10

    async def test_run_mismatch(self):
        run = Mock(report=Mock(matched=False))
        with patch("porchain.cli.PorchainCLI.run", new=AsyncMock(return_value=run)):
            assert await main(RUN_ARGS + ["--scenario", "honest"], io.StringIO()) == EXIT_MISMATCH

    async def test_unsatisfiable_parameters(self):
        argv = ["run", "--scenario", "honest", "--query-size", "50", "--file-size", "64", "--seed", SEED]
        assert await main(argv, io.StringIO()) == EXIT_USAGE

    async def test_unknown_scenario(self):
        assert await main(RUN_ARGS + ["--scenario", "case9"], io.StringIO()) == EXIT_USAGE

    async def test_scenarios_listing(self):
        out = io.StringIO()
        assert await main(["scenarios"], out) == EXIT_OK
        lines = out.getvalue().splitlines()
        assert len(lines) == len(SCENARIOS)
        assert lines[0].startswith("honest")
        assert "terminated@upload" in out.getvalue()


class TestBench:
    """Test the CSV metrics commands"""

    def test_bench_rows(self, cli):
        config = ScenarioConfig(scheme=Scheme.AUB, sectors=1, query_size=3, audit_count=2)
        rows = cli.bench([64, 128], config, seed=SEED)
        assert [row.n_blocks for row in rows] == [3, 5]
        lines = cli.out.getvalue().splitlines()
        assert lines[0] == ",".join(BenchRow.header())
        assert len(lines) == 3
        assert all(row.tag_s >= 0 and row.close_payload_bytes > 0 for row in rows)

    def test_fit(self):
        config = ScenarioConfig(scheme=Scheme.AUB, sectors=1, query_size=11, audit_count=10)
        fitted = PorchainCLI._fit(config, 100)
        assert fitted.query_size == 4
        assert fitted.max_queries == 10
        fitted.check(100)
        ppaub = PorchainCLI._fit(config.model_copy(update={"scheme": Scheme.PPAUB}), 100)
        assert ppaub.max_queries is None

    def test_close_payload_linear(self, cli):
        config = ScenarioConfig(scheme=Scheme.AUB, sectors=1, query_size=3)
        sizes = cli.bench_queries([1, 2, 3], config, seed=SEED)
        step = sizes[2] - sizes[1]
        assert step > 0
        assert sizes[3] - sizes[2] == step
        assert cli.out.getvalue().splitlines()[0] == "queries,close_payload_bytes"
