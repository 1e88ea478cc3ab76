#!/usr/bin/env python3
"""
CLI - keygen, run, bench and scenarios commands for the porchain lab

Exit codes: 0 when observed outcomes match the expected ones, 1 on a mismatch,
2 on a usage error.
"""

import argparse
import asyncio
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO

from .crypto import SECTOR_WIDTH_BYTES, XofSampler
from .errors import FormatError, ParameterError
from .formats import public_params_digest, write_key_files
from .models import BenchRow, Scheme
from .por import keygen
from .scenarios import (
    SCENARIOS,
    ScenarioConfig,
    ScenarioRun,
    ScenarioRunner,
    execute_scenario,
    generate_file,
    list_scenarios,
)
from .settings import PorchainSettings, get_settings
from .utils import derive_seed, parse_int_list, parse_seed, parse_size_list

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer: {text}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {value}")
    return value


def _label(outcome: Optional[str], aborted_phase: Optional[str]) -> str:
    label = outcome or "none"
    return f"{label}@{aborted_phase}" if aborted_phase else label


class PorchainCLI:
    """Command-line interface for the porchain lab"""

    def __init__(self, settings: Optional[PorchainSettings] = None, out: Optional[TextIO] = None):
        self.settings = settings or get_settings()
        self.out = out or sys.stdout
        self.runner = ScenarioRunner(self.settings)

    def _seed(self, seed: Optional[str]) -> Optional[str]:
        return seed or self.settings.seed

    def _config(self, args: argparse.Namespace, **extra: Any) -> ScenarioConfig:
        return ScenarioConfig.from_settings(
            self.settings,
            scheme=Scheme(args.scheme) if args.scheme else None,
            sectors=args.sectors,
            query_size=args.query_size,
            audit_count=getattr(args, "audit_count", None),
            block_wait_seconds=args.block_wait,
            **extra,
        )

    def keygen(self, scheme: Scheme, sectors: int, out_dir: Path, seed: Optional[str] = None) -> str:
        """Write owner.key and public.key; returns the public parameters digest"""
        seed = self._seed(seed)
        rng = XofSampler(derive_seed(parse_seed(seed), "owner/keys"), "OWNER") if seed else None
        keys = keygen(scheme, s=sectors if scheme == Scheme.AUB else 1, rng=rng)
        owner_path, public_path = write_key_files(keys, out_dir)
        digest = public_params_digest(keys.public)
        print(f"owner key:  {owner_path}", file=self.out)
        print(f"public key: {public_path}", file=self.out)
        print(f"public parameters digest: {digest}", file=self.out)
        return digest

    async def run(
        self,
        scenario: str,
        config: ScenarioConfig,
        data: Optional[bytes] = None,
        seed: Optional[str] = None,
        report_path: Optional[Path] = None,
        metrics_path: Optional[Path] = None,
        tx_log_path: Optional[Path] = None,
    ) -> ScenarioRun:
        run = await self.runner.run_scenario(scenario, config, data, self._seed(seed))
        report_text = run.report.to_jsonl()
        metrics = run.metrics.model_dump(mode="json")
        if report_path:
            report_path.write_text(report_text)
        else:
            self.out.write(report_text)
        if metrics_path:
            metrics_path.write_text(json.dumps(metrics, indent=2, sort_keys=True))
        else:
            self.out.write(json.dumps({"kind": "metrics", **metrics}, sort_keys=True) + "\n")
        tx_log_path = tx_log_path or self.settings.tx_log_path
        if tx_log_path:
            run.ledger.write_log(Path(tx_log_path))
        return run

    def bench(
        self, sizes: Sequence[int], config: ScenarioConfig, seed: Optional[str] = None
    ) -> List[BenchRow]:
        """Honest runs per file size; one CSV row each"""
        master = parse_seed(self._seed(seed))
        rows = []
        for size in sizes:
            data = generate_file(master, size)
            run = execute_scenario("honest", self._fit(config, size), data, master.hex())
            metrics = run.metrics
            params = run.ledger.contract.params
            rows.append(
                BenchRow(
                    size_bytes=size,
                    n_blocks=params.n if params else 0,
                    sectors=config.block_sectors,
                    upload_s=metrics.upload_time,
                    tag_s=metrics.tag_time,
                    prove_s=metrics.mean_proof_time,
                    verify_s=metrics.mean_verify_time,
                    verify_with_ledger_s=metrics.mean_verify_time + metrics.ledger_wait_time,
                    close_payload_bytes=metrics.close_payload_bytes,
                )
            )
            logger.info(f"Bench {size} bytes: tag {metrics.tag_time:.3f}s")
        self._write_csv(BenchRow.header(), [row.values() for row in rows])
        return rows

    @staticmethod
    def _fit(config: ScenarioConfig, size: int) -> ScenarioConfig:
        """Shrink l to the block count of small files and lift the AuB cap to K"""
        n = -(-size // (config.block_sectors * SECTOR_WIDTH_BYTES))
        l = min(config.query_size, n)
        return config.model_copy(update={"query_size": l}).with_query_cap()

    def bench_queries(
        self, counts: Sequence[int], config: ScenarioConfig, seed: Optional[str] = None
    ) -> Dict[int, int]:
        """Close payload size per query count, at a query size every count fits under"""
        l = max(config.query_size, max(counts) + 1)
        master = parse_seed(self._seed(seed))
        size = max(config.generated_size, l * config.block_sectors * SECTOR_WIDTH_BYTES)
        data = generate_file(master, size)
        sizes: Dict[int, int] = {}
        for k in counts:
            cfg = config.model_copy(update={"query_size": l, "audit_count": k})
            run = execute_scenario("honest", cfg, data, master.hex())
            sizes[k] = run.metrics.close_payload_bytes
        self._write_csv(["queries", "close_payload_bytes"], [[str(k), str(v)] for k, v in sizes.items()])
        return sizes

    async def scenarios(self, run_all: bool, config: ScenarioConfig, seed: Optional[str]) -> bool:
        if not run_all:
            for entry in list_scenarios():
                expected = entry["expected"]
                target = _label(expected["outcome"], expected["aborted_phase"])
                schemes = ",".join(entry["schemes"])
                print(f"{entry['name']:<22} {schemes:<10} {target:<18} {entry['description']}", file=self.out)
            return True
        runs = await self.runner.run_matrix(list(SCENARIOS), list(Scheme), config, self._seed(seed))
        for run in runs:
            r = run.report
            status = "ok" if r.matched else "MISMATCH"
            observed = _label(r.outcome.value if r.outcome else None, r.aborted_phase)
            print(f"{r.scenario:<22} {r.scheme.value:<6} {observed:<18} {status}", file=self.out)
        return all(run.report.matched for run in runs)

    def _write_csv(self, header: List[str], rows: List[List[str]]) -> None:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        self.out.write(buffer.getvalue())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="porchain", description="porchain - blockchain-arbitrated proof-of-retrievability lab"
    )
    parser.add_argument("--log-level", default=None, help="Override PORCHAIN_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", help="Commands")

    def protocol_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scheme", choices=[s.value for s in Scheme], help="aub or ppaub")
        p.add_argument("--sectors", type=_positive, help="Sectors per block (AuB)")
        p.add_argument("--query-size", type=_positive, help="Challenged blocks per query (l)")
        p.add_argument("--seed", help="Hex master seed (PORCHAIN_SEED fallback)")
        p.add_argument("--block-wait", type=float, help="Simulated seconds per mined block")

    keygen_parser = subparsers.add_parser("keygen", help="Generate owner and public key files")
    keygen_parser.add_argument("--scheme", choices=[s.value for s in Scheme], required=True)
    keygen_parser.add_argument("--sectors", type=_positive, default=1, help="Sectors per block")
    keygen_parser.add_argument("--out", type=Path, required=True, help="Output directory")
    keygen_parser.add_argument("--seed", help="Hex seed for deterministic keys")

    run_parser = subparsers.add_parser("run", help="Run one scenario on a fresh ledger")
    run_parser.add_argument("--scenario", required=True, help="Scenario name or case alias")
    protocol_args(run_parser)
    run_parser.add_argument("--audit-count", type=_positive, help="Queries per audit (K)")
    source = run_parser.add_mutually_exclusive_group()
    source.add_argument("--file", type=Path, help="File to upload")
    source.add_argument("--file-size", help="Size of a generated file, e.g. 4K")
    run_parser.add_argument("--report", type=Path, help="Write the JSON-lines report here")
    run_parser.add_argument("--metrics", type=Path, help="Write run metrics as JSON here")
    run_parser.add_argument("--tx-log", type=Path, help="Write the replayable transaction log here")
    run_parser.add_argument(
        "--owner-as-auditor", action="store_true", default=None, help="Owner audits its own file"
    )

    bench_parser = subparsers.add_parser("bench", help="Timing and payload metrics as CSV")
    protocol_args(bench_parser)
    bench_parser.add_argument("--audit-count", type=_positive, help="Queries per audit (K)")
    bench_parser.add_argument("--file-sizes", default="1K", help="Comma list, e.g. 1K,1M,10M")
    bench_parser.add_argument("--queries", help="Comma list of query counts for the payload sweep")

    scenarios_parser = subparsers.add_parser("scenarios", help="List or run every scenario")
    protocol_args(scenarios_parser)
    scenarios_parser.add_argument("--audit-count", type=_positive, help="Queries per audit (K)")
    scenarios_parser.add_argument("--run", action="store_true", help="Run the whole matrix")
    return parser


async def main(argv: Optional[Sequence[str]] = None, out: Optional[TextIO] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    settings = get_settings()
    logging.basicConfig(level=args.log_level or settings.log_level, stream=sys.stderr)
    cli = PorchainCLI(settings, out)

    try:
        if args.command == "keygen":
            cli.keygen(Scheme(args.scheme), args.sectors, args.out, args.seed)
            return EXIT_OK

        if args.command == "run":
            data = args.file.read_bytes() if args.file else None
            size = parse_size_list(args.file_size)[0] if args.file_size else None
            config = cli._config(args, file_size=size, owner_as_auditor=args.owner_as_auditor)
            run = await cli.run(
                args.scenario, config, data, args.seed, args.report, args.metrics, args.tx_log
            )
            return EXIT_OK if run.report.matched else EXIT_MISMATCH

        if args.command == "bench":
            config = cli._config(args)
            if args.queries:
                cli.bench_queries(parse_int_list(args.queries), config, args.seed)
            else:
                cli.bench(parse_size_list(args.file_sizes), config, args.seed)
            return EXIT_OK

        if args.command == "scenarios":
            matched = await cli.scenarios(args.run, cli._config(args), args.seed)
            return EXIT_OK if matched else EXIT_MISMATCH

    except (ParameterError, FormatError, OSError, ValueError) as e:
        logger.error(f"Error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    parser.print_help()
    return EXIT_USAGE


def run() -> None:
    sys.exit(asyncio.run(main()))


if __name__ == "__main__":
    run()
