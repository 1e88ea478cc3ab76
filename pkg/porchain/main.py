#!/usr/bin/env python3
"""
porchain MCP Server - Main Entry Point
A Model Context Protocol server exposing the proof-of-retrievability scenario lab
"""

import asyncio
import logging
from typing import Any, Dict, List, Optional

from mcp.server.fastmcp import FastMCP
from pydantic import BaseModel, Field

from .channel import resolve_max_queries
from .crypto import GT_BYTES, SECTOR_WIDTH_BYTES, SIGNATURE_BYTES
from .models import Scheme
from .scenarios import ScenarioConfig, ScenarioRunner
from .scenarios import list_scenarios as scenario_catalog
from .settings import get_settings

logger = logging.getLogger(__name__)

settings = get_settings()

# Create the MCP server instance
app = FastMCP(settings.server_name)
runner = ScenarioRunner(settings)


class RunScenarioArgs(BaseModel):
    """Arguments for running one scenario"""

    scenario: str = Field(description="Scenario name (e.g. 'honest', 'case1-dropblock') or alias 'case1'..'case6'")
    scheme: str = Field(default="aub", description="Scheme: aub or ppaub")
    audit_count: int = Field(default=2, ge=1, description="Queries per audit session (K)")
    query_size: int = Field(default=3, ge=1, description="Challenged blocks per query (l)")
    sectors: int = Field(default=1, ge=1, description="Sectors per block under AuB")
    file_size: int = Field(default=256, ge=1, description="Size of the generated file in bytes")
    seed: Optional[str] = Field(default=None, description="Hex master seed for a reproducible run")
    include_events: bool = Field(default=False, description="Return the full event log")


class RunMatrixArgs(BaseModel):
    """Arguments for running several scenarios under both schemes"""

    scenarios: List[str] = Field(description="Scenario names or case aliases")
    schemes: List[str] = Field(default=["aub", "ppaub"], description="Schemes to run")
    audit_count: int = Field(default=2, ge=1)
    query_size: int = Field(default=3, ge=1)
    seed: Optional[str] = Field(default=None, description="Hex master seed")


def _config(scheme: str, **values: Any) -> ScenarioConfig:
    return ScenarioConfig.from_settings(settings, scheme=Scheme(scheme.lower()), **values)


def _summary(run: Any, include_events: bool = False) -> Dict[str, Any]:
    report = run.report.model_dump(mode="json", exclude=None if include_events else {"events"})
    return {
        "report": report,
        "metrics": run.metrics.model_dump(mode="json"),
        "status": "matched" if run.report.matched else "mismatch",
    }


@app.tool()
async def run_scenario(args: RunScenarioArgs) -> Dict[str, Any]:
    """
    Run one protocol scenario end to end on a fresh simulated ledger and report
    the verdict, payment flows and per-case assertions.
    """
    try:
        config = _config(
            args.scheme,
            audit_count=args.audit_count,
            query_size=args.query_size,
            sectors=args.sectors,
            file_size=args.file_size,
        )
        run = await runner.run_scenario(args.scenario, config, seed=args.seed)
        return _summary(run, args.include_events)

    except Exception as e:
        logger.error(f"Error running scenario: {e}")
        return {"error": str(e), "status": "failed"}


@app.tool()
async def run_matrix(args: RunMatrixArgs) -> Dict[str, Any]:
    """
    Run several scenarios under each requested scheme concurrently. Scenarios
    that do not apply to a scheme are skipped.
    """
    try:
        schemes = [Scheme(s.lower()) for s in args.schemes]
        config = _config(
            schemes[0].value if schemes else "aub",
            audit_count=args.audit_count,
            query_size=args.query_size,
        )
        runs = await runner.run_matrix(args.scenarios, schemes, config, args.seed)
        return {
            "results": [
                {
                    "scenario": r.report.scenario,
                    "scheme": r.report.scheme.value,
                    "outcome": r.report.outcome.value if r.report.outcome else None,
                    "reason": r.report.reason.value if r.report.reason else None,
                    "aborted_phase": r.report.aborted_phase,
                    "matched": r.report.matched,
                }
                for r in runs
            ],
            "all_matched": all(r.report.matched for r in runs),
            "status": "success",
        }

    except Exception as e:
        logger.error(f"Error running matrix: {e}")
        return {"error": str(e), "status": "failed"}


@app.tool()
async def list_scenarios() -> Dict[str, Any]:
    """List every registered scenario with its case number and expected outcome."""
    return {"scenarios": scenario_catalog(), "status": "success"}


@app.tool()
async def get_protocol_info() -> Dict[str, Any]:
    """Describe the supported schemes, encodings and the configured contract terms."""
    l = settings.query_size
    return {
        "schemes": {
            "aub": {
                "sectors_per_block": settings.aub_sectors,
                "query_cap": resolve_max_queries(Scheme.AUB, l, settings.aub_max_queries),
                "response": "sigma (G1) and one mu per sector",
            },
            "ppaub": {
                "sectors_per_block": 1,
                "query_cap": None,
                "response": "sigma (G1), masked mu and R in GT on the first response",
            },
        },
        "curve": "BLS12-381",
        "sector_width_bytes": SECTOR_WIDTH_BYTES,
        "gt_bytes": GT_BYTES,
        "signature_bytes": SIGNATURE_BYTES,
        "terms": {
            "c_s": settings.c_s,
            "c_a": settings.c_a,
            "deposit_s": settings.deposit_s,
            "deposit_a": settings.deposit_a,
            "dispute_window": settings.dispute_window,
            "audit_count": settings.audit_count,
            "query_size": l,
        },
        "status": "success",
    }


async def main() -> None:
    """Run the MCP server"""
    logging.basicConfig(level=settings.log_level)
    logger.info(f"Starting {settings.server_name} MCP server...")
    await app.run_stdio_async()


def run() -> None:
    asyncio.run(main())


if __name__ == "__main__":
    run()
