"""
Scenarios - End-to-end protocol runs on a fresh ledger with adversarial strategies injected

Every registered scenario drives all four phases (registration, upload,
credentials, audit channel with its close or dispute) and compares what the
ledger decided against an expected-outcome row.
"""

import asyncio
import logging
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from .actors import (
    BLOCK_LOSING,
    Auditor,
    EventLog,
    Owner,
    Server,
    ServerStore,
    role_config,
)
from .channel import AcceptOutcome, ServerComplaint, resolve_max_queries
from .crypto import SECTOR_WIDTH_BYTES, SigKeypair, XofSampler
from .errors import LedgerRejected, ParameterError, ProtocolAbort
from .ledger import ESCROW, Ledger
from .models import (
    AdversarialStrategy,
    ContractTerms,
    ExpectedOutcome,
    PorParams,
    Role,
    RunMetrics,
    ScenarioReport,
    Scheme,
    StrategyKind,
    Transaction,
    Verdict,
    VerdictOutcome,
    VerdictReason,
)
from .por import detection_probability, gen_query
from .settings import PorchainSettings, get_settings
from .utils import calculate_cache_key, derive_seed, parse_seed

logger = logging.getLogger(__name__)

OWNER_ID = "owner"
SERVER_ID = "server"
AUDITOR_ID = "auditor"

BOTH_SCHEMES = frozenset(Scheme)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    description: str
    strategies: Tuple[StrategyKind, ...]
    expected: ExpectedOutcome
    schemes: frozenset = BOTH_SCHEMES

    @property
    def case(self) -> Optional[int]:
        cases = [AdversarialStrategy(kind=k).case for k in self.strategies]
        return next((c for c in cases if c is not None), None)


def _expect(
    outcome: Optional[VerdictOutcome] = None,
    reason: Optional[VerdictReason] = None,
    aborted: Optional[str] = None,
    *assertions: str,
) -> ExpectedOutcome:
    return ExpectedOutcome(
        outcome=outcome,
        reason=reason,
        aborted_phase=aborted,
        assertions=["conservation", *assertions],
    )


_SCENARIOS = [
    ScenarioSpec(
        "honest",
        "Every party follows the protocol",
        (),
        _expect(VerdictOutcome.PAID_BOTH, VerdictReason.AUDIT_PASSED, None, "fetch_intact"),
    ),
    ScenarioSpec(
        "case1-dropblock",
        "Server loses a challenged block and cannot rebut the auditor's complaint",
        (StrategyKind.SERVER_DROP_BLOCK,),
        _expect(VerdictOutcome.PENALIZE_SERVER, VerdictReason.REBUTTAL_FAILED, None, "auditor_paid"),
    ),
    ScenarioSpec(
        "case1-wronghash",
        "Server signs a digest list with one altered h_i",
        (StrategyKind.SERVER_CLAIM_WRONG_BLOCK,),
        _expect(
            VerdictOutcome.TERMINATED,
            VerdictReason.UPLOAD_ABORTED,
            "upload",
            "nothing_anchored",
            "escrow_refunded",
        ),
    ),
    ScenarioSpec(
        "case1-wrongfetch",
        "Server hands back an altered block when the owner downloads",
        (StrategyKind.SERVER_WRONG_FETCH,),
        _expect(VerdictOutcome.PAID_BOTH, VerdictReason.AUDIT_PASSED, None, "fetch_mismatch"),
    ),
    ScenarioSpec(
        "case2-overquery",
        "Auditor keeps querying past the l - 1 cap to extract the file",
        (StrategyKind.AUDITOR_OVER_QUERY,),
        _expect(VerdictOutcome.PENALIZE_AUDITOR, VerdictReason.PRIVACY_CAP, None, "server_paid"),
        frozenset({Scheme.AUB}),
    ),
    ScenarioSpec(
        "case2-misrecord",
        "Auditor records a different response than it received",
        (StrategyKind.AUDITOR_MISRECORD_RESPONSE,),
        _expect(VerdictOutcome.PENALIZE_AUDITOR, VerdictReason.STATE_MISMATCH, None, "server_paid"),
    ),
    ScenarioSpec(
        "case2-suppress",
        "Auditor skips a query of the deterministic sequence",
        (StrategyKind.AUDITOR_SUPPRESS_QUERY,),
        _expect(VerdictOutcome.PENALIZE_AUDITOR, VerdictReason.QUERY_MISMATCH, None, "server_paid"),
    ),
    ScenarioSpec(
        "case3-denypay",
        "Owner tries to take the escrow back once the protocol is running",
        (StrategyKind.OWNER_DENY_PAYMENT,),
        _expect(VerdictOutcome.PAID_BOTH, VerdictReason.AUDIT_PASSED, None, "escrow_locked"),
    ),
    ScenarioSpec(
        "case3-nocountersign",
        "Owner withholds the countersignature of the server digest",
        (StrategyKind.OWNER_DENY_COUNTERSIGN,),
        _expect(
            VerdictOutcome.TERMINATED,
            VerdictReason.UPLOAD_ABORTED,
            "upload",
            "server_anchor_rejected",
            "open_rejected",
            "escrow_refunded",
        ),
    ),
    ScenarioSpec(
        "case4-ignorefail",
        "Server loses a block and the colluding auditor closes as if the audit passed",
        (StrategyKind.SERVER_AUDITOR_COLLUDE_IGNORE_FAIL,),
        _expect(VerdictOutcome.PENALIZE_AUDITOR, VerdictReason.AGGREGATE_FAILED, None),
    ),
    ScenarioSpec(
        "case4-skipindex",
        "Colluding auditor zeroes the coefficient of the block the server lost",
        (StrategyKind.SERVER_AUDITOR_COLLUDE_SKIP_INDEX,),
        _expect(VerdictOutcome.PENALIZE_AUDITOR, VerdictReason.QUERY_MISMATCH, None),
    ),
    ScenarioSpec(
        "case5-collude",
        "Owner and auditor raise a false complaint to keep the server fee",
        (StrategyKind.OWNER_AUDITOR_COLLUDE,),
        _expect(
            VerdictOutcome.PENALIZE_AUDITOR, VerdictReason.REBUTTAL_ACCEPTED, None, "server_paid"
        ),
    ),
    ScenarioSpec(
        "case6-collude",
        "Owner and server raise a false state complaint to keep the auditor fee",
        (StrategyKind.OWNER_SERVER_COLLUDE_DENY_AUDITOR_PAY,),
        _expect(
            VerdictOutcome.PENALIZE_SERVER, VerdictReason.FALSE_COMPLAINT, None, "auditor_paid"
        ),
    ),
]

SCENARIOS: Dict[str, ScenarioSpec] = {spec.name: spec for spec in _SCENARIOS}

ALIASES: Dict[str, Dict[Scheme, str]] = {
    "case1": {Scheme.AUB: "case1-dropblock", Scheme.PPAUB: "case1-dropblock"},
    "case2": {Scheme.AUB: "case2-overquery", Scheme.PPAUB: "case2-misrecord"},
    "case3": {Scheme.AUB: "case3-denypay", Scheme.PPAUB: "case3-denypay"},
    "case4": {Scheme.AUB: "case4-ignorefail", Scheme.PPAUB: "case4-ignorefail"},
    "case5": {Scheme.AUB: "case5-collude", Scheme.PPAUB: "case5-collude"},
    "case6": {Scheme.AUB: "case6-collude", Scheme.PPAUB: "case6-collude"},
}


def resolve_scenario(name: str, scheme: Scheme) -> ScenarioSpec:
    """
    Look up a scenario by name or case alias.

    Raises:
        ParameterError: For an unknown name or a scenario the scheme does not support
    """
    key = name.strip().lower()
    if key in ALIASES:
        key = ALIASES[key][scheme]
    if key not in SCENARIOS:
        raise ParameterError(f"Unknown scenario: {name}")
    spec = SCENARIOS[key]
    if scheme not in spec.schemes:
        raise ParameterError(f"Scenario {spec.name} does not apply to {scheme.value}")
    return spec


def list_scenarios() -> List[Dict[str, Any]]:
    return [
        {
            "name": spec.name,
            "case": spec.case,
            "description": spec.description,
            "schemes": sorted(s.value for s in spec.schemes),
            "expected": spec.expected.model_dump(mode="json"),
        }
        for spec in _SCENARIOS
    ]


class ScenarioConfig(BaseModel):
    """Knobs of one run; unset values come from PorchainSettings"""

    scheme: Scheme = Field(default=Scheme.AUB)
    sectors: int = Field(default=1, ge=1, description="Sectors per block (AuB)")
    query_size: int = Field(default=3, ge=1, description="l")
    audit_count: int = Field(default=2, ge=1, description="K")
    file_size: Optional[int] = Field(
        default=None, ge=1, description="Generated file length; 2 * l blocks when unset"
    )
    c_s: int = Field(default=100, ge=0)
    c_a: int = Field(default=50, ge=0)
    deposit_s: int = Field(default=200, ge=0)
    deposit_a: int = Field(default=200, ge=0)
    penalty: Optional[int] = Field(default=None, ge=0)
    dispute_window: int = Field(default=5, ge=1)
    initial_balance: int = Field(default=1000, ge=0)
    max_queries: Optional[int] = Field(default=None, ge=1)
    block_wait_seconds: float = Field(default=0.0, ge=0.0)
    owner_as_auditor: bool = False
    data_dir: Optional[Path] = None

    @classmethod
    def from_settings(cls, settings: Optional[PorchainSettings] = None, **overrides: Any) -> "ScenarioConfig":
        s = settings or get_settings()
        values: Dict[str, Any] = {
            "scheme": Scheme(s.default_scheme),
            "sectors": s.aub_sectors,
            "query_size": s.query_size,
            "audit_count": s.audit_count,
            "c_s": s.c_s,
            "c_a": s.c_a,
            "deposit_s": s.deposit_s,
            "deposit_a": s.deposit_a,
            "dispute_window": s.dispute_window,
            "initial_balance": s.initial_balance,
            "max_queries": s.aub_max_queries,
            "block_wait_seconds": s.block_wait_seconds,
            "owner_as_auditor": s.owner_as_auditor,
            "data_dir": s.data_dir,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def block_sectors(self) -> int:
        return self.sectors if self.scheme == Scheme.AUB else 1

    @property
    def generated_size(self) -> int:
        if self.file_size is not None:
            return self.file_size
        return 2 * self.query_size * self.block_sectors * SECTOR_WIDTH_BYTES

    def terms(self) -> ContractTerms:
        return ContractTerms(
            audit_count=self.audit_count,
            c_s=self.c_s,
            c_a=self.c_a,
            deposit_s=self.deposit_s,
            deposit_a=self.deposit_a,
            penalty=self.penalty,
            dispute_window=self.dispute_window,
            max_queries=self.max_queries,
        )

    def with_query_cap(self, privacy_cap: bool = False) -> "ScenarioConfig":
        """
        Pin the AuB per-channel cap for a run.

        An unset cap becomes max(K, l - 1) so an honest audit may ask more than
        l - 1 queries. privacy_cap keeps the strict l - 1 cap that over-querying
        is judged against.
        """
        if self.scheme != Scheme.AUB or self.max_queries is not None or privacy_cap:
            return self
        return self.model_copy(update={"max_queries": max(self.audit_count, self.query_size - 1, 1)})

    def check(self, byte_length: int) -> PorParams:
        """
        Reject parameter sets no run can satisfy.

        Raises:
            ParameterError: When l exceeds n or, under AuB, K exceeds the query cap
        """
        fileid = 1 if self.scheme == Scheme.PPAUB else None
        try:
            params = PorParams.for_data(
                self.scheme, byte_length, s=self.block_sectors, l=self.query_size, fileid=fileid
            )
        except ValueError as e:
            raise ParameterError(str(e))
        if self.query_size > params.n:
            raise ParameterError(f"Query size {self.query_size} exceeds the block count {params.n}")
        cap = resolve_max_queries(self.scheme, self.query_size, self.max_queries)
        if cap is not None and self.audit_count > cap:
            raise ParameterError(
                f"audit_count {self.audit_count} exceeds the AuB query cap {cap} (l={self.query_size})"
            )
        return params


@dataclass
class ScenarioRun:
    """Everything one run produced"""

    report: ScenarioReport
    metrics: RunMetrics
    ledger: Ledger
    data: bytes = b""
    fetched: Optional[bytes] = None


@dataclass
class _Context:
    spec: ScenarioSpec
    config: ScenarioConfig
    ledger: Ledger
    events: EventLog
    owner: Owner
    server: Server
    auditor: Auditor
    assertions: Dict[str, bool] = field(default_factory=dict)
    metrics: RunMetrics = field(default_factory=RunMetrics)
    verdict: Optional[Verdict] = None
    aborted_phase: Optional[str] = None
    dropped: Optional[int] = None
    fetched: Optional[bytes] = None


def generate_file(master: bytes, size: int) -> bytes:
    """Deterministic file contents for a seed"""
    return XofSampler(derive_seed(master, "file"), "FILE").read(size)


def execute_scenario(
    name: str,
    config: Optional[ScenarioConfig] = None,
    data: Optional[bytes] = None,
    seed: Optional[str] = None,
) -> ScenarioRun:
    """
    Run one scenario end to end.

    Args:
        name: Scenario name or case alias
        config: Run parameters; defaults from settings
        data: File contents; generated from the seed when omitted
        seed: Hex master seed; a fresh one when omitted

    Returns:
        ScenarioRun with the report, the metrics and the final ledger

    Raises:
        ParameterError: For unknown scenarios or unsatisfiable parameters
    """
    config = config or ScenarioConfig.from_settings()
    spec = resolve_scenario(name, config.scheme)
    config = config.with_query_cap(StrategyKind.AUDITOR_OVER_QUERY in spec.strategies)
    master = parse_seed(seed)
    if data is None:
        data = generate_file(master, config.generated_size)
    if not data:
        raise ParameterError("File must not be empty")
    params = config.check(len(data))

    with tempfile.TemporaryDirectory(prefix="porchain-") as tmp:
        root = Path(config.data_dir) if config.data_dir else Path(tmp)
        ctx = _build_context(spec, config, master, root / spec.name / config.scheme.value)
        supply_before = ctx.ledger.total_supply()
        logger.info(f"Running {spec.name} under {config.scheme.value} (n={params.n}, l={params.l})")
        try:
            _run_phases(ctx, data)
        except ProtocolAbort as e:
            ctx.aborted_phase = e.phase
            ctx.events.emit(e.phase, "aborted", None, reason=e.reason)
            logger.warning(f"{spec.name}: protocol terminated in {e.phase}: {e.reason}")
            _after_abort(ctx)

    ledger = ctx.ledger
    supply_after = ledger.total_supply()
    ctx.assertions["conservation"] = supply_before == supply_after

    detection = None
    if ctx.dropped is not None:
        detection = detection_probability(params.n, params.l, config.audit_count)

    report = ScenarioReport(
        scenario=spec.name,
        scheme=config.scheme,
        seed=master.hex(),
        case=spec.case,
        expected=spec.expected,
        outcome=ctx.verdict.outcome if ctx.verdict else None,
        reason=ctx.verdict.reason if ctx.verdict else None,
        aborted_phase=ctx.aborted_phase,
        verdicts=ledger.verdicts,
        balances={k: v for k, v in sorted(ledger.balances.items())},
        supply_before=supply_before,
        supply_after=supply_after,
        assertions=dict(sorted(ctx.assertions.items())),
        detection_probability=detection,
        events=ctx.events.events,
    )
    report.matched = outcome_matches(report)
    level = logging.INFO if report.matched else logging.WARNING
    logger.log(level, f"{spec.name}: matched={report.matched} outcome={report.outcome}")
    return ScenarioRun(report=report, metrics=ctx.metrics, ledger=ledger, data=data, fetched=ctx.fetched)


def run_scenario(
    name: str,
    config: Optional[ScenarioConfig] = None,
    data: Optional[bytes] = None,
    seed: Optional[str] = None,
) -> ScenarioReport:
    return execute_scenario(name, config, data, seed).report


def outcome_matches(report: ScenarioReport) -> bool:
    expected = report.expected
    if (report.outcome, report.reason, report.aborted_phase) != (
        expected.outcome,
        expected.reason,
        expected.aborted_phase,
    ):
        return False
    return all(report.assertions.get(name, False) for name in expected.assertions)


# Phases


def _build_context(spec: ScenarioSpec, config: ScenarioConfig, master: bytes, store_root: Path) -> _Context:
    strategies = [AdversarialStrategy(kind=k) for k in spec.strategies]
    ledger = Ledger(block_wait_seconds=config.block_wait_seconds)
    events = EventLog()

    owner_keys = SigKeypair.generate(derive_seed(master, "sig/owner"))
    server_keys = SigKeypair.generate(derive_seed(master, "sig/server"))
    if config.owner_as_auditor:
        auditor_id, auditor_keys = OWNER_ID, owner_keys
    else:
        auditor_id, auditor_keys = AUDITOR_ID, SigKeypair.generate(derive_seed(master, "sig/auditor"))

    scheme = config.scheme
    owner = Owner(
        role_config(Role.OWNER, OWNER_ID, owner_keys, scheme, strategies),
        ledger,
        rng=XofSampler(derive_seed(master, "owner/keys"), "OWNER"),
        events=events,
    )
    server = Server(
        role_config(Role.SERVER, SERVER_ID, server_keys, scheme, strategies),
        ledger,
        ServerStore(store_root),
        rng=XofSampler(derive_seed(master, "server/r"), "SERVER"),
        events=events,
    )
    auditor = Auditor(
        role_config(Role.AUDITOR, auditor_id, auditor_keys, scheme, strategies), ledger, events
    )
    ledger.mint({identity: config.initial_balance for identity in {OWNER_ID, SERVER_ID, auditor_id}})
    return _Context(spec, config, ledger, events, owner, server, auditor)


def _run_phases(ctx: _Context, data: bytes) -> None:
    config, owner, server, auditor = ctx.config, ctx.owner, ctx.server, ctx.auditor
    owner.owner_phase0(
        config.terms(),
        server.identity,
        server.verify_key,
        auditor.identity,
        auditor.verify_key,
    )

    started = time.perf_counter()
    owner.owner_upload(data, config.scheme, server, s=config.block_sectors, l=config.query_size)
    ctx.metrics.upload_time = time.perf_counter() - started
    ctx.metrics.tag_time = owner.tag_time

    if owner.strategy(StrategyKind.OWNER_DENY_PAYMENT):
        ctx.assertions["escrow_locked"] = _escrow_locked(ctx)

    owner.owner_send_creds(auditor.identity)
    auditor.fetch_credentials()
    _audit(ctx)

    result = owner.owner_fetch(server)
    ctx.fetched = result.data
    ctx.assertions["fetch_intact"] = result.intact and result.data == data
    wrong = server.strategy(StrategyKind.SERVER_WRONG_FETCH)
    if wrong is not None:
        n = owner.file.n if owner.file else 0
        ctx.assertions["fetch_mismatch"] = result.mismatched == [wrong.index or min(2, n)]


def _after_abort(ctx: _Context) -> None:
    """Check that an aborted upload left nothing usable, then let the owner terminate"""
    ledger = ctx.ledger
    ctx.assertions["nothing_anchored"] = ledger.contract.digests is None
    if ctx.owner.strategy(StrategyKind.OWNER_DENY_COUNTERSIGN):
        ctx.assertions["server_anchor_rejected"] = (
            _rejection(ctx.server.anchor_alone) == "missing_countersignature"
        )
    ctx.assertions["open_rejected"] = _rejection(
        lambda: ctx.auditor.open_channel(ctx.config.deposit_a)
    ) is not None
    if ctx.aborted_phase != "upload":
        return
    try:
        ctx.verdict = ctx.owner.owner_terminate()
    except ProtocolAbort as e:
        logger.warning(f"{ctx.spec.name}: termination refused: {e.reason}")
        return
    ctx.assertions["escrow_refunded"] = (
        ledger.balance_of(ESCROW) == 0
        and ledger.balance_of(ctx.owner.identity) == ctx.config.initial_balance
    )


def _rejection(action: Callable[[], Any]) -> Optional[str]:
    """Reason the ledger gave for refusing the action; None when it went through"""
    try:
        action()
    except LedgerRejected as e:
        return e.reason
    return None


def _escrow_locked(ctx: _Context) -> bool:
    """Once the digest is anchored the owner can neither terminate nor mint funds back"""
    owner_id = ctx.owner.identity
    try:
        ctx.owner.owner_terminate()
    except ProtocolAbort as e:
        refused = e.reason == "escrow_locked"
    else:
        return False
    mint = Transaction(kind="mint", sender=owner_id, payload={"allocations": {owner_id: 1}})
    return refused and _rejection(lambda: ctx.ledger.submit(mint)) == "genesis_closed"


def _audit(ctx: _Context) -> None:
    config, ledger, server, auditor = ctx.config, ctx.ledger, ctx.server, ctx.auditor
    assert auditor.public is not None and auditor.params is not None
    params = auditor.params

    wait_start = ledger.wait_time
    server.post_deposit(config.deposit_s)
    channel_id = auditor.open_channel(config.deposit_a)
    h_b = ledger.get_last_block_hash()
    ctx.events.emit("audit", "seeded", None, h_b=h_b.hex())

    losing = next((k for k in BLOCK_LOSING if server.strategy(k)), None)
    if losing is not None:
        ctx.dropped = gen_query(h_b, params, 0).indices[0]
        server.lose_block(ctx.dropped)
        for actor in (server, auditor):
            actor.config.strategies = [
                s.model_copy(update={"index": ctx.dropped}) if s.kind == losing else s
                for s in actor.config.strategies
            ]

    cap = resolve_max_queries(params.scheme, params.l, config.max_queries)
    a_ch = auditor.open_endpoint(channel_id, h_b, server.verify_key, config.audit_count, cap)
    s_ch = server.open_endpoint(channel_id, h_b, auditor.public, auditor.verify_key, cap)

    complaint: Optional[ServerComplaint] = None
    outcome = AcceptOutcome.CONTINUE
    for _ in range(config.audit_count + (cap or 0) + 2):
        msg = a_ch.auditor_step()
        started = time.perf_counter()
        answer = s_ch.server_step(msg)
        ctx.metrics.proof_times.append(time.perf_counter() - started)
        if isinstance(answer, ServerComplaint):
            complaint = answer
            break
        assert answer is not None
        started = time.perf_counter()
        outcome = a_ch.auditor_accept(answer)
        ctx.metrics.verify_times.append(time.perf_counter() - started)
        if outcome != AcceptOutcome.CONTINUE:
            break
    ctx.metrics.query_count = a_ch.queries_sent

    if complaint is None and outcome == AcceptOutcome.CLOSE_OK:
        final = s_ch.server_step(a_ch.ack())
        if isinstance(final, ServerComplaint):
            complaint = final

    if complaint is not None:
        ctx.events.emit("audit", "server_complaint", server.identity, reason=complaint.reason.value)
        ctx.metrics.close_payload_bytes = complaint.payload.size
        ctx.verdict = server.close(complaint.payload)
    elif outcome in (AcceptOutcome.CLOSE_OK, AcceptOutcome.CLOSE_COMPLAINT):
        payload = a_ch.build_close_payload()
        ctx.metrics.close_payload_bytes = payload.size
        kind = "auditor_complaint" if payload.complaint else "auditor_close"
        ctx.events.emit("audit", kind, auditor.identity, queries=payload.k)
        ctx.verdict = auditor.close(payload)
        if ctx.verdict is None:
            ctx.verdict = _dispute(ctx, payload.queries[-1])
    else:
        raise ProtocolAbort("audit", "channel did not terminate")

    ctx.metrics.ledger_wait_time = ledger.wait_time - wait_start
    _record_verdict(ctx)


def _dispute(ctx: _Context, disputed: Any) -> Verdict:
    """The server answers an open dispute with a rebuttal for the disputed query"""
    ctx.events.emit("dispute", "opened", None, seq=disputed.seq)
    try:
        return ctx.server.rebut(disputed)
    except LedgerRejected as e:
        logger.warning(f"Rebuttal rejected: {e}")
        ctx.ledger.advance_blocks(ctx.config.dispute_window + 1)
        verdicts = ctx.ledger.verdicts
        if not verdicts:
            raise ProtocolAbort("dispute", "no verdict after the window")
        return verdicts[-1]


def _record_verdict(ctx: _Context) -> None:
    verdict = ctx.verdict
    assert verdict is not None
    ctx.events.emit(
        "verdict",
        verdict.outcome.value,
        None,
        reason=verdict.reason.value,
        height=verdict.height,
    )
    flows = verdict.net_flows()
    terms = ctx.config.terms()
    auditor_id, server_id = ctx.auditor.identity, ctx.server.identity
    ctx.assertions["auditor_paid"] = flows.get(auditor_id, 0) >= terms.c_a + ctx.config.deposit_a
    ctx.assertions["server_paid"] = flows.get(server_id, 0) >= terms.c_s + ctx.config.deposit_s


class ScenarioRunner:
    """Async facade over execute_scenario with a result cache for seeded runs"""

    def __init__(self, settings: Optional[PorchainSettings] = None):
        self.settings = settings or get_settings()
        self._cache: Dict[str, ScenarioRun] = {}

    def _get_cache_key(self, name: str, config: ScenarioConfig, seed: str, data: Optional[bytes]) -> str:
        return calculate_cache_key(
            {
                "name": name,
                "config": config.model_dump(mode="json"),
                "seed": seed,
                "data": data.hex() if data is not None else None,
            }
        )

    async def run_scenario(
        self,
        name: str,
        config: Optional[ScenarioConfig] = None,
        data: Optional[bytes] = None,
        seed: Optional[str] = None,
    ) -> ScenarioRun:
        config = config or ScenarioConfig.from_settings(self.settings)
        seed = seed or self.settings.seed
        cache_key = self._get_cache_key(name, config, seed, data) if seed else None
        if cache_key and cache_key in self._cache:
            logger.info(f"Returning cached run: {cache_key}")
            return self._cache[cache_key]

        run = await asyncio.to_thread(execute_scenario, name, config, data, seed)
        if cache_key:
            self._cache[cache_key] = run
        return run

    async def run_matrix(
        self,
        names: List[str],
        schemes: List[Scheme],
        config: Optional[ScenarioConfig] = None,
        seed: Optional[str] = None,
    ) -> List[ScenarioRun]:
        """Run every applicable (scenario, scheme) pair; each gets its own ledger"""
        base = config or ScenarioConfig.from_settings(self.settings)
        jobs = []
        for name in names:
            for scheme in schemes:
                key = ALIASES.get(name, {}).get(scheme, name)
                if key in SCENARIOS and scheme not in SCENARIOS[key].schemes:
                    continue
                cfg = base.model_copy(update={"scheme": scheme})
                jobs.append(self.run_scenario(name, cfg, seed=seed))
        return list(await asyncio.gather(*jobs))
