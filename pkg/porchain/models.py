"""
Data Models - Pydantic schemas for parameters, ledger records and reports
"""

import json
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .crypto import SCALAR_BYTES, SECTOR_WIDTH_BYTES, SigKeypair, curve_order
from .utils import canonical_json, sha256, u64


class Scheme(str, Enum):
    AUB = "aub"
    PPAUB = "ppaub"


class PorParams(BaseModel):
    """Public parameters of one tagged file"""

    model_config = ConfigDict(frozen=True)

    scheme: Scheme = Field(..., description="aub or ppaub")
    n: int = Field(..., ge=1, description="Number of blocks")
    s: int = Field(default=1, ge=1, description="Sectors per block (1 under PPAuB)")
    sector_width_bytes: int = Field(
        default=SECTOR_WIDTH_BYTES, ge=1, description="Bytes packed into one sector"
    )
    l: int = Field(..., ge=1, description="Challenged blocks per query")
    fileid: Optional[int] = Field(default=None, description="Random file identifier (PPAuB)")
    byte_length: int = Field(..., ge=1, description="Original file length before padding")

    @field_validator("sector_width_bytes")
    @classmethod
    def validate_sector_width(cls, v: int) -> int:
        if v >= SCALAR_BYTES:
            raise ValueError(f"Sector width must be below {SCALAR_BYTES} bytes: {v}")
        return v

    @model_validator(mode="after")
    def validate_layout(self) -> "PorParams":
        if self.scheme == Scheme.PPAUB:
            if self.s != 1:
                raise ValueError("PPAuB uses a single sector per block")
            if self.fileid is None or not 0 <= self.fileid < curve_order:
                raise ValueError("PPAuB requires a fileid in [0, p)")
        elif self.fileid is not None:
            raise ValueError("AuB parameters carry no fileid")
        expected = -(-self.byte_length // self.block_bytes)
        if self.n != expected:
            raise ValueError(f"Block count {self.n} does not match length (expected {expected})")
        return self

    @property
    def block_bytes(self) -> int:
        return self.s * self.sector_width_bytes

    @classmethod
    def for_data(
        cls,
        scheme: Scheme,
        byte_length: int,
        s: int,
        l: int,
        fileid: Optional[int] = None,
        sector_width_bytes: int = SECTOR_WIDTH_BYTES,
    ) -> "PorParams":
        """Derive n from the file length: n = ceil(b / (s * width * 8)) in bits"""
        if byte_length < 1:
            raise ValueError("File must not be empty")
        n = -(-byte_length // (s * sector_width_bytes))
        return cls(
            scheme=scheme,
            n=n,
            s=s,
            sector_width_bytes=sector_width_bytes,
            l=l,
            fileid=fileid,
            byte_length=byte_length,
        )


class ContractTerms(BaseModel):
    """Payout terms fixed by the owner at registration"""

    model_config = ConfigDict(frozen=True)

    audit_count: int = Field(..., ge=1, description="Minimum number of audit queries")
    c_s: int = Field(..., ge=0, description="Fee paid to an honest server")
    c_a: int = Field(..., ge=0, description="Fee paid to an honest auditor")
    deposit_s: int = Field(..., ge=0, description="Server channel deposit")
    deposit_a: int = Field(..., ge=0, description="Auditor channel deposit")
    penalty: Optional[int] = Field(
        default=None, ge=0, description="Forfeited amount; the offender's whole deposit when unset"
    )
    dispute_window: int = Field(default=5, ge=1, description="Blocks allowed for a rebuttal")
    max_queries: Optional[int] = Field(
        default=None, ge=1, description="AuB per-channel query cap; l - 1 when unset"
    )

    @property
    def payout(self) -> int:
        return self.c_s + self.c_a

    def forfeit(self, deposit: int) -> int:
        return deposit if self.penalty is None else min(self.penalty, deposit)


class VerdictOutcome(str, Enum):
    PAID_BOTH = "paid_both"
    PENALIZE_SERVER = "penalize_server"
    PENALIZE_AUDITOR = "penalize_auditor"
    TERMINATED = "terminated"


class VerdictReason(str, Enum):
    AUDIT_PASSED = "audit_passed"
    AGGREGATE_FAILED = "aggregate_failed"
    MALFORMED_PROOF = "malformed_proof"
    UNDER_AUDIT = "under_audit"
    BAD_QUERY_SIGNATURE = "bad_query_signature"
    QUERY_MISMATCH = "query_mismatch"
    PRIVACY_CAP = "privacy_cap"
    STATE_MISMATCH = "state_mismatch"
    FALSE_COMPLAINT = "false_complaint"
    REBUTTAL_ACCEPTED = "rebuttal_accepted"
    REBUTTAL_FAILED = "rebuttal_failed"
    REBUTTAL_MALFORMED = "rebuttal_malformed"
    DISPUTE_TIMEOUT = "dispute_timeout"
    UPLOAD_ABORTED = "upload_aborted"


class Transfer(BaseModel):
    source: str = Field(..., description="Debited account")
    target: str = Field(..., description="Credited account")
    amount: int = Field(..., ge=0)


class Verdict(BaseModel):
    """Terminal adjudication of one channel"""

    channel_id: str = Field(..., description="Hex channel identifier; empty for a pre-channel termination")
    height: int = Field(..., ge=0, description="Block height the verdict was issued at")
    outcome: VerdictOutcome
    reason: VerdictReason
    transfers: List[Transfer] = Field(default_factory=list)

    def net_flows(self) -> Dict[str, int]:
        flows: Dict[str, int] = {}
        for t in self.transfers:
            flows[t.source] = flows.get(t.source, 0) - t.amount
            flows[t.target] = flows.get(t.target, 0) + t.amount
        return flows


class Transaction(BaseModel):
    """A ledger transaction; payload values are JSON scalars or hex strings"""

    model_config = ConfigDict(frozen=True)

    kind: str
    sender: str
    payload: Dict[str, Any] = Field(default_factory=dict)

    def encode(self) -> bytes:
        return canonical_json(self.model_dump(mode="json"))

    @classmethod
    def decode(cls, data: bytes) -> "Transaction":
        return cls.model_validate(json.loads(data.decode("utf-8")))

    def tx_hash(self) -> bytes:
        return sha256(self.encode())


class Block(BaseModel):
    model_config = ConfigDict(frozen=True)

    height: int = Field(..., ge=0)
    parent_hash: str = Field(..., description="Hex header hash of the parent")
    txs: List[Transaction] = Field(default_factory=list)
    header_hash: str

    @staticmethod
    def compute_header_hash(height: int, parent_hash: str, txs: List[Transaction]) -> str:
        """H(height || parent_hash || H(tx hashes in order))"""
        tx_root = sha256(b"".join(tx.tx_hash() for tx in txs))
        return sha256(u64(height) + bytes.fromhex(parent_hash) + tx_root).hex()

    @classmethod
    def build(cls, height: int, parent_hash: str, txs: List[Transaction]) -> "Block":
        return cls(
            height=height,
            parent_hash=parent_hash,
            txs=txs,
            header_hash=cls.compute_header_hash(height, parent_hash, txs),
        )


class Role(str, Enum):
    OWNER = "owner"
    SERVER = "server"
    AUDITOR = "auditor"


class StrategyKind(str, Enum):
    HONEST = "honest"
    SERVER_DROP_BLOCK = "server_drop_block"
    SERVER_CLAIM_WRONG_BLOCK = "server_claim_wrong_block"
    SERVER_WRONG_FETCH = "server_wrong_fetch"
    AUDITOR_OVER_QUERY = "auditor_over_query"
    AUDITOR_MISRECORD_RESPONSE = "auditor_misrecord_response"
    AUDITOR_SUPPRESS_QUERY = "auditor_suppress_query"
    OWNER_DENY_COUNTERSIGN = "owner_deny_countersign"
    OWNER_DENY_PAYMENT = "owner_deny_payment"
    SERVER_AUDITOR_COLLUDE_IGNORE_FAIL = "server_auditor_collude_ignore_fail"
    SERVER_AUDITOR_COLLUDE_SKIP_INDEX = "server_auditor_collude_skip_index"
    OWNER_AUDITOR_COLLUDE = "owner_auditor_collude"
    OWNER_SERVER_COLLUDE_DENY_AUDITOR_PAY = "owner_server_collude_deny_auditor_pay"


STRATEGY_ROLES: Dict[StrategyKind, frozenset] = {
    StrategyKind.HONEST: frozenset(Role),
    StrategyKind.SERVER_DROP_BLOCK: frozenset({Role.SERVER}),
    StrategyKind.SERVER_CLAIM_WRONG_BLOCK: frozenset({Role.SERVER}),
    StrategyKind.SERVER_WRONG_FETCH: frozenset({Role.SERVER}),
    StrategyKind.AUDITOR_OVER_QUERY: frozenset({Role.AUDITOR}),
    StrategyKind.AUDITOR_MISRECORD_RESPONSE: frozenset({Role.AUDITOR}),
    StrategyKind.AUDITOR_SUPPRESS_QUERY: frozenset({Role.AUDITOR}),
    StrategyKind.OWNER_DENY_COUNTERSIGN: frozenset({Role.OWNER}),
    StrategyKind.OWNER_DENY_PAYMENT: frozenset({Role.OWNER}),
    StrategyKind.SERVER_AUDITOR_COLLUDE_IGNORE_FAIL: frozenset({Role.SERVER, Role.AUDITOR}),
    StrategyKind.SERVER_AUDITOR_COLLUDE_SKIP_INDEX: frozenset({Role.SERVER, Role.AUDITOR}),
    StrategyKind.OWNER_AUDITOR_COLLUDE: frozenset({Role.OWNER, Role.AUDITOR}),
    StrategyKind.OWNER_SERVER_COLLUDE_DENY_AUDITOR_PAY: frozenset({Role.OWNER, Role.SERVER}),
}

STRATEGY_CASE: Dict[StrategyKind, Optional[int]] = {
    StrategyKind.HONEST: None,
    StrategyKind.SERVER_DROP_BLOCK: 1,
    StrategyKind.SERVER_CLAIM_WRONG_BLOCK: 1,
    StrategyKind.SERVER_WRONG_FETCH: 1,
    StrategyKind.AUDITOR_OVER_QUERY: 2,
    StrategyKind.AUDITOR_MISRECORD_RESPONSE: 2,
    StrategyKind.AUDITOR_SUPPRESS_QUERY: 2,
    StrategyKind.OWNER_DENY_COUNTERSIGN: 3,
    StrategyKind.OWNER_DENY_PAYMENT: 3,
    StrategyKind.SERVER_AUDITOR_COLLUDE_IGNORE_FAIL: 4,
    StrategyKind.SERVER_AUDITOR_COLLUDE_SKIP_INDEX: 4,
    StrategyKind.OWNER_AUDITOR_COLLUDE: 5,
    StrategyKind.OWNER_SERVER_COLLUDE_DENY_AUDITOR_PAY: 6,
}


class AdversarialStrategy(BaseModel):
    """One deviation from the honest protocol"""

    model_config = ConfigDict(frozen=True)

    kind: StrategyKind = Field(default=StrategyKind.HONEST)
    index: Optional[int] = Field(
        default=None, ge=1, description="Targeted block; resolved at channel open when unset"
    )

    @property
    def roles(self) -> frozenset:
        return STRATEGY_ROLES[self.kind]

    @property
    def case(self) -> Optional[int]:
        return STRATEGY_CASE[self.kind]


class ActorConfig(BaseModel):
    """Identity, keys and behaviour of one protocol participant"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    role: Role
    identity: str = Field(..., min_length=1)
    keys: SigKeypair
    scheme: Scheme
    strategies: List[AdversarialStrategy] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_strategies(self) -> "ActorConfig":
        for strategy in self.strategies:
            if self.role not in strategy.roles:
                raise ValueError(f"Strategy {strategy.kind.value} is not available to {self.role.value}")
        return self

    def strategy(self, kind: StrategyKind) -> Optional[AdversarialStrategy]:
        for s in self.strategies:
            if s.kind == kind:
                return s
        return None

    def has(self, kind: StrategyKind) -> bool:
        return self.strategy(kind) is not None


class ExpectedOutcome(BaseModel):
    """One row of the expected-outcome table"""

    outcome: Optional[VerdictOutcome] = None
    reason: Optional[VerdictReason] = None
    aborted_phase: Optional[str] = None
    assertions: List[str] = Field(default_factory=list)


class ScenarioEvent(BaseModel):
    seq: int = Field(..., ge=0)
    phase: str
    kind: str
    actor: Optional[str] = None
    detail: Dict[str, Any] = Field(default_factory=dict)


class ScenarioReport(BaseModel):
    """Outcome of one scenario run; serialized as JSON-lines"""

    scenario: str
    scheme: Scheme
    seed: str = Field(..., description="Hex master seed")
    case: Optional[int] = None
    expected: ExpectedOutcome
    outcome: Optional[VerdictOutcome] = None
    reason: Optional[VerdictReason] = None
    aborted_phase: Optional[str] = None
    verdicts: List[Verdict] = Field(default_factory=list)
    balances: Dict[str, int] = Field(default_factory=dict)
    supply_before: int = 0
    supply_after: int = 0
    assertions: Dict[str, bool] = Field(default_factory=dict)
    detection_probability: Optional[float] = None
    events: List[ScenarioEvent] = Field(default_factory=list)
    matched: bool = False

    def to_jsonl(self) -> str:
        lines = [json.dumps(e.model_dump(mode="json"), sort_keys=True) for e in self.events]
        summary = self.model_dump(mode="json", exclude={"events"})
        summary["kind"] = "summary"
        lines.append(json.dumps(summary, sort_keys=True))
        return "\n".join(lines) + "\n"


class RunMetrics(BaseModel):
    """Timings and sizes collected during one run"""

    upload_time: float = Field(default=0.0, ge=0)
    tag_time: float = Field(default=0.0, ge=0)
    proof_times: List[float] = Field(default_factory=list)
    verify_times: List[float] = Field(default_factory=list)
    ledger_wait_time: float = Field(default=0.0, ge=0)
    close_payload_bytes: int = Field(default=0, ge=0)
    query_count: int = Field(default=0, ge=0)

    @field_validator("proof_times", "verify_times")
    @classmethod
    def validate_durations(cls, v: List[float]) -> List[float]:
        if any(t < 0 for t in v):
            raise ValueError("Durations must be non-negative")
        return v

    @property
    def mean_proof_time(self) -> float:
        return sum(self.proof_times) / len(self.proof_times) if self.proof_times else 0.0

    @property
    def mean_verify_time(self) -> float:
        return sum(self.verify_times) / len(self.verify_times) if self.verify_times else 0.0


class BenchRow(BaseModel):
    """One CSV row of the bench command"""

    size_bytes: int
    n_blocks: int
    sectors: int
    upload_s: float
    tag_s: float
    prove_s: float
    verify_s: float
    verify_with_ledger_s: float
    close_payload_bytes: int

    @classmethod
    def header(cls) -> List[str]:
        return list(cls.model_fields)

    def values(self) -> List[str]:
        out = []
        for name in self.header():
            value = getattr(self, name)
            out.append(f"{value:.6f}" if isinstance(value, float) else str(value))
        return out
