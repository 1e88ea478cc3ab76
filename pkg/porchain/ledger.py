"""
Ledger - Simulated chain running the audit contract

Every accepted transaction is mined into its own block, so block heights double
as the contract clock. A transaction that the contract rejects raises
LedgerRejected and leaves balances, contract storage and the chain untouched.

Accounts named contract:* hold funds on behalf of the contract:

    contract:escrow    owner payout escrow (c_s + c_a)
    contract:deposits  server deposits posted ahead of a channel
    contract:channel   funds frozen in the open channel
"""

import json
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .channel import (
    ChannelMsg,
    ClosePayload,
    ComplaintReason,
    MsgKind,
    decode_query_payload,
    resolve_max_queries,
)
from .crypto import sig_verify
from .errors import FormatError, LedgerRejected, ParameterError
from .formats import dump_public_keys, dump_tx_log, load_public_keys, load_tx_log
from .models import (
    Block,
    ContractTerms,
    PorParams,
    Transaction,
    Transfer,
    Verdict,
    VerdictOutcome,
    VerdictReason,
)
from .por import (
    Accumulator,
    PorResponse,
    PublicKeys,
    Query,
    VerifyCode,
    accumulator_digest,
    collect_entries,
    gen_query,
    verify_response,
)
from .utils import canonical_json, pack_fields, sha256, u64

logger = logging.getLogger(__name__)

ESCROW = "contract:escrow"
DEPOSITS = "contract:deposits"
CHANNEL = "contract:channel"
LEDGER_SENDER = "ledger"

GENESIS_PARENT = "00" * 32

TX_KINDS = (
    "mint",
    "register_owner",
    "register_server",
    "register_auditor",
    "post_deposit",
    "receive_signed_digest",
    "deliver_credentials",
    "open_channel",
    "close_channel",
    "submit_rebuttal",
    "terminate",
    "tick",
)


def digest_message(digests: List[bytes]) -> bytes:
    """Bytes the server signs over h_1..h_n"""
    return pack_fields(b"DIGEST", *digests)


def countersign_message(digests: List[bytes], server_sig: bytes) -> bytes:
    """Bytes the owner countersigns: the digest message and the server's signature t"""
    return pack_fields(b"COUNTERSIGN", digest_message(digests), server_sig)


def _key_field(tx: Transaction) -> bytes:
    try:
        return bytes.fromhex(tx.payload["verify_key"])
    except (KeyError, ValueError, TypeError):
        raise LedgerRejected("malformed_transaction", "verify_key")


class ChannelState(str, Enum):
    OPEN = "open"
    DISPUTE = "dispute"
    CLOSED = "closed"


@dataclass
class ChannelRecord:
    channel_id: bytes
    opened_height: int
    server_deposit: int
    auditor_deposit: int
    payout: int
    h_b: Optional[bytes] = None
    nonce_floor: int = 0
    state: ChannelState = ChannelState.OPEN
    dispute_query: Optional[Query] = None
    dispute_deadline: Optional[int] = None


@dataclass
class ContractState:
    """Storage of the audit contract"""

    owner_id: Optional[str] = None
    owner_key: Optional[bytes] = None
    terms: Optional[ContractTerms] = None
    server_id: Optional[str] = None
    server_key: Optional[bytes] = None
    auditor_id: Optional[str] = None
    auditor_key: Optional[bytes] = None
    digests: Optional[List[bytes]] = None
    server_sig: Optional[bytes] = None
    owner_sig: Optional[bytes] = None
    public: Optional[PublicKeys] = None
    params: Optional[PorParams] = None
    posted_deposit: int = 0
    channel: Optional[ChannelRecord] = None
    channels_opened: int = 0
    credentials_log: List[str] = field(default_factory=list)
    terminated: bool = False


class Ledger:
    """
    Single logical state machine for chain, balances and contract.

    Submissions are serialized with a lock; reads return snapshots of plain values.
    """

    def __init__(self, block_wait_seconds: float = 0.0):
        if block_wait_seconds < 0:
            raise ParameterError("block_wait_seconds must be non-negative")
        self.block_wait_seconds = block_wait_seconds
        self.wait_time = 0.0
        self.blocks: List[Block] = [Block.build(0, GENESIS_PARENT, [])]
        self.balances: Dict[str, int] = {}
        self.contract = ContractState()
        self._verdicts: List[Verdict] = []
        self.log: List[Transaction] = []
        self._sealed = False
        self._lock = threading.RLock()

    # Chain

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    @property
    def latest_block(self) -> Block:
        return self.blocks[-1]

    def submit(self, tx: Transaction) -> Any:
        """
        Apply one transaction and mine it.

        Raises:
            LedgerRejected: When the contract refuses the transaction
        """
        with self._lock:
            if tx.kind not in TX_KINDS:
                raise LedgerRejected("unknown_transaction", tx.kind)
            handler = getattr(self, f"_apply_{tx.kind}")
            try:
                result = handler(tx)
            except LedgerRejected as e:
                logger.debug(f"Rejected {tx.kind} from {tx.sender}: {e}")
                raise
            if tx.kind != "mint":
                self._sealed = True
            self._mine(tx)
            return result

    def _mine(self, tx: Transaction) -> None:
        block = Block.build(self.height + 1, self.latest_block.header_hash, [tx])
        self.blocks.append(block)
        self.log.append(tx)
        self.wait_time += self.block_wait_seconds
        logger.debug(f"Mined block {block.height} ({tx.kind})")
        self._expire_dispute()

    def advance_blocks(self, count: int = 1) -> None:
        if count < 1:
            raise ParameterError(f"count must be at least 1: {count}")
        for _ in range(count):
            self.submit(Transaction(kind="tick", sender=LEDGER_SENDER))

    def get_last_block_hash(self) -> bytes:
        """
        h_b of the open channel.

        The first call for a channel caches the latest header hash; later calls
        return the cached value until the channel closes.
        """
        with self._lock:
            c = self.contract.channel
            if c is None or c.state == ChannelState.CLOSED:
                raise LedgerRejected("no_channel")
            if c.h_b is None:
                c.h_b = bytes.fromhex(self.latest_block.header_hash)
            return c.h_b

    # Accounts

    def balance_of(self, account: str) -> int:
        return self.balances.get(account, 0)

    def total_supply(self) -> int:
        return sum(self.balances.values())

    def _move(self, source: str, target: str, amount: int) -> None:
        self.balances[source] = self.balance_of(source) - amount
        self.balances[target] = self.balance_of(target) + amount

    # Transactions

    def mint(self, allocations: Dict[str, int]) -> None:
        self.submit(Transaction(kind="mint", sender=LEDGER_SENDER, payload={"allocations": allocations}))

    def register_owner(self, caller: str, verify_key: bytes, terms: ContractTerms, deposit: int) -> str:
        return self.submit(
            Transaction(
                kind="register_owner",
                sender=caller,
                payload={
                    "verify_key": verify_key.hex(),
                    "terms": terms.model_dump(mode="json"),
                    "deposit": deposit,
                },
            )
        )

    def register_server(self, caller: str, server_id: str, verify_key: bytes) -> None:
        self.submit(
            Transaction(
                kind="register_server",
                sender=caller,
                payload={"server_id": server_id, "verify_key": verify_key.hex()},
            )
        )

    def register_auditor(self, caller: str, auditor_id: str, verify_key: bytes) -> None:
        self.submit(
            Transaction(
                kind="register_auditor",
                sender=caller,
                payload={"auditor_id": auditor_id, "verify_key": verify_key.hex()},
            )
        )

    def post_deposit(self, caller: str, amount: int) -> None:
        self.submit(Transaction(kind="post_deposit", sender=caller, payload={"amount": amount}))

    def receive_signed_digest(
        self, caller: str, digests: List[bytes], server_sig: bytes, owner_sig: Optional[bytes]
    ) -> None:
        self.submit(
            Transaction(
                kind="receive_signed_digest",
                sender=caller,
                payload={
                    "digests": [h.hex() for h in digests],
                    "server_sig": server_sig.hex(),
                    "owner_sig": owner_sig.hex() if owner_sig is not None else None,
                },
            )
        )

    def deliver_credentials(
        self, caller: str, auditor_id: str, public: PublicKeys, params: PorParams
    ) -> None:
        self.submit(
            Transaction(
                kind="deliver_credentials",
                sender=caller,
                payload={
                    "auditor_id": auditor_id,
                    "public": dump_public_keys(public).hex(),
                    "params": params.model_dump(mode="json"),
                },
            )
        )

    def get_credentials(self, caller: str) -> Tuple[PublicKeys, PorParams]:
        with self._lock:
            st = self.contract
            if caller != st.auditor_id:
                raise LedgerRejected("unauthorized", caller)
            if st.public is None or st.params is None:
                raise LedgerRejected("no_credentials")
            return st.public, st.params

    def open_channel(self, caller: str, auditor_deposit: int) -> bytes:
        return self.submit(
            Transaction(
                kind="open_channel", sender=caller, payload={"auditor_deposit": auditor_deposit}
            )
        )

    def close_channel(self, caller: str, payload: ClosePayload) -> Optional[Verdict]:
        """
        Close the open channel.

        Returns:
            The verdict, or None when an auditor complaint opened a dispute window
        """
        return self.submit(
            Transaction(kind="close_channel", sender=caller, payload={"payload": payload.encode().hex()})
        )

    def submit_rebuttal(self, caller: str, query: Query, proof: PorResponse) -> Verdict:
        return self.submit(
            Transaction(
                kind="submit_rebuttal",
                sender=caller,
                payload={"query": query.encode().hex(), "proof": proof.encode().hex()},
            )
        )

    def terminate(self, caller: str) -> Verdict:
        """Owner ends the contract before anything is anchored; escrow and posted deposits are refunded"""
        return self.submit(Transaction(kind="terminate", sender=caller))

    # Handlers

    def _apply_mint(self, tx: Transaction) -> None:
        if self._sealed:
            raise LedgerRejected("genesis_closed")
        allocations = tx.payload.get("allocations", {})
        if any(not isinstance(v, int) or v < 0 for v in allocations.values()):
            raise LedgerRejected("invalid_amount")
        for account, amount in allocations.items():
            self.balances[account] = self.balance_of(account) + amount

    def _apply_tick(self, tx: Transaction) -> None:
        if tx.sender != LEDGER_SENDER:
            raise LedgerRejected("unauthorized", tx.sender)

    def _apply_register_owner(self, tx: Transaction) -> str:
        st = self.contract
        if st.owner_id is not None:
            raise LedgerRejected("duplicate_registration", "owner")
        try:
            terms = ContractTerms.model_validate(tx.payload["terms"])
            verify_key = bytes.fromhex(tx.payload["verify_key"])
            deposit = int(tx.payload["deposit"])
        except (KeyError, ValueError) as e:
            raise LedgerRejected("malformed_transaction", str(e))
        if deposit < terms.payout:
            raise LedgerRejected("insufficient_deposit", f"{deposit} < {terms.payout}")
        if self.balance_of(tx.sender) < deposit:
            raise LedgerRejected("insufficient_funds", tx.sender)
        self._move(tx.sender, ESCROW, deposit)
        st.owner_id, st.owner_key, st.terms = tx.sender, verify_key, terms
        logger.info(f"Registered owner {tx.sender} with escrow {deposit}")
        return tx.sender

    def _require_owner(self, tx: Transaction) -> ContractState:
        st = self.contract
        if st.owner_id is None:
            raise LedgerRejected("owner_not_registered")
        if tx.sender != st.owner_id:
            raise LedgerRejected("unauthorized", tx.sender)
        return st

    def _apply_register_server(self, tx: Transaction) -> None:
        st = self._require_owner(tx)
        if st.server_id is not None:
            raise LedgerRejected("duplicate_registration", "server")
        server_id = tx.payload.get("server_id")
        if not server_id or server_id == st.auditor_id:
            raise LedgerRejected("invalid_identity", str(server_id))
        st.server_key = _key_field(tx)
        st.server_id = server_id

    def _apply_register_auditor(self, tx: Transaction) -> None:
        st = self._require_owner(tx)
        if st.auditor_id is not None:
            raise LedgerRejected("duplicate_registration", "auditor")
        auditor_id = tx.payload.get("auditor_id")
        if not auditor_id or auditor_id == st.server_id:
            raise LedgerRejected("invalid_identity", str(auditor_id))
        st.auditor_key = _key_field(tx)
        st.auditor_id = auditor_id

    def _apply_post_deposit(self, tx: Transaction) -> None:
        st = self.contract
        if st.server_id is None or tx.sender != st.server_id:
            raise LedgerRejected("unauthorized", tx.sender)
        if st.terminated:
            raise LedgerRejected("terminated")
        amount = tx.payload.get("amount")
        if not isinstance(amount, int) or amount < 0:
            raise LedgerRejected("invalid_amount")
        if self.balance_of(tx.sender) < amount:
            raise LedgerRejected("insufficient_funds", tx.sender)
        self._move(tx.sender, DEPOSITS, amount)
        st.posted_deposit += amount

    def _apply_receive_signed_digest(self, tx: Transaction) -> None:
        st = self.contract
        if st.owner_id is None or st.owner_key is None:
            raise LedgerRejected("owner_not_registered")
        if st.server_id is None or st.server_key is None:
            raise LedgerRejected("server_not_registered")
        if tx.sender not in (st.owner_id, st.server_id):
            raise LedgerRejected("unauthorized", tx.sender)
        if st.terminated:
            raise LedgerRejected("terminated")
        if st.digests is not None:
            raise LedgerRejected("already_anchored")
        try:
            digests = [bytes.fromhex(h) for h in tx.payload["digests"]]
            server_sig = bytes.fromhex(tx.payload["server_sig"])
            owner_raw = tx.payload.get("owner_sig")
        except (KeyError, ValueError, TypeError) as e:
            raise LedgerRejected("malformed_transaction", str(e))
        if not digests or any(len(h) != 32 for h in digests):
            raise LedgerRejected("malformed_transaction", "digests")
        if not sig_verify(digest_message(digests), server_sig, st.server_key):
            raise LedgerRejected("bad_server_signature")
        if owner_raw is None:
            raise LedgerRejected("missing_countersignature")
        owner_sig = bytes.fromhex(owner_raw)
        if not sig_verify(countersign_message(digests, server_sig), owner_sig, st.owner_key):
            raise LedgerRejected("bad_countersignature")
        st.digests, st.server_sig, st.owner_sig = digests, server_sig, owner_sig
        logger.info(f"Anchored digest of {len(digests)} blocks")

    def _apply_deliver_credentials(self, tx: Transaction) -> None:
        st = self._require_owner(tx)
        if st.digests is None:
            raise LedgerRejected("not_anchored")
        if st.auditor_id is None or tx.payload.get("auditor_id") != st.auditor_id:
            raise LedgerRejected("unknown_auditor", str(tx.payload.get("auditor_id")))
        try:
            public = load_public_keys(bytes.fromhex(tx.payload["public"]))
            params = PorParams.model_validate(tx.payload["params"])
        except (KeyError, ValueError) as e:
            raise LedgerRejected("malformed_transaction", str(e))
        if public.scheme != params.scheme or public.s != params.s:
            raise LedgerRejected("inconsistent_credentials")
        if params.n != len(st.digests):
            raise LedgerRejected("inconsistent_credentials", "block count")
        st.public, st.params = public, params
        st.credentials_log.append(tx.payload["public"])

    def _apply_open_channel(self, tx: Transaction) -> bytes:
        st = self.contract
        if st.auditor_id is None or tx.sender != st.auditor_id:
            raise LedgerRejected("unauthorized", tx.sender)
        if st.digests is None:
            raise LedgerRejected("not_anchored")
        if st.public is None or st.params is None:
            raise LedgerRejected("no_credentials")
        if st.channel is not None and st.channel.state != ChannelState.CLOSED:
            raise LedgerRejected("channel_open")
        assert st.terms is not None and st.server_id is not None and st.owner_id is not None
        terms = st.terms
        auditor_deposit = tx.payload.get("auditor_deposit")
        if not isinstance(auditor_deposit, int) or auditor_deposit < terms.deposit_a:
            raise LedgerRejected("auditor_deposit", str(auditor_deposit))
        if self.balance_of(tx.sender) < auditor_deposit:
            raise LedgerRejected("insufficient_funds", tx.sender)
        if st.posted_deposit < terms.deposit_s:
            raise LedgerRejected("server_deposit", str(st.posted_deposit))
        if self.balance_of(ESCROW) < terms.payout:
            raise LedgerRejected("escrow", str(self.balance_of(ESCROW)))

        server_deposit = st.posted_deposit
        self._move(tx.sender, CHANNEL, auditor_deposit)
        self._move(DEPOSITS, CHANNEL, server_deposit)
        self._move(ESCROW, CHANNEL, terms.payout)
        st.posted_deposit = 0
        record = ChannelRecord(
            channel_id=b"",
            opened_height=self.height + 1,
            server_deposit=server_deposit,
            auditor_deposit=auditor_deposit,
            payout=terms.payout,
        )
        st.channel = record
        h_b = self.get_last_block_hash()
        record.channel_id = sha256(
            pack_fields(
                st.owner_id.encode("utf-8"),
                st.server_id.encode("utf-8"),
                st.auditor_id.encode("utf-8"),
                u64(st.channels_opened),
                h_b,
            )
        )
        st.channels_opened += 1
        logger.info(f"Opened channel {record.channel_id.hex()[:16]} at height {record.opened_height}")
        return record.channel_id

    def _apply_terminate(self, tx: Transaction) -> Verdict:
        st = self._require_owner(tx)
        if st.terminated:
            raise LedgerRejected("terminated")
        if st.digests is not None:
            raise LedgerRejected("escrow_locked", "digest anchored")
        refunds = [(ESCROW, tx.sender, self.balance_of(ESCROW))]
        if st.server_id is not None:
            refunds.append((DEPOSITS, st.server_id, st.posted_deposit))
        transfers = []
        for source, target, amount in refunds:
            if amount:
                self._move(source, target, amount)
                transfers.append(Transfer(source=source, target=target, amount=amount))
        st.posted_deposit = 0
        st.terminated = True
        verdict = Verdict(
            channel_id="",
            height=self.height + 1,
            outcome=VerdictOutcome.TERMINATED,
            reason=VerdictReason.UPLOAD_ABORTED,
            transfers=transfers,
        )
        self._verdicts.append(verdict)
        logger.info(f"Contract terminated by {tx.sender} before anchoring")
        return verdict

    def _open_record(self, expected: ChannelState) -> ChannelRecord:
        c = self.contract.channel
        if c is None or c.state == ChannelState.CLOSED:
            raise LedgerRejected("channel_closed")
        if c.state != expected:
            raise LedgerRejected("dispute_open" if c.state == ChannelState.DISPUTE else "no_dispute")
        return c

    def _apply_close_channel(self, tx: Transaction) -> Optional[Verdict]:
        st = self.contract
        c = self._open_record(ChannelState.OPEN)
        assert st.params is not None and st.terms is not None
        try:
            payload = ClosePayload.decode(bytes.fromhex(tx.payload["payload"]))
        except (KeyError, ValueError) as e:
            raise LedgerRejected("malformed_payload", str(e))
        if payload.channel_id != c.channel_id:
            raise LedgerRejected("wrong_channel")
        if payload.scheme != st.params.scheme:
            raise LedgerRejected("scheme_mismatch")

        if tx.sender == st.auditor_id:
            if payload.k == 0:
                raise LedgerRejected("empty_session")
            if payload.complaint and payload.disputed_seq != payload.queries[-1].seq:
                raise LedgerRejected("bad_dispute")
            bad = self._check_queries(list(payload.queries), c)
            if bad is not None:
                return self._settle(c, VerdictOutcome.PENALIZE_AUDITOR, bad)
            if payload.complaint:
                c.state = ChannelState.DISPUTE
                c.dispute_query = payload.queries[-1]
                c.dispute_deadline = self.height + 1 + st.terms.dispute_window
                logger.warning(
                    f"Auditor disputes query seq={c.dispute_query.seq}; "
                    f"rebuttal due by height {c.dispute_deadline}"
                )
                return None
            if payload.k < st.terms.audit_count:
                return self._settle(c, VerdictOutcome.PENALIZE_AUDITOR, VerdictReason.UNDER_AUDIT)
            code = self._verify(payload.entries(), payload.proof)
            if code == VerifyCode.OK:
                return self._settle(c, VerdictOutcome.PAID_BOTH, VerdictReason.AUDIT_PASSED)
            reason = (
                VerdictReason.MALFORMED_PROOF
                if code == VerifyCode.MALFORMED
                else VerdictReason.AGGREGATE_FAILED
            )
            return self._settle(c, VerdictOutcome.PENALIZE_AUDITOR, reason)

        if tx.sender == st.server_id:
            if not payload.complaint:
                raise LedgerRejected("server_close_without_complaint")
            outcome, reason = self._judge_server_complaint(payload, c)
            return self._settle(c, outcome, reason)

        raise LedgerRejected("unauthorized", tx.sender)

    def _apply_submit_rebuttal(self, tx: Transaction) -> Verdict:
        st = self.contract
        c = self._open_record(ChannelState.DISPUTE)
        if tx.sender != st.server_id:
            raise LedgerRejected("unauthorized", tx.sender)
        assert c.dispute_deadline is not None and c.dispute_query is not None
        if self.height + 1 > c.dispute_deadline:
            raise LedgerRejected("window_expired")
        try:
            query = Query.decode(bytes.fromhex(tx.payload["query"]))
        except (KeyError, ValueError) as e:
            raise LedgerRejected("malformed_transaction", str(e))
        if query.encode() != c.dispute_query.encode():
            raise LedgerRejected("wrong_query")
        try:
            proof = PorResponse.decode(bytes.fromhex(tx.payload["proof"]))
        except (KeyError, ValueError):
            return self._settle(c, VerdictOutcome.PENALIZE_SERVER, VerdictReason.REBUTTAL_MALFORMED)
        code = self._verify(list(query.entries), proof)
        if code == VerifyCode.OK:
            return self._settle(c, VerdictOutcome.PENALIZE_AUDITOR, VerdictReason.REBUTTAL_ACCEPTED)
        if code == VerifyCode.MALFORMED:
            return self._settle(c, VerdictOutcome.PENALIZE_SERVER, VerdictReason.REBUTTAL_MALFORMED)
        return self._settle(c, VerdictOutcome.PENALIZE_SERVER, VerdictReason.REBUTTAL_FAILED)

    # Adjudication

    def _verify(self, entries: List[Tuple[int, int]], proof: Optional[PorResponse]) -> VerifyCode:
        st = self.contract
        assert st.public is not None and st.params is not None
        if proof is None:
            return VerifyCode.MALFORMED
        return verify_response(st.params.scheme, entries, proof, st.public, st.params)

    def _check_query(self, query: Query, position: int, c: ChannelRecord) -> Optional[VerdictReason]:
        st = self.contract
        assert st.auditor_key is not None and st.params is not None and c.h_b is not None
        if not query.verify_signature(st.auditor_key, c.channel_id):
            return VerdictReason.BAD_QUERY_SIGNATURE
        if query.seq != position or query.seed != c.h_b:
            return VerdictReason.QUERY_MISMATCH
        try:
            regenerated = gen_query(c.h_b, st.params, position)
        except ParameterError:
            return VerdictReason.QUERY_MISMATCH
        if query.entries != regenerated.entries:
            return VerdictReason.QUERY_MISMATCH
        return None

    def _check_queries(self, queries: List[Query], c: ChannelRecord) -> Optional[VerdictReason]:
        """Signatures, positions, element-wise regeneration from h_b, then the AuB cap"""
        st = self.contract
        assert st.params is not None and st.terms is not None
        for position, query in enumerate(queries):
            bad = self._check_query(query, position, c)
            if bad is not None:
                return bad
        cap = resolve_max_queries(st.params.scheme, st.params.l, st.terms.max_queries)
        if cap is not None and len(queries) > cap:
            return VerdictReason.PRIVACY_CAP
        return None

    def _judge_server_complaint(
        self, payload: ClosePayload, c: ChannelRecord
    ) -> Tuple[VerdictOutcome, VerdictReason]:
        """
        A server complaint must carry an auditor-signed channel message as evidence.

        Only the evidenced message is attributed to the auditor. The queries before
        it were accepted by the server, so a defect there is the server's own claim.
        """
        st = self.contract
        assert st.auditor_key is not None and st.params is not None and st.terms is not None
        false_complaint = (VerdictOutcome.PENALIZE_SERVER, VerdictReason.FALSE_COMPLAINT)
        try:
            msg = ChannelMsg.decode(payload.evidence)
        except FormatError:
            return false_complaint
        if msg.channel_id != c.channel_id or not msg.verify(st.auditor_key):
            return false_complaint

        last: Optional[Query] = None
        prior = list(payload.queries)
        if msg.kind == MsgKind.QUERY:
            try:
                offered, ack = decode_query_payload(msg.payload)
            except FormatError:
                return false_complaint
            if not prior or prior[-1].encode() != offered.encode():
                return false_complaint
            last = prior.pop()
        elif msg.kind == MsgKind.ACK:
            ack = msg.payload
        else:
            return false_complaint

        if self._check_queries(prior, c) is not None:
            return false_complaint
        if last is not None:
            bad = self._check_query(last, len(prior), c)
            if bad is not None:
                return VerdictOutcome.PENALIZE_AUDITOR, bad
            cap = resolve_max_queries(st.params.scheme, st.params.l, st.terms.max_queries)
            if cap is not None and len(prior) + 1 > cap:
                return VerdictOutcome.PENALIZE_AUDITOR, VerdictReason.PRIVACY_CAP
        if payload.reason == ComplaintReason.STATE and self._state_diverged(prior, payload.proof, ack):
            return VerdictOutcome.PENALIZE_AUDITOR, VerdictReason.STATE_MISMATCH
        return false_complaint

    def _state_diverged(self, prior: List[Query], proof: Optional[PorResponse], ack: bytes) -> bool:
        """True when the server's verified aggregate differs from what the auditor acknowledged"""
        st = self.contract
        assert st.params is not None
        if not prior:
            return ack != Accumulator.empty(st.params.scheme, st.params.s).digest()
        if proof is None or self._verify(collect_entries(prior), proof) != VerifyCode.OK:
            return False
        return accumulator_digest(proof.sigma, proof.mu_vec, proof.R) != ack

    def _settle(
        self,
        c: ChannelRecord,
        outcome: VerdictOutcome,
        reason: VerdictReason,
        height: Optional[int] = None,
    ) -> Verdict:
        st = self.contract
        assert st.terms is not None and st.owner_id and st.server_id and st.auditor_id
        terms = st.terms
        sd, ad = c.server_deposit, c.auditor_deposit
        if outcome == VerdictOutcome.PAID_BOTH:
            shares = [(st.server_id, terms.c_s + sd), (st.auditor_id, terms.c_a + ad)]
        elif outcome == VerdictOutcome.PENALIZE_SERVER:
            forfeit = terms.forfeit(sd)
            shares = [
                (st.owner_id, forfeit + terms.c_s),
                (st.server_id, sd - forfeit),
                (st.auditor_id, terms.c_a + ad),
            ]
        elif outcome == VerdictOutcome.PENALIZE_AUDITOR:
            forfeit = terms.forfeit(ad)
            shares = [
                (st.owner_id, forfeit + terms.c_a),
                (st.auditor_id, ad - forfeit),
                (st.server_id, terms.c_s + sd),
            ]
        else:
            raise ParameterError(f"Outcome {outcome.value} does not settle a channel")

        transfers = []
        for target, amount in shares:
            if amount:
                self._move(CHANNEL, target, amount)
                transfers.append(Transfer(source=CHANNEL, target=target, amount=amount))
        verdict = Verdict(
            channel_id=c.channel_id.hex(),
            height=self.height + 1 if height is None else height,
            outcome=outcome,
            reason=reason,
            transfers=transfers,
        )
        self._verdicts.append(verdict)
        c.state = ChannelState.CLOSED
        c.h_b = None
        c.dispute_query = None
        logger.info(f"Verdict for channel {verdict.channel_id[:16]}: {outcome.value} ({reason.value})")
        return verdict

    def _expire_dispute(self) -> None:
        """Runs after every mined block; an unanswered dispute past its deadline goes against the server"""
        c = self.contract.channel
        if c is None or c.state != ChannelState.DISPUTE or c.dispute_deadline is None:
            return
        if self.height > c.dispute_deadline:
            self._settle(
                c, VerdictOutcome.PENALIZE_SERVER, VerdictReason.DISPUTE_TIMEOUT, height=self.height
            )

    # Inspection and persistence

    @property
    def verdicts(self) -> List[Verdict]:
        return list(self._verdicts)

    def export_verdicts(self) -> str:
        """Verdicts as JSON-lines"""
        return "".join(json.dumps(v.model_dump(mode="json"), sort_keys=True) + "\n" for v in self._verdicts)

    def state_digest(self) -> str:
        st = self.contract
        snapshot = {
            "height": self.height,
            "head": self.latest_block.header_hash,
            "balances": dict(sorted(self.balances.items())),
            "verdicts": [v.model_dump(mode="json") for v in self._verdicts],
            "owner": st.owner_id,
            "server": st.server_id,
            "auditor": st.auditor_id,
            "digests": [h.hex() for h in st.digests] if st.digests else None,
            "channel": st.channel.state.value if st.channel else None,
            "terminated": st.terminated,
        }
        return sha256(canonical_json(snapshot)).hex()

    def write_log(self, path: Path) -> None:
        path.write_bytes(dump_tx_log(self.log))
        logger.info(f"Wrote {len(self.log)} transactions to {path}")

    @classmethod
    def replay(cls, path: Path, block_wait_seconds: float = 0.0) -> "Ledger":
        """Rebuild a ledger by re-applying a transaction log"""
        ledger = cls(block_wait_seconds=block_wait_seconds)
        for tx in load_tx_log(path.read_bytes()):
            ledger.submit(tx)
        return ledger
