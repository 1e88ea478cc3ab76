"""
Actors - Owner, server and auditor, their persistent store and adversarial behaviours

Honest behaviour lives in Owner, Server and Auditor. Deviations are selected by
the AdversarialStrategy entries of an ActorConfig: owner and upload deviations
are branches in the actor methods, channel deviations are AuditorChannel and
ServerChannel subclasses looked up in AUDITOR_CHANNELS and SERVER_CHANNELS.
"""

import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type

from py_ecc.optimized_bls12_381 import Z1

from .channel import (
    AuditorChannel,
    ClosePayload,
    ComplaintReason,
    ServerChannel,
    resolve_max_queries,
)
from .crypto import G1Point, Scalar, XofSampler, curve_order, sig_verify, sign
from .errors import LedgerRejected, ParameterError, ProtocolAbort
from .formats import dump_blocks, dump_tag_file, load_tagged_file
from .ledger import Ledger, countersign_message, digest_message
from .models import (
    ActorConfig,
    AdversarialStrategy,
    ContractTerms,
    PorParams,
    Role,
    ScenarioEvent,
    Scheme,
    StrategyKind,
    Verdict,
)
from .por import (
    OwnerKeys,
    PorResponse,
    PublicKeys,
    Query,
    TaggedFile,
    VerifyCode,
    block_digest,
    gen_query,
    keygen,
    tag_file,
    unchunk_file,
)

logger = logging.getLogger(__name__)


class EventLog:
    """Ordered, deterministic record of what happened during a run"""

    def __init__(self) -> None:
        self.events: List[ScenarioEvent] = []

    def emit(self, phase: str, kind: str, actor: Optional[str] = None, **detail: Any) -> None:
        self.events.append(
            ScenarioEvent(seq=len(self.events), phase=phase, kind=kind, actor=actor, detail=detail)
        )


class ServerStore:
    """
    Blocks and tags of one file persisted under a directory.

    file.tags holds parameters, tags and digests (PORT); file.blocks the sector
    matrix (PORB).
    """

    TAG_FILE = "file.tags"
    BLOCK_FILE = "file.blocks"

    def __init__(self, root: Path):
        self.root = Path(root)

    @property
    def tag_path(self) -> Path:
        return self.root / self.TAG_FILE

    @property
    def block_path(self) -> Path:
        return self.root / self.BLOCK_FILE

    def exists(self) -> bool:
        return self.tag_path.exists() and self.block_path.exists()

    def save(self, file: TaggedFile) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.tag_path.write_bytes(dump_tag_file(file))
        self.block_path.write_bytes(dump_blocks(file.blocks, file.params))

    def load(self) -> TaggedFile:
        if not self.exists():
            raise ParameterError(f"No file stored under {self.root}")
        return load_tagged_file(self.tag_path.read_bytes(), self.block_path.read_bytes())

    def drop_block(self, i: int) -> TaggedFile:
        """Lose block i: its sectors become zero and its tag the identity"""
        file = self.load()
        if not 1 <= i <= file.n:
            raise ParameterError(f"Block index {i} outside [1, {file.n}]")
        file.blocks[i - 1] = [0] * file.params.s
        file.tags[i - 1] = Z1
        self.save(file)
        return file


@dataclass
class FetchResult:
    data: bytes
    mismatched: List[int]

    @property
    def intact(self) -> bool:
        return not self.mismatched


class Actor:
    def __init__(self, config: ActorConfig, ledger: Ledger, events: Optional[EventLog] = None):
        self.config = config
        self.ledger = ledger
        self.events = events or EventLog()

    @property
    def identity(self) -> str:
        return self.config.identity

    @property
    def verify_key(self) -> bytes:
        return self.config.keys.verify_key

    def strategy(self, kind: StrategyKind) -> Optional[AdversarialStrategy]:
        return self.config.strategy(kind)


# Owner


class Owner(Actor):
    """Registers the contract, tags and uploads the file, hands out credentials and fetches"""

    def __init__(
        self,
        config: ActorConfig,
        ledger: Ledger,
        rng: Optional[XofSampler] = None,
        events: Optional[EventLog] = None,
    ):
        super().__init__(config, ledger, events)
        self.rng = rng
        self.keys: Optional[OwnerKeys] = None
        self.file: Optional[TaggedFile] = None
        self.digests: Optional[List[bytes]] = None
        self.tag_time = 0.0

    def owner_phase0(
        self,
        terms: ContractTerms,
        server_id: str,
        server_key: bytes,
        auditor_id: str,
        auditor_key: bytes,
        deposit: Optional[int] = None,
    ) -> str:
        """
        Register with the contract, escrow c_s + c_a and register server and auditor.

        Raises:
            ProtocolAbort: When any registration is rejected
        """
        deposit = terms.payout if deposit is None else deposit
        try:
            owner_id = self.ledger.register_owner(self.identity, self.verify_key, terms, deposit)
            self.ledger.register_server(self.identity, server_id, server_key)
            self.ledger.register_auditor(self.identity, auditor_id, auditor_key)
        except LedgerRejected as e:
            self.events.emit("register", "abort", self.identity, reason=e.reason)
            raise ProtocolAbort("register", e.reason)
        self.events.emit("register", "registered", self.identity, escrow=deposit)
        return owner_id

    def owner_upload(
        self, data: bytes, scheme: Scheme, server: "Server", s: int = 1, l: int = 1
    ) -> List[bytes]:
        """
        Tag the file, send it to the server and anchor the countersigned digest.

        Returns:
            The anchored digests h_1..h_n

        Raises:
            ProtocolAbort: On a bad server signature, a digest mismatch, a withheld
                countersignature or a ledger rejection; nothing is anchored then
        """
        if not data:
            raise ParameterError("Cannot upload an empty file")
        self.keys = keygen(scheme, s=s if scheme == Scheme.AUB else 1, rng=self.rng)
        started = time.perf_counter()
        file = tag_file(data, self.keys, l, rng=self.rng)
        self.tag_time = time.perf_counter() - started
        self.file = file
        self.events.emit("upload", "tagged", self.identity, n=file.n, s=file.params.s)

        digests, server_sig = server.receive_file(file)
        if not sig_verify(digest_message(digests), server_sig, server.verify_key):
            self._abort("bad server signature")
        mismatched = [i for i, (h, h2) in enumerate(zip(file.digests, digests), 1) if h != h2]
        if mismatched or len(digests) != file.n:
            self._abort(f"digest mismatch at {mismatched}")
        if self.strategy(StrategyKind.OWNER_DENY_COUNTERSIGN):
            self._abort("countersignature withheld")

        owner_sig = sign(countersign_message(digests, server_sig), self.config.keys)
        try:
            self.ledger.receive_signed_digest(self.identity, digests, server_sig, owner_sig)
        except LedgerRejected as e:
            self._abort(e.reason)
        self.digests = list(digests)
        self.events.emit("upload", "anchored", self.identity, n=file.n)
        return self.digests

    def owner_send_creds(self, auditor_id: str) -> None:
        """Deliver public keys and parameters (fileid included) through the contract"""
        if self.keys is None or self.file is None or self.digests is None:
            raise ParameterError("Nothing uploaded yet")
        try:
            self.ledger.deliver_credentials(
                self.identity, auditor_id, self.keys.public, self.file.params
            )
        except LedgerRejected as e:
            raise ProtocolAbort("credentials", e.reason)
        self.events.emit("credentials", "delivered", self.identity, auditor=auditor_id)

    def owner_terminate(self) -> Verdict:
        """
        End the contract after an aborted upload and take the escrow back.

        Raises:
            ProtocolAbort: Once a digest is anchored the escrow stays locked
        """
        try:
            verdict = self.ledger.terminate(self.identity)
        except LedgerRejected as e:
            self.events.emit("terminate", "rejected", self.identity, reason=e.reason)
            raise ProtocolAbort("terminate", e.reason)
        self.events.emit("terminate", "terminated", self.identity, refunded=verdict.net_flows())
        return verdict

    def owner_fetch(self, server: "Server") -> FetchResult:
        """Download every block and check it against the anchored digest"""
        if self.file is None or self.digests is None:
            raise ParameterError("Nothing uploaded yet")
        returned = server.send_file()
        if len(returned) != self.file.n:
            raise ProtocolAbort("fetch", f"server returned {len(returned)} of {self.file.n} blocks")
        mismatched = [
            i
            for i, ((block, tag), h) in enumerate(zip(returned, self.digests), 1)
            if block_digest(block, tag) != h
        ]
        data = unchunk_file([block for block, _ in returned], self.file.params)
        self.events.emit("fetch", "fetched", self.identity, mismatched=mismatched)
        if mismatched:
            logger.warning(f"Fetched blocks fail their digests: {mismatched}")
        return FetchResult(data=data, mismatched=mismatched)

    def _abort(self, reason: str) -> None:
        self.events.emit("upload", "abort", self.identity, reason=reason)
        logger.warning(f"Owner terminates the upload: {reason}")
        raise ProtocolAbort("upload", reason)


# Server


class Server(Actor):
    """Stores the file, proves possession in channels and rebuts disputes"""

    def __init__(
        self,
        config: ActorConfig,
        ledger: Ledger,
        store: ServerStore,
        rng: Optional[XofSampler] = None,
        events: Optional[EventLog] = None,
    ):
        super().__init__(config, ledger, events)
        self.store = store
        self.rng = rng
        self.channel: Optional[ServerChannel] = None
        self._signed_digest: Optional[Tuple[List[bytes], bytes]] = None

    def receive_file(self, file: TaggedFile) -> Tuple[List[bytes], bytes]:
        """Persist blocks and tags, recompute h_i = H(m_i || sigma_i) and sign the list"""
        self.store.save(file)
        stored = self.store.load()
        digests = [block_digest(m, t) for m, t in zip(stored.blocks, stored.tags)]
        wrong = self.strategy(StrategyKind.SERVER_CLAIM_WRONG_BLOCK)
        if wrong is not None:
            i = wrong.index or min(3, len(digests))
            digests[i - 1] = bytes(b ^ 0xFF for b in digests[i - 1])
        server_sig = sign(digest_message(digests), self.config.keys)
        self._signed_digest = (digests, server_sig)
        self.events.emit("upload", "stored", self.identity, n=len(digests))
        return digests, server_sig

    def anchor_alone(self) -> None:
        """Try to anchor the signed digest without the owner's countersignature"""
        if self._signed_digest is None:
            raise ParameterError("No signed digest to anchor")
        digests, server_sig = self._signed_digest
        self.ledger.receive_signed_digest(self.identity, digests, server_sig, None)

    def send_file(self) -> List[Tuple[List[Scalar], G1Point]]:
        file = self.store.load()
        pairs = [(list(m), t) for m, t in zip(file.blocks, file.tags)]
        wrong = self.strategy(StrategyKind.SERVER_WRONG_FETCH)
        if wrong is not None:
            i = wrong.index or min(2, file.n)
            block, tag = pairs[i - 1]
            pairs[i - 1] = ([block[0] ^ 1] + block[1:], tag)
        return pairs

    def lose_block(self, i: int) -> None:
        self.store.drop_block(i)
        self.events.emit("audit", "block_lost", self.identity, index=i)

    def post_deposit(self, amount: int) -> None:
        self.ledger.post_deposit(self.identity, amount)

    def open_endpoint(
        self,
        channel_id: bytes,
        seed: bytes,
        public: PublicKeys,
        auditor_key: bytes,
        max_queries: Optional[int],
    ) -> ServerChannel:
        file = self.store.load()
        kind = next((s.kind for s in self.config.strategies if s.kind in SERVER_CHANNELS), None)
        args = (channel_id, seed, file, public, self.config.keys, auditor_key, max_queries, self.rng)
        if kind is None:
            self.channel = ServerChannel(*args)
        else:
            strategy = self.strategy(kind)
            assert strategy is not None
            self.channel = SERVER_CHANNELS[kind](*args, strategy=strategy)
        return self.channel

    def close(self, payload: ClosePayload) -> Optional[Verdict]:
        return self.ledger.close_channel(self.identity, payload)

    def rebut(self, query: Query) -> Verdict:
        if self.channel is None:
            raise ParameterError("No channel to rebut in")
        proof = self.channel.rebuttal(query)
        verdict = self.ledger.submit_rebuttal(self.identity, query, proof)
        self.events.emit("dispute", "rebuttal", self.identity, seq=query.seq)
        return verdict


# Auditor


class Auditor(Actor):
    """Reads credentials from the contract, opens the channel and audits"""

    def __init__(self, config: ActorConfig, ledger: Ledger, events: Optional[EventLog] = None):
        super().__init__(config, ledger, events)
        self.public: Optional[PublicKeys] = None
        self.params: Optional[PorParams] = None
        self.channel: Optional[AuditorChannel] = None

    def fetch_credentials(self) -> Tuple[PublicKeys, PorParams]:
        self.public, self.params = self.ledger.get_credentials(self.identity)
        return self.public, self.params

    def open_channel(self, deposit: int) -> bytes:
        channel_id = self.ledger.open_channel(self.identity, deposit)
        self.events.emit("audit", "channel_open", self.identity, height=self.ledger.height)
        return channel_id

    def open_endpoint(
        self,
        channel_id: bytes,
        seed: bytes,
        server_key: bytes,
        audit_count: int,
        max_queries: Optional[int] = None,
    ) -> AuditorChannel:
        if self.public is None or self.params is None:
            self.fetch_credentials()
        assert self.public is not None and self.params is not None
        args = (
            channel_id,
            seed,
            self.params,
            self.public,
            self.config.keys,
            server_key,
            audit_count,
            max_queries,
        )
        kind = next((s.kind for s in self.config.strategies if s.kind in AUDITOR_CHANNELS), None)
        if kind is None:
            self.channel = AuditorChannel(*args)
        else:
            strategy = self.strategy(kind)
            assert strategy is not None
            self.channel = AUDITOR_CHANNELS[kind](*args, strategy=strategy)
        return self.channel

    def close(self, payload: ClosePayload) -> Optional[Verdict]:
        return self.ledger.close_channel(self.identity, payload)


# Adversarial channel endpoints


class OverQueryAuditor(AuditorChannel):
    """Keeps querying past the AuB cap to collect enough equations for extraction"""

    def __init__(self, *args: Any, strategy: AdversarialStrategy, **kwargs: Any):
        channel_id, seed, params, public, keys, server_key, audit_count, cap = args
        if params.scheme != Scheme.AUB:
            raise ParameterError("Over-querying targets the AuB query cap")
        cap = cap if cap is not None else resolve_max_queries(params.scheme, params.l)
        super().__init__(channel_id, seed, params, public, keys, server_key, audit_count, None)
        self.strategy = strategy
        self.cap = cap

    def _session_complete(self) -> bool:
        return self.cap is not None and len(self.queries) > self.cap


class MisrecordingAuditor(AuditorChannel):
    """Records a different aggregate than the responses it received (mu' under AuB, R' under PPAuB)"""

    def __init__(self, *args: Any, strategy: AdversarialStrategy, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self.strategy = strategy
        self.target = strategy.index or 1

    def _fold(self, query: Query, resp: PorResponse) -> VerifyCode:
        code = super()._fold(query, resp)
        if len(self.responses) != self.target or self._candidate is None:
            return code
        acc = self._candidate
        if self.scheme == Scheme.AUB:
            mu_vec = ((acc.mu_vec[0] + 1) % curve_order,) + tuple(acc.mu_vec[1:])
            self._candidate = replace(acc, mu_vec=mu_vec)
        else:
            assert acc.R is not None and self.public.e_uv is not None
            self._candidate = replace(acc, R=acc.R * self.public.e_uv)
        logger.debug(f"Auditor misrecorded response seq={query.seq}")
        return code


class SuppressingAuditor(AuditorChannel):
    """Skips one query of the deterministic sequence"""

    def __init__(self, *args: Any, strategy: AdversarialStrategy, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self.strategy = strategy
        self.skip_from = (strategy.index or 1) - 1

    def _make_query(self, seq: int) -> Query:
        return gen_query(self.seed, self.params, seq + 1 if seq >= self.skip_from else seq)


class IgnoringAuditor(AuditorChannel):
    """Closes cleanly whatever the responses verify to"""

    def __init__(self, *args: Any, strategy: AdversarialStrategy, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self.strategy = strategy

    def _judge(self, code: VerifyCode) -> bool:
        return True


class IndexSkippingAuditor(AuditorChannel):
    """Zeroes the coefficient of a block the colluding server no longer holds"""

    def __init__(self, *args: Any, strategy: AdversarialStrategy, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self.strategy = strategy

    def _make_query(self, seq: int) -> Query:
        query = gen_query(self.seed, self.params, seq)
        skipped = self.strategy.index
        entries = tuple((i, 0 if i == skipped else nu) for i, nu in query.entries)
        return Query(entries=entries, seed=query.seed, seq=query.seq)


class FalseComplaintAuditor(AuditorChannel):
    """Complains about the last response of the session even though it verified"""

    def __init__(self, *args: Any, strategy: AdversarialStrategy, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self.strategy = strategy

    def _judge(self, code: VerifyCode) -> bool:
        if len(self.queries) >= self.audit_count:
            return False
        return bool(code)


class NoRegenerationServer(ServerChannel):
    """Answers whatever the colluding auditor asks, without regenerating queries"""

    def __init__(self, *args: Any, strategy: AdversarialStrategy, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self.strategy = strategy

    def _screen(self, query: Query, ack: bytes) -> Optional[ComplaintReason]:
        if query.seq != len(self.accepted) or query.seed != self.seed:
            return ComplaintReason.QUERY_MISMATCH
        if ack != self.acc.digest():
            return ComplaintReason.STATE
        return None


class FalseComplaintServer(ServerChannel):
    """Files a state complaint against an honest auditor to avoid paying it"""

    def __init__(self, *args: Any, strategy: AdversarialStrategy, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self.strategy = strategy
        self.target = strategy.index or 1

    def _screen(self, query: Query, ack: bytes) -> Optional[ComplaintReason]:
        if len(self.accepted) + 1 >= self.target:
            return ComplaintReason.STATE
        return super()._screen(query, ack)


AUDITOR_CHANNELS: Dict[StrategyKind, Type[AuditorChannel]] = {
    StrategyKind.AUDITOR_OVER_QUERY: OverQueryAuditor,
    StrategyKind.AUDITOR_MISRECORD_RESPONSE: MisrecordingAuditor,
    StrategyKind.AUDITOR_SUPPRESS_QUERY: SuppressingAuditor,
    StrategyKind.SERVER_AUDITOR_COLLUDE_IGNORE_FAIL: IgnoringAuditor,
    StrategyKind.SERVER_AUDITOR_COLLUDE_SKIP_INDEX: IndexSkippingAuditor,
    StrategyKind.OWNER_AUDITOR_COLLUDE: FalseComplaintAuditor,
}

SERVER_CHANNELS: Dict[StrategyKind, Type[ServerChannel]] = {
    StrategyKind.SERVER_AUDITOR_COLLUDE_SKIP_INDEX: NoRegenerationServer,
    StrategyKind.OWNER_SERVER_COLLUDE_DENY_AUDITOR_PAY: FalseComplaintServer,
}

# Server strategies that lose the first block challenged in the channel
BLOCK_LOSING = (
    StrategyKind.SERVER_DROP_BLOCK,
    StrategyKind.SERVER_AUDITOR_COLLUDE_IGNORE_FAIL,
    StrategyKind.SERVER_AUDITOR_COLLUDE_SKIP_INDEX,
)


def role_config(
    role: Role,
    identity: str,
    keys: Any,
    scheme: Scheme,
    strategies: List[AdversarialStrategy],
) -> ActorConfig:
    """ActorConfig holding only the strategies available to the role"""
    return ActorConfig(
        role=role,
        identity=identity,
        keys=keys,
        scheme=scheme,
        strategies=[s for s in strategies if role in s.roles and s.kind != StrategyKind.HONEST],
    )
