"""Topic-based publish/subscribe relay with latency/jitter/drop injection.

The relay carries the frame protocol from :mod:`puppetmirror.wire` over two
carriers: a plain TCP byte stream and a websocket bridge that wraps one frame
per binary message. Semantics are at-most-once: a dropped frame is never
retransmitted. Injected delays are applied to a per-subscriber FIFO, so
faults can delay and drop frames but never reorder them.
"""
from __future__ import annotations

import asyncio
import base64
import hashlib
import random
from dataclasses import dataclass

from .wire import Frame, FrameError, FrameType, decode_frame, encode_frame, read_frame

DEFAULT_PORT = 7447
DEFAULT_WS_PORT = 7448

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


@dataclass(frozen=True)
class FaultProfile:
    """Network fault injection: fixed latency, uniform jitter, random drops."""

    base_latency_ms: int = 0
    jitter_ms: int = 0
    drop_probability: float = 0.0

    def __post_init__(self) -> None:
        if self.base_latency_ms < 0:
            raise ValueError("base_latency_ms must be >= 0")
        if self.jitter_ms < 0:
            raise ValueError("jitter_ms must be >= 0")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must be in [0, 1]")

    @property
    def is_zero(self) -> bool:
        return self.base_latency_ms == 0 and self.jitter_ms == 0 and self.drop_probability == 0.0


class _TcpTransport:
    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self._reader = reader
        self._writer = writer

    async def recv_frame(self) -> Frame | None:
        try:
            return await read_frame(self._reader)
        except (asyncio.IncompleteReadError, ConnectionError):
            return None

    def send_bytes(self, data: bytes) -> None:
        self._writer.write(data)

    async def drain(self) -> None:
        await self._writer.drain()

    def close(self) -> None:
        self._writer.close()


class _WsTransport:
    """Server side of a minimal RFC 6455 endpoint carrying binary messages."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self._reader = reader
        self._writer = writer

    async def handshake(self) -> bool:
        try:
            request = await self._reader.readuntil(b"\r\n\r\n")
        except (asyncio.IncompleteReadError, asyncio.LimitOverrunError, ConnectionError):
            return False
        key = None
        for line in request.split(b"\r\n")[1:]:
            name, _, value = line.partition(b":")
            if name.strip().lower() == b"sec-websocket-key":
                key = value.strip().decode("ascii", "replace")
        if key is None:
            self._writer.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            return False
        accept = base64.b64encode(hashlib.sha1((key + _WS_GUID).encode("ascii")).digest())
        self._writer.write(
            b"HTTP/1.1 101 Switching Protocols\r\n"
            b"Upgrade: websocket\r\n"
            b"Connection: Upgrade\r\n"
            b"Sec-WebSocket-Accept: " + accept + b"\r\n\r\n"
        )
        await self._writer.drain()
        return True

    async def _read_message(self) -> tuple[int, bytes] | None:
        head = await self._reader.readexactly(2)
        fin = head[0] & 0x80
        opcode = head[0] & 0x0F
        masked = head[1] & 0x80
        length = head[1] & 0x7F
        if not fin:
            raise FrameError("fragmented websocket messages are not supported")
        if length == 126:
            length = int.from_bytes(await self._reader.readexactly(2), "big")
        elif length == 127:
            length = int.from_bytes(await self._reader.readexactly(8), "big")
        mask = await self._reader.readexactly(4) if masked else b""
        payload = await self._reader.readexactly(length) if length else b""
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        return opcode, payload

    async def recv_frame(self) -> Frame | None:
        while True:
            try:
                message = await self._read_message()
            except (asyncio.IncompleteReadError, ConnectionError):
                return None
            if message is None:
                return None
            opcode, payload = message
            if opcode == 0x8:  # close
                self.send_bytes(b"", opcode=0x8)
                return None
            if opcode == 0x9:  # ping -> pong
                self.send_bytes(payload, opcode=0xA)
                continue
            if opcode == 0xA:  # pong
                continue
            if opcode != 0x2:
                raise FrameError(f"unsupported websocket opcode {opcode}")
            return decode_frame(payload)

    def send_bytes(self, data: bytes, opcode: int = 0x2) -> None:
        header = bytes((0x80 | opcode,))
        n = len(data)
        if n < 126:
            header += bytes((n,))
        elif n <= 0xFFFF:
            header += bytes((126,)) + n.to_bytes(2, "big")
        else:
            header += bytes((127,)) + n.to_bytes(8, "big")
        self._writer.write(header + data)

    async def drain(self) -> None:
        await self._writer.drain()

    def close(self) -> None:
        self._writer.close()


class _Conn:
    """One relay connection with its FIFO delivery queue."""

    def __init__(self, transport, broker: "RelayBroker"):
        self.transport = transport
        self.broker = broker
        self.topics: set[str] = set()
        self.queue: asyncio.Queue[tuple[float, bytes]] = asyncio.Queue()
        self.alive = True
        self._worker = asyncio.ensure_future(self._deliver_loop())

    def enqueue(self, deliver_at: float, data: bytes) -> None:
        if self.alive:
            self.queue.put_nowait((deliver_at, data))

    async def _deliver_loop(self) -> None:
        loop = asyncio.get_running_loop()
        while True:
            deliver_at, data = await self.queue.get()
            try:
                delay = deliver_at - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                if self.alive:
                    self.transport.send_bytes(data)
                    await self.transport.drain()
            except (ConnectionError, RuntimeError):
                self.alive = False
            finally:
                self.queue.task_done()

    async def shutdown(self) -> None:
        self.alive = False
        self._worker.cancel()
        try:
            await self._worker
        except (asyncio.CancelledError, Exception):
            pass
        self.transport.close()


class RelayBroker:
    """The relay: exact-match topic routing plus optional fault injection."""

    def __init__(self, faults: FaultProfile | None = None, seed: int | None = None):
        self.faults = faults or FaultProfile()
        self._rng = random.Random(seed)
        # topic -> insertion-ordered set of connections (dict keys)
        self._subs: dict[str, dict[_Conn, None]] = {}
        self._conns: set[_Conn] = set()
        self._servers: list[asyncio.base_events.Server] = []
        self.port: int | None = None
        self.ws_port: int | None = None
        self.published = 0
        self.delivered = 0
        self.dropped = 0

    async def start(
        self,
        host: str = "127.0.0.1",
        port: int = DEFAULT_PORT,
        ws_port: int | None = None,
    ) -> None:
        server = await asyncio.start_server(self._handle_tcp, host, port)
        self._servers.append(server)
        self.port = server.sockets[0].getsockname()[1]
        if ws_port is not None:
            ws_server = await asyncio.start_server(self._handle_ws, host, ws_port)
            self._servers.append(ws_server)
            self.ws_port = ws_server.sockets[0].getsockname()[1]

    async def close(self) -> None:
        for server in self._servers:
            server.close()
            await server.wait_closed()
        self._servers.clear()
        for conn in list(self._conns):
            await conn.shutdown()
        self._conns.clear()
        self._subs.clear()

    async def drain(self) -> None:
        """Wait until every pending delivery has been written out."""
        await asyncio.gather(*(conn.queue.join() for conn in list(self._conns)))

    async def _handle_tcp(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        await self._serve(_TcpTransport(reader, writer))

    async def _handle_ws(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        transport = _WsTransport(reader, writer)
        if not await transport.handshake():
            transport.close()
            return
        await self._serve(transport)

    async def _serve(self, transport) -> None:
        conn = _Conn(transport, self)
        self._conns.add(conn)
        try:
            while True:
                frame = await transport.recv_frame()
                if frame is None:
                    break
                self._handle_frame(conn, frame)
        except FrameError:
            pass  # protocol error: close the connection
        finally:
            self._detach(conn)
            await conn.shutdown()

    def _handle_frame(self, conn: _Conn, frame: Frame) -> None:
        if frame.frame_type == FrameType.PUBLISH:
            self._route(frame)
        elif frame.frame_type == FrameType.SUBSCRIBE:
            self._subs.setdefault(frame.topic, {})[conn] = None
            conn.topics.add(frame.topic)
        elif frame.frame_type == FrameType.UNSUBSCRIBE:
            subs = self._subs.get(frame.topic)
            if subs is not None:
                subs.pop(conn, None)
                if not subs:
                    del self._subs[frame.topic]
            conn.topics.discard(frame.topic)
        elif frame.frame_type == FrameType.PING:
            loop = asyncio.get_running_loop()
            conn.enqueue(loop.time(), encode_frame(Frame(FrameType.PONG)))
        # PONG frames from clients are ignored.

    def _route(self, frame: Frame) -> None:
        self.published += 1
        subs = self._subs.get(frame.topic)
        if not subs:
            return
        data = encode_frame(frame)
        loop = asyncio.get_running_loop()
        now = loop.time()
        p = self.faults.drop_probability
        jitter = self.faults.jitter_ms
        base = self.faults.base_latency_ms
        for conn in list(subs):
            if p > 0.0 and self._rng.random() < p:
                self.dropped += 1
                continue
            delay_ms = float(base)
            if jitter > 0:
                delay_ms += self._rng.uniform(-jitter, jitter)
            conn.enqueue(now + max(0.0, delay_ms) / 1000.0, data)
            self.delivered += 1

    def _detach(self, conn: _Conn) -> None:
        self._conns.discard(conn)
        for topic in conn.topics:
            subs = self._subs.get(topic)
            if subs is not None:
                subs.pop(conn, None)
                if not subs:
                    del self._subs[topic]
        conn.topics.clear()


async def run_broker_forever(
    host: str,
    port: int,
    ws_port: int | None,
    faults: FaultProfile,
    seed: int | None = None,
) -> None:
    broker = RelayBroker(faults=faults, seed=seed)
    await broker.start(host=host, port=port, ws_port=ws_port)
    print(f"relay listening on {host}:{broker.port} (tcp)", flush=True)
    if broker.ws_port is not None:
        print(f"relay websocket bridge on {host}:{broker.ws_port}", flush=True)
    try:
        await asyncio.Event().wait()
    finally:
        await broker.close()
