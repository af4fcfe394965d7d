"""Async client for the relay protocol.

Subscriptions deliver into asyncio queues. Several subscriptions may share
one queue, which preserves cross-topic arrival order for consumers that need
it (the session engine reads control and telemetry topics that way).
"""
from __future__ import annotations

import asyncio

from .wire import Frame, FrameError, FrameType, encode_frame, read_frame


class RelayConnectionLost(ConnectionError):
    """The relay closed the connection or was never reachable."""


class Subscription:
    def __init__(self, client: "RelayClient", topic: str, queue: "asyncio.Queue[Frame | None]"):
        self.client = client
        self.topic = topic
        self.queue = queue

    async def get(self, timeout: float | None = None) -> Frame:
        """Next frame for this subscription's queue; raises on relay loss."""
        if timeout is None:
            frame = await self.queue.get()
        else:
            frame = await asyncio.wait_for(self.queue.get(), timeout)
        if frame is None:
            raise RelayConnectionLost("relay connection closed")
        return frame

    def get_nowait(self) -> Frame | None:
        try:
            frame = self.queue.get_nowait()
        except asyncio.QueueEmpty:
            return None
        if frame is None:
            raise RelayConnectionLost("relay connection closed")
        return frame

    async def unsubscribe(self) -> None:
        await self.client.unsubscribe(self.topic, self.queue)


class RelayClient:
    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self._reader = reader
        self._writer = writer
        # topic -> queues fed by that topic (one topic may feed several)
        self._routes: dict[str, list[asyncio.Queue]] = {}
        self._pong_waiters: list[asyncio.Future] = []
        self.closed = False
        self._reader_task = asyncio.ensure_future(self._read_loop())

    @classmethod
    async def connect(cls, host: str = "127.0.0.1", port: int = 7447) -> "RelayClient":
        try:
            reader, writer = await asyncio.open_connection(host, port)
        except OSError as exc:
            raise RelayConnectionLost(f"cannot reach relay at {host}:{port}: {exc}") from exc
        return cls(reader, writer)

    async def _read_loop(self) -> None:
        try:
            while True:
                frame = await read_frame(self._reader)
                if frame.frame_type == FrameType.PUBLISH:
                    for queue in self._routes.get(frame.topic, ()):  # at-most-once fanout
                        queue.put_nowait(frame)
                elif frame.frame_type == FrameType.PONG:
                    for waiter in self._pong_waiters:
                        if not waiter.done():
                            waiter.set_result(True)
                    self._pong_waiters.clear()
                # other frame types are not expected server->client; ignore
        except (asyncio.IncompleteReadError, ConnectionError, FrameError, asyncio.CancelledError):
            pass
        finally:
            self.closed = True
            seen: set[int] = set()
            for queues in self._routes.values():
                for queue in queues:
                    if id(queue) not in seen:
                        seen.add(id(queue))
                        queue.put_nowait(None)
            for waiter in self._pong_waiters:
                if not waiter.done():
                    waiter.set_exception(RelayConnectionLost("relay connection closed"))
            self._pong_waiters.clear()

    async def _send(self, frame: Frame) -> None:
        if self.closed:
            raise RelayConnectionLost("relay connection closed")
        self._writer.write(encode_frame(frame))
        try:
            await self._writer.drain()
        except ConnectionError as exc:
            raise RelayConnectionLost(str(exc)) from exc

    async def publish(self, topic: str, payload: bytes) -> None:
        await self._send(Frame(FrameType.PUBLISH, topic, payload))

    async def subscribe(self, topic: str, queue: asyncio.Queue | None = None) -> Subscription:
        queue = queue if queue is not None else asyncio.Queue()
        await self._send(Frame(FrameType.SUBSCRIBE, topic))
        self._routes.setdefault(topic, []).append(queue)
        return Subscription(self, topic, queue)

    async def unsubscribe(self, topic: str, queue: asyncio.Queue | None = None) -> None:
        await self._send(Frame(FrameType.UNSUBSCRIBE, topic))
        if queue is None:
            self._routes.pop(topic, None)
        else:
            queues = self._routes.get(topic)
            if queues is not None:
                self._routes[topic] = [q for q in queues if q is not queue]
                if not self._routes[topic]:
                    del self._routes[topic]

    async def ping(self, timeout: float = 5.0) -> None:
        waiter: asyncio.Future = asyncio.get_running_loop().create_future()
        self._pong_waiters.append(waiter)
        await self._send(Frame(FrameType.PING))
        await asyncio.wait_for(waiter, timeout)

    async def close(self) -> None:
        self.closed = True
        self._reader_task.cancel()
        try:
            await self._reader_task
        except asyncio.CancelledError:
            pass
        self._writer.close()
        try:
            await self._writer.wait_closed()
        except (ConnectionError, OSError):
            pass
