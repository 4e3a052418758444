"""asyncio TCP server that exposes a PlantSession to one aggregator at a time.

Per step the plant sends a measurement line, waits up to step_timeout for a command line,
then steps the fleet. Bad lines are answered with an err message and the wait continues.
"""
import asyncio
import logging

from ..core.exceptions import ProtocolError
from ..schemas.wire import WireCommand, WireError
from .codec import command_pairs, decode, encode, frame_to_measurement
from .session import PlantSession

logger = logging.getLogger(__name__)


class _Disconnected(Exception):
    pass


class PlantServer:
    def __init__(self, session: PlantSession, host: str = "127.0.0.1", port: int = 7410,
                 step_timeout: float = 4.0, realtime: bool = False):
        self.session = session
        self.host = host
        self.port = port
        self.step_timeout = step_timeout
        self.realtime = realtime
        self.connected = False
        self._server: asyncio.AbstractServer | None = None
        self._last_seq = -1

    @property
    def bound_port(self) -> int:
        if self._server is None or not self._server.sockets:
            return self.port
        return self._server.sockets[0].getsockname()[1]

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._handle, self.host, self.port)
        logger.info("plant listening on %s:%d with %d houses", self.host, self.bound_port,
                    len(self.session.fleet))

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        async with self._server:
            await self._server.serve_forever()

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def _send_error(self, writer: asyncio.StreamWriter, message: str) -> None:
        reply = WireError(seq=self.session.latest.seq, t=self.session.sim_time, error=message)
        writer.write(encode(reply))
        await writer.drain()

    async def _await_command(self, reader: asyncio.StreamReader,
                             writer: asyncio.StreamWriter) -> WireCommand | None:
        loop = asyncio.get_running_loop()
        deadline = loop.time() + self.step_timeout
        while True:
            remaining = deadline - loop.time()
            if remaining <= 0:
                return None
            try:
                line = await asyncio.wait_for(reader.readline(), remaining)
            except asyncio.TimeoutError:
                return None
            if not line:
                raise _Disconnected
            try:
                msg = decode(line)
            except ProtocolError as exc:
                logger.warning("protocol error: %s", exc)
                await self._send_error(writer, str(exc))
                continue
            if not isinstance(msg, WireCommand):
                await self._send_error(writer, f"plant accepts cmd messages only, got {msg.type}")
                continue
            if msg.seq <= self._last_seq:
                await self._send_error(writer, f"seq {msg.seq} does not advance past {self._last_seq}")
                continue
            self._last_seq = msg.seq
            return msg

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        if self.connected:
            await self._send_error(writer, "plant already serves an aggregator")
            writer.close()
            return
        self.connected = True
        self._last_seq = -1
        logger.info("aggregator connected from %s", peer)
        loop = asyncio.get_running_loop()
        frame = self.session.latest
        try:
            while True:
                tick = loop.time()
                writer.write(encode(frame_to_measurement(frame)))
                await writer.drain()
                command = await self._await_command(reader, writer)
                if command is None:
                    logger.warning("no command by t=%.1f s; free-running one step", frame.t)
                frame, unknown = self.session.step(None if command is None else command_pairs(command))
                if unknown:
                    await self._send_error(writer, f"unknown house ids: {', '.join(unknown[:5])}")
                if self.realtime:
                    await asyncio.sleep(max(0.0, tick + self.session.fleet.dt_control - loop.time()))
        except (_Disconnected, ConnectionError):
            logger.info("aggregator %s disconnected at t=%.1f s", peer, self.session.sim_time)
        finally:
            self.connected = False
            writer.close()
