"""Minimal WebSocket (RFC 6455) server and client over asyncio streams.

Covers what the teleop protocol needs: the HTTP upgrade handshake,
single-frame text messages, ping/pong, and clean close. Client-to-server
frames are masked as the RFC requires; fragmented messages are not supported
(every teleop message fits one frame).
"""
from __future__ import annotations

import asyncio
import base64
import hashlib
import os
import struct

_GUID = b"258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_TEXT = 0x1
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class HandshakeError(ConnectionError):
    pass


def _accept_key(key: str) -> str:
    digest = hashlib.sha1(key.encode() + _GUID).digest()
    return base64.b64encode(digest).decode()


def _encode_frame(opcode: int, payload: bytes, mask: bool) -> bytes:
    head = bytearray([0x80 | opcode])
    n = len(payload)
    mask_bit = 0x80 if mask else 0
    if n < 126:
        head.append(mask_bit | n)
    elif n < (1 << 16):
        head.append(mask_bit | 126)
        head += struct.pack(">H", n)
    else:
        head.append(mask_bit | 127)
        head += struct.pack(">Q", n)
    if mask:
        key = os.urandom(4)
        head += key
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return bytes(head) + payload


class WebSocket:
    """One established connection; ``recv_text`` returns None once closed."""

    def __init__(self, reader: asyncio.StreamReader,
                 writer: asyncio.StreamWriter, *, mask_outgoing: bool):
        self.reader = reader
        self.writer = writer
        self.mask_outgoing = mask_outgoing
        self.closed = False

    async def _read_frame(self) -> tuple[int, bytes] | None:
        try:
            b1, b2 = await self.reader.readexactly(2)
        except (asyncio.IncompleteReadError, ConnectionError):
            return None
        opcode = b1 & 0x0F
        masked = bool(b2 & 0x80)
        n = b2 & 0x7F
        if n == 126:
            n = struct.unpack(">H", await self.reader.readexactly(2))[0]
        elif n == 127:
            n = struct.unpack(">Q", await self.reader.readexactly(8))[0]
        key = await self.reader.readexactly(4) if masked else None
        try:
            payload = await self.reader.readexactly(n) if n else b""
        except (asyncio.IncompleteReadError, ConnectionError):
            return None
        if key:
            payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        return opcode, payload

    async def send_text(self, text: str) -> None:
        if self.closed:
            return
        try:
            self.writer.write(_encode_frame(OP_TEXT, text.encode(),
                                            self.mask_outgoing))
            await self.writer.drain()
        except ConnectionError:
            self.closed = True

    async def recv_text(self) -> str | None:
        """Next text message; answers pings transparently; None on close."""
        while not self.closed:
            frame = await self._read_frame()
            if frame is None:
                self.closed = True
                return None
            opcode, payload = frame
            if opcode == OP_TEXT:
                return payload.decode("utf-8", errors="replace")
            if opcode == OP_PING:
                try:
                    self.writer.write(_encode_frame(OP_PONG, payload,
                                                    self.mask_outgoing))
                    await self.writer.drain()
                except ConnectionError:
                    self.closed = True
            elif opcode == OP_CLOSE:
                await self.close()
                return None
            # pongs and unknown frames are dropped
        return None

    async def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        try:
            self.writer.write(_encode_frame(OP_CLOSE, b"", self.mask_outgoing))
            await self.writer.drain()
        except ConnectionError:
            pass
        self.writer.close()


async def serve(handler, host: str, port: int, path: str = "/teleop"
                ) -> asyncio.AbstractServer:
    """Accept HTTP upgrade requests at ``path`` and hand the socket over."""

    async def on_connect(reader: asyncio.StreamReader,
                         writer: asyncio.StreamWriter):
        try:
            request = await asyncio.wait_for(
                reader.readuntil(b"\r\n\r\n"), timeout=10.0)
        except (asyncio.IncompleteReadError, asyncio.TimeoutError,
                ConnectionError):
            writer.close()
            return
        lines = request.decode("latin-1").split("\r\n")
        parts = lines[0].split(" ")
        headers = {}
        for line in lines[1:]:
            if ":" in line:
                k, v = line.split(":", 1)
                headers[k.strip().lower()] = v.strip()
        key = headers.get("sec-websocket-key")
        if (len(parts) < 2 or parts[0] != "GET" or parts[1] != path
                or key is None):
            writer.write(b"HTTP/1.1 404 Not Found\r\n"
                         b"Connection: close\r\n\r\n")
            try:
                await writer.drain()
            except ConnectionError:
                pass
            writer.close()
            return
        writer.write(
            b"HTTP/1.1 101 Switching Protocols\r\n"
            b"Upgrade: websocket\r\nConnection: Upgrade\r\n"
            b"Sec-WebSocket-Accept: " + _accept_key(key).encode()
            + b"\r\n\r\n")
        await writer.drain()
        ws = WebSocket(reader, writer, mask_outgoing=False)
        try:
            await handler(ws)
        finally:
            await ws.close()

    return await asyncio.start_server(on_connect, host, port)


async def connect(host: str, port: int, path: str = "/teleop") -> WebSocket:
    reader, writer = await asyncio.open_connection(host, port)
    key = base64.b64encode(os.urandom(16)).decode()
    writer.write((f"GET {path} HTTP/1.1\r\nHost: {host}:{port}\r\n"
                  f"Upgrade: websocket\r\nConnection: Upgrade\r\n"
                  f"Sec-WebSocket-Key: {key}\r\n"
                  f"Sec-WebSocket-Version: 13\r\n\r\n").encode())
    await writer.drain()
    response = await reader.readuntil(b"\r\n\r\n")
    status = response.split(b"\r\n", 1)[0]
    if b"101" not in status:
        writer.close()
        raise HandshakeError(f"upgrade refused: {status.decode('latin-1')}")
    expected = _accept_key(key).encode()
    if expected not in response:
        writer.close()
        raise HandshakeError("bad Sec-WebSocket-Accept")
    return WebSocket(reader, writer, mask_outgoing=True)
