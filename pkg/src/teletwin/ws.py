"""Minimal server-side WebSocket (RFC 6455): handshake + text frames.

Just enough for the browser console: no extensions, no fragmentation on
send, no TLS.  Client frames must be masked per the RFC.
"""

from __future__ import annotations

import base64
import hashlib
import struct

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT, OP_TEXT, OP_BINARY, OP_CLOSE, OP_PING, OP_PONG = 0, 1, 2, 8, 9, 10


class WSError(Exception):
    pass


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def parse_http_request(raw: bytes):
    """(method, path, headers) from an HTTP/1.1 request head."""
    try:
        head = raw.decode("latin-1")
    except UnicodeDecodeError as e:
        raise WSError(f"bad request head: {e}") from None
    lines = head.split("\r\n")
    parts = lines[0].split(" ")
    if len(parts) < 3:
        raise WSError(f"bad request line: {lines[0]!r}")
    headers = {}
    for line in lines[1:]:
        if ":" in line:
            k, v = line.split(":", 1)
            headers[k.strip().lower()] = v.strip()
    return parts[0], parts[1], headers


def is_upgrade(headers: dict) -> bool:
    return ("websocket" in headers.get("upgrade", "").lower()
            and "sec-websocket-key" in headers)


def handshake_response(headers: dict) -> bytes:
    key = headers.get("sec-websocket-key")
    if not key:
        raise WSError("missing Sec-WebSocket-Key")
    return ("HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
            "\r\n").encode("ascii")


def encode_frame(payload: bytes, opcode: int = OP_TEXT, mask: bool = False) -> bytes:
    """One unfragmented frame; masking only used by test clients."""
    head = bytes([0x80 | opcode])
    n = len(payload)
    mask_bit = 0x80 if mask else 0
    if n < 126:
        head += bytes([mask_bit | n])
    elif n < (1 << 16):
        head += bytes([mask_bit | 126]) + struct.pack(">H", n)
    else:
        head += bytes([mask_bit | 127]) + struct.pack(">Q", n)
    if mask:
        key = b"\x12\x34\x56\x78"
        masked = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        return head + key + masked
    return head + payload


def encode_text(text: str, mask: bool = False) -> bytes:
    return encode_frame(text.encode("utf-8"), OP_TEXT, mask)


def encode_close(code: int = 1000) -> bytes:
    return encode_frame(struct.pack(">H", code), OP_CLOSE)


async def read_frame(reader) -> tuple[int, bytes]:
    """(opcode, payload) from an asyncio StreamReader; unmasks client frames."""
    b0b1 = await reader.readexactly(2)
    opcode = b0b1[0] & 0x0F
    masked = bool(b0b1[1] & 0x80)
    n = b0b1[1] & 0x7F
    if n == 126:
        n = struct.unpack(">H", await reader.readexactly(2))[0]
    elif n == 127:
        n = struct.unpack(">Q", await reader.readexactly(8))[0]
    key = await reader.readexactly(4) if masked else None
    payload = await reader.readexactly(n) if n else b""
    if key:
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return opcode, payload


def decode_frames(buf: bytearray):
    """Synchronous incremental decoder; yields (opcode, payload), trims buf."""
    while True:
        if len(buf) < 2:
            return
        opcode = buf[0] & 0x0F
        masked = bool(buf[1] & 0x80)
        n = buf[1] & 0x7F
        pos = 2
        if n == 126:
            if len(buf) < 4:
                return
            n = struct.unpack(">H", bytes(buf[2:4]))[0]
            pos = 4
        elif n == 127:
            if len(buf) < 10:
                return
            n = struct.unpack(">Q", bytes(buf[2:10]))[0]
            pos = 10
        need = pos + (4 if masked else 0) + n
        if len(buf) < need:
            return
        if masked:
            key = bytes(buf[pos:pos + 4])
            raw = bytes(buf[pos + 4:need])
            payload = bytes(b ^ key[i % 4] for i, b in enumerate(raw))
        else:
            payload = bytes(buf[pos:need])
        del buf[:need]
        yield opcode, payload
