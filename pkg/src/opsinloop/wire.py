"""Line-oriented TCP transport for driving a reference remotely.

One JSON object per newline-terminated line.  The server speaks first,
announcing its capabilities in a hello message; the client echoes the same
hello to confirm it can work with them, then sends stimuli with strictly
increasing request ids and receives one response (or error) per request.
A bye message ends the session; the server then waits for the next client.
Sessions are strictly sequential: one client at a time.

Floats cross the wire in Python's shortest round-trip decimal form, so a
measurement arrives bit-identical to what the reference produced and remote
runs can reproduce in-process runs byte for byte.
"""

from __future__ import annotations

import json
import socket
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, IntegrationDivergedError, ProtocolError, ReferenceFailure
from .grid import ControlSignal, ObservationSeries, TimeGrid
from .reference import ReferenceCapabilities, ReferenceSystem

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 120.0


@dataclass(frozen=True)
class Hello:
    protocol_version: int
    dt: float
    n_steps: int
    u_hi: float
    repeats: int

    def to_dict(self) -> dict:
        return {
            "type": "hello",
            "protocol_version": int(self.protocol_version),
            "dt": float(self.dt),
            "n_steps": int(self.n_steps),
            "u_hi": float(self.u_hi),
            "repeats": int(self.repeats),
        }


@dataclass(frozen=True)
class Stimulus:
    request_id: int
    u: tuple

    def to_dict(self) -> dict:
        return {"type": "stimulus", "request_id": int(self.request_id),
                "u": [float(v) for v in self.u]}


@dataclass(frozen=True)
class Response:
    request_id: int
    z: tuple

    def to_dict(self) -> dict:
        return {"type": "response", "request_id": int(self.request_id),
                "z": [float(v) for v in self.z]}


@dataclass(frozen=True)
class WireError:
    request_id: int | None
    message: str

    def to_dict(self) -> dict:
        rid = None if self.request_id is None else int(self.request_id)
        return {"type": "error", "request_id": rid, "message": str(self.message)}


@dataclass(frozen=True)
class Bye:
    def to_dict(self) -> dict:
        return {"type": "bye"}


_MESSAGE_TYPES = {"hello", "stimulus", "response", "error", "bye"}


def encode_message(msg) -> bytes:
    """One JSON object, newline terminated, keys sorted for stable bytes."""
    return (json.dumps(msg.to_dict(), sort_keys=True, separators=(",", ":"),
                       allow_nan=False) + "\n").encode("utf-8")


def decode_message(line):
    """Parse one wire line into a message object."""
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"undecodable wire line: {exc}") from None
    if not isinstance(payload, dict) or payload.get("type") not in _MESSAGE_TYPES:
        raise ProtocolError(f"unknown wire message: {line!r}")
    kind = payload["type"]
    try:
        if kind == "hello":
            return Hello(int(payload["protocol_version"]), float(payload["dt"]),
                         int(payload["n_steps"]), float(payload["u_hi"]),
                         int(payload["repeats"]))
        if kind == "stimulus":
            return Stimulus(int(payload["request_id"]),
                            tuple(float(v) for v in payload["u"]))
        if kind == "response":
            return Response(int(payload["request_id"]),
                            tuple(float(v) for v in payload["z"]))
        if kind == "error":
            rid = payload.get("request_id")
            return WireError(None if rid is None else int(rid), str(payload["message"]))
        return Bye()
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed {kind} message: {exc}") from None


def capabilities_hello(caps: ReferenceCapabilities) -> Hello:
    return Hello(PROTOCOL_VERSION, caps.grid.dt, caps.grid.n_steps,
                 caps.u_hi, caps.repeats)


class ReferenceServer:
    """Serves one reference to one client at a time.

    ``port=0`` binds an ephemeral port; read ``address`` after ``start``.
    With ``record_path`` set, the hello and every completed exchange are
    appended to a JSONL session log that ``replay`` tooling can consume.
    """

    def __init__(self, reference: ReferenceSystem, host: str = "127.0.0.1",
                 port: int = 0, record_path=None):
        self._reference = reference
        self._hello = capabilities_hello(reference.capabilities)
        self._host = host
        self._port = port
        self._record_path = record_path
        self._record_file = None
        self._listener: socket.socket | None = None
        self._thread: threading.Thread | None = None
        self._stopping = False
        self.sessions_served = 0

    # -- lifecycle -----------------------------------------------------

    def bind(self) -> tuple[str, int]:
        """Bind the listening socket without serving yet; returns the address."""
        if self._listener is None:
            self._open_listener()
        return self.address

    def start(self) -> "ReferenceServer":
        """Bind and serve on a background thread (for tests and embedding)."""
        self.bind()
        self._thread = threading.Thread(target=self._serve_loop, daemon=True)
        self._thread.start()
        return self

    def run_forever(self) -> None:
        """Bind and serve on the calling thread (for the CLI)."""
        self.bind()
        self._serve_loop()

    def stop(self) -> None:
        self._stopping = True
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None
        if self._record_file is not None:
            self._record_file.close()
            self._record_file = None

    @property
    def address(self) -> tuple[str, int]:
        if self._listener is None:
            raise ProtocolError("server is not bound yet")
        host, port = self._listener.getsockname()[:2]
        return host, port

    def __enter__(self) -> "ReferenceServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()

    # -- internals -----------------------------------------------------

    def _open_listener(self) -> None:
        self._listener = socket.create_server((self._host, self._port), backlog=4)
        # Closing a socket does not reliably wake a thread blocked in accept(),
        # so the serve loop polls for the stop flag instead of blocking forever.
        self._listener.settimeout(0.25)
        if self._record_path is not None:
            self._record_file = open(self._record_path, "w", encoding="utf-8", newline="\n")
            self._record_file.write(
                json.dumps(self._hello.to_dict(), sort_keys=True,
                           separators=(",", ":")) + "\n")
            self._record_file.flush()

    def _serve_loop(self) -> None:
        try:
            while not self._stopping:
                try:
                    conn, _ = self._listener.accept()
                except socket.timeout:
                    continue
                except OSError:
                    break
                with conn:
                    self._run_session(conn)
                self.sessions_served += 1
        finally:
            if self._record_file is not None:
                self._record_file.close()
                self._record_file = None

    def _record_exchange(self, request_id: int, u, z) -> None:
        if self._record_file is None:
            return
        line = json.dumps(
            {"type": "exchange", "request_id": int(request_id),
             "u": [float(v) for v in u], "z": [float(v) for v in z]},
            sort_keys=True, separators=(",", ":"))
        self._record_file.write(line + "\n")
        self._record_file.flush()

    def _run_session(self, conn: socket.socket) -> None:
        conn.settimeout(DEFAULT_TIMEOUT)
        reader = conn.makefile("rb")
        caps = self._reference.capabilities
        try:
            conn.sendall(encode_message(self._hello))
            last_id = 0
            while True:
                line = reader.readline()
                if not line:
                    return
                try:
                    msg = decode_message(line)
                except ProtocolError as exc:
                    conn.sendall(encode_message(WireError(None, str(exc))))
                    return
                if isinstance(msg, Bye):
                    return
                if isinstance(msg, Hello):
                    # Re-sending the agreed hello is harmless; anything else
                    # means the peer expects different capabilities.
                    if msg != self._hello:
                        conn.sendall(encode_message(
                            WireError(None, "capability mismatch")))
                        return
                    continue
                if isinstance(msg, Stimulus):
                    if msg.request_id <= last_id:
                        conn.sendall(encode_message(WireError(
                            msg.request_id,
                            f"request_id must increase (last was {last_id})")))
                        return
                    last_id = msg.request_id
                    reply = self._answer(msg, caps)
                    conn.sendall(encode_message(reply))
                    if isinstance(reply, Response):
                        self._record_exchange(msg.request_id, msg.u, reply.z)
                    continue
                # Response traveling client -> server is backwards.
                conn.sendall(encode_message(WireError(None, "unexpected message")))
                return
        except (OSError, ValueError):
            return
        finally:
            reader.close()

    def _answer(self, msg: Stimulus, caps: ReferenceCapabilities):
        if len(msg.u) != caps.grid.n_points:
            return WireError(msg.request_id,
                             f"stimulus must hold {caps.grid.n_points} samples")
        values = np.asarray(msg.u, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            return WireError(msg.request_id, "stimulus contains non-finite samples")
        if values.min() < 0.0 or values.max() > caps.u_hi + 1e-12:
            return WireError(msg.request_id,
                             f"stimulus leaves the accepted range [0, {caps.u_hi}]")
        try:
            control = ControlSignal(values, caps.grid, (0.0, caps.u_hi))
            measured = self._reference.apply(control)
        except (ReferenceFailure, ContractError, IntegrationDivergedError) as exc:
            return WireError(msg.request_id, str(exc))
        return Response(msg.request_id, tuple(float(v) for v in measured.values))


def serve(reference: ReferenceSystem, host: str = "127.0.0.1", port: int = 0,
          record_path=None, *, background: bool = False) -> ReferenceServer:
    server = ReferenceServer(reference, host, port, record_path)
    if background:
        return server.start()
    server.run_forever()
    return server


class RemoteReference:
    """Client-side reference: satisfies the reference protocol over a socket."""

    def __init__(self, sock: socket.socket, hello: Hello, reader=None):
        self._sock = sock
        self._reader = sock.makefile("rb") if reader is None else reader
        self._hello = hello
        grid = TimeGrid(hello.dt, hello.n_steps)
        self._capabilities = ReferenceCapabilities(grid, hello.u_hi, hello.repeats)
        self._next_id = 1
        self._closed = False

    @property
    def capabilities(self) -> ReferenceCapabilities:
        return self._capabilities

    def apply(self, control: ControlSignal) -> ObservationSeries:
        if self._closed:
            raise ReferenceFailure("session already closed")
        caps = self._capabilities
        if control.grid != caps.grid:
            raise ContractError("stimulus grid does not match the reference grid")
        request_id = self._next_id
        self._next_id += 1
        msg = Stimulus(request_id, tuple(float(v) for v in control.values))
        try:
            self._sock.sendall(encode_message(msg))
            while True:
                line = self._reader.readline()
                if not line:
                    raise ReferenceFailure("reference closed the connection")
                reply = decode_message(line)
                if isinstance(reply, WireError):
                    raise ReferenceFailure(reply.message)
                if isinstance(reply, Response) and reply.request_id == request_id:
                    return ObservationSeries(np.asarray(reply.z, dtype=np.float64),
                                             caps.grid)
                raise ReferenceFailure(f"unexpected reply {reply!r}")
        except (OSError, ProtocolError) as exc:
            raise ReferenceFailure(f"transport failure: {exc}") from exc

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._sock.sendall(encode_message(Bye()))
        except OSError:
            pass
        try:
            self._reader.close()
        except OSError:
            pass
        self._sock.close()

    def __enter__(self) -> "RemoteReference":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def connect(host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> RemoteReference:
    """Open a session and run the hello handshake.

    Raises ProtocolError when the peer speaks a different protocol version;
    plain socket errors (refused, unreachable) propagate as OSError.
    """
    sock = socket.create_connection((host, port), timeout=timeout)
    try:
        reader = sock.makefile("rb")
        line = reader.readline()
        if not line:
            raise ProtocolError("peer closed the connection before the handshake")
        hello = decode_message(line)
        if not isinstance(hello, Hello):
            raise ProtocolError(f"expected a hello, got {hello!r}")
        if hello.protocol_version != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: peer {hello.protocol_version}, "
                f"local {PROTOCOL_VERSION}")
        sock.sendall(encode_message(hello))
        return RemoteReference(sock, hello, reader)
    except BaseException:
        sock.close()
        raise
