"""HTTP front of the session store.

Endpoints (stable paths)::

    POST /api/login                      {"user","secret"} -> {"token"}
    POST /api/logout                     revoke the presented token
    GET  /api/patients                   list patient cards
    POST /api/patients                   create/update a card
    GET  /api/patients/{id}              one card
    POST /api/sessions                   {"patient_id","t0_ms"?} -> {"session_id"}
    POST /api/sessions/{id}/frames       body: EFS/1 F-lines -> {"stored": n}
    POST /api/sessions/{id}/activities   body: one EFS/1 A-line -> {"stored": 1}
    GET  /api/sessions/{id}/export?from&to   EFS/1 body
    GET  /api/sessions/{id}/live[?from&token] server-push stream

Every endpoint except login requires ``Authorization: Bearer <token>``;
the live stream also accepts ``?token=`` because EventSource clients
cannot set headers.  The live stream is server-sent events whose ``data:``
payloads are EFS/1 F/A lines: history after ``from`` (resume point,
default everything) first, then new lines as they are acked, with comment
heartbeats to keep the connection alive.
"""

from __future__ import annotations

import json
import logging
import queue
import re
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from ..errors import AuthError, DecodeError, NotFound
from . import wire
from .auth import CredentialStore, TokenRegistry
from .store import SessionStore

log = logging.getLogger(__name__)


@dataclass
class ServeConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8750
    credentials: str = "credentials.txt"
    data_dir: str = "session-data"
    token_ttl_seconds: float = 3600.0


def parse_config(path) -> ServeConfig:
    """``key = value`` UTF-8 text; unknown keys are rejected."""
    cfg = ServeConfig()
    fields = {"listen_host": str, "listen_port": int,
              "credentials": str, "data_dir": str,
              "token_ttl_seconds": float}
    for lineno, raw in enumerate(Path(path).read_text("utf-8").splitlines(),
                                 start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in fields:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        setattr(cfg, key, fields[key](value))
    return cfg


_ROUTES = [
    ("POST", re.compile(r"^/api/login$"), "login"),
    ("POST", re.compile(r"^/api/logout$"), "logout"),
    ("GET", re.compile(r"^/api/patients$"), "list_patients"),
    ("POST", re.compile(r"^/api/patients$"), "upsert_patient"),
    ("GET", re.compile(r"^/api/patients/(?P<pid>[^/]+)$"), "get_patient"),
    ("POST", re.compile(r"^/api/sessions$"), "open_session"),
    ("POST", re.compile(r"^/api/sessions/(?P<sid>[^/]+)/frames$"), "post_frames"),
    ("POST", re.compile(r"^/api/sessions/(?P<sid>[^/]+)/activities$"), "post_activity"),
    ("GET", re.compile(r"^/api/sessions/(?P<sid>[^/]+)/export$"), "export"),
    ("GET", re.compile(r"^/api/sessions/(?P<sid>[^/]+)/live$"), "live"),
]


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "resmonet-session"

    # -- plumbing -------------------------------------------------------------

    @property
    def svc(self) -> "SessionService":
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, obj) -> None:
        self._send(status, json.dumps(obj).encode("utf-8"),
                   "application/json; charset=utf-8")

    def _send_error_json(self, status: int, name: str, message: str) -> None:
        self._send_json(status, {"error": name, "message": message})

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _auth_user(self, query) -> str:
        header = self.headers.get("Authorization") or ""
        token = header[7:] if header.startswith("Bearer ") else None
        if token is None and "token" in query:
            token = query["token"][0]
        return self.svc.tokens.validate(token)

    def do_OPTIONS(self):  # CORS preflight for the browser dashboard
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers",
                         "Authorization, Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def _dispatch(self, method: str) -> None:
        split = urlsplit(self.path)
        query = parse_qs(split.query)
        for verb, pattern, name in _ROUTES:
            if verb != method:
                continue
            match = pattern.match(split.path)
            if match:
                break
        else:
            self._send_error_json(404, "NotFound", f"no route {method} {split.path}")
            return
        try:
            if name != "login":
                user = self._auth_user(query)
            else:
                user = ""
            getattr(self, f"_h_{name}")(query, match.groupdict(), user)
        except AuthError as exc:
            self._send_error_json(401, "AuthError", str(exc))
        except NotFound as exc:
            self._send_error_json(404, "NotFound", str(exc.args[0]))
        except DecodeError as exc:
            self._send_error_json(400, "DecodeError", str(exc))
        except (ValueError, KeyError, TypeError) as exc:
            self._send_error_json(400, "BadRequest", str(exc))
        except (BrokenPipeError, ConnectionResetError):
            pass  # client went away mid-stream
        except Exception as exc:  # pragma: no cover - last-resort guard
            log.exception("unhandled error")
            try:
                self._send_error_json(500, "InternalError", str(exc))
            except OSError:
                pass

    # -- handlers -------------------------------------------------------------

    def _h_login(self, query, args, user):
        try:
            obj = json.loads(self._body() or b"{}")
            name, secret = obj["user"], obj["secret"]
        except (ValueError, KeyError):
            self._send_error_json(400, "BadRequest", "body must be JSON with user/secret")
            return
        if not self.svc.credentials.verify(name, secret):
            self._send_error_json(401, "AuthError", "bad credentials")
            return
        token = self.svc.tokens.issue(name)
        self._send_json(200, {"token": token,
                              "expires_in": self.svc.tokens.ttl})

    def _h_logout(self, query, args, user):
        header = self.headers.get("Authorization") or ""
        if header.startswith("Bearer "):
            self.svc.tokens.revoke(header[7:])
        self._send_json(200, {"ok": True})

    def _h_list_patients(self, query, args, user):
        cards = self.svc.store.list_patients()
        self._send_json(200, [_card_json(c) for c in cards])

    def _h_upsert_patient(self, query, args, user):
        obj = json.loads(self._body())
        card = wire.PatientCard(obj["patient_id"], obj["display_name"],
                                int(obj["age"]), obj.get("notes", ""))
        self.svc.store.upsert_patient(card)
        self._send_json(201, _card_json(card))

    def _h_get_patient(self, query, args, user):
        card = self.svc.store.get_patient(args["pid"])
        self._send_json(200, _card_json(card))

    def _h_open_session(self, query, args, user):
        obj = json.loads(self._body())
        t0 = int(obj.get("t0_ms", time.time() * 1000))
        sid = self.svc.store.open_session(obj["patient_id"], t0)
        self._send_json(201, {"session_id": sid, "t0_ms": t0})

    def _h_post_frames(self, query, args, user):
        text = self._body().decode("utf-8")
        frames = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            if not raw:
                continue
            if not raw.startswith("F|"):
                raise DecodeError(lineno, f"expected an F line, got {raw[:2]!r}")
            frames.append(wire.parse_frame_line(raw[2:], lineno))
        stored = self.svc.store.append_frames(args["sid"], frames)
        self._send_json(200, {"stored": stored})

    def _h_post_activity(self, query, args, user):
        text = self._body().decode("utf-8").strip()
        if not text.startswith("A|"):
            raise DecodeError(1, "body must be one EFS/1 A line")
        note = wire.parse_activity_line(text[2:], 1)
        self.svc.store.append_activity(args["sid"], note)
        self._send_json(200, {"stored": 1, "dt_ms": note.dt_ms})

    def _h_export(self, query, args, user):
        from_ms = int(query["from"][0]) if "from" in query else None
        to_ms = int(query["to"][0]) if "to" in query else None
        body = self.svc.store.export_session(args["sid"], from_ms, to_ms)
        self._send(200, body, "text/plain; charset=utf-8")

    def _h_live(self, query, args, user):
        sid = args["sid"]
        from_dt = int(query["from"][0]) if "from" in query else -1
        history, q = self.svc.store.subscribe(sid, from_dt)
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream; charset=utf-8")
        self.send_header("Cache-Control", "no-store")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Connection", "close")
        self.end_headers()
        try:
            for line in history:
                self._sse(line)
            while not self.svc.stopping.is_set():
                try:
                    line = q.get(timeout=self.svc.heartbeat)
                except queue.Empty:
                    self.wfile.write(b": ping\n\n")
                    self.wfile.flush()
                    continue
                self._sse(line)
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.svc.store.unsubscribe(sid, q)

    def _sse(self, line: str) -> None:
        self.wfile.write(f"data: {line}\n\n".encode("utf-8"))
        self.wfile.flush()


def _card_json(card: wire.PatientCard) -> dict:
    return {"patient_id": card.patient_id, "display_name": card.display_name,
            "age": card.age, "notes": card.notes}


class SessionService:
    """Owns the store, credential store, token registry, and HTTP server."""

    def __init__(self, config: ServeConfig, heartbeat: float = 15.0):
        self.config = config
        self.store = SessionStore(config.data_dir)
        self.credentials = CredentialStore.load(config.credentials)
        self.tokens = TokenRegistry(config.token_ttl_seconds)
        self.heartbeat = heartbeat
        self.stopping = threading.Event()
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def _make_server(self) -> ThreadingHTTPServer:
        httpd = ThreadingHTTPServer(
            (self.config.listen_host, self.config.listen_port), _Handler)
        httpd.daemon_threads = True
        httpd.service = self  # type: ignore[attr-defined]
        return httpd

    @property
    def address(self) -> tuple[str, int]:
        assert self._httpd is not None, "service not started"
        return self._httpd.server_address[:2]

    def start(self) -> tuple[str, int]:
        """Serve on a background thread (tests, embedding)."""
        self._httpd = self._make_server()
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        kwargs={"poll_interval": 0.1},
                                        daemon=True)
        self._thread.start()
        return self.address

    def run_forever(self) -> None:
        """Serve on the calling thread until interrupted (CLI)."""
        self._httpd = self._make_server()
        host, port = self.address
        log.info("session service listening on %s:%d", host, port)
        try:
            self._httpd.serve_forever(poll_interval=0.5)
        except KeyboardInterrupt:  # pragma: no cover - interactive path
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self.stopping.set()
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
