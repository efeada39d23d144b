"""Durable session persistence: one append-only EFS/1 log per session.

Every accepted write is flushed and fsynced before the caller sees an ack,
so acked frames survive a hard kill.  A torn trailing line (crash mid
write) is dropped on recovery; complete lines are always kept.  Layout
under the data directory::

    patients.jsonl     one JSON card per line, last write per id wins
    sessions.index     one "session_id patient_id t0_ms" line per session
    sessions/<id>.efs  EFS/1 header + patient snapshot + F/A lines

Per-session writes are serialized by a lock; reads build on the in-memory
mirror and see a consistent prefix.  Subscribers (live streams) receive
each accepted wire line after it becomes durable.
"""

from __future__ import annotations

import json
import os
import queue
import secrets
import threading
from pathlib import Path

from ..errors import NotFound
from . import wire


class _SessionState:
    def __init__(self, card: wire.PatientCard, record: wire.SessionRecord):
        self.card = card
        self.record = record
        self.lock = threading.Lock()
        self.subscribers: list[queue.Queue] = []


def _fsync_write(path: Path, data: bytes, mode: str = "ab") -> None:
    with open(path, mode) as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())


class SessionStore:
    def __init__(self, data_dir):
        self.root = Path(data_dir)
        self.sessions_dir = self.root / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._patients: dict[str, wire.PatientCard] = {}
        self._sessions: dict[str, _SessionState] = {}
        self._index: dict[str, tuple[str, int]] = {}
        self._global_lock = threading.Lock()
        self._load_patients()
        self._load_index()

    # -- patients -----------------------------------------------------------

    @property
    def _patients_path(self) -> Path:
        return self.root / "patients.jsonl"

    def _load_patients(self) -> None:
        if not self._patients_path.exists():
            return
        for raw in self._patients_path.read_text("utf-8").splitlines():
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
                card = wire.PatientCard(obj["patient_id"], obj["display_name"],
                                        int(obj["age"]), obj.get("notes", ""))
            except (ValueError, KeyError):
                continue  # torn trailing line from a crash
            self._patients[card.patient_id] = card

    def upsert_patient(self, card: wire.PatientCard) -> None:
        line = json.dumps({"patient_id": card.patient_id,
                           "display_name": card.display_name,
                           "age": card.age, "notes": card.notes},
                          ensure_ascii=False)
        with self._global_lock:
            _fsync_write(self._patients_path, (line + "\n").encode("utf-8"))
            self._patients[card.patient_id] = card

    def get_patient(self, patient_id: str) -> wire.PatientCard:
        try:
            return self._patients[patient_id]
        except KeyError:
            raise NotFound(f"no patient {patient_id!r}") from None

    def list_patients(self) -> list[wire.PatientCard]:
        return [self._patients[k] for k in sorted(self._patients)]

    # -- session lifecycle ---------------------------------------------------

    @property
    def _index_path(self) -> Path:
        return self.root / "sessions.index"

    def _load_index(self) -> None:
        if not self._index_path.exists():
            return
        for raw in self._index_path.read_text("utf-8").splitlines():
            parts = raw.split()
            if len(parts) != 3:
                continue
            try:
                self._index[parts[0]] = (parts[1], int(parts[2]))
            except ValueError:
                continue

    def _session_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.efs"

    def open_session(self, patient_id: str, t0_ms: int) -> str:
        card = self.get_patient(patient_id)
        with self._global_lock:
            session_id = "s" + secrets.token_hex(6)
            record = wire.SessionRecord(session_id, patient_id, t0_ms)
            head = (wire.header_line(record) + "\n"
                    + wire.patient_line(card) + "\n").encode("utf-8")
            _fsync_write(self._session_path(session_id), head, mode="wb")
            _fsync_write(self._index_path,
                         f"{session_id} {patient_id} {t0_ms}\n".encode("utf-8"))
            self._index[session_id] = (patient_id, t0_ms)
            self._sessions[session_id] = _SessionState(card, record)
        return session_id

    def session_ids(self) -> list[str]:
        return sorted(self._index)

    def _state(self, session_id: str) -> _SessionState:
        with self._global_lock:
            state = self._sessions.get(session_id)
            if state is not None:
                return state
            if session_id not in self._index:
                raise NotFound(f"no session {session_id!r}")
            state = self._recover(session_id)
            self._sessions[session_id] = state
            return state

    def _recover(self, session_id: str) -> _SessionState:
        blob = self._session_path(session_id).read_bytes()
        if blob and not blob.endswith(b"\n"):
            # torn trailing line: the write never completed, drop it
            blob = blob[:blob.rfind(b"\n") + 1]
        decoded = wire.decode_session(blob)
        return _SessionState(decoded.card, decoded.record)

    # -- writes --------------------------------------------------------------

    def append_frames(self, session_id: str, frames: list[wire.EmotionFrame]) -> int:
        """Durably append a time-ordered batch; returns the stored count."""
        if not frames:
            return 0
        for i, (a, b) in enumerate(zip(frames, frames[1:]), start=1):
            if b.dt_ms < a.dt_ms:
                raise ValueError(f"batch out of order at index {i}: "
                                 f"dt {b.dt_ms} < {a.dt_ms}")
        state = self._state(session_id)
        with state.lock:
            if state.record.frames and frames[0].dt_ms < state.record.frames[-1].dt_ms:
                raise ValueError(
                    f"batch starts at dt {frames[0].dt_ms} before the last stored "
                    f"frame at {state.record.frames[-1].dt_ms}")
            lines = [wire.frame_line(f) for f in frames]
            _fsync_write(self._session_path(session_id),
                         ("\n".join(lines) + "\n").encode("utf-8"))
            state.record.frames.extend(frames)
            self._publish(state, lines)
        return len(frames)

    def append_activity(self, session_id: str, note: wire.ActivityNote) -> None:
        state = self._state(session_id)
        with state.lock:
            if state.record.activities and note.dt_ms < state.record.activities[-1].dt_ms:
                raise ValueError(
                    f"activity at dt {note.dt_ms} before the last stored "
                    f"activity at {state.record.activities[-1].dt_ms}")
            line = wire.activity_line(note)
            _fsync_write(self._session_path(session_id),
                         (line + "\n").encode("utf-8"))
            state.record.activities.append(note)
            self._publish(state, [line])

    # -- reads ---------------------------------------------------------------

    def get_record(self, session_id: str) -> tuple[wire.PatientCard, wire.SessionRecord]:
        state = self._state(session_id)
        with state.lock:
            record = wire.SessionRecord(
                state.record.session_id, state.record.patient_id,
                state.record.t0_ms, list(state.record.frames),
                list(state.record.activities))
        return state.card, record

    def export_session(self, session_id: str, from_ms: int | None = None,
                       to_ms: int | None = None) -> bytes:
        """EFS/1 bytes; with a window, only entries with dt_ms in
        [from_ms, to_ms] are kept and the header carries the bounds."""
        card, record = self.get_record(session_id)
        if (from_ms is None) != (to_ms is None):
            raise ValueError("give both window bounds or neither")
        if from_ms is None:
            return wire.encode_session(card, record)
        if from_ms > to_ms:
            raise ValueError(f"bad window: from {from_ms} > to {to_ms}")
        filtered = wire.SessionRecord(
            record.session_id, record.patient_id, record.t0_ms,
            [f for f in record.frames if from_ms <= f.dt_ms <= to_ms],
            [a for a in record.activities if from_ms <= a.dt_ms <= to_ms])
        return wire.encode_session(card, filtered, window=(from_ms, to_ms))

    # -- live fan-out ----------------------------------------------------------

    def subscribe(self, session_id: str, from_dt: int = -1) -> tuple[list[str], queue.Queue]:
        """History lines with dt > from_dt plus a queue of future lines."""
        state = self._state(session_id)
        q: queue.Queue = queue.Queue()
        with state.lock:
            history = [wire.frame_line(f) for f in state.record.frames
                       if f.dt_ms > from_dt]
            history += [wire.activity_line(a) for a in state.record.activities
                        if a.dt_ms > from_dt]
            state.subscribers.append(q)
        return history, q

    def unsubscribe(self, session_id: str, q: queue.Queue) -> None:
        state = self._state(session_id)
        with state.lock:
            if q in state.subscribers:
                state.subscribers.remove(q)

    def _publish(self, state: _SessionState, lines: list[str]) -> None:
        for q in list(state.subscribers):
            for line in lines:
                q.put(line)
