"""EFS/1: the compact UTF-8 wire form of a session slice.

Layout (LF line endings)::

    EFS1 <session_id> <t0_epoch_ms> [<from_ms> <to_ms>]
    P|<patient_id>|<display_name>|<age>|<notes>
    F|<dt_ms>|<p0>,<p1>,<p2>,<p3>,<p4>,<p5>,<p6>
    A|<dt_ms>|<text>

Frame percentages follow the fixed emotion order (anger, disgust, fear,
happiness, sadness, surprise, neutral) and always sum to exactly 100.
Text fields escape backslash, ``|`` and LF as ``\\\\``, ``\\|`` and
``\\n``.  F and A lines are emitted in dt order (frames first on ties);
within each kind, order is preserved exactly, so decode(encode(x)) == x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..emotions import EMOTIONS
from ..errors import DecodeError

N_EMOTIONS = len(EMOTIONS)
MAGIC = "EFS1"


@dataclass
class PatientCard:
    patient_id: str
    display_name: str
    age: int
    notes: str = ""

    def __post_init__(self):
        if not self.patient_id:
            raise ValueError("patient_id must be non-empty")
        if self.age < 0:
            raise ValueError(f"age must be >= 0, got {self.age}")


@dataclass(frozen=True)
class EmotionFrame:
    dt_ms: int
    probs: tuple[int, ...]  # percent per emotion, fixed order

    def __post_init__(self):
        if self.dt_ms < 0:
            raise ValueError(f"dt_ms must be >= 0, got {self.dt_ms}")
        probs = tuple(int(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if len(probs) != N_EMOTIONS:
            raise ValueError(f"expected {N_EMOTIONS} percentages, got {len(probs)}")
        if any(p < 0 or p > 100 for p in probs):
            raise ValueError(f"percentages must be in [0,100]: {probs}")
        if sum(probs) != 100:
            raise ValueError(f"percentages must sum to 100, got {sum(probs)}")


@dataclass(frozen=True)
class ActivityNote:
    dt_ms: int
    text: str

    def __post_init__(self):
        if self.dt_ms < 0:
            raise ValueError(f"dt_ms must be >= 0, got {self.dt_ms}")
        if not self.text:
            raise ValueError("activity text must be non-empty")


@dataclass
class SessionRecord:
    session_id: str
    patient_id: str
    t0_ms: int
    frames: list[EmotionFrame] = field(default_factory=list)
    activities: list[ActivityNote] = field(default_factory=list)

    def __post_init__(self):
        for seq, what in ((self.frames, "frames"), (self.activities, "activities")):
            for a, b in zip(seq, seq[1:]):
                if b.dt_ms < a.dt_ms:
                    raise ValueError(f"{what} must be time-ordered by dt_ms")


@dataclass(frozen=True)
class DecodedSession:
    card: PatientCard
    record: SessionRecord
    window: tuple[int, int] | None  # (from_ms, to_ms) when the payload is filtered


def quantize_probs(probs) -> tuple[int, ...]:
    """7 floats (roughly a probability vector) -> 7 percents summing to 100.

    Floors 100*p_i, then hands the remaining points to the largest
    remainders (ties to the lower index), so every |int/100 - p_i| <= 0.01
    after renormalization.
    """
    vals = [float(p) for p in probs]
    if len(vals) != N_EMOTIONS:
        raise ValueError(f"expected {N_EMOTIONS} probabilities, got {len(vals)}")
    if any(v < 0 for v in vals):
        raise ValueError("probabilities must be non-negative")
    total = sum(vals)
    if total <= 0:
        raise ValueError("probabilities must not all be zero")
    vals = [v / total for v in vals]
    scaled = [v * 100.0 for v in vals]
    floors = [int(s) for s in scaled]
    leftover = 100 - sum(floors)
    order = sorted(range(N_EMOTIONS), key=lambda i: (-(scaled[i] - floors[i]), i))
    out = list(floors)
    for i in order[:leftover]:
        out[i] += 1
    return tuple(out)


def escape_text(s: str) -> str:
    return s.replace("\\", "\\\\").replace("|", "\\|").replace("\n", "\\n")


def unescape_text(s: str, line: int) -> str:
    out = []
    i = 0
    while i < len(s):
        c = s[i]
        if c == "\\":
            if i + 1 >= len(s):
                raise DecodeError(line, "dangling escape at end of field")
            nxt = s[i + 1]
            if nxt == "\\":
                out.append("\\")
            elif nxt == "|":
                out.append("|")
            elif nxt == "n":
                out.append("\n")
            else:
                raise DecodeError(line, f"unknown escape \\{nxt}")
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _split_fields(body: str, line: int) -> list[str]:
    """Split on unescaped '|'."""
    fields = []
    cur = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\" and i + 1 < len(body):
            cur.append(c)
            cur.append(body[i + 1])
            i += 2
            continue
        if c == "|":
            fields.append("".join(cur))
            cur = []
        else:
            cur.append(c)
        i += 1
    fields.append("".join(cur))
    return fields


def frame_line(frame: EmotionFrame) -> str:
    return f"F|{frame.dt_ms}|{','.join(str(p) for p in frame.probs)}"


def activity_line(note: ActivityNote) -> str:
    return f"A|{note.dt_ms}|{escape_text(note.text)}"


def patient_line(card: PatientCard) -> str:
    return (f"P|{escape_text(card.patient_id)}|{escape_text(card.display_name)}"
            f"|{card.age}|{escape_text(card.notes)}")


def header_line(record: SessionRecord, window=None) -> str:
    head = f"{MAGIC} {record.session_id} {record.t0_ms}"
    if window is not None:
        head += f" {window[0]} {window[1]}"
    return head


def encode_session(card: PatientCard, record: SessionRecord,
                   window: tuple[int, int] | None = None) -> bytes:
    """Serialize a card plus a session slice; ~34 bytes per 1 Hz frame, so a
    minute of telemetry with a handful of activities stays inside 2 KiB."""
    lines = [header_line(record, window), patient_line(card)]
    fi = ai = 0
    frames, acts = record.frames, record.activities
    while fi < len(frames) or ai < len(acts):
        if ai >= len(acts) or (fi < len(frames)
                               and frames[fi].dt_ms <= acts[ai].dt_ms):
            lines.append(frame_line(frames[fi]))
            fi += 1
        else:
            lines.append(activity_line(acts[ai]))
            ai += 1
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_frame_line(body: str, line: int) -> EmotionFrame:
    fields = _split_fields(body, line)
    if len(fields) != 2:
        raise DecodeError(line, f"frame line needs dt and percentages, got {len(fields)} fields")
    try:
        dt = int(fields[0])
    except ValueError:
        raise DecodeError(line, f"bad frame dt {fields[0]!r}") from None
    parts = fields[1].split(",")
    if len(parts) != N_EMOTIONS:
        raise DecodeError(line, f"expected {N_EMOTIONS} percentages, got {len(parts)}")
    try:
        probs = tuple(int(p) for p in parts)
    except ValueError:
        raise DecodeError(line, f"bad percentage in {fields[1]!r}") from None
    try:
        return EmotionFrame(dt, probs)
    except ValueError as exc:
        raise DecodeError(line, str(exc)) from None


def parse_activity_line(body: str, line: int) -> ActivityNote:
    fields = _split_fields(body, line)
    if len(fields) != 2:
        raise DecodeError(line, f"activity line needs dt and text, got {len(fields)} fields")
    try:
        dt = int(fields[0])
    except ValueError:
        raise DecodeError(line, f"bad activity dt {fields[0]!r}") from None
    try:
        return ActivityNote(dt, unescape_text(fields[1], line))
    except ValueError as exc:
        raise DecodeError(line, str(exc)) from None


def _parse_patient(body: str, line: int) -> PatientCard:
    fields = _split_fields(body, line)
    if len(fields) != 4:
        raise DecodeError(line, f"patient line needs 4 fields, got {len(fields)}")
    pid = unescape_text(fields[0], line)
    name = unescape_text(fields[1], line)
    try:
        age = int(fields[2])
    except ValueError:
        raise DecodeError(line, f"bad age {fields[2]!r}") from None
    notes = unescape_text(fields[3], line)
    try:
        return PatientCard(pid, name, age, notes)
    except ValueError as exc:
        raise DecodeError(line, str(exc)) from None


def decode_session(data: bytes) -> DecodedSession:
    """Parse EFS/1 bytes back into (card, record, filter window)."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(1, f"payload is not UTF-8: {exc}") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DecodeError(1, "empty payload")
    head = lines[0].split(" ")
    if head[0] != MAGIC or len(head) not in (3, 5):
        raise DecodeError(1, f"bad header {lines[0]!r}")
    try:
        t0 = int(head[2])
        window = (int(head[3]), int(head[4])) if len(head) == 5 else None
    except ValueError:
        raise DecodeError(1, f"bad header numbers in {lines[0]!r}") from None
    session_id = head[1]
    if len(lines) < 2 or not lines[1].startswith("P|"):
        raise DecodeError(2, "expected patient line after header")
    card = _parse_patient(lines[1][2:], 2)
    frames: list[EmotionFrame] = []
    acts: list[ActivityNote] = []
    for lineno, raw in enumerate(lines[2:], start=3):
        if raw.startswith("F|"):
            frame = parse_frame_line(raw[2:], lineno)
            if frames and frame.dt_ms < frames[-1].dt_ms:
                raise DecodeError(lineno, "frames out of order")
            frames.append(frame)
        elif raw.startswith("A|"):
            note = parse_activity_line(raw[2:], lineno)
            if acts and note.dt_ms < acts[-1].dt_ms:
                raise DecodeError(lineno, "activities out of order")
            acts.append(note)
        else:
            raise DecodeError(lineno, f"unknown line type {raw[:2]!r}")
    record = SessionRecord(session_id, card.patient_id, t0, frames, acts)
    return DecodedSession(card, record, window)
