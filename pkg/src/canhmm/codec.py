"""CAN log ingestion and OBD-II Mode-01 decoding.

Two text log layouts are understood::

    (1436509052.249713) can0 0D1#11D6      # candump style ("format A")
    1436509052.249713,0d1,11d6             # bare CSV ("format B")

Decoded readings use the SAE J1979 Mode-01 scaling:

    ========  =====  =================  ========
    channel   PID    formula            unit
    ========  =====  =================  ========
    load      0x04   A*100/255          %
    coolant   0x05   A-40               degC
    rpm       0x0C   (256*A+B)/4        rev/min
    speed     0x0D   A                  km/h
    intake    0x0F   A-40               degC
    throttle  0x11   A*100/255          %
    o2        0x14   A/200              V
    ========  =====  =================  ========
"""

from __future__ import annotations

import enum
import io
import logging
import math
import re
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

log = logging.getLogger(__name__)

MAX_STD_ID = 0x7FF
MAX_EXT_ID = 0x1FFFFFFF
MODE01_RESPONSE = 0x41


class CanCodecError(ValueError):
    """Base class for ingestion and decoding failures."""


class LogParseError(CanCodecError):
    def __init__(self, message: str, line: str, column: int):
        super().__init__(f"{message} at column {column}: {line!r}")
        self.line = line
        self.column = column


class FrameLengthError(LogParseError):
    pass


class PidDecodeError(CanCodecError):
    pass


class Channel(str, enum.Enum):
    SPEED = "speed"
    RPM = "rpm"
    COOLANT_TEMP = "coolant_temp"
    INTAKE_TEMP = "intake_temp"
    THROTTLE = "throttle"
    ENGINE_LOAD = "engine_load"
    O2_VOLTAGE = "o2_voltage"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class CanFrame:
    timestamp: float
    id: int
    data: bytes = b""
    extended: bool = False

    def __post_init__(self):
        object.__setattr__(self, "data", bytes(self.data))
        if len(self.data) > 8:
            raise ValueError(f"CAN payload has {len(self.data)} bytes, max is 8")
        limit = MAX_EXT_ID if self.extended else MAX_STD_ID
        if not 0 <= self.id <= limit:
            raise ValueError(f"identifier 0x{self.id:X} does not fit {'29' if self.extended else '11'} bits")
        if not math.isfinite(self.timestamp) or self.timestamp < 0:
            raise ValueError(f"timestamp must be finite and non-negative, got {self.timestamp}")


@dataclass(frozen=True)
class PidSample:
    channel: Channel
    value: float
    timestamp: float


@dataclass(frozen=True)
class _Pid:
    channel: Channel
    nbytes: int
    scale: Callable[[bytes], float]
    lo: float
    hi: float


PIDS: dict[int, _Pid] = {
    0x04: _Pid(Channel.ENGINE_LOAD, 1, lambda d: d[0] * 100.0 / 255.0, 0.0, 100.0),
    0x05: _Pid(Channel.COOLANT_TEMP, 1, lambda d: d[0] - 40.0, -40.0, 215.0),
    0x0C: _Pid(Channel.RPM, 2, lambda d: (256 * d[0] + d[1]) / 4.0, 0.0, 16383.75),
    0x0D: _Pid(Channel.SPEED, 1, lambda d: float(d[0]), 0.0, 255.0),
    0x0F: _Pid(Channel.INTAKE_TEMP, 1, lambda d: d[0] - 40.0, -40.0, 215.0),
    0x11: _Pid(Channel.THROTTLE, 1, lambda d: d[0] * 100.0 / 255.0, 0.0, 100.0),
    0x14: _Pid(Channel.O2_VOLTAGE, 1, lambda d: d[0] / 200.0, 0.0, 1.275),
}
PID_FOR_CHANNEL = {p.channel: pid for pid, p in PIDS.items()}


def channel_range(channel: Channel | str) -> tuple[float, float]:
    """Decodable (min, max) of a channel in physical units."""
    p = PIDS[PID_FOR_CHANNEL[Channel(channel)]]
    return p.lo, p.hi


_HEX = set("0123456789abcdefABCDEF")


def _frame(line: str, ts_text: str, ts_col: int, id_text: str, id_col: int,
           data_text: str, data_col: int) -> CanFrame:
    try:
        ts = float(ts_text)
    except ValueError:
        raise LogParseError("bad timestamp", line, ts_col) from None
    if not math.isfinite(ts) or ts < 0:
        raise LogParseError("timestamp must be finite and non-negative", line, ts_col)
    if not id_text or any(c not in _HEX for c in id_text):
        bad = next((k for k, c in enumerate(id_text) if c not in _HEX), 0)
        raise LogParseError("bad identifier", line, id_col + bad)
    bad = next((k for k, c in enumerate(data_text) if c not in _HEX), None)
    if bad is not None:
        raise LogParseError("non-hex payload character", line, data_col + bad)
    if len(data_text) % 2:
        raise LogParseError("payload has an odd number of hex digits", line, data_col + len(data_text) - 1)
    if len(data_text) > 16:
        raise FrameLengthError(f"payload has {len(data_text) // 2} bytes, max is 8", line, data_col + 16)
    extended = len(id_text) > 3
    ident = int(id_text, 16)
    if ident > (MAX_EXT_ID if extended else MAX_STD_ID):
        raise LogParseError("identifier out of range", line, id_col)
    return CanFrame(ts, ident, bytes.fromhex(data_text), extended)


def parse_log_line(line: str) -> CanFrame:
    """Parse one candump-style or CSV log line into a :class:`CanFrame`.

    The extended (29-bit) flag is set when the identifier has more than
    three hex digits.
    """
    text = line.rstrip("\r\n")
    stripped = text.lstrip()
    lead = len(text) - len(stripped)
    if stripped.startswith("("):
        close = stripped.find(")")
        if close < 0:
            raise LogParseError("unterminated timestamp", text, lead + len(stripped))
        m = re.match(r"\s+(\S+)\s+", stripped[close + 1:])
        if m is None:
            raise LogParseError("expected interface name", text, lead + close + 1)
        body_col = lead + close + 1 + m.end()
        body = stripped[close + 1 + m.end():].rstrip()
        hash_at = body.find("#")
        if hash_at < 0:
            raise LogParseError("expected '#' between identifier and payload", text, body_col + len(body))
        return _frame(text, stripped[1:close], lead + 1, body[:hash_at], body_col,
                      body[hash_at + 1:], body_col + hash_at + 1)
    parts = text.split(",")
    if len(parts) != 3:
        raise LogParseError("expected '(ts) iface ID#DATA' or 'ts,id,data'", text, 0)
    cols = [0, len(parts[0]) + 1, len(parts[0]) + len(parts[1]) + 2]
    return _frame(text, parts[0].strip(), cols[0], parts[1].strip(), cols[1], parts[2].strip(), cols[2])


def format_log_line(frame: CanFrame, iface: str = "can0") -> str:
    width = 8 if frame.extended else 3
    return f"({frame.timestamp:.6f}) {iface} {frame.id:0{width}X}#{frame.data.hex().upper()}"


def format_csv_line(frame: CanFrame) -> str:
    width = 8 if frame.extended else 3
    return f"{frame.timestamp:.6f},{frame.id:0{width}x},{frame.data.hex()}"


def iter_log(source: str | Path | TextIO | Iterable[str]) -> Iterator[CanFrame]:
    """Yield frames from a log file, open stream, or iterable of lines.

    Blank lines and lines starting with ``#`` are skipped.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            yield from iter_log(fh)
        return
    for line in source:
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        yield parse_log_line(s)


def read_log(source) -> list[CanFrame]:
    return list(iter_log(source))


def decode_obd_pid(
    frame: CanFrame,
    *,
    iso_tp: bool = False,
    broadcast: Mapping[int, Callable[[CanFrame], PidSample | None]] | None = None,
) -> PidSample | None:
    """Decode a Mode-01 response frame into a physical reading.

    Returns None for frames that are not Mode-01 responses or that carry a
    PID outside the seven supported channels.

    Args:
        frame: the raw frame.
        iso_tp: payload starts with an ISO-TP single-frame length byte
            (``[len, 0x41, PID, A, ...]``) instead of the bare form.
        broadcast: optional per-vehicle table mapping proprietary broadcast
            identifiers to decoder callables; consulted before OBD decoding.

    Raises:
        PidDecodeError: a supported PID with too few data bytes.
    """
    if broadcast and frame.id in broadcast:
        return broadcast[frame.id](frame)
    # ISO-TP length byte counts mode + pid + data; anything past it is padding
    payload = frame.data[1:1 + frame.data[0]] if iso_tp and frame.data else frame.data
    if len(payload) < 2 or payload[0] != MODE01_RESPONSE:
        return None
    pid = PIDS.get(payload[1])
    if pid is None:
        log.debug("skipping unsupported PID 0x%02X in frame 0x%X", payload[1], frame.id)
        return None
    args = payload[2:]
    if len(args) < pid.nbytes:
        raise PidDecodeError(
            f"PID 0x{payload[1]:02X} ({pid.channel}) needs {pid.nbytes} data bytes, got {len(args)}"
        )
    return PidSample(pid.channel, pid.scale(args[:pid.nbytes]), frame.timestamp)


def extract_channel_series(
    frames: Iterable[CanFrame],
    channel: Channel | str,
    **decode_kw,
) -> list[PidSample]:
    """All decodable samples of one channel, in stable timestamp order."""
    channel = Channel(channel)
    out = []
    for frame in frames:
        s = decode_obd_pid(frame, **decode_kw)
        if s is not None and s.channel is channel:
            out.append(s)
    out.sort(key=lambda s: s.timestamp)
    return out


def write_series_csv(samples: Sequence[PidSample], fh: TextIO | None = None) -> str | None:
    """Write ``ts,value`` rows with six-decimal fixed formatting.

    Returns the text when no handle is given.
    """
    buf = fh if fh is not None else io.StringIO()
    for s in samples:
        buf.write(f"{s.timestamp:.6f},{s.value:.6f}\n")
    return None if fh is not None else buf.getvalue()
