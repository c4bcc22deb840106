import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from canhmm.codec import (
    CanFrame,
    Channel,
    FrameLengthError,
    LogParseError,
    PidDecodeError,
    decode_obd_pid,
    extract_channel_series,
    format_csv_line,
    format_log_line,
    iter_log,
    parse_log_line,
    write_series_csv,
)


def obd(ts, pid, *args, iso_tp=False):
    payload = bytes([0x41, pid, *args])
    if iso_tp:
        payload = bytes([len(payload)]) + payload + b"\xaa" * (7 - len(payload))
    return CanFrame(ts, 0x7E8, payload)


class TestParse:
    def test_candump_line(self):
        f = parse_log_line("(1436509052.249713) can0 0D1#11D6")
        assert f == CanFrame(1436509052.249713, 0x0D1, bytes([0x11, 0xD6]), False)

    def test_empty_payload(self):
        f = parse_log_line("(0.0) can0 7DF#")
        assert (f.timestamp, f.id, f.data, f.extended) == (0.0, 0x7DF, b"", False)

    def test_extended_identifier(self):
        f = parse_log_line("(1.5) can0 18DB33F1#4155")
        assert f.id == 0x18DB33F1 and f.extended and f.data == b"\x41\x55"

    def test_extended_flag_follows_digit_count(self):
        assert parse_log_line("(1.0) can0 000007DF#").extended
        assert not parse_log_line("(1.0) can0 7DF#").extended

    def test_csv_format(self):
        f = parse_log_line("12.5,7e8,03410d32")
        assert f == CanFrame(12.5, 0x7E8, bytes.fromhex("03410d32"))

    def test_bad_hex_reports_column(self):
        line = "(1.0) can0 7E8#41ZZ"
        with pytest.raises(LogParseError) as err:
            parse_log_line(line)
        assert err.value.line == line
        assert line[err.value.column] == "Z"

    def test_bad_identifier_column(self):
        with pytest.raises(LogParseError) as err:
            parse_log_line("(1.0) can0 7G8#41")
        assert err.value.column == 12

    @pytest.mark.parametrize("line", ["", "garbage", "(1.0 can0 7E8#00", "(1.0) can0 7E800", "(x) can0 7E8#00",
                                      "1,2", "(1.0) can0 800#00", "(1.0) can0 7E8#123"])
    def test_malformed(self, line):
        with pytest.raises(LogParseError):
            parse_log_line(line)

    def test_payload_too_long(self):
        with pytest.raises(FrameLengthError):
            parse_log_line("(1.0) can0 7E8#000102030405060708")

    def test_iter_log_skips_comments_and_blanks(self):
        text = "# capture\n\n(1.0) can0 7E8#410D32\n   \n2.0,7e8,410d33\n"
        frames = list(iter_log(io.StringIO(text)))
        assert [f.timestamp for f in frames] == [1.0, 2.0]


class TestFrame:
    def test_rejects_long_payload(self):
        with pytest.raises(ValueError):
            CanFrame(0.0, 1, bytes(9))

    def test_rejects_wide_standard_id(self):
        with pytest.raises(ValueError):
            CanFrame(0.0, 0x800, b"")
        CanFrame(0.0, 0x800, b"", extended=True)

    @pytest.mark.parametrize("ts", [-1.0, float("nan"), float("inf")])
    def test_rejects_bad_timestamp(self, ts):
        with pytest.raises(ValueError):
            CanFrame(ts, 1, b"")


frames = st.builds(
    lambda ts_us, ext, ident, data: CanFrame(ts_us / 1e6, ident % (0x20000000 if ext else 0x800), data, ext),
    st.integers(0, 2_000_000_000_000_000), st.booleans(), st.integers(0, 0x1FFFFFFF), st.binary(max_size=8),
)


@given(frames)
def test_candump_round_trip(frame):
    back = parse_log_line(format_log_line(frame))
    assert back.id == frame.id and back.data == frame.data and back.extended == frame.extended
    assert abs(back.timestamp - frame.timestamp) < 5e-7


@given(frames)
def test_csv_round_trip(frame):
    back = parse_log_line(format_csv_line(frame))
    assert (back.id, back.data, back.extended) == (frame.id, frame.data, frame.extended)


class TestDecode:
    def test_speed(self):
        s = decode_obd_pid(obd(0, 0x0D, 0x32))
        assert s.channel is Channel.SPEED and s.value == 50.0

    def test_rpm(self):
        assert decode_obd_pid(obd(0, 0x0C, 0x1A, 0xF8)).value == 1726.0

    def test_coolant_offset(self):
        assert decode_obd_pid(obd(0, 0x05, 0x28)).value == 0.0

    @pytest.mark.parametrize("pid,args,channel,value", [
        (0x0F, [0x50], Channel.INTAKE_TEMP, 40.0),
        (0x11, [0xFF], Channel.THROTTLE, 100.0),
        (0x04, [0x33], Channel.ENGINE_LOAD, 20.0),
        (0x14, [0x64], Channel.O2_VOLTAGE, 0.5),
    ])
    def test_other_channels(self, pid, args, channel, value):
        s = decode_obd_pid(obd(0, pid, *args))
        assert s.channel is channel and s.value == pytest.approx(value)

    def test_iso_tp_form(self):
        f = obd(3.0, 0x0D, 0x64, iso_tp=True)
        assert decode_obd_pid(f) is None
        assert decode_obd_pid(f, iso_tp=True).value == 100.0

    def test_skips_non_obd_and_unknown(self):
        assert decode_obd_pid(CanFrame(0, 0x0D1, b"\x11\xd6")) is None
        assert decode_obd_pid(obd(0, 0x42, 0x01, 0x02)) is None
        assert decode_obd_pid(CanFrame(0, 0x7E8, b"")) is None

    def test_truncated_payload_is_an_error(self):
        with pytest.raises(PidDecodeError):
            decode_obd_pid(obd(0, 0x0C, 0x1A))

    def test_broadcast_table_consulted_first(self):
        table = {0x0D1: lambda f: decode_obd_pid(obd(f.timestamp, 0x0D, f.data[0]))}
        s = decode_obd_pid(CanFrame(2.0, 0x0D1, b"\x11\xd6"), broadcast=table)
        assert s.value == 0x11

    def test_rpm_exhaustive_range(self):
        for a in range(256):
            for b in range(256):
                v = decode_obd_pid(obd(0, 0x0C, a, b)).value
                assert 0.0 <= v <= 16383.75


class TestExtract:
    def test_empty(self):
        assert extract_channel_series([], "speed") == []

    def test_filters_channel(self):
        fs = [obd(0, 0x0D, 10), obd(1, 0x0C, 0x10, 0), obd(2, 0x0D, 12)]
        assert [s.value for s in extract_channel_series(fs, Channel.SPEED)] == [10, 12]

    def test_sorts_stably(self):
        fs = [obd(5, 0x0D, 1), obd(2, 0x0D, 2), obd(5, 0x0D, 3), obd(2, 0x0D, 4)]
        out = extract_channel_series(fs, "speed")
        assert [s.value for s in out] == [2, 4, 1, 3]

    def test_series_csv(self):
        out = extract_channel_series([obd(1.25, 0x0D, 7)], "speed")
        assert write_series_csv(out) == "1.250000,7.000000\n"
        buf = io.StringIO()
        assert write_series_csv(out, buf) is None and buf.getvalue() == "1.250000,7.000000\n"
