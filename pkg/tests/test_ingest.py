from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sleepeda.errors import DuplicateError, EmptyTraceError, ParseError, ValidationError
from sleepeda.ingest import (
    ACC_AXES,
    Channel,
    NightReport,
    SignalTrace,
    assemble_sessions,
    format_channel_file,
    format_report_log,
    load_session_tree,
    parse_channel_file,
    parse_report_log,
)
from sleepeda import synth

T0 = 1500000000.0  # 2017-07-14 02:40 UTC
NIGHT = date(2017, 7, 13)


def test_eda_file_basic():
    data = b"1500000000\n4\n" + b"0.3\n" * 8
    (t,) = parse_channel_file(data, Channel.EDA)
    assert t.channel_label is Channel.EDA
    assert t.rate_hz == 4 and t.samples.size == 8 and t.duration_s == 2.0
    assert t.start_time_s == T0


def test_header_only_is_empty():
    with pytest.raises(EmptyTraceError):
        parse_channel_file(b"1500000000\n4\n", "EDA")


def test_acc_bad_row_names_line():
    data = b"1500000000, 1500000000, 1500000000\n32, 32, 32\n0,0,1\n0,1\n"
    with pytest.raises(ParseError) as exc:
        parse_channel_file(data, "ACC")
    assert exc.value.line == 4
    assert "line 4" in str(exc.value)


def test_acc_three_traces():
    data = b"100\n32\n0,0,1\n0.1,0,1\n"
    traces = parse_channel_file(data, Channel.ACC_X)
    assert tuple(t.channel_label for t in traces) == ACC_AXES
    assert all(t.start_time_s == 100 and t.rate_hz == 32 for t in traces)
    np.testing.assert_array_equal(traces[0].samples, [0, 0.1])


@pytest.mark.parametrize("data", [b"abc\n4\n0.3\n", b"100\n\n0.3\n", b"100\n0\n0.3\n", b"100\n"])
def test_malformed_header(data):
    with pytest.raises(ParseError):
        parse_channel_file(data, "EDA")


def test_non_numeric_sample_line():
    with pytest.raises(ParseError) as exc:
        parse_channel_file(b"100\n4\n0.3\nx\n", "EDA")
    assert exc.value.line == 4


def test_trace_invariants():
    with pytest.raises(ValidationError):
        SignalTrace(Channel.EDA, 0.0, 0.0, [1.0])
    with pytest.raises(ValidationError):
        SignalTrace(Channel.EDA, 0.0, 4.0, [1.0, np.nan])
    with pytest.raises(EmptyTraceError):
        SignalTrace(Channel.EDA, 0.0, 4.0, [])
    t = SignalTrace(Channel.EDA, 0.0, 4.0, [1.0])
    with pytest.raises(ValueError):
        t.samples[0] = 2.0


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40),
    st.floats(0.5, 256, allow_nan=False),
    st.floats(0, 2e9, allow_nan=False),
)
def test_roundtrip_eda(samples, rate, start):
    t = SignalTrace(Channel.EDA, start, rate, samples)
    (back,) = parse_channel_file(format_channel_file([t]), Channel.EDA)
    assert back.start_time_s == t.start_time_s and back.rate_hz == t.rate_hz
    np.testing.assert_array_equal(back.samples, t.samples)


def test_roundtrip_acc(rng):
    xyz = rng.normal(size=(20, 3))
    traces = tuple(SignalTrace(a, 5.0, 32.0, xyz[:, j]) for j, a in enumerate(ACC_AXES))
    back = parse_channel_file(format_channel_file(traces), "ACC")
    for a, b in zip(traces, back):
        assert a.channel_label is b.channel_label
        np.testing.assert_array_equal(a.samples, b.samples)


REPORT = b"participant_id,night_date,minutes_asleep,minutes_in_bed,sq_rating\n"


def test_report_log():
    reports = parse_report_log(REPORT + b"P1,2017-07-13,420,480,3\nP1,2017-07-14,0,480,1\n")
    assert len(reports) == 2
    assert reports[0] == NightReport("P1", NIGHT, 420.0, 480.0, 3)
    assert parse_report_log(format_report_log(reports)) == reports


@pytest.mark.parametrize("row,err", [
    (b"P1,2017-07-13,420,480,5\n", ValidationError),
    (b"P1,2017-07-13,500,480,3\n", ValidationError),
    (b"P1,2017-07-13,0,0,3\n", ValidationError),
    (b"P1,13/07/2017,420,480,3\n", ParseError),
    (b"P1,2017-07-13,abc,480,3\n", ParseError),
    (b"P1,2017-07-13,420,480\n", ParseError),
])
def test_report_errors(row, err):
    with pytest.raises(err):
        parse_report_log(REPORT + row)


def test_report_duplicate():
    with pytest.raises(DuplicateError):
        parse_report_log(REPORT + b"P1,2017-07-13,420,480,3\nP1,2017-07-13,400,480,2\n")


def test_report_header_exact():
    with pytest.raises(ParseError):
        parse_report_log(b"id,date,asleep,bed,sq\nP1,2017-07-13,420,480,3\n")


def _night_traces(start=T0):
    eda = SignalTrace(Channel.EDA, start, 4.0, np.full(40, 0.3))
    acc = tuple(SignalTrace(a, start, 8.0, np.zeros(80)) for a in ACC_AXES)
    return [eda, *acc]


def test_assemble_complete_night():
    rep = NightReport("P1", NIGHT, 420, 480, 3)
    sessions, warnings = assemble_sessions({("P1", NIGHT): _night_traces()}, [rep])
    assert len(sessions) == 1 and warnings == []
    s = sessions[0]
    assert s.eda.channel_label is Channel.EDA and s.report is rep


def test_assemble_eda_without_report():
    sessions, warnings = assemble_sessions({("P1", NIGHT): _night_traces()[:1]}, [])
    assert sessions == [] and len(warnings) == 1
    assert "P1" in warnings[0] and "2017-07-13" in warnings[0]


def test_assemble_report_without_traces():
    sessions, warnings = assemble_sessions({}, [NightReport("P2", NIGHT, 1, 2, 1)])
    assert sessions == [] and len(warnings) == 1 and "P2" in warnings[0]


def test_assemble_outside_window():
    # a recording two days later does not overlap the night of NIGHT
    sessions, warnings = assemble_sessions(
        {("P1", NIGHT): _night_traces(T0 + 2 * 86400)}, [NightReport("P1", NIGHT, 420, 480, 3)]
    )
    assert sessions == [] and "outside" in warnings[0]


def test_assemble_accounting(rng):
    # every night is either a session or exactly one warning
    traces, reports = {}, []
    for i in range(12):
        night = date(2017, 7, 1 + i)
        start = T0 + (i - 12) * 86400
        ts = _night_traces(start)
        keep = rng.uniform(size=4) < 0.8
        traces[("P", night)] = [t for t, k in zip(ts, keep) if k]
        if rng.uniform() < 0.8:
            reports.append(NightReport("P", night, 1, 2, 2))
    sessions, warnings = assemble_sessions(traces, reports)
    nights = set(traces) | {(r.participant_id, r.night_date) for r in reports}
    assert len(sessions) + len(warnings) == len(nights)
    n_eda = sum(any(t.channel_label is Channel.EDA for t in ts) for ts in traces.values())
    assert len(sessions) <= min(n_eda, len(reports))


def test_load_session_tree(tmp_path):
    reports = synth.generate_session_tree(tmp_path, participants=2, nights=2, seed=3, duration_s=600)
    sessions, warnings = load_session_tree(tmp_path)
    assert warnings == [] and len(sessions) == 4
    assert [s.report for s in sessions] == sorted(reports, key=lambda r: (r.participant_id, r.night_date))


def test_load_session_tree_bad_file(tmp_path):
    synth.generate_session_tree(tmp_path, participants=1, nights=1, seed=3, duration_s=300)
    bad = next(tmp_path.glob("*/*/EDA.csv"))
    bad.write_bytes(b"100\n4\n0.3\nzz\n")
    with pytest.raises(ParseError) as exc:
        load_session_tree(tmp_path)
    assert "EDA.csv" in str(exc.value)
