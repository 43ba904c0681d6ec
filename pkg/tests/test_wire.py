import pytest

from peopleflow.errors import ProtocolError
from peopleflow.wire import (
    MAX_PAYLOAD_BYTES,
    decode_frame,
    delta_payload,
    encode_frame,
    encode_payload,
    occupancy_payload,
    parse_delta_payload,
)


def round_trip(frame):
    return decode_frame(encode_frame(frame).decode("utf-8").rstrip("\n"))


def test_frame_round_trips():
    frames = [
        {"t": "CONNECT", "key": "ab" * 16, "client_id": "dev-1"},
        {"t": "CONNACK"},
        {"t": "REJECT", "reason": "unknown-key"},
        {"t": "SUB", "filter": "locations/+/delta"},
        {"t": "SUBACK", "filter": "locations/+/delta"},
        {"t": "PUB", "topic": "locations/L1/delta", "mid": 7, "qos": 1, "payload": "{}"},
        {"t": "PUBACK", "mid": 7},
        {"t": "PING"},
        {"t": "PONG"},
    ]
    for frame in frames:
        assert round_trip(frame) == frame


def test_unknown_type_rejected():
    with pytest.raises(ProtocolError):
        decode_frame('{"t":"NOPE"}')
    with pytest.raises(ProtocolError):
        encode_frame({"t": "NOPE"})


def test_missing_fields_rejected():
    with pytest.raises(ProtocolError):
        decode_frame('{"t":"CONNECT","key":"abc"}')
    with pytest.raises(ProtocolError):
        decode_frame('{"t":"PUB","topic":"a","mid":1,"qos":1}')


def test_bad_qos_and_mid_rejected():
    base = {"t": "PUB", "topic": "a", "mid": 1, "qos": 2, "payload": ""}
    with pytest.raises(ProtocolError):
        decode_frame(encode_payload(base))
    base.update(qos=1, mid=-1)
    with pytest.raises(ProtocolError):
        decode_frame(encode_payload(base))
    base.update(mid=2**32)
    with pytest.raises(ProtocolError):
        decode_frame(encode_payload(base))


def test_payload_size_cap():
    frame = {"t": "PUB", "topic": "a", "mid": 1, "qos": 0, "payload": "x" * (MAX_PAYLOAD_BYTES + 1)}
    with pytest.raises(ProtocolError):
        decode_frame(encode_payload(frame))


def test_non_json_line_rejected():
    with pytest.raises(ProtocolError):
        decode_frame("hello there")
    with pytest.raises(ProtocolError):
        decode_frame('["t","PING"]')


def test_delta_payload_round_trip():
    payload = delta_payload("s1", 42, -1, 123456)
    assert parse_delta_payload(payload) == ("s1", 42, -1, 123456)


def test_delta_payload_validation():
    with pytest.raises(ProtocolError):
        parse_delta_payload('{"sensor_id":"s1","event_seq":1,"direction":2,"timestamp_ms":0}')
    with pytest.raises(ProtocolError):
        parse_delta_payload('{"sensor_id":"","event_seq":1,"direction":1,"timestamp_ms":0}')
    with pytest.raises(ProtocolError):
        parse_delta_payload("not json")
    with pytest.raises(ProtocolError):
        parse_delta_payload('{"event_seq":1,"direction":1,"timestamp_ms":0}')


def test_occupancy_payload_shape():
    payload = occupancy_payload("L1", 3, 999)
    assert payload == '{"location_id":"L1","occupancy":3,"timestamp_ms":999}'
