"""Tests for interactions and interaction library persistence."""

import base64
import io
import json
import random

import pytest

from src.opaque_virt.library import (
    Interaction,
    InteractionLibrary,
    InteractionValidationError,
    LibraryFormatError,
    SinkWriteError,
    load_library,
    save_library,
)
from tests.conftest import DIRECTORY_EXAMPLE


def _line(request: bytes, response: bytes, **extra) -> bytes:
    record = {
        "request": base64.b64encode(request).decode(),
        "response": base64.b64encode(response).decode(),
        **extra,
    }
    return json.dumps(record).encode() + b"\n"


class TestInteraction:
    """Test Interaction model."""

    def test_valid_interaction(self):
        """Test a request/response pair."""
        interaction = Interaction.build(b"req", b"rsp")

        assert interaction.request == b"req"
        assert interaction.response == b"rsp"
        assert interaction.no_response is False

    def test_no_response_interaction(self):
        """Test a no-response record carries an empty response."""
        interaction = Interaction.build(b"req", no_response=True)

        assert interaction.response == b""
        assert interaction.no_response is True

    def test_empty_request_rejected(self):
        """Test empty requests are invalid."""
        with pytest.raises(InteractionValidationError, match="request must be non-empty"):
            Interaction.build(b"", b"rsp")

    def test_response_with_no_response_flag_rejected(self):
        """Test a flagged no-response record cannot carry bytes."""
        with pytest.raises(InteractionValidationError):
            Interaction.build(b"req", b"rsp", no_response=True)

    def test_empty_response_without_flag_rejected(self):
        """Test an empty response must be flagged."""
        with pytest.raises(InteractionValidationError):
            Interaction.build(b"req", b"")

    def test_interaction_is_immutable(self):
        """Test interactions cannot be modified."""
        interaction = Interaction.build(b"req", b"rsp")

        with pytest.raises(Exception):
            interaction.request = b"other"


class TestLibraryLoad:
    """Test loading libraries."""

    def test_load_directory_example(self, directory_library):
        """Test the eight directory records load in file order."""
        data = b"".join(_line(req, rsp) for req, rsp in DIRECTORY_EXAMPLE)

        library = InteractionLibrary.from_bytes(data)

        assert len(library) == 8
        assert library[1].request == b"{id:001,op:S,sn:Du}"
        assert library == directory_library

    def test_load_empty_file(self):
        """Test an empty file is rejected."""
        with pytest.raises(LibraryFormatError, match="library must be non-empty"):
            InteractionLibrary.from_bytes(b"")

    def test_load_single_no_response_record(self):
        """Test a single no-response record."""
        data = json.dumps({"request": "YWI=", "response": "", "no_response": True}).encode()

        library = InteractionLibrary.from_bytes(data)

        assert len(library) == 1
        assert library[1].no_response is True
        assert library[1].response == b""

    def test_no_response_defaults_false_and_response_optional_when_flagged(self):
        """Test the optional fields."""
        data = (
            json.dumps({"request": "YWI=", "response": "Y2Q="}).encode() + b"\n"
            + json.dumps({"request": "YWI=", "no_response": True}).encode() + b"\n"
        )

        library = InteractionLibrary.from_bytes(data)

        assert library[1].no_response is False
        assert library[2].no_response is True

    def test_unknown_fields_ignored(self):
        """Test unknown fields are ignored on load."""
        data = _line(b"ab", b"cd", timestamp=12345)

        library = InteractionLibrary.from_bytes(data)

        assert library[1] == Interaction(request=b"ab", response=b"cd")

    def test_invalid_json_names_line(self):
        """Test malformed lines report their line number."""
        data = _line(b"ab", b"cd") + b"{not json\n"

        with pytest.raises(LibraryFormatError) as exc_info:
            InteractionLibrary.from_bytes(data)

        assert exc_info.value.line_number == 2
        assert "line 2" in str(exc_info.value)

    def test_missing_request_field(self):
        """Test a record without a request."""
        with pytest.raises(LibraryFormatError, match="missing field 'request'"):
            InteractionLibrary.from_bytes(b'{"response": "Y2Q="}\n')

    def test_missing_response_field(self):
        """Test a record without a response that is not flagged."""
        with pytest.raises(LibraryFormatError, match="missing field 'response'"):
            InteractionLibrary.from_bytes(b'{"request": "YWI="}\n')

    def test_bad_base64(self):
        """Test payloads must be valid base64."""
        with pytest.raises(LibraryFormatError) as exc_info:
            InteractionLibrary.from_bytes(b'{"request": "!!!", "response": "Y2Q="}\n')

        assert exc_info.value.line_number == 1

    def test_bad_utf8(self):
        """Test the container must be UTF-8."""
        with pytest.raises(LibraryFormatError, match="invalid UTF-8"):
            InteractionLibrary.from_bytes(b'\xff\xfe{"request": "YWI="}\n')

    def test_empty_request_is_validation_error(self):
        """Test an empty request in a file."""
        with pytest.raises(InteractionValidationError):
            InteractionLibrary.from_bytes(b'{"request": "", "response": "Y2Q="}\n')


class TestLibrarySave:
    """Test saving libraries."""

    def test_round_trip(self, directory_library):
        """Test save then load reproduces the library."""
        sink = io.BytesIO()
        directory_library.save(sink)

        data = sink.getvalue()
        assert data.count(b"\n") == 8
        assert InteractionLibrary.from_bytes(data) == directory_library

    def test_round_trip_all_octets(self):
        """Test every octet value survives a round trip."""
        payload = bytes(range(256))
        library = InteractionLibrary([Interaction(request=payload, response=payload[::-1])])
        sink = io.BytesIO()

        library.save(sink)

        assert InteractionLibrary.from_bytes(sink.getvalue()) == library

    def test_round_trip_random_libraries(self):
        """Test randomized libraries with newline and control bytes round-trip."""
        rng = random.Random(7)
        for _ in range(1000):
            interactions = []
            for _ in range(rng.randint(1, 4)):
                request = bytes(rng.choice(b"\n\r\x00ab{}") for _ in range(rng.randint(1, 12)))
                if rng.random() < 0.2:
                    interactions.append(Interaction(request=request, no_response=True))
                else:
                    response = bytes(rng.randrange(256) for _ in range(rng.randint(1, 12)))
                    interactions.append(Interaction(request=request, response=response))
            library = InteractionLibrary(interactions)

            assert InteractionLibrary.from_bytes(library.to_bytes()) == library

    def test_save_empty_library(self):
        """Test empty libraries cannot be saved."""
        with pytest.raises(InteractionValidationError, match="non-empty"):
            InteractionLibrary().save(io.BytesIO())

    def test_sink_failure(self, directory_library):
        """Test write failures surface as SinkWriteError."""
        sink = io.BytesIO()
        sink.close()

        with pytest.raises(SinkWriteError):
            directory_library.save(sink)

    def test_save_and_load_path(self, directory_library, tmp_path):
        """Test the file helpers."""
        path = tmp_path / "library.jsonl"

        save_library(directory_library, path)

        assert load_library(path) == directory_library


class TestLibraryAppend:
    """Test appending interactions."""

    def test_append_adds_next_index(self, directory_library):
        """Test the appended interaction takes index len + 1."""
        interaction = Interaction.build(b"{id:999,op:S,sn:New}", b"{id:999,op:SearchRsp,result:Ok}")

        extended = directory_library.append(interaction)

        assert len(extended) == 9
        assert extended[9] == interaction
        for index in range(1, 9):
            assert extended[index] == directory_library[index]
        assert len(directory_library) == 8

    def test_append_no_response(self, directory_library):
        """Test a no-response interaction is stored as such."""
        extended = directory_library.append(Interaction.build(b"ping", no_response=True))

        assert extended[9].no_response is True

    def test_append_rejects_non_interaction(self, directory_library):
        """Test append validates its argument."""
        with pytest.raises(InteractionValidationError):
            directory_library.append({"request": b""})


class TestLibraryAccessors:
    """Test indexing and summaries."""

    def test_indices_are_one_based(self, directory_library):
        """Test index 0 is out of range."""
        with pytest.raises(IndexError):
            directory_library[0]
        with pytest.raises(IndexError):
            directory_library[9]

    def test_select(self, directory_library):
        """Test selecting a subset keeps the requested order."""
        subset = directory_library.select([3, 1])

        assert subset.requests == [DIRECTORY_EXAMPLE[2][0], DIRECTORY_EXAMPLE[0][0]]

    def test_fingerprint_tracks_content(self, directory_library):
        """Test the fingerprint changes with content."""
        other = directory_library.append(Interaction.build(b"x", b"y"))

        assert len(directory_library.fingerprint) == 64
        assert directory_library.fingerprint == InteractionLibrary(directory_library).fingerprint
        assert other.fingerprint != directory_library.fingerprint

    def test_describe(self, directory_library):
        """Test library statistics."""
        summary = directory_library.append(Interaction.build(b"ping", no_response=True)).describe()

        assert summary["count"] == 9
        assert summary["no_response_count"] == 1
        assert summary["min_request_length"] == 4
        assert summary["max_request_length"] == 26
