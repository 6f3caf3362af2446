"""Tests for the command line interface."""

import base64
import csv
import json
import logging

import pytest
import structlog
import yaml

from src.opaque_virt import __version__
from src.opaque_virt.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, build_parser, run
from src.opaque_virt.entropy import load_weights
from src.opaque_virt.library import load_library, save_library
from src.opaque_virt.models import EntropyMethod, MatchStrategy
from tests.conftest import (
    DIRECTORY_EXAMPLE,
    MISMATCHED_OP_REQUEST,
    UNSEEN_SEARCH,
    build_directory_library,
)


@pytest.fixture(autouse=True)
def reset_logging():
    """run() installs a stderr handler bound to the captured stream."""
    yield
    logging.getLogger().handlers.clear()
    structlog.reset_defaults()


@pytest.fixture
def library_file(tmp_path):
    path = tmp_path / "directory.jsonl"
    save_library(build_directory_library(), path)
    return path


@pytest.fixture
def weights_file(tmp_path, library_file):
    path = tmp_path / "weights.json"
    code = run([
        "weights", "--library", str(library_file), "--method", "richness",
        "--scaler", "hyper", "--a", "1", "--c", "10", "--out", str(path),
    ])
    assert code == EXIT_OK
    return path


def _b64(message: bytes) -> str:
    return base64.b64encode(message).decode("ascii")


def _fields(stdout: str) -> dict:
    fields = {}
    for line in stdout.splitlines():
        key, sep, value = line.partition(": ")
        if sep:
            fields[key] = value
    return fields


class TestParser:
    """Test argument parsing and exit codes."""

    def test_version(self, capsys):
        """Test --version prints the package version."""
        assert run(["--version"]) == EXIT_OK
        assert __version__ in capsys.readouterr().out

    def test_unknown_flag_exits_one(self, capsys):
        """Test usage errors exit with code 1."""
        assert run(["align", "--a", "x", "--b", "y", "--bogus"]) == EXIT_VALIDATION
        assert "unrecognized arguments" in capsys.readouterr().err

    def test_unknown_subcommand_exits_one(self):
        """Test an unknown subcommand is a usage error."""
        assert run(["replay"]) == EXIT_VALIDATION

    def test_missing_subcommand_exits_one(self):
        """Test a subcommand is required."""
        assert run([]) == EXIT_VALIDATION

    def test_help_lists_every_subcommand(self, capsys):
        """Test --help documents the subcommands."""
        assert run(["--help"]) == EXIT_OK
        out = capsys.readouterr().out
        for name in ("record", "weights", "serve", "match", "align", "generate", "evaluate"):
            assert name in out

    def test_missing_required_flag(self, capsys):
        """Test a missing required flag names the flag."""
        assert run(["weights", "--show"]) == EXIT_VALIDATION
        assert "--library" in capsys.readouterr().err

    def test_aliases(self):
        """Test short aliases resolve to the model enums."""
        args = build_parser().parse_args([
            "serve", "--listen", "127.0.0.1:0", "--library", "x",
            "--strategy", "nw-weighted", "--framing", "delim", "--delimiter", "0a",
        ])
        assert args.strategy == MatchStrategy.NW_WEIGHTED
        assert args.listen.port == 0

    def test_bad_endpoint(self):
        """Test a malformed HOST:PORT is a usage error."""
        assert run(["record", "--listen", "nowhere", "--upstream", "h:1", "--out", "x"]) == EXIT_VALIDATION


class TestAlignCommand:
    """Test the align subcommand."""

    def test_worked_example(self, capsys):
        """Test aligning efheh with eheheg scores 4."""
        assert run(["align", "--a", "efheh", "--b", "eheheg"]) == EXIT_OK
        line_a, line_b, score = capsys.readouterr().out.splitlines()

        assert score == "score: 4"
        assert len(line_a) == len(line_b)
        assert line_a.replace("-", "") == "efheh"
        assert line_b.replace("-", "") == "eheheg"

    def test_hex_input(self, capsys):
        """Test --hex reads octets and renders non-printables as dots."""
        assert run(["align", "--hex", "--a", "00ff41", "--b", "00ff41"]) == EXIT_OK
        line_a, line_b, score = capsys.readouterr().out.splitlines()

        assert line_a == line_b == "..A"
        assert score == "score: 3"

    def test_bad_hex(self):
        """Test invalid hex is a validation error."""
        assert run(["align", "--hex", "--a", "zz", "--b", "00"]) == EXIT_VALIDATION

    def test_gap_reward_rejected(self):
        """Test a positive gap score is rejected."""
        assert run(["align", "--a", "ab", "--b", "ab", "--d-gap", "1"]) == EXIT_VALIDATION


class TestWeightsCommand:
    """Test the weights subcommand."""

    def test_writes_weights_file(self, weights_file, library_file):
        """Test weights cover the longest recorded request."""
        weights = load_weights(weights_file)
        longest = max(len(request) for request, _ in DIRECTORY_EXAMPLE)

        assert weights.length == longest == 26
        assert weights.method == EntropyMethod.RICHNESS
        assert weights.library_fingerprint == load_library(library_file).fingerprint

        content = json.loads(weights_file.read_text())
        assert set(content) == {"method", "scaler", "default_weight", "weights", "library_fingerprint"}
        assert content["scaler"] == {"kind": "hyperbolic", "a": 1.0, "c": 10.0}

    def test_show_prints_table(self, library_file, capsys):
        """Test --show prints one row per column."""
        assert run(["weights", "--library", str(library_file), "--show"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()

        assert lines[0].split() == ["column", "entropy", "normalised", "weight"]
        assert len(lines) == 1 + 26
        assert lines[1].split()[0] == "1"

    def test_needs_output(self, library_file):
        """Test weights without --out or --show is a usage error."""
        assert run(["weights", "--library", str(library_file)]) == EXIT_VALIDATION

    def test_stray_scaler_parameter(self, library_file, tmp_path):
        """Test a parameter foreign to the chosen scaler is rejected."""
        code = run([
            "weights", "--library", str(library_file), "--scaler", "threshold",
            "--c", "10", "--out", str(tmp_path / "w.json"),
        ])
        assert code == EXIT_VALIDATION
        assert not (tmp_path / "w.json").exists()

    def test_missing_library_is_runtime_error(self, tmp_path):
        """Test an unreadable library exits with code 2."""
        code = run(["weights", "--library", str(tmp_path / "missing.jsonl"), "--show"])
        assert code == EXIT_RUNTIME

    def test_malformed_library_is_validation_error(self, tmp_path, capsys):
        """Test a malformed library exits with code 1 and names the line."""
        path = tmp_path / "bad.jsonl"
        path.write_bytes(b'{"request": "YQ==", "response": "Yg=="}\nnot json\n')

        assert run(["weights", "--library", str(path), "--show"]) == EXIT_VALIDATION
        assert "line 2" in capsys.readouterr().err


class TestMatchCommand:
    """Test the match subcommand."""

    def test_plain_selection(self, library_file, capsys):
        """Test plain matching picks the byte-nearest recorded request."""
        code = run(["match", "--library", str(library_file), "--request", _b64(MISMATCHED_OP_REQUEST)])
        fields = _fields(capsys.readouterr().out)

        assert code == EXIT_OK
        assert fields["index"] == "3"
        assert base64.b64decode(fields["response"]) == DIRECTORY_EXAMPLE[2][1]
        assert fields["no_response"] == "false"

    def test_weighted_selection(self, library_file, weights_file, capsys):
        """Test weighted matching returns a search response for the unseen search."""
        code = run([
            "match", "--library", str(library_file), "--strategy", "nw-weighted",
            "--weights", str(weights_file), "--request", _b64(MISMATCHED_OP_REQUEST),
        ])
        fields = _fields(capsys.readouterr().out)

        assert code == EXIT_OK
        assert fields["index"] == "2"
        assert b"SearchRsp" in base64.b64decode(fields["response"])

    def test_request_file_and_candidates(self, library_file, tmp_path, capsys):
        """Test a raw request file and the per-candidate CSV table."""
        request = tmp_path / "request.bin"
        request.write_bytes(UNSEEN_SEARCH)

        code = run([
            "match", "--library", str(library_file), "--request-file", str(request), "--candidates",
        ])
        out = capsys.readouterr().out
        table = out[out.index("index,distance"):]
        rows = list(csv.DictReader(table.splitlines()))

        assert code == EXIT_OK
        assert _fields(out)["index"] == "4"
        assert [int(row["index"]) for row in rows] == list(range(1, 9))
        assert min(rows, key=lambda row: float(row["distance"]))["index"] == "4"

    def test_hash_miss(self, library_file, capsys):
        """Test a hash miss prints no index and an empty response."""
        code = run([
            "match", "--library", str(library_file), "--strategy", "hash", "--request", _b64(UNSEEN_SEARCH),
        ])
        fields = _fields(capsys.readouterr().out)

        assert code == EXIT_OK
        assert fields["index"] == "none"
        assert fields["response"] == ""

    def test_weighted_needs_weights(self, library_file):
        """Test nw-weighted without a weights file is a configuration error."""
        code = run([
            "match", "--library", str(library_file), "--strategy", "nw-weighted",
            "--request", _b64(UNSEEN_SEARCH),
        ])
        assert code == EXIT_VALIDATION

    def test_invalid_base64(self, library_file):
        """Test an undecodable request is rejected."""
        assert run(["match", "--library", str(library_file), "--request", "***"]) == EXIT_VALIDATION


class TestGenerateCommand:
    """Test the generate subcommand."""

    def test_generate_fixed(self, tmp_path):
        """Test a generated fixed-width library is written."""
        out = tmp_path / "fixed.jsonl"

        code = run(["generate", "--kind", "fixed", "--n", "50", "--ops", "5", "--seed", "3", "--out", str(out)])

        assert code == EXIT_OK
        library = load_library(out)
        assert len(library) == 50
        assert all(len(interaction.request) == 21 for interaction in library)

    def test_generate_is_deterministic(self, tmp_path):
        """Test equal seeds write identical files."""
        first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for path in (first, second):
            assert run(["generate", "--kind", "directory", "--n", "30", "--seed", "9", "--out", str(path)]) == EXIT_OK

        assert first.read_bytes() == second.read_bytes()

    def test_invalid_spec(self, tmp_path):
        """Test too many directory operation types is rejected."""
        code = run(["generate", "--kind", "directory", "--ops", "9", "--out", str(tmp_path / "x.jsonl")])
        assert code == EXIT_VALIDATION


class TestEvaluateCommand:
    """Test the evaluate subcommand."""

    def test_more_folds_than_interactions(self, capsys):
        """Test k larger than the dataset exits with a partition error."""
        code = run(["evaluate", "--dataset", "gen:fixed", "--n", "100", "--ops", "5", "--k", "200", "--repeats", "1"])

        assert code == EXIT_VALIDATION
        assert "folds" in capsys.readouterr().err

    def test_summary_and_csv_report(self, tmp_path, capsys):
        """Test a small run prints a summary and writes a CSV report."""
        report = tmp_path / "report.csv"

        code = run([
            "evaluate", "--dataset", "gen:directory", "--n", "60", "--ops", "2", "--k", "3",
            "--repeats", "2", "--seeds", "5,6", "--strategies", "hash,nw", "--report", str(report),
        ])
        out = capsys.readouterr().out
        rows = list(csv.DictReader(report.read_text().splitlines()))

        assert code == EXIT_OK
        assert "hash_lookup" in out and "nw_plain" in out
        assert len(rows) == 4
        assert {row["strategy"] for row in rows} == {"hash_lookup", "nw_plain"}

    def test_entropy_comparison(self, tmp_path):
        """Test --entropy-methods reports plain NW plus one row per method."""
        report = tmp_path / "report.json"

        code = run([
            "evaluate", "--dataset", "gen:fixed", "--n", "40", "--ops", "2", "--k", "2",
            "--repeats", "1", "--entropy-methods", "shannon,richness", "--report", str(report),
        ])
        content = json.loads(report.read_text())

        assert code == EXIT_OK
        assert [row["entropy_method"] for row in content["rows"]] == [None, "shannon", "richness"]

    def test_sweep(self, tmp_path):
        """Test --sweep evaluates one row per parameter value."""
        report = tmp_path / "report.json"

        code = run([
            "evaluate", "--dataset", "gen:fixed", "--n", "40", "--ops", "2", "--k", "2",
            "--repeats", "1", "--sweep", "hyperbolic.c=1,10", "--report", str(report),
        ])
        content = json.loads(report.read_text())

        assert code == EXIT_OK
        assert [row["params"] for row in content["rows"]] == ["hyperbolic(a=1,c=1)", "hyperbolic(a=1,c=10)"]

    def test_scaler_k_beside_fold_count(self, tmp_path):
        """Test --k counts folds while --scaler-k configures the scaler."""
        report = tmp_path / "report.json"

        code = run([
            "evaluate", "--dataset", "gen:fixed", "--n", "40", "--ops", "2", "--k", "2",
            "--repeats", "1", "--strategies", "nw-weighted", "--scaler", "exp",
            "--scaler-k", "3", "--report", str(report),
        ])
        content = json.loads(report.read_text())

        assert code == EXIT_OK
        assert content["k"] == 2
        assert [row["params"] for row in content["rows"]] == ["exponential(k=3)"]

    def test_sweep_unknown_parameter(self):
        """Test a sweep over a parameter the scaler lacks is rejected."""
        code = run([
            "evaluate", "--dataset", "gen:fixed", "--n", "40", "--ops", "2", "--k", "2",
            "--repeats", "1", "--sweep", "exp.tau=0.1",
        ])
        assert code == EXIT_VALIDATION

    def test_comparison_and_sweep_conflict(self):
        """Test --entropy-methods and --sweep cannot be combined."""
        code = run([
            "evaluate", "--dataset", "gen:fixed", "--entropy-methods", "shannon",
            "--sweep", "hyperbolic.c=1",
        ])
        assert code == EXIT_VALIDATION

    def test_seed_count_mismatch(self):
        """Test one seed is required per repeat."""
        code = run(["evaluate", "--dataset", "gen:fixed", "--repeats", "2", "--seeds", "1"])
        assert code == EXIT_VALIDATION

    def test_library_file_needs_kind(self, library_file):
        """Test a library file dataset needs --kind."""
        assert run(["evaluate", "--dataset", str(library_file)]) == EXIT_VALIDATION

    def test_library_file_dataset(self, library_file, capsys):
        """Test evaluating a recorded library file."""
        code = run([
            "evaluate", "--dataset", str(library_file), "--kind", "directory",
            "--k", "2", "--repeats", "1", "--strategies", "nw",
        ])

        assert code == EXIT_OK
        assert str(library_file) in capsys.readouterr().out


class TestConfigFile:
    """Test --config handling."""

    def test_config_supplies_flags(self, tmp_path, library_file, capsys):
        """Test config keys act as flag defaults."""
        config = tmp_path / "match.yaml"
        config.write_text(yaml.dump({"library": str(library_file), "request": _b64(UNSEEN_SEARCH)}))

        assert run(["--config", str(config), "match"]) == EXIT_OK
        assert _fields(capsys.readouterr().out)["index"] == "4"

    def test_explicit_flag_overrides_config(self, tmp_path, library_file, capsys):
        """Test an explicit flag wins over the config file."""
        config = tmp_path / "match.json"
        config.write_text(json.dumps({
            "library": str(library_file),
            "request": _b64(UNSEEN_SEARCH),
            "strategy": "hash",
        }))

        code = run(["--config", str(config), "match", "--strategy", "nw"])

        assert code == EXIT_OK
        assert _fields(capsys.readouterr().out)["index"] == "4"

    def test_config_types_are_converted(self, tmp_path, capsys):
        """Test numeric and list values go through the flag parsers."""
        config = tmp_path / "evaluate.json"
        config.write_text(json.dumps({
            "dataset": "gen:directory", "n": 30, "ops": 2, "k": 3,
            "repeats": 2, "seeds": [1, 2], "strategies": "nw",
        }))

        assert run(["--config", str(config), "evaluate"]) == EXIT_OK
        assert "dataset=gen:directory(n=30,ops=2,seed=0)" in capsys.readouterr().out

    def test_unknown_key_rejected(self, tmp_path):
        """Test an unknown key fails before anything runs."""
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"colour": "blue"}))

        assert run(["--config", str(config), "align", "--a", "x", "--b", "y"]) == EXIT_VALIDATION

    def test_key_of_other_subcommand_rejected(self, tmp_path, capsys):
        """Test keys belonging to a different subcommand are rejected."""
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"admin_port": 8080}))

        assert run(["--config", str(config), "align", "--a", "x", "--b", "y"]) == EXIT_VALIDATION
        assert "admin_port" in capsys.readouterr().err
