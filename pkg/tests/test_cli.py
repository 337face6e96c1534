"""Command-line tests, driven through main(argv) with real files.

Every command is exercised the way a shell would: paths on disk, exit
codes checked, stdout/stderr parsed.  Byte-level expectations (patch
sizes, restored payloads) come straight from the wire-format arithmetic.
"""

import csv
import io
import json

import numpy as np
import pytest

from biffcode.cli import EXIT_IO, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, main
from biffcode.codec import HEADER_SIZE, read_patch_header


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def stdout_value(out: str, key: str) -> str:
    for line in out.splitlines():
        if line.startswith(f"{key} = "):
            return line.split(" = ", 1)[1]
    raise AssertionError(f"{key!r} not found in output:\n{out}")


@pytest.fixture
def payload(tmp_path):
    data = bytes(np.random.default_rng(0).integers(0, 256, 100_003, dtype=np.uint8))
    path = tmp_path / "payload.bin"
    path.write_bytes(data)
    return path, data


class TestEncodeDecodeRoundTrip:
    def test_restores_corrupted_file_exactly(self, tmp_path, payload, capsys):
        src, data = payload
        patch = tmp_path / "p.biff"
        code, out, _ = run(capsys, "encode", str(src), str(patch), "--errors", "200")
        assert code == EXIT_OK
        # 100003 bytes pad to 25001 four-byte symbols
        assert stdout_value(out, "symbols") == "25001"
        assert "overhead_factor" in out

        corrupted = tmp_path / "corrupted.bin"
        damaged = bytearray(data)
        rng = np.random.default_rng(1)
        for pos in rng.choice(len(damaged), 150, replace=False):
            damaged[pos] ^= 0x55
        corrupted.write_bytes(bytes(damaged))

        restored = tmp_path / "restored.bin"
        code, out, _ = run(capsys, "decode", str(corrupted), str(patch), str(restored))
        assert code == EXIT_OK
        assert stdout_value(out, "success") == "True"
        assert int(stdout_value(out, "residual_cells")) == 0
        assert restored.read_bytes() == data

    def test_padding_restored_for_odd_lengths(self, tmp_path, capsys):
        # 17 bytes with 16-bit symbols: one padded byte must not leak out
        data = bytes(range(17))
        src = tmp_path / "odd.bin"
        src.write_bytes(data)
        patch = tmp_path / "p.biff"
        assert run(capsys, "encode", str(src), str(patch), "--symbol-bits", "16",
                   "--errors", "4")[0] == EXIT_OK
        restored = tmp_path / "r.bin"
        assert run(capsys, "decode", str(src), str(patch), str(restored))[0] == EXIT_OK
        assert restored.read_bytes() == data

    def test_clean_input_needs_no_corrections(self, tmp_path, payload, capsys):
        src, data = payload
        patch = tmp_path / "p.biff"
        run(capsys, "encode", str(src), str(patch), "--errors", "100")
        restored = tmp_path / "r.bin"
        code, out, _ = run(capsys, "decode", str(src), str(patch), str(restored))
        assert code == EXIT_OK
        assert stdout_value(out, "corrections") == "0"
        assert restored.read_bytes() == data

    def test_empty_file_round_trip(self, tmp_path, capsys):
        src = tmp_path / "empty.bin"
        src.write_bytes(b"")
        patch = tmp_path / "p.biff"
        code, out, _ = run(capsys, "encode", str(src), str(patch), "--errors", "10")
        assert code == EXIT_OK
        assert stdout_value(out, "m") == "0"
        assert patch.stat().st_size == HEADER_SIZE
        restored = tmp_path / "r.bin"
        assert run(capsys, "decode", str(src), str(patch), str(restored))[0] == EXIT_OK
        assert restored.read_bytes() == b""

    def test_encode_is_deterministic(self, tmp_path, payload, capsys):
        src, _ = payload
        a, b = tmp_path / "a.biff", tmp_path / "b.biff"
        run(capsys, "encode", str(src), str(a), "--errors", "50", "--seed", "7")
        run(capsys, "encode", str(src), str(b), "--errors", "50", "--seed", "7")
        assert a.read_bytes() == b.read_bytes()

    def test_explicit_cell_count(self, tmp_path, payload, capsys):
        src, _ = payload
        patch = tmp_path / "p.biff"
        code, out, _ = run(capsys, "encode", str(src), str(patch), "--cells", "4000")
        assert code == EXIT_OK
        assert stdout_value(out, "m") == "4000"
        assert "n/a (no --errors bound given)" in out
        head = read_patch_header(patch.read_bytes())
        assert head.params.m == 4000


class TestDecodeFailures:
    def test_partial_recovery_exits_three(self, tmp_path, payload, capsys):
        src, data = payload
        patch = tmp_path / "p.biff"
        run(capsys, "encode", str(src), str(patch), "--cells", "64")
        corrupted = tmp_path / "c.bin"
        damaged = bytearray(data)
        for pos in np.random.default_rng(2).choice(len(damaged), 4000, replace=False):
            damaged[pos] ^= 0xA5
        corrupted.write_bytes(bytes(damaged))
        restored = tmp_path / "r.bin"
        code, out, _ = run(capsys, "decode", str(corrupted), str(patch), str(restored))
        assert code == EXIT_PARTIAL
        assert stdout_value(out, "success") == "False"
        assert restored.exists()  # best-effort output is still written

    def test_symbol_count_mismatch_exits_one(self, tmp_path, payload, capsys):
        src, data = payload
        patch = tmp_path / "p.biff"
        run(capsys, "encode", str(src), str(patch), "--errors", "10")
        shorter = tmp_path / "short.bin"
        shorter.write_bytes(data[:-8])
        code, _, err = run(capsys, "decode", str(shorter), str(patch), str(tmp_path / "r.bin"))
        assert code == EXIT_IO
        assert "symbols" in err

    def test_corrupt_patch_magic_exits_one(self, tmp_path, payload, capsys):
        src, _ = payload
        patch = tmp_path / "p.biff"
        run(capsys, "encode", str(src), str(patch), "--errors", "10")
        blob = bytearray(patch.read_bytes())
        blob[0] ^= 0xFF
        patch.write_bytes(bytes(blob))
        code, _, err = run(capsys, "decode", str(src), str(patch), str(tmp_path / "r.bin"))
        assert code == EXIT_IO
        assert "patch format error" in err

    def test_truncated_patch_exits_one(self, tmp_path, payload, capsys):
        src, _ = payload
        patch = tmp_path / "p.biff"
        run(capsys, "encode", str(src), str(patch), "--errors", "10")
        patch.write_bytes(patch.read_bytes()[:-3])
        code, _, err = run(capsys, "decode", str(src), str(patch), str(tmp_path / "r.bin"))
        assert code == EXIT_IO

    def test_missing_input_exits_one(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "encode", str(tmp_path / "absent.bin"), str(tmp_path / "p.biff"),
            "--errors", "10",
        )
        assert code == EXIT_IO
        assert "io error" in err


class TestUsageErrors:
    def test_encode_without_sizing_exits_two(self, tmp_path, payload, capsys):
        src, _ = payload
        code, _, err = run(capsys, "encode", str(src), str(tmp_path / "p.biff"))
        assert code == EXIT_USAGE
        assert "--cells or --errors" in err

    def test_unknown_command_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            main(["frobnicate"])
        assert exc_info.value.code == EXIT_USAGE

    def test_missing_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            main([])
        assert exc_info.value.code == EXIT_USAGE

    def test_infeasible_parameters_exit_two(self, tmp_path, payload, capsys):
        src, _ = payload
        code, _, err = run(
            capsys, "encode", str(src), str(tmp_path / "p.biff"),
            "--cells", "30001",  # not a multiple of k = 4
        )
        assert code == EXIT_USAGE
        assert "error" in err


class TestSizing:
    def test_reference_point(self, capsys):
        code, out, err = run(capsys, "sizing", "--errors", "10000")
        assert code == EXIT_OK
        assert stdout_value(out, "m") == "26000"
        assert stdout_value(out, "patch_bytes") == "260050"
        assert stdout_value(out, "overhead_factor") == "10.40"
        assert stdout_value(out, "overhead_factor_excluding_positions") == "7.80"
        # the default 1.30 slack sits close to the k = 4 threshold
        assert "warning" in err

    def test_comfortable_slack_has_no_warning(self, capsys):
        code, _, err = run(capsys, "sizing", "--errors", "10000", "--slack", "1.40")
        assert code == EXIT_OK
        assert "warning" not in err

    def test_below_threshold_exits_two(self, capsys):
        code, _, err = run(capsys, "sizing", "--errors", "10000", "--slack", "1.20")
        assert code == EXIT_USAGE
        assert "threshold" in err

    def test_zero_errors_degenerates(self, capsys):
        code, out, _ = run(capsys, "sizing", "--errors", "0")
        assert code == EXIT_OK
        assert stdout_value(out, "m") == "0"
        assert stdout_value(out, "patch_bytes") == str(HEADER_SIZE)

    def test_sizing_without_errors_exits_two(self, capsys):
        code, _, err = run(capsys, "sizing")
        assert code == EXIT_USAGE
        assert "--errors" in err


class TestExperimentCommand:
    COMMON = [
        "experiment", "--kind", "failure", "--trials", "5", "--n", "2000",
        "--cells", "400", "--errors", "50", "--seed", "3",
    ]

    def test_csv_to_stdout(self, capsys):
        code, out, err = run(capsys, *self.COMMON)
        assert code == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(out)))
        assert len(rows) == 5
        assert set(rows[0]) == {
            "trial", "table_seed", "success", "corrections", "residual_cells",
            "anomalies", "unrecovered", "stage1_seconds", "stage2_seconds",
        }
        assert all(r["success"] == "True" for r in rows)
        assert "success_rate = 1.0" in err

    def test_jsonl_to_file(self, tmp_path, capsys):
        out_path = tmp_path / "rows.jsonl"
        code, out, err = run(
            capsys, *self.COMMON, "--format", "jsonl", "--output", str(out_path)
        )
        assert code == EXIT_OK
        assert out == ""  # rows went to the file, summary to stderr
        lines = out_path.read_text().splitlines()
        assert len(lines) == 5
        parsed = [json.loads(line) for line in lines]
        assert all(row["corrections"] == 50 for row in parsed)
        assert "trials = 5" in err

    def test_zero_trials_yields_header_only(self, capsys):
        code, out, err = run(
            capsys, "experiment", "--kind", "failure", "--trials", "0", "--n", "100",
            "--cells", "16",
        )
        assert code == EXIT_OK
        assert out.splitlines()[0].startswith("trial,")
        assert len(out.splitlines()) == 1
        assert "success_rate = None" in err

    def test_burst_kind(self, capsys):
        code, out, err = run(
            capsys, "experiment", "--kind", "burst", "--trials", "3", "--n", "2000",
            "--cells", "400", "--burst-len", "10", "--burst-count", "5", "--seed", "1",
        )
        assert code == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(out)))
        assert [r["corrections"] for r in rows] == ["50", "50", "50"]

    def test_timing_kind_defaults_to_full_engine(self, capsys):
        code, out, err = run(
            capsys, "experiment", "--kind", "timing", "--trials", "2", "--n", "5000",
            "--cells", "400", "--errors", "40", "--single-thread",
        )
        assert code == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(out)))
        assert len(rows) == 2
        assert all(float(r["stage1_seconds"]) > 0 for r in rows)

    def test_experiment_without_sizing_exits_two(self, capsys):
        code, _, err = run(capsys, "experiment", "--kind", "failure", "--trials", "1")
        assert code == EXIT_USAGE
        assert "--cells or --errors" in err

    def test_reproducible_across_runs(self, capsys):
        _, out_a, _ = run(capsys, *self.COMMON)
        _, out_b, _ = run(capsys, *self.COMMON)
        strip = lambda text: [
            (r["trial"], r["table_seed"], r["success"], r["corrections"])
            for r in csv.DictReader(io.StringIO(text))
        ]
        assert strip(out_a) == strip(out_b)


class TestSeedEnvironment:
    def test_env_seed_equals_explicit_flag(self, tmp_path, payload, capsys, monkeypatch):
        src, _ = payload
        flag = tmp_path / "flag.biff"
        run(capsys, "encode", str(src), str(flag), "--errors", "20", "--seed", "123")

        monkeypatch.setenv("BIFF_SEED", "123")
        env = tmp_path / "env.biff"
        run(capsys, "encode", str(src), str(env), "--errors", "20")
        assert env.read_bytes() == flag.read_bytes()

    def test_explicit_flag_beats_environment(self, tmp_path, payload, capsys, monkeypatch):
        src, _ = payload
        monkeypatch.setenv("BIFF_SEED", "999")
        patch = tmp_path / "p.biff"
        run(capsys, "encode", str(src), str(patch), "--errors", "20", "--seed", "123")
        assert read_patch_header(patch.read_bytes()).params.seed == 123

    def test_hex_environment_seed_accepted(self, tmp_path, payload, capsys, monkeypatch):
        src, _ = payload
        monkeypatch.setenv("BIFF_SEED", "0x10")
        patch = tmp_path / "p.biff"
        run(capsys, "encode", str(src), str(patch), "--errors", "20")
        assert read_patch_header(patch.read_bytes()).params.seed == 16

    def test_garbage_environment_seed_exits_two(self, capsys, monkeypatch):
        monkeypatch.setenv("BIFF_SEED", "not-a-number")
        code, _, err = run(capsys, "sizing", "--errors", "10")
        assert code == EXIT_USAGE
        assert "BIFF_SEED" in err
