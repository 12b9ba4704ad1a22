import numpy as np
import pytest

from embed_export import validate_table, write_table

NAMES = ["alpha", "beta", "gamma"]


def write_ok(path):
    rng = np.random.default_rng(0)
    rows = rng.standard_normal((3, 8)).astype(np.float32)
    write_table(path, rows, NAMES, {"encoder": "test", "template": "{}"})
    return rows


def test_written_file_validates_clean(tmp_path):
    path = tmp_path / "t.ppte"
    write_ok(path)
    assert validate_table(path, NAMES) == []


def test_row_name_mismatch_rejected_at_write(tmp_path):
    with pytest.raises(ValueError, match="names"):
        write_table(tmp_path / "t.ppte", np.zeros((2, 4), np.float32),
                    NAMES, {})


def test_truncated_payload_reported(tmp_path):
    path = tmp_path / "t.ppte"
    write_ok(path)
    blob = path.read_bytes()
    path.write_bytes(blob[:30])
    assert any("payload length mismatch" in item
               for item in validate_table(path, NAMES))


def test_shuffled_names_reported(tmp_path):
    path = tmp_path / "t.ppte"
    rows = write_ok(path)
    write_table(path, rows, ["beta", "alpha", "gamma"], {})
    report = validate_table(path, NAMES)
    assert any("row order mismatch" in item for item in report)


def test_bad_magic_and_version_reported(tmp_path):
    path = tmp_path / "t.ppte"
    write_ok(path)
    blob = bytearray(path.read_bytes())
    path.write_bytes(b"NOPE" + bytes(blob[4:]))
    assert any("magic" in item for item in validate_table(path, NAMES))
    blob[4] = 9
    path.write_bytes(bytes(blob))
    assert any("version 9" in item for item in validate_table(path, NAMES))


def test_wrong_row_count_reported(tmp_path):
    path = tmp_path / "t.ppte"
    write_ok(path)
    assert any("row count" in item
               for item in validate_table(path, NAMES + ["delta"]))


def test_non_finite_values_reported(tmp_path):
    path = tmp_path / "t.ppte"
    rows = np.zeros((3, 8), np.float32)
    rows[1, 2] = np.nan
    write_table(path, rows, NAMES, {})
    assert any("non-finite" in item for item in validate_table(path, NAMES))


def test_trailing_bytes_reported(tmp_path):
    path = tmp_path / "t.ppte"
    write_ok(path)
    path.write_bytes(path.read_bytes() + b"xx")
    assert any("trailing" in item for item in validate_table(path, NAMES))


def test_missing_file_reported(tmp_path):
    assert any("unreadable" in item
               for item in validate_table(tmp_path / "absent.ppte", NAMES))
