import hashlib
import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fpcsa.cli import main, run
from fpcsa.field import FieldSpec
from fpcsa.hashing import token_id
from fpcsa.sketch import Sketch

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = FIXTURES / "golden"


def fx(name):
    return str(FIXTURES / name)


def build(tmp_path, stream, *flags, name="out.sketch"):
    out = tmp_path / name
    code, text = run(["build", fx(stream) if "/" not in stream else stream, *flags, "-o", str(out)])
    assert code == 0, text
    return out, text


def transcripts(tmp_path):
    """Named CLI transcripts pinned by the golden files."""
    out = {}
    sk, _ = build(tmp_path, "gf7.stream", "--m", "64", "--seed", "1", name="gf7.sketch")
    out["estimate_gf7"] = run(["estimate", str(sk)])[1]
    sk, _ = build(tmp_path, "tokens.stream", "--m", "32", "--seed", "9", name="tok.sketch")
    out["estimate_tokens_json"] = run(["estimate", str(sk), "--format", "json"])[1]
    sk, text = build(tmp_path, "zmode.stream", "--m", "32", "--scheme", "infinity", "--epsilon", "0.5",
                     "--two-pass", name="z.sketch")
    out["build_zmode_scheme"] = text + run(["estimate", str(sk)])[1]
    out["exact_abb"] = run(["exact", fx("abb.stream")])[1]
    out["exact_zmode_gf5"] = run(["exact", fx("zmode.stream"), "--field", "gf(5)"])[1]
    out["constants_table"] = run(["constants", "--table"])[1]
    out["constants_gf2_m64_csv"] = run(["constants", "--field", "gf(2)", "--m", "64", "--format", "csv"])[1]
    out["primes_select_infinity"] = run(["primes", "select", "--scheme", "infinity", "--epsilon", "0.5",
                                         "--linf", "8", "--seed", "1"])[1]
    out["primes_list"] = run(["primes", "list", "--count", "10", "--at-least", "5"])[1]
    return out


def test_golden_transcripts(tmp_path):
    got = transcripts(tmp_path)
    for name, text in got.items():
        expected = (GOLDEN / f"{name}.txt").read_text()
        assert text == expected, name


def test_golden_sketch_bytes(tmp_path):
    sk, _ = build(tmp_path, "gf7.stream", "--m", "64", "--seed", "1")
    digest = hashlib.sha256(sk.read_bytes()).hexdigest()
    assert digest == (GOLDEN / "gf7_m64_seed1.sha256").read_text().strip()


def test_build_matches_library(tmp_path):
    sk, _ = build(tmp_path, "tokens.stream", "--m", "16", "--seed", "3", "--columns", "20")
    lib = Sketch(FieldSpec.binary(8), 16, 20, 3)
    lines = (FIXTURES / "tokens.stream").read_text().splitlines()[1:]
    for line in lines:
        tok, val = line.rsplit(" ", 1)
        lib.update(token_id(tok.strip('"')), int(val))
    assert Sketch.from_bytes(sk.read_bytes()) == lib


def test_constants_table_five_row():
    code, text = run(["constants", "--table", "--format", "csv"])
    assert code == 0
    rows = {r.split(",")[0]: r.split(",") for r in text.strip().splitlines()[1:]}
    assert len(rows) == 9
    assert abs(float(rows["5"][1]) - 0.917) <= 1e-3


def test_empty_body_equals_new_sketch(tmp_path):
    stream = tmp_path / "empty.stream"
    stream.write_text("#fpcsa-stream v1 field=gf(2)\n")
    sk, _ = build(tmp_path, str(stream), "--m", "64", "--seed", "5")
    assert sk.read_bytes() == Sketch(FieldSpec(2), 64, 64, 5).to_bytes()
    code, text = run(["estimate", str(sk)])
    assert code == 0 and "estimate: 0" in text and "calibrated: no" in text


def test_build_is_deterministic(tmp_path):
    a, _ = build(tmp_path, "gf7.stream", "--m", "32", "--seed", "8", name="a")
    b, _ = build(tmp_path, "gf7.stream", "--m", "32", "--seed", "8", name="b")
    assert a.read_bytes() == b.read_bytes()


def test_insert_then_delete_stream_is_empty(tmp_path):
    sk, _ = build(tmp_path, "gf7_deleted.stream", "--m", "16")
    assert not Sketch.from_bytes(sk.read_bytes()).table.any()


def test_merge_files(tmp_path):
    lines = (FIXTURES / "gf7.stream").read_text().splitlines()
    head, body = lines[:1], [l for l in lines[1:] if not l.startswith("#")]
    (tmp_path / "a.stream").write_text("\n".join(head + body[:1234]) + "\n")
    (tmp_path / "b.stream").write_text("\n".join(head + body[1234:]) + "\n")
    a, _ = build(tmp_path, str(tmp_path / "a.stream"), "--m", "32", "--seed", "2", name="a.sk")
    b, _ = build(tmp_path, str(tmp_path / "b.stream"), "--m", "32", "--seed", "2", name="b.sk")
    whole, _ = build(tmp_path, "gf7.stream", "--m", "32", "--seed", "2", name="w.sk")
    merged = tmp_path / "m.sk"
    assert main(["merge", str(a), str(b), "-o", str(merged)]) == 0
    assert merged.read_bytes() == whole.read_bytes()
    empty = tmp_path / "e.stream"
    empty.write_text("#fpcsa-stream v1 field=gf(7)\n")
    e, _ = build(tmp_path, str(empty), "--m", "32", "--seed", "2", name="e.sk")
    assert main(["merge", str(whole), str(e), "-o", str(merged)]) == 0
    assert merged.read_bytes() == whole.read_bytes()
    other, _ = build(tmp_path, "gf7.stream", "--m", "32", "--seed", "3", name="o.sk")
    assert main(["merge", str(whole), str(other), "-o", str(merged)]) == 1


def test_exact_abb():
    code, text = run(["exact", fx("abb.stream")])
    assert code == 0
    assert text.splitlines()[0] == "l0: 1"


def test_zmode_reduce(tmp_path):
    sk, _ = build(tmp_path, "zmode.stream", "--m", "32", "--reduce", "gf(5)")
    s = Sketch.from_bytes(sk.read_bytes())
    assert s.field == FieldSpec(5)


def test_zmode_requires_reduction(tmp_path, capsys):
    out = tmp_path / "x.sk"
    assert main(["build", fx("zmode.stream"), "--m", "32", "-o", str(out)]) == 1
    assert "--reduce" in capsys.readouterr().err
    assert main(["build", fx("zmode.stream"), "--m", "32", "--reduce", "gf(2^8)", "-o", str(out)]) == 1
    assert main(["build", fx("zmode.stream"), "--m", "32", "--scheme", "infinity", "--epsilon", "0.5",
                 "-o", str(out)]) == 1
    assert main(["build", fx("gf7.stream"), "--m", "32", "--reduce", "gf(5)", "-o", str(out)]) == 1
    assert not out.exists()


def test_field_mismatch_is_configuration_error(tmp_path, capsys):
    assert main(["build", fx("gf7.stream"), "--m", "8", "--field", "gf(5)", "-o", str(tmp_path / "x")]) == 1
    assert "disagrees" in capsys.readouterr().err


@pytest.mark.parametrize(
    "body,line",
    [
        ("1 2\n2 9\n", 3),
        ("1 2\n2\n", 3),
        ("1 2\nx y\n", 3),
        ('1 1\n\n"unterminated 3\n', 4),
        ("99999999999999999999999 1\n", 2),
    ],
)
def test_malformed_lines_report_line_numbers(tmp_path, capsys, body, line):
    stream = tmp_path / "bad.stream"
    stream.write_text("#fpcsa-stream v1 field=gf(7)\n" + body)
    assert main(["build", str(stream), "--m", "8", "-o", str(tmp_path / "x")]) == 2
    assert f"(line {line})" in capsys.readouterr().err


@pytest.mark.parametrize("header", ["", "#fpcsa-stream v2 field=gf(7)\n", "#fpcsa-stream v1 field=gf(6)\n", "1 2\n"])
def test_bad_headers(tmp_path, header):
    stream = tmp_path / "bad.stream"
    stream.write_text(header + "1 1\n" if header else "")
    assert main(["exact", str(stream)]) == 2


def test_corrupt_sketch_is_format_error(tmp_path, capsys):
    sk, _ = build(tmp_path, "gf7.stream", "--m", "8")
    bad = tmp_path / "bad.sk"
    bad.write_bytes(b"X" + sk.read_bytes()[1:])
    assert main(["estimate", str(bad)]) == 2
    assert "at byte" in capsys.readouterr().err


def test_usage_errors():
    assert main([]) == 1
    assert main(["nope"]) == 1
    assert main(["build"]) == 1
    assert main(["constants"]) == 1
    assert main(["constants", "--table", "--field", "gf(2)"]) == 1
    assert main(["constants", "--field", "gf(2)", "--m", "2"]) == 1
    assert main(["primes", "select", "--scheme", "infinity", "--linf", "8"]) == 1
    assert main(["primes", "select", "--scheme", "fixed"]) == 1
    assert main(["estimate", "/nonexistent/file"]) == 1
    assert main(["build", fx("gf7.stream"), "--m", "8", "--seed", "-1", "-o", "x"]) == 1


def test_primes_select():
    code, text = run(["primes", "select", "--scheme", "average", "--epsilon", "1", "--avg", "4"])
    assert code == 0
    assert int(text.split()[1]) in [5, 7, 11, 13, 17, 19, 23, 29, 31, 37]
    assert "set size: 10" in text
    code, text = run(["primes", "select", "--scheme", "fixed", "--p", "2"])
    assert text.splitlines()[0] == "prime: 2"


def test_simulate_config_passes():
    code, text = run(["simulate", fx("sim.json")])
    assert code == 0
    doc = json.loads(text)
    assert doc["trials"] == 40 and doc["config"]["columns"] == 64
    assert [c["name"] for c in doc["checks"]] == ["unbiased", "relative_error", "cell_law"]
    assert all(c["passed"] for c in doc["checks"])


def test_simulate_failed_check_exit_code(capsys):
    assert main(["simulate", fx("sim_fail.json"), "--format", "csv"]) == 3
    err = capsys.readouterr().err
    assert "check relative_error: FAIL" in err


def test_simulate_flags_and_csv():
    code, text = run(["simulate", "--field", "gf(2)", "--m", "16", "--n", "1000", "--trials", "4", "--format", "csv"])
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == "metric,value" and lines[1] == "trials,4"
    assert "level,observed,predicted,sigma" in lines


def test_simulate_is_deterministic():
    a = run(["simulate", fx("sim.json"), "--estimates"])[1]
    b = run(["simulate", fx("sim.json"), "--estimates"])[1]
    strip = lambda t: {k: v for k, v in json.loads(t).items() if k != "throughput_updates_per_second"}
    assert strip(a) == strip(b)


def test_simulate_bad_configs(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", str(bad)]) == 2
    bad.write_text('{"field": "gf(2)", "m": 16}')
    assert main(["simulate", str(bad)]) == 1
    bad.write_text('{"field": "gf(2)", "m": 16, "true_cardinality": 10, "trials": 1, "bogus": 1}')
    assert main(["simulate", str(bad)]) == 1


def test_million_line_build(tmp_path):
    stream = tmp_path / "big.stream"
    ids = np.arange(10 ** 6)
    vals = ids % 255 + 1
    with open(stream, "w") as fh:
        fh.write("#fpcsa-stream v1 field=gf(2^8)\n")
        fh.write("\n".join(f"{i} {v}" for i, v in zip(ids.tolist(), vals.tolist())))
        fh.write("\n")
    import time
    start = time.perf_counter()
    sk, _ = build(tmp_path, str(stream), "--m", "256")
    assert time.perf_counter() - start < 60
    est = Sketch.from_bytes(sk.read_bytes()).estimate()
    assert abs(est.value / 10 ** 6 - 1) < 5 * 0.0816


@pytest.mark.skipif(shutil.which("fpcsa") is None, reason="console script not installed")
def test_console_script_exit_codes(tmp_path):
    ok = subprocess.run(["fpcsa", "exact", fx("abb.stream")], capture_output=True, text=True)
    assert ok.returncode == 0 and ok.stdout.startswith("l0: 1")
    bad = subprocess.run(["fpcsa", "bogus"], capture_output=True, text=True)
    assert bad.returncode == 1
    mod = subprocess.run([sys.executable, "-m", "fpcsa.cli", "primes", "list", "--count", "3"],
                         capture_output=True, text=True)
    assert mod.returncode == 0 and mod.stdout.strip() == "2 3 5"


if __name__ == "__main__":
    # regenerate the golden transcripts: python3 tests/test_cli.py
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        for name, text in transcripts(Path(d)).items():
            (GOLDEN / f"{name}.txt").write_text(text)
        sk, _ = build(Path(d), "gf7.stream", "--m", "64", "--seed", "1")
        (GOLDEN / "gf7_m64_seed1.sha256").write_text(hashlib.sha256(sk.read_bytes()).hexdigest() + "\n")
