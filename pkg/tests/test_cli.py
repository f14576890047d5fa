import subprocess
import sys

import numpy as np
import pytest
from oracles import exact_mitm_matches, pair_difference_counts

from sdsforge.certificates import bundled
from sdsforge.cli import EXIT_NO_MATCH, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main
from sdsforge.hadamard import read_binary, read_pm, verify_skew_hadamard


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _rows(path):
    return [tuple(int(x) for x in line.split()) for line in path.read_text().splitlines() if line.strip()]


def _matches(path):
    return [tuple(int(x) for x in line.split()[:4]) for line in path.read_text().splitlines()
            if line.strip() and not line.startswith("#")]


@pytest.fixture
def v7(tmp_path):
    cfg = tmp_path / "v7.cfg"
    cfg.write_text("v=7\nH=1\nk=2,2,2,3\nbudgets=1000\nseeds=0\nshards=4\n")
    return cfg, tmp_path / "run"


def test_params_251(capsys):
    code, out, _ = run(capsys, "params", 251)
    assert code == EXIT_OK
    assert "# 21,21,11,1" in out
    assert "251;115,115,120,125;224;----;21,21,11,1" in out
    assert "(n1 >= v/2)" not in out


def test_params_631_with_feasibility(capsys):
    code, out, _ = run(capsys, "params", 631, "--H", 8)
    assert code == EXIT_OK
    assert "631;330,330,330,315;674;+++-;29,29,29,1;feasible" in out


def test_params_9_all(capsys):
    _, bounded, _ = run(capsys, "params", 9)
    _, everything, _ = run(capsys, "params", 9, "--all")
    assert "5,3,1,1" not in bounded
    assert "# 5,3,1,1  (n1 >= v/2)" in everything
    assert "9;2,3,4,4;4;----;5,3,1,1" in everything
    assert set(bounded.splitlines()[2:]) < set(everything.splitlines())


def test_orbits(capsys):
    code, out, _ = run(capsys, "orbits", 13, "--H", 3, "--classes")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert "1: 1 3 9" in lines and "7: 7 8 11" in lines
    assert "# +/- difference classes: n=2" in lines
    assert "1: 1 3 4 9 10 12" in lines


def test_gen_match_certify(capsys, v7):
    cfg, out = v7
    assert run(capsys, "gen", "--config", cfg, "--out", out)[0] == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == [
        "gen.manifest", "k2.F", "k2.Fp", "k2.meta", "k3.F", "k3.Fp", "k3.meta"]
    assert len(_rows(out / "k2.F")) == 15 and len(_rows(out / "k3.F")) == 20

    # F' rows are per-class difference counts of the F rows
    classes = [(1, 6), (2, 5), (3, 4)]
    for f, fp in zip(_rows(out / "k3.F"), _rows(out / "k3.Fp")):
        counts = pair_difference_counts(7, [f])
        assert fp == tuple(counts[c[0]] for c in classes)

    assert run(capsys, "match", "--out", out)[0] == EXIT_OK
    lists = [_rows(out / f"{p}.Fp") for p in ("k2", "k2", "k2", "k3")]
    assert _matches(out / "matches.txt") == exact_mitm_matches(lists, (2, 2, 2))

    code, text, _ = run(capsys, "certify", "--out", out, "--match", 3)
    assert code == EXIT_OK, text
    assert "PASS" in text
    H = read_pm(out / "hadamard.txt")
    assert np.array_equal(H, read_binary(out / "hadamard.bin"))
    assert H.shape == (28, 28)
    if "skew block none" not in text:
        assert verify_skew_hadamard(H)


def test_certify_rejects_tampered_lines(capsys, v7):
    cfg, out = v7
    run(capsys, "gen", "--config", cfg, "--out", out)
    run(capsys, "match", "--out", out)
    code, text, _ = run(capsys, "certify", "--out", out, "--lines", "1,1,1,1")
    assert code == EXIT_VERIFY
    assert "FAIL" in text and "FAIL" in (out / "certify.txt").read_text()
    assert not (out / "hadamard.txt").exists()


def test_first_and_no_match(capsys, v7):
    cfg, out = v7
    run(capsys, "gen", "--config", cfg, "--out", out)
    assert run(capsys, "match", "--out", out, "--first", "--shards", 8)[0] == EXIT_OK
    assert len(_matches(out / "matches.txt")) == 1
    assert "stop_on_first=1" in (out / "match.manifest").read_text()
    # a shard range that holds no match exits 1
    full = []
    for i in range(8):
        code, _, _ = run(capsys, "match", "--out", out, "--shards", 8, "--shard-range", f"{i}..{i + 1}")
        got = _matches(out / "matches.txt")
        assert (code == EXIT_NO_MATCH) == (not got)
        full += got
    run(capsys, "match", "--out", out, "--shards", 8)
    assert sorted(full) == _matches(out / "matches.txt")


def test_gen_is_deterministic(capsys, tmp_path, v7):
    cfg, _ = v7
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        run(capsys, "gen", "--config", cfg, "--out", d, "--set", "mode=walk", "--set", "budgets=5,6,7,8")
    for name in ("k2.F", "k2.Fp", "k3.F", "k3.Fp"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert len(_rows(a / "k2.F")) == 5  # the shared k2 pair uses the first block's budget


def test_gen_budget_zero(capsys, v7):
    cfg, out = v7
    assert run(capsys, "gen", "--config", cfg, "--out", out, "--set", "budgets=0")[0] == EXIT_OK
    assert (out / "k2.F").read_text() == ""
    assert run(capsys, "match", "--out", out)[0] == EXIT_NO_MATCH


def test_gen_v631_shares_file_pairs(capsys, tmp_path):
    out = tmp_path / "r631"
    code, text, _ = run(capsys, "gen", "--out", out, "--set", "v=631", "--set", "H=8",
                        "--set", "k=315,330,330,330", "--set", "skew_block=1", "--set", "budgets=3")
    assert code == EXIT_OK, text
    assert sorted(p.name for p in out.glob("*.F")) == ["k315s.F", "k330.F"]
    assert "blocks=k315s,k330,k330,k330" in (out / "gen.manifest").read_text()
    for row in _rows(out / "k330.Fp"):
        assert len(row) == 21


def test_verify_bundled_and_files(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--bundled", "v213")
    assert code == EXIT_OK
    assert "skew block: 4 (1-based)" in out and "skew-Hadamard True" in out
    cert = bundled("v251a")
    path = tmp_path / "c.cert"
    path.write_text(cert.format())
    assert run(capsys, "verify", path)[0] == EXIT_OK
    path.write_text(cert.format().replace("J=2,", "J=1,", 1))
    assert run(capsys, "verify", path)[0] == EXIT_VERIFY


def test_usage_errors(capsys, tmp_path):
    assert run(capsys, "verify")[0] == EXIT_USAGE
    assert run(capsys, "gen", "--out", tmp_path, "--set", "v=8", "--set", "k=1,1,1,1")[0] == EXIT_USAGE
    assert run(capsys, "gen", "--out", tmp_path, "--set", "v=7", "--set", "k=2,2,2,2")[0] == EXIT_USAGE
    assert run(capsys, "gen", "--out", tmp_path, "--set", "nonsense=1")[0] == EXIT_USAGE
    assert run(capsys, "gen", "--config", tmp_path / "missing.cfg")[0] == EXIT_USAGE
    assert run(capsys, "match", "--out", tmp_path / "nowhere")[0] == EXIT_USAGE
    assert run(capsys, "match", "--out", tmp_path, "--shards", 6)[0] == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sdsforge.cli", "params", "213"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert ";196;" in proc.stdout
