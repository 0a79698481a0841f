import json

import pytest

from poplar.cli import main


def test_bench_sim(capsys):
    assert main(["bench", "--records", "100", "--txns", "200", "--threads", "2", "--buffers", "2",
                 "--value-size", "64"]) == 0
    out = capsys.readouterr().out
    assert "committed" in out and "200 of 200" in out


def test_bench_centr_needs_one_buffer(capsys):
    assert main(["bench", "--baseline", "centr", "--buffers", "2", "--txns", "10", "--records", "10"]) == 2
    assert "exactly one buffer" in capsys.readouterr().err


def test_round_trip_on_disk(tmp_path, capsys):
    d = tmp_path / "db"
    script = tmp_path / "crash.txt"
    script.write_text("crash after 10005 bytes on log0\n")
    assert main(["bench", "--records", "50", "--txns", "400", "--threads", "2", "--buffers", "2", "--value-size", "64",
                 "--devices", "real", "--data-dir", str(d), "--crash-script", str(script)]) == 0
    assert "crashed" in capsys.readouterr().out
    assert main(["recover", "--data-dir", str(d), "--json"]) == 0
    first = json.loads(capsys.readouterr().out)
    assert first["tuples"] == 50 and first["torn_tails"] == 1
    assert main(["checkpoint", "--data-dir", str(d)]) == 0
    assert "VALID" in capsys.readouterr().out
    assert main(["recover", "--data-dir", str(d), "--json"]) == 0
    second = json.loads(capsys.readouterr().out)
    assert second["rsns"] > first["rsne"]


def test_bench_refuses_nonempty_dir(tmp_path):
    (tmp_path / "x").write_text("x")
    assert main(["bench", "--txns", "1", "--records", "10", "--data-dir", str(tmp_path)]) == 2


def test_event_crash_points_rejected_for_bench(tmp_path):
    script = tmp_path / "c"
    script.write_text("crash at event 3\n")
    assert main(["bench", "--txns", "1", "--records", "10", "--crash-script", str(script)]) == 2


def test_verify_dependency_scenarios(capsys):
    assert main(["verify", "--scenarios", "fig1"]) == 0
    out = capsys.readouterr().out
    assert out.count("ok") == 8 and out.count("inconsistent") == 2


def test_verify_fuzz_and_broken(capsys):
    assert main(["verify", "--fuzz", "--seeds", "5", "--txns", "40"]) == 0
    assert "0 violation" in capsys.readouterr().out
    assert main(["verify", "--fuzz", "--seeds", "40", "--txns", "80", "--broken", "skip_durability"]) == 0


def test_verify_needs_a_mode():
    assert main(["verify"]) == 2


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["explode"])
