import csv
import io
import json

import pytest

from qmoney import cli
from qmoney.coin import scheme_from_bytes


def run(tmp_path, *argv, name="report"):
    out = tmp_path / name
    code = cli.main([*argv, "--out", str(out)])
    return code, (out.read_text() if out.exists() else None)


def csv_rows(text):
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))


def test_mint_verify_honest_accept_rate(tmp_path):
    code, text = run(tmp_path, "mint-verify", "--n", "4", "--trials", "100", "--seed", "7")
    doc = json.loads(text)
    assert code == 0
    assert doc["summary"]["accept_rate"] == 1.0
    assert doc["config"]["seed"] == 7 and doc["config"]["command"] == "mint-verify"
    assert len(doc["records"]) == 100


def test_forge_retry_mean_tries(tmp_path):
    code, text = run(tmp_path, "forge-retry", "--n", "3", "--trials", "1000", "--seed", "7")
    s = json.loads(text)["summary"]
    assert code == 0
    assert abs(s["mean_tries"] - 8) < 3 * s["std_error"]
    rows = json.loads(text)["records"]
    assert set(rows[0]) == {"n", "k", "p", "queries", "overlap", "succeeded", "seed"}


def test_forge_retry_csv_columns(tmp_path):
    _, text = run(tmp_path, "forge-retry", "--n", "2", "--trials", "20", "--format", "csv")
    assert text.splitlines()[1] == "n,k,p,queries,overlap,succeeded,seed"


def test_same_command_twice_is_byte_identical(tmp_path):
    argv = ("robustness", "--n", "3", "--trials", "200", "--seed", "5")
    _, a = run(tmp_path, *argv, name="a")
    _, b = run(tmp_path, *argv, name="b")
    assert a == b


def test_bound_table(tmp_path):
    code, text = run(tmp_path, "bound-table", "--n-range", "1:20", "--k-range", "0:8", "--format", "csv")
    assert code == 0
    assert any(line.startswith("# k-convention:") and "k=0" in line for line in text.splitlines())
    rows = csv_rows(text)
    table = {(int(r["n"]), int(r["k"])): float(r["bound"]) for r in rows}
    assert table[(10, 2)] == pytest.approx(14.0)
    for (n, k), v in table.items():
        if (n + 1, k) in table:
            assert table[(n + 1, k)] >= v
        if (n, k + 1) in table:
            assert table[(n, k + 1)] <= v


def test_secret_hidden_unless_requested(tmp_path):
    _, hidden = run(tmp_path, "mint-verify", "--n", "2", "--trials", "3", name="h")
    assert "psi" not in json.loads(hidden)["summary"]
    _, shown = run(tmp_path, "mint-verify", "--n", "2", "--trials", "3", "--reveal-secret", name="s")
    assert len(json.loads(shown)["summary"]["psi"]) == 4


def test_save_scheme_fixture(tmp_path):
    path = tmp_path / "scheme.bin"
    code, text = run(tmp_path, "mint-verify", "--n", "3", "--trials", "2", "--save-scheme", str(path))
    assert code == 0
    scheme = scheme_from_bytes(path.read_bytes())
    assert scheme.issued_count == 2 and scheme.n == 3
    assert "save_scheme" not in json.loads(text)["config"]


def test_valid_list_export(tmp_path):
    path = tmp_path / "valid.txt"
    code, text = run(tmp_path, "bills-mint", "--count", "10", "--valid-list-out", str(path))
    assert code == 0
    ks = [int(x) for x in path.read_text().split()]
    assert ks == sorted(ks) and len(ks) == 10
    assert all(r["eigenstate_fidelity"] > 1 - 1e-9 for r in json.loads(text)["records"])


def test_bills_verify_report(tmp_path):
    _, text = run(tmp_path, "bills-verify", "--count", "30")
    s = json.loads(text)["summary"]
    assert s["accept_rate"] == 1.0 and s["tampered_accept_rate"] == 0.0


def test_plot_written(tmp_path):
    fig = tmp_path / "scaling.png"
    code, _ = run(tmp_path, "scaling", "--n-range", "1:6", "--plot", str(fig))
    assert code == 0 and fig.stat().st_size > 0


def test_plot_refused_where_unsupported(tmp_path):
    code, _ = run(tmp_path, "anonymity", "--trials", "5", "--plot", str(tmp_path / "x.png"))
    assert code == 2


@pytest.mark.parametrize("argv", [
    ("mint-verify", "--n", "0"),
    ("mint-verify", "--n", "21"),
    ("robustness", "--epsilon", "1.5"),
    ("forge-grover", "--p", "0"),
    ("bound-table", "--n-range", "5:2"),
    ("bills-mint", "--m", "3", "--t", "3"),
    ("anonymity", "--users", "1"),
    ("anonymity", "--users", "9", "--n", "3", "--cheating"),
    ("blindness-check", "--n", "4"),
    ("bb84-attack", "--copies", "1"),
    ("mint-verify", "--seed", "-1"),
    ("no-such-command",),
])
def test_validation_errors_exit_2(tmp_path, argv):
    code, text = run(tmp_path, *argv)
    assert code == 2 and text is None


def test_unwritable_output_exits_2(tmp_path):
    assert cli.main(["bound-table", "--out", str(tmp_path / "missing" / "r.json")]) == 2


def test_experiment_failure_exits_3(tmp_path):
    code, _ = run(tmp_path, "mint-verify", "--n", "2", "--trials", "5", "--poly-cap", "3")
    assert code == 3


def test_replay_detects_tampering(tmp_path):
    _, text = run(tmp_path, "bound-table", "--n-range", "1:3", "--k-range", "0:2")
    path = tmp_path / "report"
    assert cli.main(["--replay", str(path)]) == 0
    path.write_text(text.replace("14", "15") if "14" in text else text.replace("1.0", "2.0"))
    assert cli.main(["--replay", str(path)]) == 3


def test_replay_of_transcript(tmp_path):
    rec = tmp_path / "t.txt"
    code, _ = run(tmp_path, "online-verify", "--runs", "4", "--record", str(rec))
    assert code == 0
    assert rec.read_text().startswith("# config: ")
    assert cli.main(["--replay", str(rec)]) == 0


def test_replay_without_config(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("hello\n")
    assert cli.main(["--replay", str(bad)]) == 2


def test_stdout_when_no_out(capsys):
    assert cli.main(["bound-table", "--n-range", "2", "--k-range", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["records"][0]["bound"] == 2.0


def test_transfer_chain_perturbed_summary(tmp_path):
    _, text = run(tmp_path, "transfer-chain", "--n", "3", "--rounds", "40", "--epsilon", "0.1")
    s = json.loads(text)["summary"]
    assert s["all_accept_after_first"] is True


def test_blind_verify_final_fidelity(tmp_path):
    _, text = run(tmp_path, "blind-verify", "--mix", "valid", "--runs", "5")
    recs = json.loads(text)["records"]
    assert all(r["accepted"] == 1 and r["final_fidelity"] > 1 - 1e-9 for r in recs)
    assert all(r["bank_x"] <= 3 and r["bank_z"] <= 3 for r in recs)


def test_per_trial_seeds_are_recorded(tmp_path):
    _, text = run(tmp_path, "forge-retry", "--n", "1", "--trials", "3", "--seed", "7")
    assert [r["seed"] for r in json.loads(text)["records"]] == [7 ^ 1, 7 ^ 2, 7 ^ 3]
