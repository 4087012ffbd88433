"""End-to-end checks of the command-line interface and its exit codes."""

import json
from pathlib import Path

import pytest

from splitchain import cli
from splitchain.scenario import MetricsReport

GROW = """
[scenario]
seed = 7
[chain root]
validators = 10
alpha = 1/2
n_max = 20
[join]
arrivals = 10
interval = 1
beta = 0
"""


def run_cli(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# --- analyze -----------------------------------------------------------------------


def test_analyze_golden_csv(tmp_path, capsys):
    out = tmp_path / "curves.csv"
    code, _, _ = run_cli(["analyze", "--alpha", "1/2", "--n", "10",
                          "--beta-steps", "5", "--out", str(out)], capsys)
    assert code == 0
    assert out.read_text() == (
        "n,alpha,beta,f,exact,bound_single,bound_combined\n"
        "10,1/2,0,0,0,0.0820849986238988,0.1641699972477976\n"
        "10,1/2,1/10,1,0,0.20189651799465538,0.40379303598931077\n"
        "10,1/2,1/5,2,0,0.4065696597405991,0.8131393194811982\n"
        "10,1/2,3/10,3,1/6,0.6703200460356393,1.3406400920712787\n"
        "10,1/2,2/5,4,11/21,0.9048374180359595,1.809674836071919\n"
    )


def test_analyze_monte_carlo_columns(capsys):
    code, out, _ = run_cli(["analyze", "--alpha", "1/2", "--n", "8",
                            "--beta-steps", "4", "--trials", "500",
                            "--seed", "3"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].endswith("mc_freq,mc_stderr")
    for line in lines[1:]:
        cells = line.split(",")
        assert len(cells) == 9
        float(cells[7]), float(cells[8])  # parse cleanly


@pytest.mark.parametrize("argv", [
    ["analyze", "--alpha", "3/2", "--n", "10"],
    ["analyze", "--alpha", "0", "--n", "10"],
    ["analyze", "--alpha", "1/2", "--n", "nope"],
    ["analyze", "--alpha", "1/2", "--n", ""],
    ["analyze", "--alpha", "1/2", "--n", "10", "--beta-steps", "0"],
])
def test_analyze_invalid_params_exit_2(argv, capsys):
    code, _, err = run_cli(argv, capsys)
    assert code == 2
    assert err.startswith("error:")


def test_unknown_flag_uses_usage_exit():
    with pytest.raises(SystemExit) as exc:
        cli.main(["analyze", "--alpha", "1/2", "--n", "10", "--frobnicate"])
    assert exc.value.code == 2


# --- simulate ----------------------------------------------------------------------


def test_simulate_writes_reports(tmp_path, capsys):
    scenario = tmp_path / "grow.mit"
    scenario.write_text(GROW)
    out = tmp_path / "run"
    code, stdout, _ = run_cli(["simulate", "--scenario", str(scenario),
                               "--out", str(out)], capsys)
    assert code == 0
    metrics = (out / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "tick,chain_id,n,f,beta,divisions,messages"
    lineage = (out / "lineage.csv").read_text().splitlines()
    assert lineage[0] == "chain_id,parent_id,side,split_height"
    assert len(lineage) == 4  # root plus two children
    assert (out / "events.log").read_text().count("divide") == 1
    assert "1 divisions" in stdout


def test_simulate_seed_override_changes_reports(tmp_path, capsys):
    # beta > 0 makes the reports seed-sensitive: the faulty arrivals land at
    # sampled positions, so the per-tick fault trajectory moves with the seed
    scenario = tmp_path / "fuzzy.mit"
    scenario.write_text(GROW.replace("beta = 0", "beta = 1/5\nblock = 10"))
    outs = []
    for seed in ("11", "12"):
        out = tmp_path / f"run{seed}"
        code, _, _ = run_cli(["simulate", "--scenario", str(scenario),
                              "--seed", seed, "--out", str(out)], capsys)
        assert code == 0
        outs.append((out / "metrics.csv").read_bytes()
                    + (out / "events.log").read_bytes())
    assert outs[0] != outs[1]


def test_simulate_repeats_byte_identical(tmp_path, capsys):
    scenario = tmp_path / "grow.mit"
    scenario.write_text(GROW)
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code, _, _ = run_cli(["simulate", "--scenario", str(scenario),
                              "--seed", "5", "--out", str(out)], capsys)
        assert code == 0
        blobs.append(b"".join((out / f).read_bytes() for f in
                              ("metrics.csv", "lineage.csv", "events.log")))
    assert blobs[0] == blobs[1]


def test_simulate_malformed_scenario_exit_2(tmp_path, capsys):
    scenario = tmp_path / "bad.mit"
    scenario.write_text("[scenario]\nseed = banana\n")
    code, _, err = run_cli(["simulate", "--scenario", str(scenario),
                            "--out", str(tmp_path / "x")], capsys)
    assert code == 2
    assert "line 2" in err


def test_simulate_missing_file_exit_2(tmp_path, capsys):
    code, _, err = run_cli(["simulate", "--scenario",
                            str(tmp_path / "missing.mit"),
                            "--out", str(tmp_path / "x")], capsys)
    assert code == 2
    assert "cannot read scenario" in err


def test_simulate_exit_3_on_observed_violation(tmp_path, capsys, monkeypatch):
    scenario = tmp_path / "grow.mit"
    scenario.write_text(GROW)
    report = MetricsReport(metrics=[], lineage=[], events=[], divisions=[],
                           doublings=[], bound_violations=[],
                           safety_violations=["divergence on root"],
                           messages_total=0, final_chains=[])
    monkeypatch.setattr(cli, "run_scenario", lambda spec, seed=None: report)
    code, _, err = run_cli(["simulate", "--scenario", str(scenario),
                            "--out", str(tmp_path / "x")], capsys)
    assert code == 3
    assert "divergence on root" in err


# --- demos -------------------------------------------------------------------------


def test_divide_demo_prints_message_count(tmp_path, capsys):
    out = tmp_path / "dd"
    code, stdout, _ = run_cli(["divide-demo", "--validators", "7",
                               "--alpha", "1/3", "--seed", "2",
                               "--out", str(out)], capsys)
    assert code == 0
    assert "7 proposals + 49 acknowledgements" in stdout
    assert (out / "lineage.csv").read_text().splitlines()[0] == \
        "chain_id,parent_id,side,split_height"
    # the two rosters partition the original seven validators
    rosters = [line.split(": ")[1].split(", ")
               for line in stdout.splitlines() if line.startswith("  demo.")]
    names = sorted(name for roster in rosters for name in roster)
    assert names == [f"v{i:03d}" for i in range(7)]


def test_divide_demo_bad_alpha_exit_2(capsys):
    code, _, err = run_cli(["divide-demo", "--alpha", "zero"], capsys)
    assert code == 2
    assert err.startswith("error:")


def test_xfer_demo_completes_transfer(tmp_path, capsys):
    out = tmp_path / "xfer"
    code, stdout, _ = run_cli(["xfer-demo", "--seed", "1",
                               "--out", str(out)], capsys)
    assert code == 0
    assert "resolve on src: claimed" in stdout
    assert "owner bob" in stdout
    registry = json.loads((out / "registry.json").read_text())
    assert bytes.fromhex(registry["chain"]) == b"src"
    assert len(registry["validators"]) == 4
    assert (out / "lock_proof.bin").stat().st_size > 0


def test_demo_outputs_are_byte_identical_across_runs(tmp_path, capsys):
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code, _, _ = run_cli(["xfer-demo", "--seed", "9", "--out", str(out)],
                             capsys)
        assert code == 0
        blobs.append((out / "lock_proof.bin").read_bytes()
                     + (out / "registry.json").read_bytes()
                     + (out / "transfer.log").read_bytes())
    assert blobs[0] == blobs[1]


# --- verify-proof ------------------------------------------------------------------


@pytest.fixture()
def proof_files(tmp_path, capsys):
    out = tmp_path / "xfer"
    assert run_cli(["xfer-demo", "--out", str(out)], capsys)[0] == 0
    return out / "lock_proof.bin", out / "registry.json"


def test_verify_proof_accepts_fresh_proof(proof_files, capsys):
    proof, registry = proof_files
    code, stdout, _ = run_cli(["verify-proof", "--proof", str(proof),
                               "--registry", str(registry)], capsys)
    assert code == 0
    assert stdout.strip() == "verdict 1"


def test_verify_proof_stale_height_exit_1(proof_files, capsys):
    proof, registry = proof_files
    code, stdout, _ = run_cli(["verify-proof", "--proof", str(proof),
                               "--registry", str(registry),
                               "--height", "100000"], capsys)
    assert code == 1
    assert "stale tag" in stdout


def test_verify_proof_quorum_shortfall_names_quorum(proof_files, tmp_path,
                                                    capsys):
    proof, registry = proof_files
    data = json.loads(registry.read_text())
    # a bigger roster raises the quorum above the four collected signatures
    for i in range(5):
        fake = b"ghost%d" % i
        data["validators"].append({"id": fake.hex(),
                                   "public_key": (b"pk" + fake).hex(),
                                   "verification_key": (b"k" + fake).hex()})
    bigger = tmp_path / "bigger.json"
    bigger.write_text(json.dumps(data))
    code, stdout, _ = run_cli(["verify-proof", "--proof", str(proof),
                               "--registry", str(bigger)], capsys)
    assert code == 1
    assert "quorum" in stdout


def test_verify_proof_tampered_key_exit_1(proof_files, tmp_path, capsys):
    proof, registry = proof_files
    data = json.loads(registry.read_text())
    key = bytearray.fromhex(data["validators"][0]["verification_key"])
    key[0] ^= 0xFF
    data["validators"][0]["verification_key"] = bytes(key).hex()
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(data))
    code, stdout, _ = run_cli(["verify-proof", "--proof", str(proof),
                               "--registry", str(tampered)], capsys)
    assert code == 1
    assert "invalid signature" in stdout


def test_verify_proof_unparseable_inputs_exit_2(proof_files, tmp_path, capsys):
    proof, registry = proof_files
    code, _, err = run_cli(["verify-proof", "--proof", str(registry),
                            "--registry", str(registry)], capsys)
    assert code == 2 and "cannot parse proof" in err
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{\"validators\": 3}")
    code, _, err = run_cli(["verify-proof", "--proof", str(proof),
                            "--registry", str(garbage)], capsys)
    assert code == 2 and "cannot parse registry" in err
