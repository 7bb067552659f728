"""Scenario transcripts checked against frozen golden files.

Set RINGLEDGER_REGEN_GOLDEN=1 to rewrite the golden files after an
intentional behaviour change, then review the diff.
"""

import os
from pathlib import Path

import pytest

from ringledger.cli import run, run_scenario
from ringledger.group import Profile

HERE = Path(__file__).parent
SCENARIOS = sorted((HERE / "scenarios").glob("*.txt"))
SEED = 7
REGEN = os.environ.get("RINGLEDGER_REGEN_GOLDEN") == "1"


def transcript(script: Path, profile: Profile = Profile.TOY_LARGE) -> str:
    return "\n".join(run_scenario(script.read_text(), profile, SEED)) + "\n"


def footer(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.startswith("# ") and "=" in line:
            for field in line[2:].split():
                if "=" in field:
                    k, v = field.split("=", 1)
                    out[k] = v
    return out


@pytest.mark.parametrize("script", SCENARIOS, ids=lambda p: p.stem)
def test_matches_golden(script):
    golden = HERE / "golden" / f"{script.stem}.out"
    text = transcript(script)
    if REGEN:
        golden.write_text(text)
    assert golden.exists(), f"no golden file for {script.stem}; run with RINGLEDGER_REGEN_GOLDEN=1"
    assert text == golden.read_text()


@pytest.mark.parametrize("script", SCENARIOS, ids=lambda p: p.stem)
def test_stable_conserved_and_replayable(script):
    first, second = transcript(script), transcript(script)
    assert first == second
    f = footer(first)
    assert f["ok"] == "True" and f["replay_match"] == "True"
    assert int(f["minted"]) == int(f["circulating"]) + int(f["custodial"])


def test_empty_script_is_genesis_only():
    lines = transcript(HERE / "scenarios" / "empty.txt").splitlines()
    assert lines[0].startswith("# scenario")
    assert lines[1] == "# height=0"
    assert not any(line.startswith(">") for line in lines)


def test_cn_flow_under_full_profile():
    text = transcript(HERE / "scenarios" / "cn_flow.txt", Profile.FULL)
    f = footer(text)
    assert f["ok"] == "True" and f["replay_match"] == "True"
    assert "ring=11" in text and "ring=5" in text


def test_cli_scenario_command(tmp_path, capsys):
    code = run(["scenario", str(HERE / "scenarios" / "policy_refuse.txt"), "--seed", str(SEED)])
    assert code == 0
    assert capsys.readouterr().out == (HERE / "golden" / "policy_refuse.out").read_text()


def test_scenarios_cannot_nest(tmp_path):
    script = tmp_path / "s.txt"
    script.write_text(f"scenario {script}\n")
    text = "\n".join(run_scenario(script.read_text(), Profile.TOY_LARGE, 0))
    assert "E_USAGE" in text and "[exit 2]" in text
