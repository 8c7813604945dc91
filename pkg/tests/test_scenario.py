import pytest

from cbdc.errors import ConfigError
from cbdc.scenario import bundled_scenarios, load_scenario, parse_scenario

BASE = """\
name: t
seed: 3
topology:
  validators: 4
  accounts:
    - {id: alice, msb: msb0, balance: 10}
  wallets:
    - {id: w}
script:
  - {at: 0, action: withdraw, wallet: w, account: alice, amount: 5}
"""


def test_parse_minimal():
    sc = parse_scenario(BASE)
    assert (sc.name, sc.seed, sc.validators) == ("t", 3, 4)
    assert sc.accounts[0].account_id == "alice" and sc.accounts[0].balance == 10
    (action,) = sc.script
    assert action.kind == "withdraw" and action["amount"] == 5 and action.index == 0


@pytest.mark.parametrize("path", bundled_scenarios(), ids=lambda p: p.stem)
def test_bundled_scenarios_parse(path):
    sc = load_scenario(path, require_script=True)
    assert sc.script and sc.expect
    assert sc.validators >= 4


def errors_for(text):
    with pytest.raises(ConfigError) as info:
        parse_scenario(text, "s.yaml", require_script=True)
    return str(info.value)


def test_unknown_field_reports_line():
    msg = errors_for(BASE + "colour: blue\n")
    assert "s.yaml:11" in msg and "colour" in msg


def test_type_error_reports_field_path_and_line():
    msg = errors_for(BASE.replace("amount: 5", "amount: five"))
    assert "s.yaml:10" in msg and "script[0].amount" in msg


def test_too_few_validators():
    msg = errors_for(BASE.replace("validators: 4", "validators: 3"))
    assert "validators" in msg


def test_unknown_action():
    assert "teleport" in errors_for(BASE.replace("action: withdraw", "action: teleport"))


def test_unknown_wallet_reference():
    assert "nobody" in errors_for(BASE.replace("wallet: w,", "wallet: nobody,"))


def test_script_required_for_run():
    with pytest.raises(ConfigError):
        parse_scenario("name: x\n", require_script=True)
    assert parse_scenario("name: x\n").script == ()


def test_yaml_syntax_error():
    assert "s.yaml:2" in errors_for("name: [\nseed: :\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "absent.yaml")


def test_bad_byzantine_behavior():
    text = BASE + "network:\n  byzantine: {msb1: sleepy}\n"
    msg = errors_for(text)
    assert "s.yaml:12" in msg and "byzantine.msb1" in msg
