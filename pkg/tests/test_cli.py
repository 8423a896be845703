import glob
import json
import os
import re
import sys

import pytest

from margcomp import cli
from margcomp.protocol import send_x, write_instance, AND
from margcomp.subadditivity import IdentityViolation

HERE = os.path.dirname(os.path.abspath(__file__))
GOLDEN = os.path.join(HERE, "golden")
SRC = os.path.join(HERE, os.pardir, "src", "margcomp")
DETERMINISTIC = [t for t in cli.TASKS if t not in cli.STOCHASTIC]


def _slug(name):
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_")


def _report(argv):
    rep, code = cli.run(cli.config_from_args(cli.parser().parse_args(argv)))
    return rep, code


def _golden_cases():
    out = []
    for path in sorted(glob.glob(os.path.join(GOLDEN, "*.json"))):
        with open(path) as fh:
            out.append((os.path.basename(path), json.load(fh)["argv"]))
    return out


@pytest.mark.parametrize("fname,argv", _golden_cases())
def test_golden_reports(fname, argv):
    rep, code = _report(argv)
    with open(os.path.join(GOLDEN, fname)) as fh:
        want = json.load(fh)
    assert code == want["exit"]
    assert json.loads(cli.dumps(rep)) == want["report"]


def test_goldens_exist():
    assert len(_golden_cases()) >= 20


def test_exit_zero_and_report_file(tmp_path):
    out = tmp_path / "r.json"
    assert cli.main(["witness", "--instance", "send-x/AND", "--report", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["pass"] is True and rep["config"]["task"] == "witness"


def test_exit_one_on_failed_check(capsys):
    # 1000 trials with the default K leave the interval straddling 0
    code = cli.main(["compress", "commfree", "--instance", "send-x/AND", "--seed", "3",
                     "--trials", "1000"])
    rep = json.loads(capsys.readouterr().out)
    assert code == 1
    assert rep["pass"] is False
    assert [c["name"] for c in rep["checks"] if not c["pass"]] == ["compress.ci_low_positive"]


def test_identity_violation_reported_as_failure(monkeypatch):
    def boom(cfg, p, f, g):
        raise IdentityViolation("forced")
    monkeypatch.setitem(cli.RUNNERS, "witness", boom)
    rep, code = _report(["witness", "--instance", "send-x/AND"])
    assert code == 1
    assert rep["checks"][0]["name"] == "identities"


@pytest.mark.parametrize("argv", [
    ["compress", "general", "--instance", "send-x/AND"],                 # no seed
    ["witness", "--instance", "no-such-instance"],
    ["witness", "--instance", "send-x/AND", "--trials", "10"],
    ["witness", "--instance", "send-x/AND", "--beta", "1/2"],
    ["witness", "--instance", "send-x/AND", "--I", "1/2"],
    ["smooth", "--instance", "send-x/AND", "--block", "4"],
    ["construct", "--instance", "P0/XOR"],                               # zero advantage
    ["compress", "external", "--instance", "random/AND", "--seed", "1", "--trials", "1000"],
])
def test_exit_two_on_bad_input(argv, capsys):
    assert cli.main(argv) == 2
    cap = capsys.readouterr()
    assert cap.out == ""
    assert cap.err.startswith("margcomp:")


def test_malformed_instance_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"X": [0, 1]}')
    assert cli.main(["witness", "--instance", str(bad)]) == 2
    assert capsys.readouterr().out == ""


def test_instance_file_roundtrip(tmp_path):
    path = tmp_path / "sx.json"
    write_instance(str(path), send_x(), AND())
    a, _ = _report(["witness", "--instance", str(path)])
    b, _ = _report(["witness", "--instance", "send-x/AND"])
    assert a["result"] == b["result"]


def test_same_seed_same_bytes():
    argv = ["compress", "rounds", "--instance", "send-x/AND", "--seed", "9", "--trials", "1000",
            "--I", "8", "--K", "0"]
    assert cli.dumps(_report(argv)[0]) == cli.dumps(_report(argv)[0])
    other = argv[:]
    other[other.index("9")] = "10"
    assert cli.dumps(_report(other)[0]) != cli.dumps(_report(argv)[0])


def test_oracle_silent_xor_is_zero():
    rep, code = _report(["oracle", "--instance", "P0/XOR", "--C", "0"])
    assert code == 0 and rep["result"]["value"] == "0/1"


def test_batch_worst_exit(tmp_path, capsys):
    cfg = tmp_path / "b.json"
    cfg.write_text(json.dumps([["oracle", "--instance", "P0/XOR"],
                               ["construct", "--instance", "P0/XOR"]]))
    assert cli.main(["batch", str(cfg)]) == 2


@pytest.mark.slow
def test_certificate_registry_covered():
    """Every certificate name defined in the source shows up in some report."""
    seen = set()
    for t in DETERMINISTIC:
        for n in sorted(cli.named_instances()):
            try:
                rep, _ = _report([t, "--instance", n])
            except cli.PRECONDITION_ERRORS:
                continue
            seen |= {c["name"] for c in rep["checks"]}
    for comp in cli.COMPRESSORS:
        rep, _ = _report(["compress", comp, "--instance", "send-x/AND", "--seed", "1",
                          "--trials", "1000", "--I", "8", "--K", "0"])
        seen |= {c["name"] for c in rep["checks"]}
    rep, _ = _report(["compress", "commfree", "--instance", "random/AND", "--seed", "1",
                      "--trials", str(cli.TV_TRIALS), "--I", "8", "--K", "0"])
    seen |= {c["name"] for c in rep["checks"]}
    defined = set()
    for path in glob.glob(os.path.join(SRC, "*.py")):
        with open(path) as fh:
            defined |= set(re.findall(r'Certificate\(\s*"([^"%]+)"', fh.read()))
    # "identities" is only emitted on a violation; see test_identity_violation_reported_as_failure
    defined.discard("identities")
    missing = sorted(d for d in defined if not any(s == d or s.endswith("." + d) for s in seen))
    assert not missing


def regenerate():
    for f in glob.glob(os.path.join(GOLDEN, "*.json")):
        os.remove(f)
    for t in DETERMINISTIC:
        for n in sorted(cli.named_instances()):
            argv = [t, "--instance", n]
            try:
                rep, code = _report(argv)
            except cli.PRECONDITION_ERRORS:
                continue
            with open(os.path.join(GOLDEN, "%s__%s.json" % (t, _slug(n))), "w") as fh:
                fh.write(json.dumps({"argv": argv, "exit": code,
                                     "report": json.loads(cli.dumps(rep))},
                                    sort_keys=True, indent=1) + "\n")


if __name__ == "__main__" and "--regen" in sys.argv:
    regenerate()
