import csv

import pytest

from heatpaths.cli import EXPERIMENTS, ConfigError, fmt, main, parse_config


def test_list(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 8
    assert any(l.startswith("boundary") for l in lines)
    assert set(EXPERIMENTS) == {l.split()[0] for l in lines}


def test_fmt():
    assert fmt(True) == "true"
    assert fmt(3) == "3"
    assert fmt(0.5) == "5.0000000000000000e-01"
    assert fmt(1 - 2j) == "1.0000000000000000e+00-2.0000000000000000e+00j"


@pytest.mark.parametrize(
    "text,needle",
    [
        ("experiment: exactness\nfoo: 1\n", "<t>:2: field 'foo'"),
        ("t: -1\n", "field 't'"),
        ("manifold:\n  kind: sphere\n  radius: 1\n  colour: red\n", "<t>:4: field 'manifold.colour'"),
        ("manifold:\n  radius: 1\n", "missing 'kind'"),
        ("manifold:\n  kind: klein\n", "field 'manifold'"),
        ("family: [plain, wavy]\n", "unknown kernel family"),
        ("experiment: nope\n", "unknown experiment"),
        ("tolerances:\n  sup_error: -2\n", "field 'tolerances.sup_error'"),
        ("N: [4, 0]\n", "field 'N'"),
        ("t: [1\n", "YAML syntax error"),
    ],
)
def test_config_errors(text, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "<t>")
    assert needle in str(exc.value)


def test_valid_config_parses():
    cfg = parse_config("experiment: kernel-converge\nmanifold: {kind: sphere, radius: 2}\nN: [4, 8]\nfamily: ell\n")
    assert cfg["N"] == [4, 8]


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("experiment: exactness\nbogus: 3\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert f"{p}:2: field 'bogus'" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["run", "--out", str(tmp_path)]) == 2


def test_unknown_experiment_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--experiment", "nope"])
    assert exc.value.code == 2


def body(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# heatpaths ") and "schema=1" in lines[0]
    assert lines[1].startswith("# generated ")
    return [lines[0]] + lines[2:]


def test_run_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--experiment", "determinants", "--out", str(a), "--seed", "4"]) == 0
    assert main(["run", "--experiment", "determinants", "--out", str(b), "--seed", "4"]) == 0
    for name in ("determinants.csv", "determinants-checks.csv"):
        assert body(a / name) == body(b / name)
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL " not in out
    rows = list(csv.reader(body(a / "determinants-checks.csv")[1:]))
    assert rows[0] == ["check", "passed", "value", "threshold"]
    assert all(r[1] == "true" for r in rows[1:])


def test_failing_check_exits_one(tmp_path, capsys):
    p = tmp_path / "strict.yaml"
    p.write_text("experiment: exactness\nN: [1, 2]\nresolution: 16\ntolerances:\n  sup_error: 1.0e-30\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_asymptotics_runs(tmp_path):
    assert main(["run", "--experiment", "asymptotics", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "asymptotics.csv").exists()


def test_wrong_manifold_is_config_error(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("experiment: boundary\nmanifold: {kind: sphere}\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path)]) == 2
