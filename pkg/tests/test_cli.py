import shutil
from pathlib import Path

import pytest

from caplab.cli import main

CONFIGS = Path(__file__).parent.parent / "configs"


@pytest.fixture(scope="module")
def rooms_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "rooms.dom"
    assert main(["build", "--family", "rooms", "--a", "2", "--J", "2", "-o", str(path)]) == 0
    return path


@pytest.mark.slow
def test_build_variants(tmp_path, capsys, rooms_file):
    assert rooms_file.read_text().startswith("caplab-domain 1\n")
    assert main(["build", "--family", "tree", "--s", "3", "--q", "1.5", "--J", "2"]) == 0
    assert capsys.readouterr().out.startswith("caplab-domain 1\n")
    out = tmp_path / "rep.dom"
    assert main(["build", "--family", "replacement", "--base", str(rooms_file), "--max-generation", "9", "-o", str(out)]) == 0
    assert "E_" in out.read_text()
    assert main(["build", "--family", "replacement"]) == 2


def test_whitney(rooms_file, tmp_path, capsys):
    cubes = tmp_path / "cubes.txt"
    assert main(["whitney", str(rooms_file), "--max-generation", "9", "--verify", "-o", str(cubes)]) == 0
    out = capsys.readouterr().out
    assert "violations 0" in out
    lines = cubes.read_text().splitlines()
    assert sum(line.endswith(" *") for line in lines) == 1


def test_content_from_tag_and_file(rooms_file, tmp_path, capsys):
    assert main(["content", "--q", "1", "--domain", str(rooms_file), "--set", "E_2"]) == 0
    assert "dyadic 0.04419417382415922" in capsys.readouterr().out
    fam = tmp_path / "fam.txt"
    fam.write_text("# two quarter squares, circumscribed radius sqrt(2)/4 each\nn 2\n1 0 0\n1 1 1\n")
    assert main(["content", "--q", "2", "--family", str(fam)]) == 0
    assert "dyadic 0.25\n" in capsys.readouterr().out
    assert main(["content", "--q", "2"]) == 2


def test_capacity_window_and_global(rooms_file, tmp_path, capsys):
    fld = tmp_path / "u.fld"
    assert main(["capacity", str(rooms_file), "--set", "E_2", "--field", str(fld)]) == 0
    out = capsys.readouterr().out
    assert "mode windowed\nupper_bound true" in out
    assert fld.read_bytes().startswith(b"caplab-field 1")
    windowed = float(out.split()[1])
    assert main(["capacity", str(rooms_file), "--set", "E_2", "--global"]) == 0
    glob = float(capsys.readouterr().out.split()[1])
    assert windowed >= glob


def test_sjohn(rooms_file, capsys):
    assert main(["sjohn", str(rooms_file), "--s", "2", "--h", "1/1024", "--samples", "4", "--paths"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("s 2.0\nh 0.0009765625\nC ")
    assert "\npath " in out
    assert main(["sjohn", str(rooms_file), "--s", "2", "--h", "1/256", "--point", "0,511"]) == 2


@pytest.mark.slow
def test_experiment_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: counterexample\nfamily: branching_tree\nn: 2\ns: 2\np: 2\nq: 1\n")
    assert main(["experiment", "--config", str(bad)]) == 2
    assert "borderline" in capsys.readouterr().err

    cfg = tmp_path / "s1.yaml"
    shutil.copy(CONFIGS / "sharpness_s1.yaml", cfg)
    (tmp_path / "out").mkdir()
    assert main(["experiment", "--config", str(cfg)]) == 0
    assert "result: PASS" in capsys.readouterr().out
    assert (tmp_path / "out" / "sharpness_s1.csv").exists()
