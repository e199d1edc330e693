import json
import subprocess
import sys
from pathlib import Path

import tomli

from heightgap import cli
from heightgap.config import RunConfig

SPECS = Path(__file__).resolve().parents[1] / "specs"
IDENT = '[["1","0"],["0","1"]]'


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_height_identity_is_zero(capsys):
    code, out, _ = run(capsys, "height", "--matrix", IDENT)
    assert code == 0
    doc = json.loads(out)
    assert doc["format_version"] == 1 and doc["command"] == "height"
    assert doc["result"]["total"] == 0


def test_height_set_over_gaussian_field(capsys):
    code, out, _ = run(capsys, "height", "--field", "[1,0,1]", "--matrix", IDENT,
                       "--matrix", '[["2","0"],["0","1"]]')
    assert code == 0
    assert json.loads(out)["result"]["size"] == 2


def test_dump_config_defaults(capsys):
    code, out, _ = run(capsys, "nheight", "--dump-config", "--matrix", IDENT)
    assert code == 0
    cfg = tomli.loads(out)
    assert cfg["precision_bits"] == 192 and cfg["n_max"] == 8 and cfg["seed"] == 42


def test_flag_overrides_file_with_warning(capsys, tmp_path):
    p = tmp_path / "run.toml"
    p.write_text("n_max = 3\n")
    code, out, err = run(capsys, "nheight", "--config", str(p), "--nmax", "2", "--dump-config", "--matrix", IDENT)
    assert code == 0
    assert tomli.loads(out)["n_max"] == 2
    assert "n_max" in err and "overrides" in err


def test_malformed_rational_names_location(capsys):
    code, _, err = run(capsys, "height", "--matrix", '[["3//2","0"],["0","1"]]')
    assert code == 1
    assert "matrices[0][0][0]" in err and "3//2" in err


def test_malformed_rational_in_spec(capsys, tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text('format_version = 1\nname = "bad"\n[field]\nminpoly = [1, 0, 1]\n'
                 '[lattice]\ngenerators = [[["3//2", "0"], ["0", "1"]]]\n')
    code, _, err = run(capsys, "covol", "--spec", str(p))
    assert code == 1 and "3//2" in err and "generators" in err


def test_unknown_config_key(capsys, tmp_path):
    p = tmp_path / "run.toml"
    p.write_text("bogus = 1\n")
    code, _, err = run(capsys, "nheight", "--config", str(p), "--matrix", IDENT)
    assert code == 1 and "bogus" in err


def test_missing_spec_file(capsys):
    code, _, err = run(capsys, "covol", "--spec", "no/such/spec.toml")
    assert code == 1 and "does not exist" in err


def test_cache_hit_is_byte_identical(capsys, tmp_path):
    args = ["disc-decompose", "--minpoly", "[-1,-1,1]"]
    code1, out1, _ = run(capsys, *args)
    assert any(Path(tmp_path).rglob("*.json"))
    code2, out2, _ = run(capsys, *args)
    assert code1 == code2 == 0 and out1 == out2


def test_output_file(capsys, tmp_path):
    dest = tmp_path / "out.json"
    code, out, _ = run(capsys, "zeta", "--minpoly", "[1,0,1]", "-o", str(dest))
    assert code == 0 and out == ""
    assert json.loads(dest.read_text())["command"] == "zeta"


def test_gap_scan_csv(capsys, tmp_path):
    csv = tmp_path / "scan.csv"
    code, out, _ = run(capsys, "gap-scan", "--bianchi", "1", "--nmax", "4", "--csv", str(csv))
    assert code == 0
    lines = csv.read_text().splitlines()
    assert len(lines) == 2 and lines[0].split(",")[0] == "lattice"
    assert lines[1].startswith("bianchi-1,2,")
    assert json.loads(out)["result"]["rows"][0]["verdict"] == "dense-evidence"


def test_unipotent_spec_gap_check(capsys):
    code, out, _ = run(capsys, "gap-check", "--spec", str(SPECS / "unipotent.toml"), "--nmax", "4")
    assert code == 0
    assert json.loads(out)["result"]["verdict"] == "non-dense-evidence"


def test_mobius_inspect_word(capsys):
    code, out, _ = run(capsys, "mobius-inspect", "--spec", str(SPECS / "bianchi1.toml"), "--word", "bc")
    assert code == 0
    assert "type" in json.dumps(json.loads(out)["result"])


def test_config_toml_roundtrip():
    cfg = RunConfig(command="gap-scan", bianchi=[1, 2], n_max=5, eps_grid=[0.1, 0.5])
    back = RunConfig.from_toml(cfg.to_toml())
    assert back.to_dict() == cfg.to_dict()


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "heightgap.cli", "height", "--matrix", IDENT, "--no-cache"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["result"]["total"] == 0
