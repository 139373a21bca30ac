import subprocess
import sys

import pytest

from scsat.cli import main
from scsat.config import ConfigError, ExperimentConfig, load, parse_pairs


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_version(capsys):
    rc, out, _ = run(capsys, "--version")
    assert rc == 0 and out.startswith("scsat ")


def test_no_command(capsys):
    assert run(capsys)[0] == 2


def test_dump_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\neps = 0.40\nW = 4\nL = 50\n")
    rc, out, _ = run(capsys, "de", "--config", str(cfg), "--set", "eps=0.41", "--W", "5",
                     "--dump-config")
    assert rc == 0
    assert "eps = 0.41\n" in out and "W = 5\n" in out and "L = 50\n" in out


@pytest.mark.parametrize("argv", [
    ["de", "--W", "0"],
    ["de", "--set", "bogus=1"],
    ["de", "--set", "eps"],
    ["de", "--L", "ten"],
    ["de", "--system", "turbo"],
    ["continuum", "--alpha", "0.9"],
    ["de", "--system", "table"],
])
def test_config_errors(capsys, argv):
    rc, _, err = run(capsys, *argv)
    assert rc == 2 and "error" in err


def test_missing_config_file(capsys, tmp_path):
    assert run(capsys, "de", "--config", str(tmp_path / "none.cfg"))[0] == 2


def test_de_verdicts(capsys, tmp_path):
    rc, out, _ = run(capsys, "de", "--eps", "0.47", "--L", "100", "--W", "8", "--out", str(tmp_path))
    assert rc == 0 and "saturated" in out and "not saturated" not in out
    rc, out, _ = run(capsys, "de", "--eps", "0.47", "--L", "100", "--W", "1", "--out", str(tmp_path))
    assert rc == 0 and "stalled at u_BP" in out


def test_potential_identity(capsys, tmp_path):
    rc, out, _ = run(capsys, "potential", "--system", "identity", "--out", str(tmp_path))
    assert rc == 0 and "V ≡ 0" in out


def test_potential_bec36(capsys, tmp_path):
    rc, out, _ = run(capsys, "potential", "--eps", "0.47", "--n-grid", "512", "--out", str(tmp_path))
    assert rc == 0 and "unique global minimizer at u_opt" in out


def test_numeric_failure_exit_code(capsys, tmp_path):
    rc, _, err = run(capsys, "continuum", "--eps", "0.495", "--alpha", "0.1", "--task", "bvp",
                     "--out", str(tmp_path))
    assert rc == 3 and "numeric error" in err


def test_interleaver_output_is_deterministic(capsys, tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        rc, text, _ = run(capsys, "interleaver", "--L", "6", "--W", "3", "--M", "9", "--seed", "4",
                          "--out", str(d))
        assert rc == 0 and "exact M/W" in text
        outs.append((d / "interleaver.txt").read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].startswith(b"# scsat ")


def test_exit_chart_csv_deterministic(capsys, tmp_path):
    blobs = []
    for k in range(2):
        d = tmp_path / str(k)
        rc, text, _ = run(capsys, "exit-chart", "--system", "bicm", "--mapping", "optimized-id",
                          "--snr", "5.76", "--out", str(d))
        assert rc == 0 and "residual" in text
        blobs.append(sorted((p.name, p.read_bytes()) for p in d.iterdir()))
    assert blobs[0] == blobs[1]


def test_thresholds_bec(capsys, tmp_path):
    rc, out, _ = run(capsys, "thresholds", "--system", "bec36", "--out", str(tmp_path))
    assert rc == 0 and "0.42943" in out and "0.48815" in out


def test_console_script(tmp_path):
    res = subprocess.run([sys.executable, "-m", "scsat.cli", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "scsat" in res.stdout


def test_config_roundtrip_and_digest(tmp_path):
    cfg = load(None, {"eps": "0.5", "circular": "yes"})
    assert cfg.eps == 0.5 and cfg.circular is True
    again = load(None, parse_pairs(cfg.dump().splitlines()))
    assert again == cfg
    moved = load(None, {"eps": "0.5", "circular": "yes", "out": str(tmp_path), "threads": 2})
    assert moved.digest() == cfg.digest()
    assert load(None, {"eps": 0.51}).digest() != cfg.digest()


def test_config_parse_errors():
    with pytest.raises(ConfigError):
        parse_pairs(["just text"])
    with pytest.raises(ConfigError):
        parse_pairs(["circular = maybe"])
    with pytest.raises(ConfigError):
        ExperimentConfig(alphas="0.1,x").validate()
