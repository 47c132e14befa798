from __future__ import annotations

import json

import numpy as np
import pytest

from lacwalsh.cli import main
from lacwalsh.dyadic import DyadicFunction


def _body(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    assert lines[0].startswith("# generated ")
    return lines[1:]


def test_carleson_identity_passes(tmp_path, capsys):
    out = tmp_path / "id.csv"
    assert main(["--experiment", "carleson-identity", "--resolution", "8", "--seed", "1",
                 "--trials", "10", "--out", str(out)]) == 0
    assert "PASS" in capsys.readouterr().err
    rows = _body(out)
    assert len(rows) == 11


def test_deterministic_csv_bodies_and_jobs(tmp_path):
    args = ["--experiment", "decompose", "--resolution", "6", "--trials", "4", "--seed", "7"]
    paths = [tmp_path / f"r{i}.csv" for i in range(3)]
    assert main(args + ["--out", str(paths[0])]) == 0
    assert main(args + ["--out", str(paths[1])]) == 0
    assert main(args + ["--out", str(paths[2]), "--jobs", "2"]) == 0
    assert _body(paths[0]) == _body(paths[1]) == _body(paths[2])


def test_seed_changes_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["--experiment", "transform", "--resolution", "6", "--trials", "3", "--seed", "1", "--out", str(a)])
    main(["--experiment", "transform", "--resolution", "6", "--trials", "3", "--seed", "2", "--out", str(b)])
    assert _body(a) != _body(b)


def test_distribution_writes_curve_files(tmp_path):
    out = tmp_path / "dist.csv"
    assert main(["--experiment", "distribution", "--resolution", "8", "--m-range", "2..4", "--out", str(out)]) == 0
    for m in (2, 3, 4):
        assert (tmp_path / f"dist_curve_m{m}.csv").exists()
    header = _body(out)[0].split(",")
    assert "seq_ratio" in header and "ratio" in header


def test_json_envelope(tmp_path):
    out = tmp_path / "t.json"
    assert main(["--experiment", "transform", "--resolution", "5", "--trials", "2", "--format", "json",
                 "--out", str(out)]) == 0
    env = json.loads(out.read_text())
    assert env["passed"] and len(env["input_hash"]) == 64
    assert env["config"]["constants"]["C_dens"] == 16.0


def test_resolution_guard(capsys):
    assert main(["--experiment", "transform", "--resolution", "20"]) == 2
    assert "resolution" in capsys.readouterr().err


@pytest.mark.parametrize("bad", ["C_dens", "C_nope=3", "C_dens=abc"])
def test_bad_set(bad, capsys):
    assert main(["--experiment", "transform", "--resolution", "4", "--set", bad]) == 2
    assert "--set" in capsys.readouterr().err


def test_set_overrides_constant(tmp_path):
    out = tmp_path / "z.json"
    assert main(["--experiment", "transform", "--resolution", "4", "--trials", "1", "--set", "C_tree=2.5",
                 "--format", "json", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["config"]["constants"]["C_tree"] == 2.5


def test_config_file_unknown_key_and_syntax(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"resolution": 6, "colour": "red"}))
    assert main(["--experiment", "transform", "--config", str(cfg)]) == 2
    assert "colour" in capsys.readouterr().err
    cfg.write_text('{"resolution": 6,\n "seed": }')
    assert main(["--experiment", "transform", "--config", str(cfg)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_bad_lacunary_list(capsys):
    assert main(["--experiment", "transform", "--resolution", "6", "--lacunary-list", "4,2,8"]) == 2
    assert "lacunary_list" in capsys.readouterr().err


def test_failed_check_exits_one(tmp_path):
    out = tmp_path / "z.csv"
    assert main(["--experiment", "zygmund", "--resolution", "8", "--m-range", "4..8", "--set", "growth=1.0",
                 "--out", str(out)]) == 1
    assert out.exists()


@pytest.fixture
def certificate(tmp_path):
    cert = tmp_path / "cert.json"
    assert main(["--experiment", "decompose", "--resolution", "6", "--trials", "1", "--seed", "3",
                 "--out", str(tmp_path / "d.csv"), "--certificate", str(cert)]) == 0
    return cert


def test_certificate_roundtrip(certificate, tmp_path):
    assert main(["--experiment", "verify-certificate", "--certificate", str(certificate),
                 "--out", str(tmp_path / "v.csv")]) == 0


def test_certificate_tamper(certificate, tmp_path, capsys):
    data = json.loads(certificate.read_text())
    data[0]["tree_top_length_sum"] += 0.125
    certificate.write_text(json.dumps(data))
    assert main(["--experiment", "verify-certificate", "--certificate", str(certificate),
                 "--out", str(tmp_path / "v.csv")]) == 1
    err = capsys.readouterr().err
    assert "tree_top_length_sum" in err and "FAIL" in err


def test_certificate_resolution_mismatch(certificate, tmp_path, capsys):
    fpath = tmp_path / "f.json"
    fpath.write_text(json.dumps(DyadicFunction(5, np.ones(32)).to_json()))
    assert main(["--experiment", "verify-certificate", "--certificate", str(certificate),
                 "--function", str(fpath)]) == 2
    assert "resolution" in capsys.readouterr().err


def test_malformed_certificate(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["--experiment", "verify-certificate", "--certificate", str(bad)]) == 2


def test_partial_outputs_removed(tmp_path, monkeypatch):
    import lacwalsh.cli as cli

    out = tmp_path / "dist.csv"
    real_replace = cli.os.replace
    calls = []

    def flaky(src, dst):
        calls.append(dst)
        if len(calls) == 2:
            raise OSError("disk full")
        return real_replace(src, dst)

    monkeypatch.setattr(cli.os, "replace", flaky)
    with pytest.raises(OSError):
        main(["--experiment", "distribution", "--resolution", "6", "--m-range", "2..3", "--out", str(out)])
    assert not list(tmp_path.iterdir())
