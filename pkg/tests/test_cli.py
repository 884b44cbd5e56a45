import json

import pytest

from harnesslab.cli import EXIT_ASSERT, EXIT_CONFIG, EXIT_OK, build_parser, main, run

SPAN2 = {"d": 1, "support": [{"offset": [-1], "prob": 0.5}, {"offset": [1], "prob": 0.5}]}
THREE = {"d": 1, "support": [{"offset": [0], "prob": 0.5}, {"offset": [1], "prob": 0.25},
                             {"offset": [2], "prob": 0.25}]}


def go(tmp_path, name, sub, cfg, *flags):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    code = main([sub, "--config", str(path), "--out", str(out), *flags])
    return code, out


def no_partials(out):
    return not [p for p in out.iterdir() if p.name.startswith(".partial-")]


def test_validate_rejects_span_two(tmp_path, capsys):
    code, out = go(tmp_path, "bad", "validate", {"kernel": SPAN2})
    assert code == EXIT_CONFIG
    err = json.loads(capsys.readouterr().out)
    assert err["reason"] == "not-strongly-aperiodic"
    assert json.loads((out / "error.json").read_text()) == err
    assert not (out / "meta.json").exists() and no_partials(out)


def test_validate_accepts(tmp_path):
    code, out = go(tmp_path, "ok", "validate", {"kernel": THREE})
    assert code == EXIT_OK
    info = json.loads((out / "validation.json").read_text())
    assert info["accepted"] and info["mean"] == [0.75]


def test_limits_defaults(tmp_path):
    code = main(["limits", "--out", str(tmp_path / "lim")])
    assert code == EXIT_OK
    lines = (tmp_path / "lim" / "limits.csv").read_bytes().split(b"\n")
    assert lines[0] == b"s,q,t,r,gamma1,gamma2,zcov" and b"\r" not in lines[1]
    assert len([l for l in lines if l]) == 1 + 45
    meta = json.loads((tmp_path / "lim" / "meta.json").read_text())
    assert meta["files"] == ["limits.csv"] and meta["seed"] == 0 and meta["threads"] == 1
    assert meta["version"].startswith("0.1.0") and meta["backend"]


@pytest.mark.parametrize("cfg,reason", [
    ({"kernel": THREE, "bogus": 1}, "invalid-config"),
    ({"noise": {"family": "cauchy"}}, "invalid-config"),
    ({"n": 8}, "invalid-config"),
    ({"replicas": 5}, "invalid-config"),
])
def test_fluct_rejections(tmp_path, capsys, cfg, reason):
    code, out = go(tmp_path, "f", "fluct", cfg)
    assert code == EXIT_CONFIG
    assert json.loads(capsys.readouterr().out)["reason"] == reason
    assert no_partials(out)


def test_unreadable_config(tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    code = main(["limits", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert json.loads((tmp_path / "o" / "error.json").read_text())["reason"] == "invalid-config"


def test_assert_exit_code(tmp_path):
    # listing n in decreasing order breaks the monotone-error check
    cfg = {"u0": "sin", "n_list": [256, 16]}
    assert go(tmp_path, "h1", "hydro", cfg)[0] == EXIT_OK
    code, out = go(tmp_path, "h2", "hydro", cfg, "--assert")
    assert code == EXIT_ASSERT
    meta = json.loads((out / "meta.json").read_text())
    assert meta["assert"]["failures"]


@pytest.mark.parametrize("sub,cfg,fname", [
    ("fluct", {"n": 64, "replicas": 40, "initial": {"variant": "iid"}}, "cov_estimate.csv"),
    ("fluct", {"n": 64, "replicas": 40, "initial": {"variant": "pi0", "K": 100}}, "cov_estimate.csv"),
    ("scaling", {"t_list": [4, 16, 64], "replicas": 50}, "scaling.csv"),
    ("invariant", {"L": 4, "mc_replicas": 60, "K": 100, "kernel": THREE,
                   "convergence": {"t_list": [0, 5], "replicas": 30}}, "convergence.csv"),
    ("simulate", {"t": 5, "window": [0, 6], "replicas": 7}, "heights.csv"),
])
def test_byte_identical_across_threads(tmp_path, sub, cfg, fname):
    c1, o1 = go(tmp_path, "a", sub, cfg, "--threads", "1", "--seed", "11")
    c2, o2 = go(tmp_path, "b", sub, cfg, "--threads", "4", "--seed", "11")
    assert c1 == c2 == EXIT_OK
    for f in json.loads((o1 / "meta.json").read_text())["files"]:
        assert (o1 / f).read_bytes() == (o2 / f).read_bytes()
    assert (o1 / fname).exists() and no_partials(o1)
    meta = json.loads((o2 / "meta.json").read_text())
    assert meta["threads"] == 4 and meta["seed"] == 11 and meta["config"] == cfg


def test_seed_changes_output(tmp_path):
    cfg = {"t": 3, "window": [0, 3]}
    _, a = go(tmp_path, "s1", "simulate", cfg, "--seed", "1")
    _, b = go(tmp_path, "s2", "simulate", cfg, "--seed", "2")
    assert (a / "heights.csv").read_bytes() != (b / "heights.csv").read_bytes()


def test_seed_precedence(tmp_path):
    cfg = {"t": 3, "window": [0, 3], "seed": 5}
    _, a = go(tmp_path, "p1", "simulate", cfg)
    _, b = go(tmp_path, "p2", "simulate", cfg, "--seed", "9")
    assert json.loads((a / "meta.json").read_text())["seed"] == 5
    assert json.loads((b / "meta.json").read_text())["seed"] == 9


def test_meta_reruns_exactly(tmp_path):
    _, a = go(tmp_path, "r1", "simulate", {"t": 4, "window": [-2, 2], "kernel": THREE}, "--seed", "3")
    meta = json.loads((a / "meta.json").read_text())
    code = run(meta["subcommand"], meta["config"], tmp_path / "r2", meta["seed"], meta["threads"])
    assert code == EXIT_OK
    assert (a / "heights.csv").read_bytes() == (tmp_path / "r2" / "heights.csv").read_bytes()


def test_simulate_two_dimensions(tmp_path):
    k2 = {"d": 2, "support": [{"offset": [0, 0], "prob": 1 / 3}, {"offset": [1, 0], "prob": 1 / 3},
                              {"offset": [0, 1], "prob": 1 / 3}]}
    code, out = go(tmp_path, "d2", "simulate", {"kernel": k2, "t": 3, "window": [[0, 0], [2, 2]]})
    assert code == EXIT_OK
    assert (out / "heights.csv").read_text().splitlines()[0] == "replica,x1,x2,h"


def test_help_documents_cost():
    text = build_parser().format_help()
    assert "n^{3/2}" in text and "Exit codes" in text
