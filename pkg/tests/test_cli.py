import csv
import json

import numpy as np
import pytest
from scipy import stats

from aabc.abc import PosteriorSample
from aabc.cli import load_config, main, preset_names
from aabc.evaluation import StudyConfig
from aabc.model import load_reference_set, make_model


def write_config(path, **cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


BALSEL = {"id": "balsel", "config": {"K": 4, "loci": 2}}


def base(**over):
    cfg = {
        "model": BALSEL,
        "n": 5,
        "method": "aabc",
        "M": 1000,
        "acceptance": {"kind": "top_percentile", "fraction": 0.01},
        "pool": {"m": 50},
        "observed": {"truth": [20.0, 2.0]},
        "seed": 3,
    }
    cfg.update(over)
    return cfg


def test_presets_are_valid():
    assert {"balsel-full", "admix-pygmy-shape", "admix-decomposition-t30"} <= set(preset_names())
    for name in preset_names():
        cfg = load_config(name)
        model = make_model(cfg["model"]["id"], **cfg["model"]["config"])
        assert model.in_support(np.asarray(cfg["observed"]["truth"]))
        if "study" in cfg:
            StudyConfig.from_dict(cfg["study"])
    pygmy = load_config("admix-pygmy-shape")
    assert pygmy["model"]["config"] == {"N": 10_000, "t": 771, "n": 604}
    assert load_config("admix-decomposition-t30")["model"]["config"]["t"] == 30


def test_build_pool(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", **base(pool={"m": 100}, n=50))
    assert main(["build-pool", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert "m=100 n=50" in capsys.readouterr().out
    pool = load_reference_set(tmp_path / "o" / "pool.aabc")
    assert (pool.m, pool.n) == (100, 50)
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["command"] == "build-pool" and manifest["config"]["seed"] == 3


def test_build_full_scale_admix_pool(tmp_path):
    cfg = load_config("admix-pygmy-shape")
    cfg["pool"] = {"m": 2}
    path = write_config(tmp_path / "c.json", **cfg)
    assert main(["build-pool", "--config", path, "--out", str(tmp_path / "o")]) == 0
    pool = load_reference_set(tmp_path / "o" / "pool.aabc")
    assert pool.model_config == {"N": 10_000, "t": 771, "n": 604}
    assert pool.n == 604


def test_infer_aabc_row_count(tmp_path):
    cfg = write_config(tmp_path / "c.json", **base(M=5000))
    assert main(["infer", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    post = PosteriorSample.from_csv(tmp_path / "o" / "posterior.csv")
    assert len(post) == 50 and post.method_tag == "aabc"
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["accepted"] == 50 and manifest["method_tag"] == "aabc"


def test_infer_all_accepting_abc_is_prior(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        **base(method="abc", M=2000, acceptance={"kind": "epsilon", "epsilon": 1e300}),
    )
    assert main(["infer", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    post = PosteriorSample.from_csv(tmp_path / "o" / "posterior.csv")
    assert len(post) == 2000
    assert stats.kstest(post.params[:, 0], stats.uniform(0, 50).cdf).pvalue > 0.001
    assert stats.kstest(post.params[:, 1], stats.uniform(0.1, 9.9).cdf).pvalue > 0.001


def test_infer_param_only_on_decomposition_preset(tmp_path):
    cfg = load_config("admix-decomposition-t30")
    cfg.update(M=200, pool={"m": 20})
    path = write_config(tmp_path / "c.json", **cfg)
    assert main(["infer", "--config", path, "--out", str(tmp_path / "o")]) == 0
    post = PosteriorSample.from_csv(tmp_path / "o" / "posterior.csv")
    assert post.method_tag == "aabc_param_only" and len(post) == 2


def test_infer_with_pool_path_and_observed_csv(tmp_path):
    cfg = write_config(tmp_path / "c.json", **base())
    main(["build-pool", "--config", cfg, "--out", str(tmp_path / "p")])
    rng = np.random.default_rng(0)
    g = rng.gamma(0.5, size=(5, 8))
    x = (g.reshape(5, 2, 4) / g.reshape(5, 2, 4).sum(axis=2, keepdims=True)).reshape(5, 8)
    with open(tmp_path / "obs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"a{i}" for i in range(8)])
        w.writerows(x.tolist())
    cfg2 = write_config(
        tmp_path / "c2.json",
        **base(pool={"path": str(tmp_path / "p" / "pool.aabc")}, observed={"path": str(tmp_path / "obs.csv")}),
    )
    assert main(["infer", "--config", cfg2, "--out", str(tmp_path / "o")]) == 0
    wider = {"id": "balsel", "config": {"K": 4, "loci": 3}}
    bad = write_config(tmp_path / "c3.json", **base(observed={"path": str(tmp_path / "obs.csv")}, model=wider))
    assert main(["infer", "--config", bad, "--out", str(tmp_path / "o3")]) == 2


def test_manifest_reruns_identically(tmp_path):
    cfg = write_config(tmp_path / "c.json", **base())
    main(["infer", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "11"])
    main(["infer", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")])
    for name in ("posterior.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_exit_codes(tmp_path):
    out = str(tmp_path / "o")
    empty = write_config(tmp_path / "e.json", **base(acceptance={"kind": "epsilon", "epsilon": 0.0}))
    assert main(["infer", "--config", empty, "--out", out]) == 4
    assert PosteriorSample.from_csv(tmp_path / "o" / "posterior.csv").proposals_total == 1000
    bad_model = write_config(tmp_path / "b.json", **base(model={"id": "nope"}))
    assert main(["infer", "--config", bad_model, "--out", out]) == 2
    no_pool = dict(base())
    del no_pool["pool"]
    assert main(["infer", "--config", write_config(tmp_path / "n.json", **no_pool), "--out", out]) == 2
    both = write_config(tmp_path / "o.json", **base(observed={"truth": [1.0, 1.0], "path": "x.csv"}))
    assert main(["infer", "--config", both, "--out", out]) == 2
    (tmp_path / "j.json").write_text("{not json")
    assert main(["infer", "--config", str(tmp_path / "j.json"), "--out", out]) == 2
    assert main(["infer", "--config", str(tmp_path / "missing.json"), "--out", out]) == 3
    (tmp_path / "bad.aabc").write_bytes(b"junk")
    pool_path = write_config(tmp_path / "p.json", **base(pool={"path": str(tmp_path / "bad.aabc")}))
    assert main(["infer", "--config", pool_path, "--out", out]) == 3
    obs_missing = write_config(tmp_path / "m.json", **base(observed={"path": str(tmp_path / "none.csv")}))
    assert main(["infer", "--config", obs_missing, "--out", out]) == 3


def test_study_and_export(tmp_path):
    study = {"M_reference": 300, "n_test_sets": 6, "m_grid": [30, 300], "acceptance": {"kind": "top_percentile", "fraction": 0.05}}
    cfg = write_config(tmp_path / "c.json", **base(study=study))
    assert main(["study", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    lines = (tmp_path / "s" / "report.csv").read_text().splitlines()
    assert lines[0].startswith("method,m,component,rmse,n_contributing,percent_excess")
    assert {ln.split(",")[0] for ln in lines[1:]} == {"abc", "aabc", "aabc_param_only"}
    assert main(["export-plotdata", str(tmp_path / "s" / "report.csv"), "--out", str(tmp_path / "e")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "e" / "plotdata.csv")))
    series = [r for r in rows if r["method"] == "aabc" and r["component"] == "mu"]
    assert [int(r["m"]) for r in series] == [30, 300]


def test_export_histograms(tmp_path):
    cfg = write_config(tmp_path / "c.json", **base(M=100_000, pool={"m": 20}))
    assert main(["infer", "--config", cfg, "--out", str(tmp_path / "i")]) == 0
    assert main(["export-plotdata", str(tmp_path / "i" / "posterior.csv"), "--out", str(tmp_path / "e")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "e" / "plotdata.csv")))
    for comp in ("theta_1", "theta_2"):
        mine = [r for r in rows if r["component"] == comp]
        assert len(mine) == 40
        assert sum(int(r["count"]) for r in mine) == 1000
    assert main(["export-plotdata", str(tmp_path / "i" / "posterior.csv"), "--out", str(tmp_path / "f"), "--bins", "7"]) == 0
    assert len((tmp_path / "f" / "plotdata.csv").read_text().splitlines()) == 1 + 2 * 7


def test_export_empty_posterior(tmp_path):
    cfg = write_config(tmp_path / "c.json", **base(acceptance={"kind": "epsilon", "epsilon": 0.0}))
    main(["infer", "--config", cfg, "--out", str(tmp_path / "i")])
    assert main(["export-plotdata", str(tmp_path / "i" / "posterior.csv"), "--out", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "plotdata.csv").read_text() == "component,bin,left,right,count\n"
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    assert main(["export-plotdata", str(tmp_path / "x.csv"), "--out", str(tmp_path / "e")]) == 2
    assert main(["export-plotdata", str(tmp_path / "none.csv"), "--out", str(tmp_path / "e")]) == 3


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
