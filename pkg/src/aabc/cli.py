"""Command-line front end.

Every command reads one JSON config (a path or the name of a bundled preset),
optionally overridden by ``--seed``, ``--out`` and ``--workers``, and writes
its outputs plus a ``manifest.json`` into the output directory.  A manifest
holds the fully resolved config, so ``aabc <command> --config manifest.json``
reproduces the outputs byte for byte.

Exit statuses: 0 success, 2 config error, 3 I/O error, 4 empty posterior
under a fixed tolerance.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from .abc import METHOD_TAGS, AcceptanceRule, PosteriorSample, run_abc
from .evaluation import REPORT_COLUMNS, StudyConfig, run_study
from .model import (
    ModelError,
    PoolFormatError,
    build_reference_set,
    load_reference_set,
    make_model,
    save_reference_set,
)
from .rand import SeedSpec
from .surrogate import run_aabc, run_aabc_param_only

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_EMPTY = 4


class ConfigError(ValueError):
    """The run config is missing a field or holds an invalid value."""


class EmptyPosterior(RuntimeError):
    pass


def preset_names() -> list:
    files = resources.files("aabc").joinpath("configs").iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".json"))


def load_config(spec: str) -> dict:
    """Read a config from a file path, or from a bundled preset by name."""
    path = Path(spec)
    if path.is_file():
        text = path.read_text()
    elif spec in preset_names():
        text = resources.files("aabc").joinpath("configs", spec + ".json").read_text()
    else:
        raise FileNotFoundError(f"config {spec!r} is neither a file nor a preset ({', '.join(preset_names())})")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {spec}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {spec}: top level must be an object")
    # a manifest carries the resolved config under "config"
    if "config" in cfg and "command" in cfg:
        cfg = cfg["config"]
    return cfg


def _need(cfg: dict, key: str):
    if key not in cfg or cfg[key] is None:
        raise ConfigError(f"config is missing {key!r}")
    return cfg[key]


def _model_from(cfg: dict):
    spec = _need(cfg, "model")
    if not isinstance(spec, dict) or "id" not in spec:
        raise ConfigError("'model' must be an object with an 'id'")
    return make_model(spec["id"], **spec.get("config", {}))


def _seed_from(cfg: dict) -> SeedSpec:
    seed = _need(cfg, "seed")
    if isinstance(seed, dict):
        return SeedSpec.from_dict(seed)
    return SeedSpec(int(seed))


def _rule_from(cfg: dict) -> AcceptanceRule:
    acc = cfg.get("acceptance", {"kind": "top_percentile", "fraction": 0.01})
    if acc.get("kind", "top_percentile") == "epsilon" and acc.get("epsilon") is None:
        raise ConfigError("epsilon acceptance needs a value for 'epsilon'")
    return AcceptanceRule.from_dict(acc)


def _sample_size(cfg: dict, model) -> int:
    n = cfg.get("n") or model.default_n
    if int(n) < 1:
        raise ConfigError("n must be >= 1")
    return int(n)


def read_observed_csv(path, model) -> np.ndarray:
    """One observation per row; a non-numeric first line is taken as a header."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    rows = list(csv.reader(lines))
    if rows:
        try:
            [float(v) for v in rows[0]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise ConfigError(f"{path}: no observations")
    try:
        x = np.array(rows, dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: unreadable observation rows ({exc})") from None
    if x.shape[1] != model.obs_dim:
        raise ConfigError(
            f"{path}: rows have {x.shape[1]} columns, {model.model_id} observations have {model.obs_dim}"
        )
    return x


def _observed(cfg: dict, model, seed: SeedSpec):
    obs = _need(cfg, "observed")
    has_path, has_truth = "path" in obs, "truth" in obs
    if has_path == has_truth:
        raise ConfigError("'observed' needs exactly one of 'path' or 'truth'")
    if has_path:
        x = read_observed_csv(obs["path"], model)
    else:
        truth = np.asarray(obs["truth"], dtype=float)
        n = int(obs.get("n") or _sample_size(cfg, model))
        x = model.simulate(truth, n, seed.child("observed").generator())
    return x, model.summarize(x)


def _pool(cfg: dict, model, n: int, seed: SeedSpec, workers: int):
    pool_cfg = _need(cfg, "pool")
    has_path, has_m = "path" in pool_cfg, "m" in pool_cfg
    if has_path == has_m:
        raise ConfigError("'pool' needs exactly one of 'path' or 'm'")
    if has_path:
        return load_reference_set(pool_cfg["path"], model)
    m = int(pool_cfg["m"])
    if m < 1:
        raise ConfigError("pool m must be >= 1")
    return build_reference_set(model, m, n, seed, workers)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _manifest(command: str, cfg: dict, **extra) -> dict:
    return {"command": command, "config": cfg, **extra}


def cmd_build_pool(cfg: dict, out: Path, workers: int) -> int:
    model = _model_from(cfg)
    seed = _seed_from(cfg)
    n = _sample_size(cfg, model)
    m = int(_need(_need(cfg, "pool"), "m"))
    if m < 1:
        raise ConfigError("pool m must be >= 1")
    t0 = time.perf_counter()
    pool = build_reference_set(model, m, n, seed, workers)
    elapsed = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    save_reference_set(pool, out / "pool.aabc")
    _write_json(
        out / "manifest.json",
        _manifest("build-pool", cfg, model_id=model.model_id, model_config=model.config(), m=m, n=n),
    )
    print(f"m={m} n={n} elapsed={elapsed:.2f}s -> {out / 'pool.aabc'}")
    return EXIT_OK


def cmd_infer(cfg: dict, out: Path, workers: int) -> int:
    model = _model_from(cfg)
    seed = _seed_from(cfg)
    method = _need(cfg, "method")
    if method not in METHOD_TAGS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHOD_TAGS}")
    M = int(_need(cfg, "M"))
    if M < 1:
        raise ConfigError("M must be >= 1")
    rule = _rule_from(cfg)
    n = _sample_size(cfg, model)
    x, s_obs = _observed(cfg, model, seed)
    scales = cfg.get("param_scales")
    extra = {}
    if method == "abc":
        post = run_abc(model, s_obs, M, rule, x.shape[0], seed, workers)
    else:
        pool = _pool(cfg, model, n, seed, workers)
        extra["pool"] = {"m": pool.m, "n": pool.n, "seed": pool.seed}
        if method == "aabc":
            post = run_aabc(model, s_obs, pool, M, rule, seed, scales, workers)
        else:
            post = run_aabc_param_only(model, s_obs, pool, M, rule, x.shape[0], seed, scales, workers)
    out.mkdir(parents=True, exist_ok=True)
    post.to_csv(out / "posterior.csv", p=model.param_dim)
    _write_json(
        out / "manifest.json",
        _manifest(
            "infer",
            cfg,
            method_tag=post.method_tag,
            rule=rule.to_dict(),
            M=M,
            accepted=len(post),
            observed_n=int(x.shape[0]),
            s_obs=[float(v) for v in s_obs],
            seed=seed.to_dict(),
            **extra,
        ),
    )
    print(f"{post.method_tag}: accepted {len(post)} of {M} -> {out / 'posterior.csv'}")
    if len(post) == 0 and rule.kind == "epsilon":
        raise EmptyPosterior(f"no proposal fell within epsilon={rule.epsilon}")
    return EXIT_OK


def cmd_study(cfg: dict, out: Path, workers: int) -> int:
    model = _model_from(cfg)
    seed = _seed_from(cfg)
    study = StudyConfig.from_dict(_need(cfg, "study"))
    report = run_study(model, study, seed, workers=workers)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "report.csv")
    _write_json(out / "manifest.json", _manifest("study", cfg, **report.manifest()))
    print(f"{len(report.rows)} rows -> {out / 'report.csv'}")
    return EXIT_OK


def histogram_rows(sample: PosteriorSample, bins: int, names=None) -> list:
    """Long-format ``(component, bin, left, right, count)`` rows per marginal."""
    rows = []
    for j in range(sample.p if len(sample) else 0):
        v = sample.params[:, j]
        lo, hi = float(v.min()), float(v.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
        name = names[j] if names else f"theta_{j + 1}"
        for b in range(bins):
            rows.append([name, b, repr(float(edges[b])), repr(float(edges[b + 1])), int(counts[b])])
    return rows


def export_plotdata(src: Path, bins: int = 40) -> str:
    """Tidy CSV from a posterior CSV (histograms) or a report CSV (rmse-vs-m series)."""
    text = src.read_text()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if text.startswith("# "):
        sample = PosteriorSample.parse_csv(text)
        header = next(csv.reader([text.splitlines()[1]]))
        w.writerow(["component", "bin", "left", "right", "count"])
        w.writerows(histogram_rows(sample, bins, header[:-1]))
    elif text.startswith(",".join(REPORT_COLUMNS[:3])):
        recs = list(csv.DictReader(io.StringIO(text)))
        w.writerow(["method", "component", "m", "rmse", "percent_excess"])
        recs.sort(key=lambda r: (r["method"], r["component"], int(r["m"])))
        for r in recs:
            w.writerow([r["method"], r["component"], r["m"], r["rmse"], r["percent_excess"]])
    else:
        raise ConfigError(f"{src}: neither a posterior CSV nor an accuracy report")
    return buf.getvalue()


def cmd_export_plotdata(src: Path, out: Path, bins: int) -> int:
    if bins < 1:
        raise ConfigError("--bins must be >= 1")
    text = export_plotdata(src, bins)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plotdata.csv").write_text(text)
    print(f"-> {out / 'plotdata.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aabc", description="ABC and AABC by rejection.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("build-pool", "simulate a reference set and save it"),
        ("infer", "run abc, aabc or aabc_param_only on observed data"),
        ("study", "replicate test-set accuracy study"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="config file or preset name")
        p.add_argument("--seed", type=int, help="root seed, overrides the config")
        p.add_argument("--out", help="output directory, overrides the config")
        p.add_argument("--workers", type=int, help="worker processes (outputs do not depend on it)")
    p = sub.add_parser("export-plotdata", help="tidy CSV for external plotting")
    p.add_argument("input", help="posterior CSV or accuracy report CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bins", type=int, default=40, help="histogram bins per component")
    sub.add_parser("presets", help="list bundled config presets")
    return parser


def _resolve(args) -> tuple:
    cfg = copy.deepcopy(load_config(args.config))
    if args.seed is not None:
        cfg["seed"] = args.seed
    # output location and parallelism never change output bytes, so they
    # stay out of the resolved config recorded in manifests
    out = args.out or cfg.pop("out", None)
    cfg.pop("out", None)
    if not out:
        raise ConfigError("no output directory: pass --out or set 'out'")
    workers = args.workers or cfg.pop("workers", 1)
    cfg.pop("workers", None)
    if int(workers) < 1:
        raise ConfigError("--workers must be >= 1")
    return cfg, Path(out), int(workers)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            print("\n".join(preset_names()))
            return EXIT_OK
        if args.command == "export-plotdata":
            return cmd_export_plotdata(Path(args.input), Path(args.out), args.bins)
        cfg, out, workers = _resolve(args)
        handler = {"build-pool": cmd_build_pool, "infer": cmd_infer, "study": cmd_study}[args.command]
        return handler(cfg, out, workers)
    except EmptyPosterior as exc:
        print(f"aabc: empty posterior: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except PoolFormatError as exc:
        print(f"aabc: pool error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ModelError, ValueError, KeyError, TypeError) as exc:
        print(f"aabc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"aabc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
