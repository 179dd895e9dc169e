#!/usr/bin/env python3
"""Regenerate the shipped regression logs under logs/regression/.

Produces:
  logs/regression/square/        one full square-patrol run (seed 42)
  logs/regression/drift/seedN/   four 600 s station-hold runs at a 2 Hz
                                 backseat tick; each log carries both the
                                 frontseat DR estimate and the odometry-aided
                                 backseat estimate, so one run yields a
                                 paired DR/fused error curve

log.csv files are gzipped for the repository; everything else ships as
written by the runner. Deterministic: fixed seeds, byte-stable output.
"""

import gzip
import shutil
import sys
from pathlib import Path

import yaml

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from auvstack.config import load_run_config, validate  # noqa: E402
from auvstack.runner import run  # noqa: E402

OUT = REPO / "logs" / "regression"
DRIFT_SEEDS = (0, 1, 2, 3)


def gzip_log(run_dir: Path) -> None:
    src = run_dir / "log.csv"
    with open(src, "rb") as fin, gzip.GzipFile(
        filename="", mode="wb", fileobj=open(run_dir / "log.csv.gz", "wb"), mtime=0
    ) as fout:
        shutil.copyfileobj(fin, fout)
    src.unlink()


def run_config_file(tmp: Path, name: str, mission: str, seed: int, duration: float,
                    overrides: dict | None = None) -> Path:
    cfg = {
        "mission": str(REPO / "missions" / mission),
        "seed": seed,
        "duration_limit": duration,
        "transport": "inproc",
    }
    if overrides:
        cfg["overrides"] = overrides
    path = tmp / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def execute(cfg_path: Path, out_dir: Path) -> None:
    rc = load_run_config(cfg_path)
    findings = validate(rc)
    if findings:
        raise SystemExit(f"{cfg_path}: {findings}")
    if out_dir.exists():
        shutil.rmtree(out_dir)
    report = run(rc, out_dir)
    gzip_log(out_dir)
    print(f"{out_dir}: {report.data['final_phase']} "
          f"fused_final={report.data['error_stats']['fused_final']:.3f} "
          f"dr_final={report.data['error_stats']['dr_final']:.3f}")


def main() -> None:
    tmp = OUT / "_tmp_configs"
    tmp.mkdir(parents=True, exist_ok=True)

    execute(run_config_file(tmp, "square.yaml", "square.yaml", 42, 400.0),
            OUT / "square")

    drift_overrides = {"rates": {"backseat_hz": 2.0, "telemetry_hz": 2.0}}
    for seed in DRIFT_SEEDS:
        cfg = run_config_file(tmp, f"drift{seed}.yaml", "drift_hold.yaml",
                              1000 + seed, 600.0, drift_overrides)
        execute(cfg, OUT / "drift" / f"seed{seed}")

    shutil.rmtree(tmp)


if __name__ == "__main__":
    main()
