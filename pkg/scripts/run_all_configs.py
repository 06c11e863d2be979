"""Run every shipped config under ``configs/`` and print one verdict line per run.

    python scripts/run_all_configs.py [--out out] [--threads 4]
"""

import argparse
import json
import time
from pathlib import Path

from shubin_lab.config import load_config
from shubin_lab.experiments import run

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(ROOT / "out"))
    ap.add_argument("--threads", type=int)
    args = ap.parse_args()
    for path in sorted((ROOT / "configs").glob("*.ini")):
        cfg = load_config(path)
        t0 = time.perf_counter()
        man = run(cfg, Path(args.out) / path.stem, args.threads)
        print(f"{path.stem:28s} {time.perf_counter() - t0:7.1f} s  {json.dumps(man.verdicts, sort_keys=True)}")


if __name__ == "__main__":
    main()
