"""Rewrite the golden report files: python tests/golden/regenerate.py"""

import shutil
import sys
import tempfile
from pathlib import Path

from wislam.cli import main

SCENARIOS = ("desk_noiseless", "desk_noisy", "desk_outlier")
HERE = Path(__file__).resolve().parent


def run(name: str, out: Path) -> Path:
    code = main(["run", "--config", name, "--out", str(out)])
    if code:
        raise SystemExit(f"{name}: exit {code}")
    return out / "report"


if __name__ == "__main__":
    for name in sys.argv[1:] or SCENARIOS:
        with tempfile.TemporaryDirectory() as tmp:
            report = run(name, Path(tmp) / name)
            dest = HERE / name
            if dest.exists():
                shutil.rmtree(dest)
            shutil.copytree(report, dest)
            print(f"{name}: {sorted(p.name for p in dest.iterdir())}")
