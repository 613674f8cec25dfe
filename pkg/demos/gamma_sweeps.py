"""Compare |xi| decay rates over gamma0, then gamma1 across references.

    python3 demos/gamma_sweeps.py [out_dir]
"""

import json
import sys
from pathlib import Path

from femrac.harness import load_preset, run_sweep

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_sweeps")
base = load_preset("sf_fig1").with_changes(t_end=20.0)

run_sweep(base, "gamma0", [1.0, 10.0, 100.0], out / "gamma0")
refs = [{"name": "constant", "value": 1.0}, {"name": "sine"}, {"name": "exponential"}]
run_sweep(base, "gamma1", [0.0, 10.0], out / "gamma1", cross=("reference", refs))

for key in ("gamma0", "gamma1"):
    report = json.loads((out / key / "sweep.json").read_text(encoding="utf-8"))
    for a in report["assertions"]:
        print(f"{key}: {a['name']}: {'PASS' if a['passed'] else 'FAIL'}")
