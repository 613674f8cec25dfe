"""Write traces, summaries and plots for one SF and one OF preset.

    python3 demos/run_presets.py [out_dir]
"""

import json
import sys
from pathlib import Path

from femrac.harness import load_preset, run_experiment

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
for name in ("sf_fig1", "of_fig6"):
    status = run_experiment(load_preset(name), out / name, plots=True)
    summary = json.loads((out / name / "summary.json").read_text(encoding="utf-8"))
    print(name, "exit", status, "theta_hat(end) =", summary["theta_hat_final"])
print("outputs in", out.resolve())
