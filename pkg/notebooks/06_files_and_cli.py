"""
Files on disk and the command line
==================================

Scenes travel as a PLY cloud, a PNG panorama and a JSON pose.  The same steps
are available as ``omniloc synth``, ``omniloc localize`` and ``omniloc eval``.
"""

import json
from pathlib import Path

from omniloc import cli, io

work = Path("notebook_output") / "cli"

# Two scenes, localized and scored.
for seed in (1, 2):
    cli.main(["synth", "--seed", str(seed), "--gravity-aligned", "--out", str(work / "truth" / f"s{seed}")])
    cli.main(["localize", "--cloud", str(work / "truth" / f"s{seed}" / "cloud.ply"),
              "--image", str(work / "truth" / f"s{seed}" / "pano.png"),
              "--gravity-known", "--out", str(work / "results" / f"s{seed}.json")])

cli.main(["eval", "--results", str(work / "results"), "--truth", str(work / "truth"),
          "--out", str(work / "report.json")])

# Result files hold the pose as a quaternion and a matrix, every candidate's
# loss curve and the configuration; timings go to a separate sidecar.
result = io.load_json(work / "results" / "s1.json")
print(sorted(result))
print(json.dumps(result["pose"], indent=1)[:200])

cloud = io.read_ply(work / "truth" / "s1" / "cloud.ply")
print("reloaded", cloud.count, "points")
