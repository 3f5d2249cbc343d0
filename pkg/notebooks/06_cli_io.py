# %% [markdown]
# # Command line and file formats
#
# Export one synthetic scene, match it and score the result, all through
# the `stereo-ot` command.

# %%
import json
import tempfile
from pathlib import Path

from stereo_ot.cli import main

work = Path(tempfile.mkdtemp())
main(["simulate", "--base-seed", "1", "--sigma", "0.005", "--out", str(work / "scene")])
geo = ["--left", str(work / "scene/left.csv"), "--right", str(work / "scene/right.csv"),
       "--calib", str(work / "scene/calib.json")]
main(["match", *geo, "--distance", "ray", "--matcher", "ot",
      "--out-plan", str(work / "plan.csv"), "--out-matching", str(work / "matching.csv")])
main(["evaluate", "--pred", str(work / "matching.csv"), "--gt", str(work / "scene/gt.csv"), *geo,
      "--truth", str(work / "scene/truth.csv"), "--out", str(work / "metrics.json")])
print((work / "matching.csv").read_text().splitlines()[:5])
print(json.dumps(json.loads((work / "metrics.json").read_text()), indent=1))
