"""Regenerate the bundled fixtures ``demo_design.json`` and ``demo_measurements.csv``.

The variances are the published engine-power study values.  The raw
measurements were never published, so the demo CSV is SYNTHETIC: it is drawn
from the model with the published bias estimates as truth, three replicates
per lab and made-up level means.
"""

import argparse
import json
from pathlib import Path

from proftest.io import write_measurements
from proftest.model import ParameterVector, StudyDesign
from proftest.simulation import TrueParameters, simulate_dataset

SIGMA2_X = [0.0077, 0.0256, 0.0740, 0.0999, 0.1414, 0.2007, 0.2266, 0.2500, 0.2581]
SIGMA2 = [
    [0.0068, 0.0215, 0.0618, 0.0848, 0.1190, 0.1690, 0.1944, 0.2141, 0.2225],
    [0.0054, 0.0170, 0.0491, 0.0671, 0.0949, 0.1343, 0.1535, 0.1650, 0.1711],
    [0.0005, 0.0018, 0.0050, 0.0069, 0.0097, 0.0136, 0.0157, 0.0169, 0.0176],
    [0.0081, 0.0263, 0.0750, 0.1031, 0.1446, 0.2035, 0.2333, 0.2521, 0.2615],
    [0.0498, 0.1587, 0.4509, 0.6270, 0.8680, 1.2158, 1.3936, 1.4954, 1.5341],
    [0.0101, 0.0327, 0.0935, 0.1280, 0.1806, 0.2552, 0.2888, 0.3091, 0.3186],
    [0.0114, 0.0372, 0.1029, 0.1435, 0.2061, 0.2919, 0.3307, 0.3591, 0.3760],
    [0.0249, 0.0830, 0.2371, 0.3300, 0.4543, 0.6319, 0.7243, 0.7811, 0.8060],
]
DEMO_REPLICAS = [3] * 8
DEMO_LEVELS = ["1000", "1500", "2000", "2500", "3000", "3500", "4000", "4500", "5000"]
DEMO_MU_X = [12.0, 25.0, 38.0, 50.0, 61.0, 70.0, 77.0, 81.0, 83.0]
DEMO_ALPHA = [0.0700, 0.1000, 0.0658, 0.2183, 0.1288, -0.0315, 0.0063]
DEMO_BETA = [0.9661, 0.9856, 0.9957, 0.9871, 0.9983, 0.9745, 0.9913]
DEMO_SEED = 2024


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "src" / "proftest" / "data")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    doc = {
        "description": "Engine power study variances (9 rotation levels x 8 labs, lab 1 = reference). "
        "replicas is a demo choice.",
        "labs": [f"L{i}" for i in range(1, 9)],
        "levels": DEMO_LEVELS,
        "sigma2_x": SIGMA2_X,
        "sigma2": SIGMA2,
        "replicas": DEMO_REPLICAS,
        "demo_truth": {"mu_x": DEMO_MU_X, "alpha": DEMO_ALPHA, "beta": DEMO_BETA, "seed": DEMO_SEED},
    }
    (args.out / "demo_design.json").write_text(json.dumps(doc, indent=2) + "\n")
    design = StudyDesign(SIGMA2_X, SIGMA2, DEMO_REPLICAS)
    truth = TrueParameters(ParameterVector(DEMO_MU_X, DEMO_ALPHA, DEMO_BETA), design)
    data = simulate_dataset(truth, DEMO_SEED)
    write_measurements(data, args.out / "demo_measurements.csv", doc["labs"], DEMO_LEVELS)
    print(f"wrote {args.out}/demo_design.json and demo_measurements.csv")


if __name__ == "__main__":
    main()
