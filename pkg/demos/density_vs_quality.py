"""Denser review graphs train better heads.

Generates 500-user corpora at two review/user ratios and prints the
density table (densest first), as written to density.csv.

    python3 demos/density_vs_quality.py --out /tmp/density
"""

import argparse

from dyadexplain.config import PipelineConfig
from dyadexplain.pipeline import density_experiment
from dyadexplain.synth import SynthSpec


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="density")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ratios", default="1.6,2.1")
    args = ap.parse_args()
    specs = [SynthSpec(n_users=500, ratio=float(r), seed=args.seed) for r in args.ratios.split(",")]
    rows = density_experiment(specs, PipelineConfig.desk(seed=args.seed), args.out)
    print("dataset                ratio  f_measure  auc_pr  delta")
    for r in rows:
        print(f"{r['dataset']:22s} {r['ratio']:.3f}  {r['f_measure']:.3f}      {r['auc_pr']:.3f}   {r['delta']:+.1f}")


if __name__ == "__main__":
    main()
