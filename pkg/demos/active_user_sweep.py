"""How quality changes with the number of active users (output labels).

Writes sweep.csv and sweep.svg under --out.

    python3 demos/active_user_sweep.py --out /tmp/sweep
"""

import argparse
import warnings
from pathlib import Path

from dyadexplain.config import PipelineConfig
from dyadexplain.pipeline import sweep_active_users
from dyadexplain.synth import SynthSpec, generate_synthetic


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="sweep")
    ap.add_argument("--values", default="25,50,100")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    data = generate_synthetic(SynthSpec(seed=0), out / "data")
    cfg = PipelineConfig.desk(dataset=str(data.reviews_path), lexicon=str(data.nouns_path),
                              lemmas=str(data.lemmas_path))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # values above the user count fall back to all users
        rows = sweep_active_users(cfg, [int(v) for v in args.values.split(",")], out, args.workers)
    print("active_users  auc_pr  auc_roc  precision  recall")
    for r in rows:
        print(f"{r['active_users']:12d}  {r['auc_pr']:.3f}   {r['auc_roc']:.3f}    {r['precision']:.3f}      {r['recall']:.3f}")
    print(f"curve: {out / 'sweep.svg'}")


if __name__ == "__main__":
    main()
