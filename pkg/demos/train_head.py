"""Train the recurrent head on two word families and watch early stopping.

    python3 demos/train_head.py
"""

from types import SimpleNamespace

import numpy as np

from dyadexplain.head import HeadConfig, classify, predict, train
from dyadexplain.labeling import LabeledSample
from dyadexplain.text import hashed_surrogate_provider

FAMILIES = (["alpha", "apple", "anchor", "amber"], ["bravo", "banana", "basket", "bronze"])


def corpus(n, rng):
    out = []
    for k in range(n):
        g = k % 2
        text = " ".join(rng.choice(FAMILIES[g], size=6))
        out.append(LabeledSample(f"r{k}", text, np.array([1 - g, g], dtype=np.uint8)))
    return out


def main():
    rng = np.random.default_rng(0)
    samples = corpus(80, rng)
    parts = SimpleNamespace(train=samples[:60], validation=samples[60:])
    provider = hashed_surrogate_provider(seed=0, d=8)
    cfg = HeadConfig.desk(hidden_size=4, dense_size=8, output_size=2, learning_rate=1e-2,
                          early_stop_delta=1e-3, patience=3, max_epochs=60)
    params, hist = train(parts, provider, cfg)
    for epoch, (tr, va) in enumerate(zip(hist.train_loss, hist.val_loss), start=1):
        mark = " <- kept" if epoch == hist.best_epoch else ""
        print(f"epoch {epoch:2d}  train {tr:.4f}  validation {va:.4f}{mark}")
    print(f"stopped after {hist.stopped_epoch} epochs")
    for text in ("amber apple anchor", "basket bronze banana"):
        p = predict(params, provider, text, max_tokens=16)
        print(f"{text!r}: probabilities {np.round(p, 3).tolist()} labels {sorted(classify(p))}")


if __name__ == "__main__":
    main()
