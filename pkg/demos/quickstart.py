"""Synthesise a small dataset, train a narrow model briefly and compare it
with the zero-velocity baseline.

Runs in a few minutes on one core. The widths are shrunk so the example is
quick; drop the overrides to train the full-size network.

    python demos/quickstart.py [OUTDIR]
"""
import sys
import tempfile
from pathlib import Path

from fingermotion import ModelConfig, TrainConfig, evaluate, load_splits, synth_dataset, train
from fingermotion.model import parameter_count

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="fingermotion-"))
synth_dataset(out / "data", minutes=3.0, n_recordings=6, split=(4, 1, 1), seed=0)
splits = load_splits(out / "data")

cfg = ModelConfig(kfe_hidden=8, enc_hidden=8, head_widths=(16, 16, 8, 1),
                  decoder_widths=(3, 8, 8, 8, 8, 8, 8, 1))
print("parameters:", parameter_count(cfg)["total"])

budget = TrainConfig(epochs=4, batch_size=64, stride=10, val_stride=10, seed=0)
result = train(splits, cfg, budget, out=out / "model.ckpt", log_path=out / "log.csv",
               progress=lambda row: print(f"epoch {row['epoch']}  loss {row['train_loss']:.1f}"))

report = evaluate(result.model, splits["test"], stride=5)
report.to_csv(out / "report.csv")
print(report.format())
print(f"improvement over zero velocity, 120-400 ms: {report.improvement(120, 400):.1%}")
print("artifacts in", out)
