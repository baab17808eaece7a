"""Train a model on synthetic frames, checkpoint it, resume and evaluate.

Run:  python3 demos/05_train_and_evaluate.py          # small model, ~10 s
      python3 demos/05_train_and_evaluate.py --full   # full-size overfit run, ~2 min
"""
import argparse
import tempfile
from pathlib import Path

from mmgat.data import synth_dataset
from mmgat.experiments import overfit_config, overfit_dataset
from mmgat.metrics import evaluate
from mmgat.model import ModelConfig
from mmgat.training import TrainConfig, load_checkpoint, split_dataset, train

parser = argparse.ArgumentParser()
parser.add_argument("--full", action="store_true", help="full-width model, 2000 steps")
args = parser.parse_args()

if args.full:
    # 32 frames, batch 8, Adam at 1e-3 decayed by 0.995 per epoch, K=20,
    # dropout 0.5: the network should memorise its training set.
    ds, cfg = overfit_dataset(), overfit_config()
    result = train(ds, cfg)
    print(f"{result.adam.step} steps, final epoch loss {result.log[-1].train_loss:.4f} m")
    print(evaluate(result.predict_fn(), ds, "mri").to_text())
    raise SystemExit

ds = synth_dataset(60, 24, 17, 0.02, rng_seed=1, n_trajectories=3)
train_ds, test_ds = split_dataset(ds, "holdout", 0.3, seed=0)
print(f"train on {len(train_ds)} frames, hold out {len(test_ds)} (unseen walker)")

workdir = Path(tempfile.mkdtemp())
cfg = TrainConfig(batch_size=16, epochs=120, k_neighbors=8, eval_every=20, seed=0,
                  checkpoint_path=str(workdir / "model.json"),
                  model=ModelConfig(joint_count=17, edge_widths=(16, 16, 16), gat_width=32,
                                    head_widths=(64, 64), dropout_rate=0.1))

# Stop after 60 epochs as if interrupted, then pick up from the checkpoint.
train(train_ds, cfg, stop_after_epochs=60)
ckpt = load_checkpoint(cfg.checkpoint_path)
print(f"checkpoint at epoch {ckpt.epoch}, step {ckpt.adam.step}")
result = train(train_ds, cfg, resume=ckpt)
# Every eval_every epochs the log also carries training-set metrics (cm).
for rec in result.log:
    if rec.metrics:
        print(f"epoch {rec.epoch:3d}  lr={rec.lr:.6f}  loss={rec.train_loss:.4f}  "
              f"mpjpe={rec.metrics['mpjpe']:.1f} cm")

print("\ntrain set:\n" + evaluate(result.predict_fn(), train_ds, "mri").to_text())
print("held-out walker:\n" + evaluate(result.predict_fn(), test_ds, "mri").to_text())
