"""Anomaly score maps: from raw bank distances to smoothed heatmaps.

Loads the checkpoint written by demo 03 (runs it first if missing), scores
one normal and one defective image, and saves the heatmaps as 16-bit PNGs.

Run:  python demos/04_score_maps.py
"""

import subprocess
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from rdcfa.data import load_dataset
from rdcfa.scorer import postprocess, raw_score_map, score_image
from rdcfa.trainer import load_checkpoint

root = Path("runs/demo_train")
if not (root / "checkpoint.pt").exists():
    subprocess.run([sys.executable, "demos/03_train_and_evaluate.py"], check=True)

model, bank, config, class_names = load_checkpoint(root / "checkpoint.pt")
dataset = load_dataset(root / "dataset", image_size=config.image_size)

name = class_names[0]
normal = next(s for s in dataset.test_sets[name] if not s.is_anomalous)
defect = next(s for s in dataset.test_sets[name] if s.is_anomalous)

# --- step by step on the defective image ------------------------------------
image = dataset.load_image(defect)
raw = raw_score_map(image, model, bank)          # coarse grid of distances
print(f"raw map {raw.shape}, range [{raw.min():.4f}, {raw.max():.4f}]")

amap = postprocess(raw, (64, 64), sigma=4.0)     # upsample + smooth
print(f"full-resolution map {amap.pixel_scores.shape}, "
      f"image score {amap.image_score:.4f}")

# The defect region should carry the mass of the score map.
mask = dataset.load_mask(defect)
inside = amap.pixel_scores[mask].mean()
outside = amap.pixel_scores[~mask].mean()
print(f"mean score inside defect {inside:.4f} vs outside {outside:.4f}")

# --- normal image for contrast ----------------------------------------------
normal_map = score_image(dataset.load_image(normal), model, bank, sigma=4.0)
print(f"normal image score {normal_map.image_score:.4f} "
      f"(vs defective {amap.image_score:.4f})")

# --- save heatmaps ----------------------------------------------------------
out = Path("runs/demo_scores")
out.mkdir(parents=True, exist_ok=True)
for tag, scores in (("defect", amap.pixel_scores), ("normal", normal_map.pixel_scores)):
    peak = scores.max()
    norm = scores / peak if peak > 0 else scores
    Image.fromarray((norm * 65535).astype(np.uint16)).save(out / f"{tag}.png")
print(f"heatmaps written to {out}")
