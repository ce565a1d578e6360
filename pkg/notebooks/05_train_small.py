"""
A short training run
====================

A reduced model on a handful of scenes, enough to watch the loss terms move.
The full desk run is ``labnav train`` with the default config.
"""

import numpy as np

from labnav.gkpn import GkpnConfig
from labnav.simenv import CameraModel
from labnav.trainer import TrainConfig, build_dataset, train

cfg = TrainConfig(n_scenes=6, samples_per_scene=8, steps=120, batch_size=4, lr=1e-3)
model_cfg = GkpnConfig(width=32, height=32, pool_stages=2)

data = build_dataset(cfg, CameraModel(width=32, height=32))
result = train(cfg, model_cfg, dataset=data)

rows = result.log_rows
for lo in range(0, len(rows), 20):
    chunk = rows[lo:lo + 20]
    print(lo, {k: round(float(np.mean([r[k] for r in chunk])), 4) for k in ("c_obstacle", "c_goal", "fear", "total")})
print("checksum", result.model.checksum()[:16])
