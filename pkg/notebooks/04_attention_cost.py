"""
Feature re-weighting versus dot-product attention
=================================================

Parameter and FLOP counts of the planner head for growing feature length M.
"""

import numpy as np

from labnav.gkpn import GkpnConfig, QuadraticAttentionBlock, compare_params
from labnav.nn import count_flops

Ms = [64, 128, 256, 512]
rows = []
for M in Ms:
    rep = compare_params(GkpnConfig(), feature_dim=M)
    blk = count_flops(QuadraticAttentionBlock(16, M, 16, np.random.default_rng(0)), (1, 16, M))
    rows.append((M, rep.lapn_params, rep.baseline_params, rep.lapn_flops, blk))
    print(f"M={M:4d}  params {rep.lapn_params:6d} vs {rep.baseline_params:6d}   "
          f"re-weighting FLOPs {rep.lapn_flops:9d}   dot-product block FLOPs {blk:10d}")

logM = np.log([r[0] for r in rows])
print("log-log slope, re-weighting:", np.polyfit(logM, np.log([r[3] for r in rows]), 1)[0].round(3))
print("log-log slope, dot-product :", np.polyfit(logM, np.log([r[4] for r in rows]), 1)[0].round(3))
