"""Parity fixture emission: reference forward passes for the codec's tests.

Each fixture couples one coding context with this network's float32 outputs
for all three sub-networks and the end-to-end probability.  The codec's
inference must reproduce them within 1e-4; that agreement, not prose, is what
actually specifies the architecture.
"""

from __future__ import annotations

import numpy as np
import torch

from . import formats
from .network import HybridEntropyNet, load_arrays


def emit_parity_fixtures(weights_path, samples_path, out_path, count: int = 24,
                         seed: int = 0) -> int:
    """Pick ``count`` contexts from a PVS dump and write their references."""
    meta_w, arrays = formats.read_pvw(weights_path)
    meta_s, samples = formats.read_pvs(samples_path)
    if meta_w["k"] != meta_s["k"]:
        raise ValueError(f"weights K={meta_w['k']} but samples K={meta_s['k']}")
    k = meta_w["k"]
    if len(samples) < count:
        raise ValueError(f"need {count} samples, dump has {len(samples)}")

    net = HybridEntropyNet()
    load_arrays(net, arrays)
    net.eval()

    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(len(samples), size=count, replace=False))
    chosen = samples[picks]

    records = np.zeros(count, dtype=formats.parity_dtype(k))
    with torch.no_grad():
        vox = torch.from_numpy(chosen["vox"].astype(np.float32)).reshape(-1, 1, 4, 4, 4)
        pc = torch.from_numpy(chosen["pc"].astype(np.float32))
        coord = torch.from_numpy(chosen["coord"].astype(np.float32))
        # sub-network forwards one context at a time: the codec codes batch-1,
        # so the references must come from batch-1 kernels as well
        for i in range(count):
            e_pc = net.point_encoder(pc[i: i + 1])
            e_vox = net.voxel_encoder(vox[i: i + 1])
            logit = net.head(e_pc, e_vox, coord[i: i + 1])
            p = torch.sigmoid(logit)
            records["e_pc"][i] = e_pc[0].numpy()
            records["e_vox"][i] = e_vox[0].numpy()
            records["p_head"][i] = float(p[0])
            records["p_predict"][i] = float(p[0])
    records["vox"] = chosen["vox"]
    records["pc"] = chosen["pc"]
    records["coord"] = chosen["coord"]
    formats.write_pvf(out_path, records, k=k, weights_hash=meta_w["hash"],
                      arch_id=meta_w["arch_id"])
    return count
