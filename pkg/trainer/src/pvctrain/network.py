"""Torch definition of the hybrid-context occupancy network.

This is the training-side twin of the codec's inference engine: same
sub-networks, same parameter inventory, exported through the PVW name map in
``state_to_arrays``.  The codec's parity acceptance test pins the two
implementations together to 1e-4, so any architectural edit here must ship
with regenerated fixtures.
"""

from __future__ import annotations

import torch
import torch.nn as nn

PC_WIDTHS = [(3, 64), (64, 64), (64, 128), (128, 256)]
VOX_CHANNELS = [(1, 32), (32, 64), (64, 128), (128, 256)]
COORD_DIM = 512
HEAD_WIDTH = 1024 + 512 + COORD_DIM
RES_BLOCKS = 5
MODES = ("hybrid", "voxel-only", "point-only")


class PointEncoder(nn.Module):
    """Shared per-point MLP with multiscale max-pool fusion -> 1024 features."""

    def __init__(self):
        super().__init__()
        self.mlps = nn.ModuleList(nn.Linear(cin, cout) for cin, cout in PC_WIDTHS)
        self.bns = nn.ModuleList(nn.BatchNorm1d(cout) for _, cout in PC_WIDTHS)
        self.fuse = nn.Linear(sum(c for _, c in PC_WIDTHS), 1024)
        self.fuse_bn = nn.BatchNorm1d(1024)

    def forward(self, pc):  # (B, K, 3)
        b, k, _ = pc.shape
        x = pc.reshape(b * k, 3)
        pooled = []
        for mlp, bn in zip(self.mlps, self.bns):
            x = torch.relu(bn(mlp(x)))
            pooled.append(x.reshape(b, k, -1).amax(dim=1))
        fused = torch.cat(pooled, dim=1)
        return torch.relu(self.fuse_bn(self.fuse(fused)))


class VoxelEncoder(nn.Module):
    """Cascaded 3x3x3 convolutions over the 4^3 window -> 512 features."""

    def __init__(self):
        super().__init__()
        self.convs = nn.ModuleList(
            nn.Conv3d(cin, cout, kernel_size=3, stride=1, padding=1) for cin, cout in VOX_CHANNELS
        )
        self.bns = nn.ModuleList(nn.BatchNorm3d(cout) for _, cout in VOX_CHANNELS)
        self.fc = nn.Linear(VOX_CHANNELS[-1][1], 512)
        self.fc_bn = nn.BatchNorm1d(512)

    def forward(self, vox):  # (B, 1, 4, 4, 4)
        x = vox
        for conv, bn in zip(self.convs, self.bns):
            x = torch.relu(bn(conv(x)))
        pooled = x.flatten(2).amax(dim=2)  # global max over the 64 cells
        return torch.relu(self.fc_bn(self.fc(pooled)))


class CondBatchNorm(nn.Module):
    """Running-stat normalization with scale/shift predicted from a conditioner."""

    def __init__(self, width, cond_dim=COORD_DIM):
        super().__init__()
        self.bn = nn.BatchNorm1d(width, affine=False)
        self.scale = nn.Linear(cond_dim, width)
        self.shift = nn.Linear(cond_dim, width)

    def forward(self, x, cond):
        return self.bn(x) * self.scale(cond) + self.shift(cond)


class ResidualBlock(nn.Module):
    def __init__(self, width=HEAD_WIDTH):
        super().__init__()
        self.norm1 = CondBatchNorm(width)
        self.fc1 = nn.Linear(width, width)
        self.norm2 = CondBatchNorm(width)
        self.fc2 = nn.Linear(width, width)

    def forward(self, x, cond):
        h = torch.relu(self.norm1(x, cond))
        h = self.fc1(h)
        h = torch.relu(self.norm2(h, cond))
        h = self.fc2(h)
        return x + h


class DecoderHead(nn.Module):
    def __init__(self):
        super().__init__()
        self.coord = nn.Linear(4, COORD_DIM)
        self.blocks = nn.ModuleList(ResidualBlock() for _ in range(RES_BLOCKS))
        self.out = nn.Linear(HEAD_WIDTH, 1)

    def forward(self, e_pc, e_vox, coord):
        e_coor = torch.relu(self.coord(coord))
        x = torch.cat([e_pc, e_vox, e_coor], dim=1)
        for block in self.blocks:
            x = block(x, e_coor)
        return self.out(x).squeeze(1)  # logits


class HybridEntropyNet(nn.Module):
    """Full occupancy-probability network; ``mode`` ablates one context branch."""

    def __init__(self, mode: str = "hybrid"):
        super().__init__()
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.mode = mode
        self.point_encoder = PointEncoder()
        self.voxel_encoder = VoxelEncoder()
        self.head = DecoderHead()

    def forward(self, vox, pc, coord):
        b = coord.shape[0]
        if self.mode != "voxel-only":
            e_pc = self.point_encoder(pc)
        else:
            e_pc = vox.new_zeros((b, 1024))
        if self.mode != "point-only":
            e_vox = self.voxel_encoder(vox)
        else:
            e_vox = vox.new_zeros((b, 512))
        return self.head(e_pc, e_vox, coord)


def state_to_arrays(net: HybridEntropyNet) -> dict:
    """Torch parameters -> the PVW array inventory (float32 numpy copies)."""
    return {
        name: p.detach().cpu().numpy().astype("float32")
        for name, p in _tensor_map(net).items()
    }


def load_arrays(net: HybridEntropyNet, arrays: dict) -> None:
    """Inverse of state_to_arrays: fill the network from a PVW array dict."""
    mapping = _tensor_map(net)
    missing = set(mapping) - set(arrays)
    if missing:
        raise ValueError(f"weight set is missing arrays: {sorted(missing)[:3]}")
    with torch.no_grad():
        for name, tensor in mapping.items():
            src = torch.from_numpy(arrays[name].copy())
            if tuple(tensor.shape) != tuple(src.shape):
                raise ValueError(f"array {name!r}: shape {tuple(src.shape)} != {tuple(tensor.shape)}")
            tensor.copy_(src)


def _tensor_map(net: HybridEntropyNet) -> dict:
    t: dict = {}
    pe = net.point_encoder
    for i in range(4):
        t[f"pc.mlp{i}.weight"] = pe.mlps[i].weight
        t[f"pc.mlp{i}.bias"] = pe.mlps[i].bias
        bn = pe.bns[i]
        t[f"pc.bn{i}.gamma"], t[f"pc.bn{i}.beta"] = bn.weight, bn.bias
        t[f"pc.bn{i}.mean"], t[f"pc.bn{i}.var"] = bn.running_mean, bn.running_var
    t["pc.fuse.weight"], t["pc.fuse.bias"] = pe.fuse.weight, pe.fuse.bias
    bn = pe.fuse_bn
    t["pc.fuse_bn.gamma"], t["pc.fuse_bn.beta"] = bn.weight, bn.bias
    t["pc.fuse_bn.mean"], t["pc.fuse_bn.var"] = bn.running_mean, bn.running_var
    ve = net.voxel_encoder
    for i in range(4):
        t[f"vox.conv{i}.weight"], t[f"vox.conv{i}.bias"] = ve.convs[i].weight, ve.convs[i].bias
        bn = ve.bns[i]
        t[f"vox.bn{i}.gamma"], t[f"vox.bn{i}.beta"] = bn.weight, bn.bias
        t[f"vox.bn{i}.mean"], t[f"vox.bn{i}.var"] = bn.running_mean, bn.running_var
    t["vox.fc.weight"], t["vox.fc.bias"] = ve.fc.weight, ve.fc.bias
    bn = ve.fc_bn
    t["vox.fc_bn.gamma"], t["vox.fc_bn.beta"] = bn.weight, bn.bias
    t["vox.fc_bn.mean"], t["vox.fc_bn.var"] = bn.running_mean, bn.running_var
    head = net.head
    t["dec.coord.weight"], t["dec.coord.bias"] = head.coord.weight, head.coord.bias
    for i, block in enumerate(head.blocks):
        for j, norm in ((1, block.norm1), (2, block.norm2)):
            pre = f"dec.res{i}.norm{j}"
            t[f"{pre}.mean"], t[f"{pre}.var"] = norm.bn.running_mean, norm.bn.running_var
            t[f"{pre}.scale.weight"], t[f"{pre}.scale.bias"] = norm.scale.weight, norm.scale.bias
            t[f"{pre}.shift.weight"], t[f"{pre}.shift.bias"] = norm.shift.weight, norm.shift.bias
        t[f"dec.res{i}.fc1.weight"], t[f"dec.res{i}.fc1.bias"] = block.fc1.weight, block.fc1.bias
        t[f"dec.res{i}.fc2.weight"], t[f"dec.res{i}.fc2.bias"] = block.fc2.weight, block.fc2.bias
    t["dec.out.weight"], t["dec.out.bias"] = head.out.weight, head.out.bias
    return t
