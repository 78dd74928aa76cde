"""Masked graph-attention policy network and privileged attentive critic.

The encoder projects per-node features, fuses them with 1D-convolution
embeddings of each node's 36-bin frontier distribution, and refines them
through stacked self-attention layers masked to the graph adjacency (plus
self-loops), so information propagates only along edges layer by layer.
The policy decoder cross-attends from the current node over the
heading-enhanced neighbor action pairs and uses single-head attention
scores directly as the categorical policy; the critic decoder additionally
conditions on the other agents' current and next node embeddings and maps
each pair to a Q value.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

CHECKPOINT_MAGIC = b"SSCP"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class NetConfig:
    d: int = 128
    heads: int = 8
    ff: int = 512
    layers: int = 6
    conv_channels: tuple[int, int] = (16, 32)
    conv_kernels: tuple[int, int] = (5, 3)
    heading_dim: int = 32
    feature_dim: int = 9
    bins: int = 36

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        for k in ("conv_channels", "conv_kernels"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def _check_finite(name: str, *tensors: torch.Tensor) -> None:
    for t in tensors:
        if not torch.isfinite(t).all():
            raise ValueError(f"non-finite values in {name} input")


class MaskedAttention(nn.Module):
    """Multi-head attention where disallowed key positions get weight 0."""

    def __init__(self, d: int, heads: int):
        super().__init__()
        assert d % heads == 0
        self.heads = heads
        self.dh = d // heads
        self.q_proj = nn.Linear(d, d)
        self.k_proj = nn.Linear(d, d)
        self.v_proj = nn.Linear(d, d)
        self.out = nn.Linear(d, d)
        self.last_weights: torch.Tensor | None = None

    def forward(self, q_in, kv_in, mask, record: bool = False):
        # q_in (B,m,d), kv_in (B,n,d), mask (B,m,n) bool: True = may attend.
        b, m, _ = q_in.shape
        n = kv_in.shape[1]
        q = self.q_proj(q_in).view(b, m, self.heads, self.dh).transpose(1, 2)
        k = self.k_proj(kv_in).view(b, n, self.heads, self.dh).transpose(1, 2)
        v = self.v_proj(kv_in).view(b, n, self.heads, self.dh).transpose(1, 2)
        logits = q @ k.transpose(-2, -1) / math.sqrt(self.dh)
        logits = logits.masked_fill(~mask.unsqueeze(1), float("-inf"))
        w = torch.softmax(logits, dim=-1)
        if record:
            self.last_weights = w.detach()
        y = (w @ v).transpose(1, 2).reshape(b, m, -1)
        return self.out(y)


class EncoderLayer(nn.Module):
    def __init__(self, d: int, heads: int, ff: int):
        super().__init__()
        self.attn = MaskedAttention(d, heads)
        self.ln1 = nn.LayerNorm(d)
        self.ln2 = nn.LayerNorm(d)
        self.ff = nn.Sequential(nn.Linear(d, ff), nn.ReLU(), nn.Linear(ff, d))

    def forward(self, x, mask, record=False):
        h = self.ln1(x)
        x = x + self.attn(h, h, mask, record=record)
        return x + self.ff(self.ln2(x))


class Encoder(nn.Module):
    """Node features + conv-fused frontier distributions -> enhanced features."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        d, (c1, c2), (k1, k2) = cfg.d, cfg.conv_channels, cfg.conv_kernels
        self.node_proj = nn.Linear(cfg.feature_dim, d)
        # Heading is periodic, so the convolutions pad circularly.
        self.conv1 = nn.Conv1d(1, c1, k1, padding=k1 // 2, padding_mode="circular")
        self.conv2 = nn.Conv1d(c1, c2, k2, padding=k2 // 2, padding_mode="circular")
        self.conv_out = nn.Linear(cfg.bins * c2, d)
        self.fuse = nn.Linear(2 * d, d)
        self.layers = nn.ModuleList(EncoderLayer(d, cfg.heads, cfg.ff)
                                    for _ in range(cfg.layers))
        self.final_ln = nn.LayerNorm(d)

    def forward(self, feats, bins, mask, record=False):
        # feats (B,n,F), bins (B,n,36), mask (B,n,n).
        _check_finite("encoder", feats, bins)
        b, n, _ = feats.shape
        h1 = self.node_proj(feats)
        z = bins.reshape(b * n, 1, self.cfg.bins)
        z = F.relu(self.conv1(z))
        z = F.relu(self.conv2(z))
        h2 = self.conv_out(z.reshape(b, n, -1))
        x = self.fuse(torch.cat([h1, h2], dim=-1))
        for layer in self.layers:
            x = layer(x, mask, record=record)
        return self.final_ln(x)

    def attention_weights(self) -> list[torch.Tensor]:
        return [layer.attn.last_weights for layer in self.layers]


class _PairEmbed(nn.Module):
    """Heading-enhanced action-pair embeddings shared by both decoders."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        d, dh = cfg.d, cfg.heading_dim
        self.fov_mlp = nn.Sequential(nn.Linear(cfg.bins, dh), nn.ReLU(), nn.Linear(dh, dh))
        self.explored_mlp = nn.Sequential(nn.Linear(cfg.bins, dh), nn.ReLU(), nn.Linear(dh, dh))
        self.fuse = nn.Linear(d + 2 * dh, d)

    def forward(self, h, pair_nodes, pair_feats):
        b, k = pair_nodes.shape
        idx = pair_nodes.clamp(min=0).unsqueeze(-1).expand(b, k, h.shape[-1])
        e_nodes = h.gather(1, idx)
        ha = self.fov_mlp(pair_feats[..., :pair_feats.shape[-1] // 2])
        he = self.explored_mlp(pair_feats[..., pair_feats.shape[-1] // 2:])
        return self.fuse(torch.cat([e_nodes, ha, he], dim=-1))


def _gather_current(h, cur_idx):
    b = h.shape[0]
    return h[torch.arange(b, device=h.device), cur_idx].unsqueeze(1)


class PolicyDecoder(nn.Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        d = cfg.d
        self.pairs = _PairEmbed(cfg)
        self.cross = MaskedAttention(d, cfg.heads)
        self.ln_q = nn.LayerNorm(d)
        self.ln_kv = nn.LayerNorm(d)
        self.score_q = nn.Linear(d, d, bias=False)
        self.score_k = nn.Linear(d, d, bias=False)
        self.scale = math.sqrt(d)

    def forward(self, h, cur_idx, pair_nodes, pair_valid, pair_feats):
        """Log-probabilities over action pairs (invalid pairs -> -inf)."""
        if pair_nodes.shape[1] == 0:
            raise ValueError("empty action set")
        e = self.pairs(h, pair_nodes, pair_feats)
        hc = _gather_current(h, cur_idx)
        hc = hc + self.cross(self.ln_q(hc), self.ln_kv(e), pair_valid.unsqueeze(1))
        logits = (self.score_q(hc) @ self.score_k(e).transpose(-2, -1)).squeeze(1) / self.scale
        logits = logits.masked_fill(~pair_valid, float("-inf"))
        return F.log_softmax(logits, dim=-1)


class CriticDecoder(nn.Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        d = cfg.d
        self.pairs = _PairEmbed(cfg)
        self.others_cross = MaskedAttention(d, cfg.heads)
        self.ln_q = nn.LayerNorm(d)
        self.ln_kv = nn.LayerNorm(d)
        self.q_head = nn.Sequential(nn.Linear(2 * d, d), nn.ReLU(), nn.Linear(d, 1))

    def forward(self, h, cur_idx, other_nodes, pair_nodes, pair_valid, pair_feats):
        """One Q value per action pair.

        other_nodes (B, m) holds the other agents' current and next node
        indices (interleaved per agent), -1 where padded / no other agents.
        """
        if pair_nodes.shape[1] == 0:
            raise ValueError("empty action set")
        hc = _gather_current(h, cur_idx)
        if other_nodes.shape[1] > 0:
            valid = other_nodes >= 0
            if bool(valid.any()):
                b, m = other_nodes.shape
                idx = other_nodes.clamp(min=0).unsqueeze(-1).expand(b, m, h.shape[-1])
                kv = h.gather(1, idx)
                att_mask = valid.unsqueeze(1)
                # Rows with no valid other agent would softmax over -inf only;
                # give them a self slot and zero the result afterwards.
                safe = valid.any(dim=1, keepdim=True)
                att_mask = att_mask | (~safe.unsqueeze(-1) & torch.ones_like(att_mask))
                upd = self.others_cross(self.ln_q(hc), self.ln_kv(kv), att_mask)
                hc = hc + torch.where(safe.unsqueeze(-1), upd, torch.zeros_like(upd))
        e = self.pairs(h, pair_nodes, pair_feats)
        q = self.q_head(torch.cat([hc.expand_as(e), e], dim=-1)).squeeze(-1)
        return q


class PolicyNet(nn.Module):
    def __init__(self, cfg: NetConfig = NetConfig()):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.decoder = PolicyDecoder(cfg)

    def forward(self, feats, bins, mask, cur_idx, pair_nodes, pair_valid, pair_feats,
                record=False):
        h = self.encoder(feats, bins, mask, record=record)
        return self.decoder(h, cur_idx, pair_nodes, pair_valid, pair_feats)


class CriticNet(nn.Module):
    def __init__(self, cfg: NetConfig = NetConfig()):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.decoder = CriticDecoder(cfg)

    def forward(self, feats, bins, mask, cur_idx, other_nodes,
                pair_nodes, pair_valid, pair_feats, record=False):
        h = self.encoder(feats, bins, mask, record=record)
        return self.decoder(h, cur_idx, other_nodes, pair_nodes, pair_valid, pair_feats)


# ---------------------------------------------------------------------------
# Gradient verification against central differences.

def grad_check(loss_fn, parameters, epsilon: float = 1e-3,
               samples_per_tensor: int = 4, seed: int = 0) -> float:
    """Max relative error between autograd and central-difference gradients.

    loss_fn must be deterministic and differentiable w.r.t. `parameters`
    (run the model in float64 for tight tolerances).  Samples a few
    coordinates per tensor.
    """
    if not (1e-4 <= epsilon <= 1e-2):
        raise ValueError("epsilon must be in [1e-4, 1e-2]")
    params = list(parameters)
    loss = loss_fn()
    if not torch.isfinite(loss):
        raise ValueError("non-finite loss")
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.detach().reshape(-1)
        n = flat.numel()
        coords = rng.choice(n, size=min(samples_per_tensor, n), replace=False)
        for c in coords:
            c = int(c)
            orig = flat[c].item()
            with torch.no_grad():
                flat[c] = orig + epsilon
                lp = float(loss_fn())
                flat[c] = orig - epsilon
                lm = float(loss_fn())
                flat[c] = orig
            numeric = (lp - lm) / (2 * epsilon)
            analytic = 0.0 if g is None else float(g.reshape(-1)[c])
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint container: magic, version, JSON config/meta, named f32 tensors.

def save_checkpoint(path: str | Path, state: dict[str, torch.Tensor],
                    config: dict, meta: dict | None = None) -> None:
    path = Path(path)
    header = json.dumps({"config": config, "meta": meta or {}}, sort_keys=True).encode()
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION),
              struct.pack("<I", len(header)), header,
              struct.pack("<I", len(state))]
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        enc = name.encode()
        chunks.append(struct.pack("<H", len(enc)))
        chunks.append(enc)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.tobytes())
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[dict[str, torch.Tensor], dict, dict]:
    """Returns (state_dict, config, meta); rejects bad magic or version."""
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    off = 4
    (version,) = struct.unpack_from("<I", buf, off)
    off += 4
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
    (hlen,) = struct.unpack_from("<I", buf, off)
    off += 4
    header = json.loads(buf[off:off + hlen].decode())
    off += hlen
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    state: dict[str, torch.Tensor] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<B", buf, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", buf, off) if ndim else ()
        off += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arr = np.frombuffer(buf, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        state[name] = torch.from_numpy(arr.copy())
    return state, header["config"], header["meta"]


def save_policy(path: str | Path, net: PolicyNet, meta: dict | None = None) -> None:
    save_checkpoint(path, net.state_dict(), net.cfg.to_dict(), meta)


def load_policy(path: str | Path) -> tuple[PolicyNet, dict]:
    state, config, meta = load_checkpoint(path)
    net = PolicyNet(NetConfig.from_dict(config))
    net.load_state_dict(state)
    net.eval()
    return net, meta
