"""Generator and discriminator families.

Direct model: one U-Net mapping (contour, hint, 4 texture crops) -> sketch.
Split model: stage one maps (contour, hint) -> 4 illumination masks, stage
two maps (masks, textures) -> sketch; one patch discriminator per stage.
The squeeze-and-excitation variant inserts an SE block after every encoder
and decoder stage.

External contracts are in [0, 1]; inputs are rescaled to [-1, 1] at the
network boundary and outputs squashed back.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F

CHECKPOINT_VERSION = 1

# channel wiring per model kind
DIRECT_GEN_IN = 6  # contour + hint + 4 texture tones
DIRECT_DISC_IN = 7  # condition + sketch candidate
SPLIT1_GEN_IN, SPLIT1_GEN_OUT = 2, 4
SPLIT2_GEN_IN = 8  # 4 masks + 4 textures
SPLIT1_DISC_IN = 6  # (c, l) + mask candidate
SPLIT2_DISC_IN = 9  # (m, t) + sketch candidate


class WiringError(ValueError):
    """Channel/shape mismatch or incompatible checkpoint."""


@dataclass(frozen=True)
class GeneratorSpec:
    variant: str = "unet"  # unet | unet_se
    in_channels: int = DIRECT_GEN_IN
    out_channels: int = 1
    base_width: int = 64
    max_width: int = 224
    depth: int = 8
    dropout_p: float = 0.5
    n_dropout_stages: int = 3
    se_reduction: int = 16

    def __post_init__(self):
        if self.variant not in ("unet", "unet_se"):
            raise WiringError(f"unknown generator variant {self.variant!r}")


@dataclass(frozen=True)
class DiscriminatorSpec:
    in_channels: int = DIRECT_DISC_IN
    base_width: int = 64
    n_strided: int = 3  # stride-2 stages; default yields ~70 px patches

    @property
    def patch_size(self):
        # receptive field of one score cell, from stride/kernel arithmetic
        rf = 1
        strides = [1, 1] + [2] * self.n_strided
        for s in strides:
            rf = rf * s + (4 - s)
        return rf


class SqueezeExcite(nn.Module):
    def __init__(self, channels, reduction):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def forward(self, x):
        w = x.mean(dim=(2, 3))
        w = torch.sigmoid(self.fc2(F.relu(self.fc1(w))))
        return x * w[:, :, None, None]


class UNetGenerator(nn.Module):
    """Encoder/decoder with skip connections, pix2pix-style blocks."""

    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        widths = [min(spec.base_width * 2 ** i, spec.max_width)
                  for i in range(spec.depth)]
        self.downs = nn.ModuleList()
        self.down_se = nn.ModuleList()
        c_in = spec.in_channels
        for i, w in enumerate(widths):
            block = [nn.Conv2d(c_in, w, 4, stride=2, padding=1)]
            if 0 < i < spec.depth - 1:
                block.insert(0, nn.LeakyReLU(0.2))
                block.append(nn.InstanceNorm2d(w))
            elif i == spec.depth - 1:
                block.insert(0, nn.LeakyReLU(0.2))
            self.downs.append(nn.Sequential(*block))
            self.down_se.append(SqueezeExcite(w, spec.se_reduction)
                                if spec.variant == "unet_se" else nn.Identity())
            c_in = w
        self.ups = nn.ModuleList()
        self.up_se = nn.ModuleList()
        self.dropout_stages = set(range(spec.n_dropout_stages))
        for i in reversed(range(spec.depth)):
            c_out = widths[i - 1] if i > 0 else spec.out_channels
            c_up_in = widths[i] if i == spec.depth - 1 else widths[i] * 2
            block = [nn.ReLU(),
                     nn.ConvTranspose2d(c_up_in, c_out, 4, stride=2, padding=1)]
            if i > 0:
                block.append(nn.InstanceNorm2d(c_out))
            self.ups.append(nn.Sequential(*block))
            self.up_se.append(SqueezeExcite(c_out, spec.se_reduction)
                              if spec.variant == "unet_se" and i > 0
                              else nn.Identity())
        self.sampling = False  # keep dropout live at inference for diversity

    def forward(self, x):
        if x.shape[1] != self.spec.in_channels:
            raise WiringError(
                f"expected {self.spec.in_channels} input channels, "
                f"got {x.shape[1]}")
        x = x * 2.0 - 1.0
        skips = []
        for down, se in zip(self.downs, self.down_se):
            x = se(down(x))
            skips.append(x)
        y = skips[-1]
        for stage, (up, se) in enumerate(zip(self.ups, self.up_se)):
            y = se(up(y))
            if stage in self.dropout_stages:
                y = F.dropout(y, self.spec.dropout_p,
                              training=self.training or self.sampling)
            level = len(self.ups) - 2 - stage
            if level >= 0:
                y = torch.cat([y, skips[level]], dim=1)
        return (torch.tanh(y) + 1.0) / 2.0


class PatchDiscriminator(nn.Module):
    """Markovian patch classifier; outputs per-patch real probabilities."""

    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        layers = []
        c_in = spec.in_channels
        w = spec.base_width
        for i in range(spec.n_strided):
            layers.append(nn.Conv2d(c_in, w, 4, stride=2, padding=1))
            if i > 0:
                layers.append(nn.InstanceNorm2d(w))
            layers.append(nn.LeakyReLU(0.2))
            c_in, w = w, min(w * 2, 512)
        layers += [nn.Conv2d(c_in, w, 4, stride=1, padding=1),
                   nn.InstanceNorm2d(w),
                   nn.LeakyReLU(0.2),
                   nn.Conv2d(w, 1, 4, stride=1, padding=1)]
        self.net = nn.Sequential(*layers)

    def forward(self, condition, candidate):
        x = torch.cat([condition, candidate], dim=1)
        if x.shape[1] != self.spec.in_channels:
            raise WiringError(
                f"discriminator expects {self.spec.in_channels} channels, "
                f"got {x.shape[1]}")
        x = x * 2.0 - 1.0
        return torch.sigmoid(self.net(x))


def count_parameters(module):
    return sum(p.numel() for p in module.parameters())


def se_parameter_count(gen):
    return sum(count_parameters(m) for m in gen.modules()
               if isinstance(m, SqueezeExcite))


# ---------------------------------------------------------------------------
# Bundles
# ---------------------------------------------------------------------------

@dataclass
class ModelBundle:
    kind: str  # direct | split
    generators: dict = field(default_factory=dict)
    discriminators: dict = field(default_factory=dict)
    specs: dict = field(default_factory=dict)

    def eval(self):
        for m in list(self.generators.values()) + list(self.discriminators.values()):
            m.eval()
        return self

    def train(self):
        for m in list(self.generators.values()) + list(self.discriminators.values()):
            m.train()
        return self


def build_direct_bundle(variant="unet", base_width=64, max_width=224,
                        depth=8, dropout_p=0.5):
    gspec = GeneratorSpec(variant=variant, in_channels=DIRECT_GEN_IN,
                          out_channels=1, base_width=base_width,
                          max_width=max_width, depth=depth,
                          dropout_p=dropout_p)
    dspec = DiscriminatorSpec(in_channels=DIRECT_DISC_IN,
                              base_width=base_width)
    return ModelBundle(
        kind="direct",
        generators={"g": UNetGenerator(gspec)},
        discriminators={"d": PatchDiscriminator(dspec)},
        specs={"g": asdict(gspec), "d": asdict(dspec)},
    )


def build_split_bundle(variant="unet", base_width=64, max_width=224,
                       depth=8, dropout_p=0.5):
    g1 = GeneratorSpec(variant=variant, in_channels=SPLIT1_GEN_IN,
                       out_channels=SPLIT1_GEN_OUT, base_width=base_width,
                       max_width=max_width, depth=depth, dropout_p=dropout_p)
    g2 = GeneratorSpec(variant=variant, in_channels=SPLIT2_GEN_IN,
                       out_channels=1, base_width=base_width,
                       max_width=max_width, depth=depth, dropout_p=dropout_p)
    d1 = DiscriminatorSpec(in_channels=SPLIT1_DISC_IN, base_width=base_width)
    d2 = DiscriminatorSpec(in_channels=SPLIT2_DISC_IN, base_width=base_width)
    return ModelBundle(
        kind="split",
        generators={"g1": UNetGenerator(g1), "g2": UNetGenerator(g2)},
        discriminators={"d1": PatchDiscriminator(d1),
                        "d2": PatchDiscriminator(d2)},
        specs={"g1": asdict(g1), "g2": asdict(g2),
               "d1": asdict(d1), "d2": asdict(d2)},
    )


def build_bundle(kind, variant="unet", **kw):
    if kind == "direct":
        return build_direct_bundle(variant=variant, **kw)
    if kind == "split":
        return build_split_bundle(variant=variant, **kw)
    raise WiringError(f"unknown bundle kind {kind!r}")


# ---------------------------------------------------------------------------
# Forward contracts
# ---------------------------------------------------------------------------

def _check_planes(*tensors):
    shape = tensors[0].shape[-2:]
    for t in tensors:
        if t.shape[-2:] != shape:
            raise WiringError(f"plane sizes differ: {t.shape[-2:]} vs {shape}")


def forward_direct(gen, c, l, t):
    """c: (B,1,H,W) contour; l: (B,1,H,W) hint; t: (B,4,H,W) textures."""
    _check_planes(c, l, t)
    return gen(torch.cat([c, l, t], dim=1))


def forward_split(bundle, c, l, t, teacher_masks=None):
    """Returns (masks, sketch); ``teacher_masks`` routes ground-truth masks
    into the second stage (teacher forcing)."""
    _check_planes(c, l, t)
    m_hat = bundle.generators["g1"](torch.cat([c, l], dim=1))
    m_in = teacher_masks if teacher_masks is not None else m_hat
    s_hat = bundle.generators["g2"](torch.cat([m_in, t], dim=1))
    return m_hat, s_hat


def discriminate(disc, condition, candidate):
    return disc(condition, candidate)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_bundle(bundle, path):
    torch.save({
        "format_version": CHECKPOINT_VERSION,
        "kind": bundle.kind,
        "specs": bundle.specs,
        "generators": {k: m.state_dict() for k, m in bundle.generators.items()},
        "discriminators": {k: m.state_dict()
                           for k, m in bundle.discriminators.items()},
    }, path)


def load_bundle(path):
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("format_version") != CHECKPOINT_VERSION:
        raise WiringError(
            f"unsupported checkpoint version {blob.get('format_version')}")
    kind = blob["kind"]
    specs = blob["specs"]
    gen_key = "g" if kind == "direct" else "g1"
    gspec = specs[gen_key]
    bundle = build_bundle(kind, variant=gspec["variant"],
                          base_width=gspec["base_width"],
                          max_width=gspec["max_width"], depth=gspec["depth"],
                          dropout_p=gspec["dropout_p"])
    if bundle.specs != specs:
        raise WiringError("checkpoint wiring does not match this build")
    for k, m in bundle.generators.items():
        m.load_state_dict(blob["generators"][k])
    for k, m in bundle.discriminators.items():
        m.load_state_dict(blob["discriminators"][k])
    return bundle
