"""Segmentation network: U-net decoder over either a classic contracting
path or a ResNet-18 encoder, with optional attention gates on every skip
connection and a sigmoid probability head.

All ablation variants are built from one ModelConfig:

    encoder="plain_unet", attention=False  -> classic U-net baseline
    encoder="resnet18",   attention=False  -> U-net + ResNet
    encoder="plain_unet", attention=True   -> Attention U-net
    encoder="resnet18",   attention=True   -> full model
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torchvision.models import resnet18

__all__ = [
    "ModelConfig",
    "AttentionGate",
    "SegmentationNet",
    "build",
    "variant_label",
]

ENCODERS = ("plain_unet", "resnet18")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture toggles and layout.

    base_channels and depth shape the plain encoder only; the resnet18
    encoder has its fixed stage layout (stem /2, maxpool, four stages,
    total downsampling factor 32). Inputs must be divisible by the
    encoder's downsampling factor.
    """

    encoder: str = "resnet18"
    pretrained: bool = True
    attention: bool = True
    in_channels: int = 3
    base_channels: int = 64
    depth: int = 4
    input_size: tuple[int, int] = (256, 256)
    freeze_encoder_bn: bool = False

    def __post_init__(self) -> None:
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.pretrained and self.encoder != "resnet18":
            raise ValueError("pretrained=True requires encoder='resnet18'")
        if self.pretrained and self.in_channels != 3:
            raise ValueError("pretrained weights require in_channels=3")
        if self.in_channels < 1 or self.base_channels < 1 or self.depth < 1:
            raise ValueError("in_channels, base_channels and depth must be >= 1")
        h, w = self.input_size
        f = self.downsample_factor
        if h % f or w % f:
            raise ValueError(
                f"input_size {self.input_size} must be divisible by {f} "
                f"for encoder {self.encoder!r}"
            )

    @property
    def downsample_factor(self) -> int:
        return 32 if self.encoder == "resnet18" else 2**self.depth


def variant_label(resnet: bool, attention: bool, ac_loss: bool) -> str:
    """Human-readable name of an ablation variant toggle triple."""
    if resnet and attention and ac_loss:
        return "AURA-net"
    parts = ["U-net"]
    if resnet:
        parts.append("ResNet")
    if attention:
        parts.append("Attention")
    if ac_loss:
        parts.append("AC loss")
    return "+".join(parts)


class ConvBlock(nn.Module):
    """Two 3x3 conv + BN + ReLU layers."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class PlainEncoder(nn.Module):
    """Classic contracting path: repeated conv pairs and 2x2 max-pooling.

    Skip channels double per resolution drop (64, 128, 256, 512 at the
    defaults); the bridge below the last pool doubles once more.
    """

    def __init__(self, in_channels: int, base_channels: int, depth: int):
        super().__init__()
        chans = [base_channels * 2**k for k in range(depth)]
        self.skip_channels = chans
        self.bridge_channels = chans[-1] * 2
        self.pool = nn.MaxPool2d(2, 2)
        self.stem = ConvBlock(in_channels, chans[0])
        self.stages = nn.ModuleList(
            ConvBlock(chans[k - 1], chans[k]) for k in range(1, depth)
        )
        self.bridge = ConvBlock(chans[-1], self.bridge_channels)

    def forward(self, x):
        skips = [self.stem(x)]
        for stage in self.stages:
            skips.append(stage(self.pool(skips[-1])))
        bridge = self.bridge(self.pool(skips[-1]))
        return skips, bridge


class ResNetEncoder(nn.Module):
    """ResNet-18 trunk exposing skip taps after the stem and first three
    stages; the fourth stage is the bridge. Child names match the
    torchvision layout so an ImageNet state dict loads directly.
    """

    skip_channels = [64, 64, 128, 256]
    bridge_channels = 512

    def __init__(self, in_channels: int = 3):
        super().__init__()
        net = resnet18(weights=None)
        if in_channels != 3:
            net.conv1 = nn.Conv2d(in_channels, 64, 7, stride=2, padding=3, bias=False)
        self.conv1 = net.conv1
        self.bn1 = net.bn1
        self.relu = net.relu
        self.maxpool = net.maxpool
        self.layer1 = net.layer1
        self.layer2 = net.layer2
        self.layer3 = net.layer3
        self.layer4 = net.layer4

    def forward(self, x):
        s0 = self.relu(self.bn1(self.conv1(x)))  # 64 @ /2
        s1 = self.layer1(self.maxpool(s0))  # 64 @ /4
        s2 = self.layer2(s1)  # 128 @ /8
        s3 = self.layer3(s2)  # 256 @ /16
        bridge = self.layer4(s3)  # 512 @ /32
        return [s0, s1, s2, s3], bridge


class AttentionGate(nn.Module):
    """Gates a skip connection with a coarser decoder signal.

    The gating signal is resampled up to the skip's resolution, both
    inputs are projected to a common channel width, and a 1x1 head turns
    their ReLU sum into per-pixel coefficients in (0, 1):

        A = sigmoid(head(relu(proj_gate(g) + proj_skip(x))))
        out = x * A
    """

    def __init__(self, skip_ch: int, gate_ch: int, inter_ch: int | None = None):
        super().__init__()
        inter_ch = inter_ch or max(1, skip_ch // 2)
        self.proj_skip = nn.Conv2d(skip_ch, inter_ch, 1)
        self.proj_gate = nn.Conv2d(gate_ch, inter_ch, 1)
        self.head = nn.Conv2d(inter_ch, 1, 1)

    def coefficients(self, skip: torch.Tensor, gate: torch.Tensor) -> torch.Tensor:
        if gate.shape[-2:] != skip.shape[-2:]:
            gate = F.interpolate(
                gate, size=skip.shape[-2:], mode="bilinear", align_corners=False
            )
        return torch.sigmoid(self.head(F.relu(self.proj_gate(gate) + self.proj_skip(skip))))

    def forward(self, skip: torch.Tensor, gate: torch.Tensor) -> torch.Tensor:
        return skip * self.coefficients(skip, gate)


class UpBlock(nn.Module):
    """Decoder stage: bilinear upsample + 3x3 conv, skip fusion by
    concatenation, optionally through an attention gate driven by the
    pre-upsample (coarser) decoder feature.
    """

    def __init__(self, below_ch: int, skip_ch: int, out_ch: int, attention: bool):
        super().__init__()
        self.gate = AttentionGate(skip_ch, below_ch) if attention else None
        self.reduce = nn.Sequential(
            nn.Conv2d(below_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )
        self.fuse = ConvBlock(out_ch + skip_ch, out_ch)

    def forward(self, below: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        if self.gate is not None:
            skip = self.gate(skip, below)
        x = F.interpolate(below, size=skip.shape[-2:], mode="bilinear", align_corners=False)
        x = self.reduce(x)
        return self.fuse(torch.cat([skip, x], dim=1))


class SegmentationNet(nn.Module):
    """Encoder-decoder returning per-pixel foreground probabilities.

    Output spatial size equals input spatial size; values are strictly in
    (0, 1) through the final sigmoid.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        if config.encoder == "resnet18":
            self.encoder: nn.Module = ResNetEncoder(config.in_channels)
        else:
            self.encoder = PlainEncoder(
                config.in_channels, config.base_channels, config.depth
            )
        skip_chans = list(self.encoder.skip_channels)
        below = self.encoder.bridge_channels
        ups = []
        for skip_ch in reversed(skip_chans):
            out_ch = max(skip_ch, 16)
            ups.append(UpBlock(below, skip_ch, out_ch, config.attention))
            below = out_ch
        self.ups = nn.ModuleList(ups)
        if config.encoder == "resnet18":
            # the shallowest resnet skip sits at /2: one more upsample to /1
            self.full_res = nn.Sequential(
                nn.Conv2d(below, below // 2, 3, padding=1, bias=False),
                nn.BatchNorm2d(below // 2),
                nn.ReLU(inplace=True),
            )
            below = below // 2
        else:
            self.full_res = None
        self.head = nn.Conv2d(below, 1, 1)

    def _check_input(self, batch: torch.Tensor) -> None:
        if batch.dim() != 4:
            raise ValueError(f"expected batch of shape NxCxHxW, got {tuple(batch.shape)}")
        n, c, h, w = batch.shape
        if c != self.config.in_channels:
            raise ValueError(f"expected {self.config.in_channels} input channels, got {c}")
        f = self.config.downsample_factor
        if h % f or w % f:
            raise ValueError(f"input size {h}x{w} must be divisible by {f}")

    def train(self, mode: bool = True):
        super().train(mode)
        if mode and self.config.freeze_encoder_bn:
            # keep pretrained running statistics fixed during fine-tuning
            for module in self.encoder.modules():
                if isinstance(module, nn.BatchNorm2d):
                    module.eval()
        return self

    def forward(self, batch: torch.Tensor) -> torch.Tensor:
        self._check_input(batch)
        skips, x = self.encoder(batch)
        for up, skip in zip(self.ups, reversed(skips)):
            x = up(x, skip)
        if self.full_res is not None:
            x = F.interpolate(
                x, size=batch.shape[-2:], mode="bilinear", align_corners=False
            )
            x = self.full_res(x)
        return torch.sigmoid(self.head(x))

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build(config: ModelConfig, weights_path=None) -> SegmentationNet:
    """Construct the network for a config, loading pretrained encoder
    weights when requested.

    weights_path overrides the default archive resolution (cache dir or
    configured URL); building with pretrained=True fails if no archive
    can be obtained.
    """
    model = SegmentationNet(config)
    if config.pretrained:
        from .weights import load_pretrained_encoder, resolve_weights

        archive = weights_path if weights_path is not None else resolve_weights()
        load_pretrained_encoder(model, archive)
    return model
