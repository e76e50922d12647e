"""Segmentation model zoo.

Two architectures, both emitting raw 1-channel logits (the loss applies the
sigmoid):

* ``vgg16_decoder`` -- the VGG-16 convolutional feature extractor (classifier
  head removed) followed by three stride-2 transposed convolutions
  (512->256->128->64 channels, each with a rectifier), a 1x1 conv down to one
  channel, and a bilinear upsample to the fixed 512x512 output.
* ``unet`` -- a classic 4-scale contracting/expanding network with skip
  connections, using padded convolutions so output size equals input size.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from pathlib import Path

import torch
import torch.nn as nn

from .errors import CheckpointError, ConfigError, ShapeError, WeightAcquisitionError

ARCHITECTURES = ("vgg16_decoder", "unet")
VGG_INPUT_SIZE = 512
CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = "unet"
    input_size: int = 512
    pretrained_encoder: bool = False
    base_channels: int = 64
    freeze_encoder: bool = False

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.architecture == "vgg16_decoder":
            if self.input_size != VGG_INPUT_SIZE:
                raise ConfigError(
                    f"vgg16_decoder requires input_size={VGG_INPUT_SIZE} "
                    f"(fixed final upsample), got {self.input_size}"
                )
        else:
            if self.input_size % 16 != 0 or self.input_size < 16:
                raise ConfigError(
                    f"unet input_size must be a positive multiple of 16, got {self.input_size}"
                )
            if self.pretrained_encoder:
                raise ConfigError("unet is always trained from scratch; pretrained_encoder is invalid")
            if self.freeze_encoder:
                raise ConfigError("freeze_encoder applies only to vgg16_decoder")
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")


def _init_fresh(module: nn.Module) -> None:
    # Kaiming-uniform for rectifier nets, zero bias.
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_uniform_(m.weight, nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class SegmentationModel(nn.Module):
    """Base class: holds the config and validates input batches."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config

    @property
    def architecture(self) -> str:
        return self.config.architecture

    def _check_input(self, x: torch.Tensor) -> None:
        s = self.config.input_size
        if x.dim() != 4 or x.shape[1] != 3 or x.shape[2] != s or x.shape[3] != s:
            raise ShapeError(
                f"{self.architecture} expects input of shape (B, 3, {s}, {s}), got {tuple(x.shape)}"
            )


def _vgg16_features(pretrained: bool) -> nn.Module:
    import torchvision

    if not pretrained:
        return torchvision.models.vgg16(weights=None).features
    try:
        weights = torchvision.models.VGG16_Weights.IMAGENET1K_V1
        return torchvision.models.vgg16(weights=weights).features
    except Exception as exc:
        raise WeightAcquisitionError(
            f"could not acquire ImageNet VGG-16 encoder weights: {exc}"
        ) from exc


class Vgg16Decoder(SegmentationModel):
    def __init__(self, config: ModelConfig):
        super().__init__(config)
        self.encoder = _vgg16_features(config.pretrained_encoder)
        self.decoder = nn.Sequential(
            nn.ConvTranspose2d(512, 256, kernel_size=3, stride=2, padding=1, output_padding=1),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(256, 128, kernel_size=3, stride=2, padding=1, output_padding=1),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(128, 64, kernel_size=3, stride=2, padding=1, output_padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(64, 1, kernel_size=1),
            nn.Upsample(size=(VGG_INPUT_SIZE, VGG_INPUT_SIZE), mode="bilinear", align_corners=False),
        )
        _init_fresh(self.decoder)
        if not config.pretrained_encoder:
            _init_fresh(self.encoder)
        if config.freeze_encoder:
            for p in self.encoder.parameters():
                p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self._check_input(x)
        return self.decoder(self.encoder(x))


class _DoubleConv(nn.Sequential):
    def __init__(self, cin: int, cout: int):
        super().__init__(
            nn.Conv2d(cin, cout, kernel_size=3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(cout, cout, kernel_size=3, padding=1),
            nn.ReLU(inplace=True),
        )


class UNet(SegmentationModel):
    def __init__(self, config: ModelConfig):
        super().__init__(config)
        c = config.base_channels
        self.pool = nn.MaxPool2d(2)
        self.enc1 = _DoubleConv(3, c)
        self.enc2 = _DoubleConv(c, 2 * c)
        self.enc3 = _DoubleConv(2 * c, 4 * c)
        self.enc4 = _DoubleConv(4 * c, 8 * c)
        self.bottleneck = _DoubleConv(8 * c, 16 * c)
        self.up4 = nn.ConvTranspose2d(16 * c, 8 * c, kernel_size=2, stride=2)
        self.dec4 = _DoubleConv(16 * c, 8 * c)
        self.up3 = nn.ConvTranspose2d(8 * c, 4 * c, kernel_size=2, stride=2)
        self.dec3 = _DoubleConv(8 * c, 4 * c)
        self.up2 = nn.ConvTranspose2d(4 * c, 2 * c, kernel_size=2, stride=2)
        self.dec2 = _DoubleConv(4 * c, 2 * c)
        self.up1 = nn.ConvTranspose2d(2 * c, c, kernel_size=2, stride=2)
        self.dec1 = _DoubleConv(2 * c, c)
        self.head = nn.Conv2d(c, 1, kernel_size=1)
        _init_fresh(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self._check_input(x)
        s1 = self.enc1(x)
        s2 = self.enc2(self.pool(s1))
        s3 = self.enc3(self.pool(s2))
        s4 = self.enc4(self.pool(s3))
        y = self.bottleneck(self.pool(s4))
        y = self.dec4(torch.cat([self.up4(y), s4], dim=1))
        y = self.dec3(torch.cat([self.up3(y), s3], dim=1))
        y = self.dec2(torch.cat([self.up2(y), s2], dim=1))
        y = self.dec1(torch.cat([self.up1(y), s1], dim=1))
        return self.head(y)


def build_vgg16_decoder(config: ModelConfig) -> SegmentationModel:
    if config.architecture != "vgg16_decoder":
        raise ConfigError(f"expected architecture 'vgg16_decoder', got {config.architecture!r}")
    return Vgg16Decoder(config)


def build_unet(config: ModelConfig) -> SegmentationModel:
    if config.architecture != "unet":
        raise ConfigError(f"expected architecture 'unet', got {config.architecture!r}")
    return UNet(config)


def build_model(config: ModelConfig) -> SegmentationModel:
    if config.architecture == "vgg16_decoder":
        return build_vgg16_decoder(config)
    return build_unet(config)


def save_weights(model: SegmentationModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "architecture": model.architecture,
        "config": asdict(model.config),
        "state_dict": model.state_dict(),
    }
    torch.save(payload, path)
    return path


def load_weights(path, config: ModelConfig = None) -> SegmentationModel:
    """Rebuild a model from a checkpoint, bit-exact.

    ``config``, when given, must match the stored config (including the
    architecture tag). Encoder weights always come from the checkpoint, never
    from a fresh pretrained download.
    """
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or not {"architecture", "config", "state_dict"} <= set(payload):
        raise CheckpointError(f"checkpoint {path} is missing required fields")
    try:
        stored = ModelConfig(**payload["config"])
    except (TypeError, ConfigError) as exc:
        raise CheckpointError(f"checkpoint {path} has an invalid config: {exc}") from exc
    if config is not None and config != stored:
        raise CheckpointError(
            f"checkpoint {path} was saved with {stored}, which does not match requested {config}"
        )
    model = build_model(replace(stored, pretrained_encoder=False))
    try:
        model.load_state_dict(payload["state_dict"], strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint {path} does not fit its declared config: {exc}") from exc
    model.config = stored
    return model
