"""Networks: the shared generator skeleton with per-variant decorations,
the mirrored discriminator, and the VAE used for domain Fréchet features.

Variant decorations:
  dcgan       - plain convolutions, latent enters through a fully connected layer
  stylegan    - mapping network, learned constant input, per-layer AdaIN styles
                and noise injection
  pg_stylegan - stylegan decorations plus progressive stage/fade-in support
  stylegan2   - mapping network, modulated convolutions with weight
                demodulation, skip-connection grayscale heads
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .specs import DiscriminatorSpec, GeneratorSpec

LRELU_SLOPE = 0.2


class MappingNetwork(nn.Module):
    def __init__(self, latent_dim: int = 512, n_layers: int = 8):
        super().__init__()
        layers = []
        for _ in range(n_layers):
            layers += [nn.Linear(latent_dim, latent_dim), nn.LeakyReLU(LRELU_SLOPE)]
        self.net = nn.Sequential(*layers)

    def forward(self, z):
        z = z * torch.rsqrt(z.pow(2).mean(dim=1, keepdim=True) + 1e-8)
        return self.net(z)


class NoiseInjection(nn.Module):
    """Adds per-pixel Gaussian noise with a learned per-channel scale.

    noise_mode "random" draws fresh noise; "const" uses a fixed buffer so
    repeated forward passes (e.g. during latent inversion) are deterministic.
    """

    def __init__(self, channels: int, const_shape: tuple[int, int]):
        super().__init__()
        self.scale = nn.Parameter(torch.zeros(1, channels, 1, 1))
        self.register_buffer("const_noise", torch.randn(1, 1, *const_shape))

    def forward(self, x, noise_mode: str = "random"):
        if noise_mode == "none":
            return x
        if noise_mode == "const":
            noise = self.const_noise
        else:
            noise = torch.randn(x.shape[0], 1, *x.shape[2:], device=x.device)
        return x + self.scale * noise


class AdaIN(nn.Module):
    def __init__(self, channels: int, w_dim: int):
        super().__init__()
        self.norm = nn.InstanceNorm2d(channels, affine=False)
        self.style = nn.Linear(w_dim, channels * 2)

    def forward(self, x, w):
        gamma, beta = self.style(w).unsqueeze(-1).unsqueeze(-1).chunk(2, dim=1)
        return (1 + gamma) * self.norm(x) + beta


class ModulatedConv2d(nn.Module):
    """3x3 style-modulated convolution with weight demodulation."""

    def __init__(self, c_in: int, c_out: int, w_dim: int, kernel: int = 3,
                 demodulate: bool = True):
        super().__init__()
        self.kernel = kernel
        self.demodulate = demodulate
        self.weight = nn.Parameter(
            torch.randn(1, c_out, c_in, kernel, kernel) / math.sqrt(c_in * kernel**2)
        )
        self.style = nn.Linear(w_dim, c_in)
        nn.init.zeros_(self.style.weight)
        nn.init.ones_(self.style.bias)
        self.bias = nn.Parameter(torch.zeros(c_out))

    def forward(self, x, w):
        b, c_in, h, wd = x.shape
        s = self.style(w).view(b, 1, c_in, 1, 1)
        weight = self.weight * s
        if self.demodulate:
            d = torch.rsqrt(weight.pow(2).sum(dim=(2, 3, 4), keepdim=True) + 1e-8)
            weight = weight * d
        c_out = weight.shape[1]
        weight = weight.view(b * c_out, c_in, self.kernel, self.kernel)
        out = F.conv2d(x.reshape(1, b * c_in, h, wd), weight,
                       padding=self.kernel // 2, groups=b)
        return out.view(b, c_out, h, wd) + self.bias.view(1, -1, 1, 1)


class GenConv(nn.Module):
    """One generator conv layer in the variant's flavor."""

    def __init__(self, c_in: int, c_out: int, mode: str, w_dim: int,
                 res: tuple[int, int]):
        super().__init__()
        self.mode = mode
        if mode == "demod":
            self.conv = ModulatedConv2d(c_in, c_out, w_dim)
            self.noise = NoiseInjection(c_out, res)
        elif mode == "adain":
            self.conv = nn.Conv2d(c_in, c_out, 3, padding=1)
            self.noise = NoiseInjection(c_out, res)
            self.adain = AdaIN(c_out, w_dim)
        else:
            self.conv = nn.Conv2d(c_in, c_out, 3, padding=1)

    def forward(self, x, w=None, noise_mode: str = "random"):
        if self.mode == "demod":
            x = self.noise(self.conv(x, w), noise_mode)
            return F.leaky_relu(x, LRELU_SLOPE)
        if self.mode == "adain":
            x = F.leaky_relu(self.noise(self.conv(x), noise_mode), LRELU_SLOPE)
            return self.adain(x, w)
        return F.leaky_relu(self.conv(x), LRELU_SLOPE)


class GenBlock(nn.Module):
    """conv (low res) -> bilinear 2x upsample -> conv (high res)."""

    def __init__(self, c_in: int, c_out: int, mode: str, w_dim: int,
                 low_res: tuple[int, int]):
        super().__init__()
        high_res = (low_res[0] * 2, low_res[1] * 2)
        self.conv1 = GenConv(c_in, c_out, mode, w_dim, low_res)
        self.conv2 = GenConv(c_out, c_out, mode, w_dim, high_res)

    def forward(self, x, w=None, noise_mode: str = "random"):
        x = self.conv1(x, w, noise_mode)
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return self.conv2(x, w, noise_mode)


def _stage_channels(spec: GeneratorSpec, stage: int) -> int:
    """Feature channels at 1-indexed resolution stage."""
    return spec.base_channels if stage == 1 else spec.channel_schedule[stage - 2]


class Generator(nn.Module):
    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        v = spec.variant
        self.mode = {"dcgan": "plain", "stylegan": "adain",
                     "pg_stylegan": "adain", "stylegan2": "demod"}[v]
        self.skip = v == "stylegan2"
        w_dim = spec.latent_dim
        bh, bw = spec.base_shape

        if self.mode == "plain":
            self.input = nn.Linear(spec.latent_dim, spec.base_channels * bh * bw)
        else:
            self.mapping = MappingNetwork(spec.latent_dim)
            self.const = nn.Parameter(torch.randn(1, spec.base_channels, bh, bw))
        self.base_conv = GenConv(spec.base_channels, spec.base_channels,
                                 self.mode, w_dim, (bh, bw))

        blocks, to_gray = [], [nn.Conv2d(spec.base_channels, 1, 1)]
        c_in = spec.base_channels
        res = (bh, bw)
        for c_out in spec.channel_schedule:
            blocks.append(GenBlock(c_in, c_out, self.mode, w_dim, res))
            res = (res[0] * 2, res[1] * 2)
            to_gray.append(nn.Conv2d(c_out, 1, 1))
            c_in = c_out
        self.blocks = nn.ModuleList(blocks)
        self.to_gray = nn.ModuleList(to_gray)

    def forward(self, z, stage: int | None = None, alpha: float = 1.0,
                noise_mode: str = "random"):
        spec = self.spec
        if z.ndim != 2 or z.shape[1] != spec.latent_dim:
            raise ValueError(f"latent must be (batch, {spec.latent_dim}), got {tuple(z.shape)}")
        stage = spec.n_stages if stage is None else stage
        if not 1 <= stage <= spec.n_stages:
            raise ValueError(f"stage must be in [1, {spec.n_stages}]")

        if self.mode == "plain":
            w = None
            bh, bw = spec.base_shape
            x = F.leaky_relu(self.input(z), LRELU_SLOPE)
            x = x.view(-1, spec.base_channels, bh, bw)
        else:
            w = self.mapping(z)
            x = self.const.expand(z.shape[0], -1, -1, -1)
        x = self.base_conv(x, w, noise_mode)

        rgb = self.to_gray[0](x) if self.skip else None
        x_prev = None
        for i in range(stage - 1):
            x_prev = x
            x = self.blocks[i](x, w, noise_mode)
            if self.skip:
                rgb = F.interpolate(rgb, scale_factor=2, mode="bilinear",
                                    align_corners=False)
                rgb = rgb + self.to_gray[i + 1](x)

        if self.skip:
            out = rgb
        else:
            out = self.to_gray[stage - 1](x)
            if alpha < 1.0 and stage > 1:
                prev = self.to_gray[stage - 2](x_prev)
                prev = F.interpolate(prev, scale_factor=2, mode="bilinear",
                                     align_corners=False)
                out = alpha * out + (1 - alpha) * prev
        return torch.sigmoid(out)


class DBlock(nn.Module):
    """conv (stride 1) -> conv (stride 2 downsample), optional residual."""

    def __init__(self, c_in: int, c_out: int, residual: bool):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_in, 3, padding=1)
        self.conv2 = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1)
        self.residual = residual
        if residual:
            self.skip = nn.Conv2d(c_in, c_out, 1, stride=2, bias=False)

    def forward(self, x):
        y = F.leaky_relu(self.conv1(x), LRELU_SLOPE)
        y = F.leaky_relu(self.conv2(y), LRELU_SLOPE)
        if self.residual:
            y = (y + self.skip(x)) / math.sqrt(2)
        return y


class Discriminator(nn.Module):
    """Mirror of the generator with stride-2 downsampling convolutions.

    `features` exposes the last conv block output (base_channels x 25 x 8 at
    full scale) for feature-matching losses.
    """

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        g = spec.generator
        residual = g.variant == "stylegan2"
        # from_gray[s-1] maps the image into stage-s feature space
        self.from_gray = nn.ModuleList(
            nn.Conv2d(1, _stage_channels(g, s), 1) for s in range(1, g.n_stages + 1)
        )
        # blocks[i] downsamples stage i+2 -> stage i+1
        self.blocks = nn.ModuleList(
            DBlock(_stage_channels(g, s + 1), _stage_channels(g, s), residual)
            for s in range(1, g.n_stages)
        )
        feat = g.base_channels * g.base_shape[0] * g.base_shape[1]
        self.head = nn.Sequential(
            nn.Flatten(),
            nn.Linear(feat, spec.head_width), nn.LeakyReLU(LRELU_SLOPE),
            nn.Linear(spec.head_width, spec.head_width), nn.LeakyReLU(LRELU_SLOPE),
            nn.Linear(spec.head_width, 1),
        )

    def _check_input(self, img, stage):
        g = self.spec.generator
        res = g.stage_resolution(stage)
        if img.ndim != 4 or img.shape[1] != 1 or tuple(img.shape[2:]) != res:
            raise ValueError(
                f"expected input (batch, 1, {res[0]}, {res[1]}), got {tuple(img.shape)}"
            )

    def features(self, img, stage: int | None = None, alpha: float = 1.0):
        g = self.spec.generator
        stage = g.n_stages if stage is None else stage
        self._check_input(img, stage)
        x = F.leaky_relu(self.from_gray[stage - 1](img), LRELU_SLOPE)
        for s in range(stage, 1, -1):
            x = self.blocks[s - 2](x)
            if s == stage and alpha < 1.0:
                low = F.avg_pool2d(img, 2)
                y = F.leaky_relu(self.from_gray[s - 2](low), LRELU_SLOPE)
                x = alpha * x + (1 - alpha) * y
        return x

    def forward(self, img, stage: int | None = None, alpha: float = 1.0):
        return self.head(self.features(img, stage, alpha))


class VAE(nn.Module):
    """Convolutional VAE sharing the skeleton; encoder mean is the domain
    feature vector used by the Fréchet metric."""

    def __init__(self, spec: GeneratorSpec, z_dim: int = 512):
        super().__init__()
        dec_spec = GeneratorSpec(
            variant="dcgan", base_shape=spec.base_shape,
            base_channels=spec.base_channels, n_blocks=spec.n_blocks,
            channel_schedule=spec.channel_schedule,
            output_resolution=spec.output_resolution, latent_dim=z_dim,
        )
        self.spec = dec_spec
        self.z_dim = z_dim
        self.trunk = Discriminator(DiscriminatorSpec(dec_spec))
        g = dec_spec
        feat = g.base_channels * g.base_shape[0] * g.base_shape[1]
        self.fc_mu = nn.Linear(feat, z_dim)
        self.fc_logvar = nn.Linear(feat, z_dim)
        self.decoder = Generator(dec_spec)

    def encode(self, img):
        h = self.trunk.features(img).flatten(1)
        return self.fc_mu(h), self.fc_logvar(h)

    def forward(self, img):
        mu, logvar = self.encode(img)
        std = torch.exp(0.5 * logvar)
        z = mu + std * torch.randn_like(std)
        return self.decoder(z), mu, logvar

    @staticmethod
    def loss(recon, img, mu, logvar, kl_weight: float = 1.0):
        rec = F.mse_loss(recon, img, reduction="mean")
        kl = -0.5 * torch.mean(1 + logvar - mu.pow(2) - logvar.exp())
        return rec + kl_weight * kl, rec, kl


def build_generator(spec: GeneratorSpec) -> Generator:
    return Generator(spec)


def build_discriminator(spec: GeneratorSpec | DiscriminatorSpec) -> Discriminator:
    if isinstance(spec, GeneratorSpec):
        spec = DiscriminatorSpec(spec)
    return Discriminator(spec)
