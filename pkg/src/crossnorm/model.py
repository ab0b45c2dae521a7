"""Cross-modal encoder/decoder architecture with deactivable skip links.

Two encoders (images, normals) and two decoders share one latent space.
Skip links run only from the image encoder into the normal decoder. The
normal decoder's conv stages emit extra tail channels; when a link is
active, encoder features are max-fused into that tail, and when inactive
the features pass through untouched, so one set of weights serves both the
translation and autoencoding passes.

Variants: ``skip_mode="none"`` keeps the same tail channels but never fuses
(capacity-matched ablation), ``"standard_concat"`` concatenates encoder
features instead (image-to-normal only). Dropping the normal encoder and/or
image decoder reproduces the remaining ablation configurations.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as ops
from .tensor import ShapeError, Tensor

SKIP_MODES = ("deactivable", "standard_concat", "none")
GROUP_NORM_EPS = 1e-5


class ConfigError(ValueError):
    pass


class SkipState(enum.Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"


class ForwardMode(enum.Enum):
    IMAGE_TO_NORMAL = "image_to_normal"
    IMAGE_TO_IMAGE = "image_to_image"
    NORMAL_TO_NORMAL = "normal_to_normal"


@dataclass
class ModelConfig:
    input_resolution: int = 64
    base_width: int = 16
    n_stages: int = 4
    latent_channels: int = 0  # 0 = derive as 8 * base_width
    skip_mode: str = "deactivable"
    has_normal_encoder: bool = True
    has_image_decoder: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.latent_channels == 0:
            self.latent_channels = 8 * self.base_width
        self.validate()

    def validate(self):
        divisor = 2 ** (self.n_stages + 1)
        if self.input_resolution % divisor != 0:
            raise ConfigError(
                f"input_resolution {self.input_resolution} must be divisible by {divisor}"
            )
        if self.skip_mode not in SKIP_MODES:
            raise ConfigError(f"skip_mode must be one of {SKIP_MODES}, got {self.skip_mode!r}")
        if self.base_width < 1 or self.n_stages < 1:
            raise ConfigError("base_width and n_stages must be positive")

    def encoder_channels(self):
        """Channel count at each skip tap: stem output then each stage output."""
        chans = [self.base_width]
        c = self.base_width
        for _ in range(self.n_stages):
            c = min(2 * c, self.latent_channels)
            chans.append(c)
        return chans

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def num_groups(channels):
    """8 groups when divisible, the channel count below 8 groups, else the
    largest common divisor with 8 — keeps group norm valid for any width."""
    if channels < 8:
        return channels
    if channels % 8 == 0:
        return 8
    return math.gcd(channels, 8)


class ParamRegistry:
    """Ordered mapping of stable dot-separated names to parameter tensors."""

    def __init__(self):
        self._params = {}

    def register(self, name, data):
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = Tensor(np.ascontiguousarray(data, dtype=np.float32), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def subset(self, prefixes):
        return {
            name: t
            for name, t in self._params.items()
            if any(name.startswith(p) for p in prefixes)
        }

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()


class Conv:
    def __init__(self, registry, rng, name, c_in, c_out, k=3, stride=1, pad=1):
        std = math.sqrt(2.0 / (c_in * k * k))
        self.weight = registry.register(f"{name}.weight", rng.normal(0.0, std, (c_out, c_in, k, k)))
        self.bias = registry.register(f"{name}.bias", np.zeros(c_out))
        self.stride = stride
        self.pad = pad

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class GroupNorm:
    def __init__(self, registry, name, channels):
        self.groups = num_groups(channels)
        self.gamma = registry.register(f"{name}.gamma", np.ones(channels))
        self.beta = registry.register(f"{name}.beta", np.zeros(channels))

    def __call__(self, x):
        return ops.group_norm(x, self.groups, self.gamma, self.beta, eps=GROUP_NORM_EPS)


class ResidualStage:
    """Two 3x3 convs with group norm and relu; 1x1 projection shortcut on the
    downsampling path."""

    def __init__(self, registry, rng, name, c_in, c_out, stride=2):
        self.conv1 = Conv(registry, rng, f"{name}.conv1", c_in, c_out, stride=stride)
        self.norm1 = GroupNorm(registry, f"{name}.norm1", c_out)
        self.conv2 = Conv(registry, rng, f"{name}.conv2", c_out, c_out)
        self.norm2 = GroupNorm(registry, f"{name}.norm2", c_out)
        self.shortcut = Conv(registry, rng, f"{name}.shortcut", c_in, c_out, k=1, stride=stride, pad=0)
        self.shortcut_norm = GroupNorm(registry, f"{name}.shortcut_norm", c_out)

    def __call__(self, x):
        h = ops.relu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        s = self.shortcut_norm(self.shortcut(x))
        return ops.relu(ops.add(h, s))


class Encoder:
    """Stem conv plus residual stages, each halving the spatial dims.

    Returns the latent (final stage output) and the pyramid of skip taps:
    stem output followed by every stage output, in encoder order.
    """

    def __init__(self, registry, rng, prefix, config):
        chans = config.encoder_channels()
        self.resolution = config.input_resolution
        self.stem_conv = Conv(registry, rng, f"{prefix}.stem.conv", 3, chans[0], stride=2)
        self.stem_norm = GroupNorm(registry, f"{prefix}.stem.norm", chans[0])
        self.stages = [
            ResidualStage(registry, rng, f"{prefix}.stage{i + 1}", chans[i], chans[i + 1])
            for i in range(config.n_stages)
        ]

    def __call__(self, x):
        if x.data.ndim != 4 or x.data.shape[1] != 3:
            raise ShapeError(f"encoder expects (B,3,H,W) input, got {x.data.shape}")
        if x.data.shape[2] != self.resolution or x.data.shape[3] != self.resolution:
            raise ShapeError(
                f"encoder configured for {self.resolution}x{self.resolution} input, got {x.data.shape}"
            )
        h = ops.relu(self.stem_norm(self.stem_conv(x)))
        pyramid = [h]
        for stage in self.stages:
            h = stage(h)
            pyramid.append(h)
        return h, pyramid


class DecoderStage:
    """Upsample (except at the bottleneck), then two conv+norm+relu blocks.

    ``extra`` tail channels are appended to the second conv's output; they
    form the fusion tail of a deactivable skip link.
    """

    def __init__(self, registry, rng, name, c_in, c_out, extra, upsample):
        self.upsample = upsample
        self.conv1 = Conv(registry, rng, f"{name}.conv1", c_in, c_out)
        self.norm1 = GroupNorm(registry, f"{name}.norm1", c_out)
        self.conv2 = Conv(registry, rng, f"{name}.conv2", c_out, c_out + extra)
        self.norm2 = GroupNorm(registry, f"{name}.norm2", c_out + extra)

    def __call__(self, x):
        if self.upsample:
            x = ops.upsample_nearest(x, 2)
        h = ops.relu(self.norm1(self.conv1(x)))
        return ops.relu(self.norm2(self.conv2(h)))


class Decoder:
    """Mirror of the encoder: five up-stages and a two-conv output head.

    skip_taps: "deactivable" builds fusion tails and max-fuses when active;
    "standard_concat" concatenates encoder taps after each stage;
    "plain" has no skip machinery at all (used for the image decoder).
    The "none" ablation keeps the deactivable layout but never fuses.
    """

    def __init__(self, registry, rng, prefix, config, skip_taps, out_sigmoid):
        self.skip_taps = skip_taps
        self.out_sigmoid = out_sigmoid
        chans = config.encoder_channels()  # [stem, stage1, ..., stageN]
        taps_deep_first = list(reversed(chans))  # stage N ... stem
        w = config.base_width

        self.tail_channels = []
        self.stages = []
        c_in = config.latent_channels
        for i, m in enumerate(taps_deep_first):
            c_out = m
            if skip_taps in ("deactivable", "none"):
                extra = m
            else:
                extra = 0
            stage = DecoderStage(
                registry, rng, f"{prefix}.stage{i + 1}", c_in, c_out, extra, upsample=i > 0
            )
            self.stages.append(stage)
            self.tail_channels.append(m)
            if skip_taps == "plain":
                c_in = c_out
            else:
                c_in = c_out + m
        self.head_conv1 = Conv(registry, rng, f"{prefix}.head.conv1", c_in, w)
        self.head_norm = GroupNorm(registry, f"{prefix}.head.norm", w)
        self.head_conv2 = Conv(registry, rng, f"{prefix}.head.conv2", w, 3)

    @property
    def has_fusion_sites(self):
        return self.skip_taps == "deactivable"

    def __call__(self, latent, pyramid=None, state=SkipState.INACTIVE):
        if self.skip_taps == "plain" and pyramid is not None:
            raise ConfigError("this decoder takes no skip pyramid")
        if self.skip_taps == "none" and pyramid is not None:
            raise ConfigError("skip_mode=none decoder takes no skip pyramid")
        if state is SkipState.ACTIVE and self.skip_taps in ("deactivable", "standard_concat"):
            if pyramid is None:
                raise ConfigError("active skip state requires an encoder pyramid")
            if len(pyramid) != len(self.stages):
                raise ShapeError(
                    f"pyramid has {len(pyramid)} taps, decoder expects {len(self.stages)}"
                )

        h = latent
        for i, stage in enumerate(self.stages):
            h = stage(h)
            if self.skip_taps == "deactivable":
                if state is SkipState.ACTIVE:
                    tap = pyramid[len(self.stages) - 1 - i]
                    h = fuse(h, tap, SkipState.ACTIVE)
                else:
                    h = fuse(h, None, SkipState.INACTIVE)
            elif self.skip_taps == "standard_concat":
                if state is not SkipState.ACTIVE:
                    raise ConfigError(
                        "standard_concat skips cannot be deactivated; "
                        "this decoder only supports image-to-normal passes"
                    )
                tap = pyramid[len(self.stages) - 1 - i]
                h = ops.concat_channels(h, tap)
        h = ops.upsample_nearest(h, 2)
        h = ops.relu(self.head_norm(self.head_conv1(h)))
        h = self.head_conv2(h)
        if self.out_sigmoid:
            h = ops.sigmoid(h)
        return h


def fuse(decoder_feats, encoder_feats, state):
    """Deactivable skip fusion.

    Inactive: decoder features pass through unchanged. Active: the last m
    decoder channels (m = encoder feature count) are replaced by an
    elementwise max with the encoder features; leading channels untouched.
    """
    if state is SkipState.INACTIVE:
        return decoder_feats
    if encoder_feats is None:
        raise ConfigError("active fusion requires encoder features")
    b, c_total = decoder_feats.data.shape[:2]
    m = encoder_feats.data.shape[1]
    if m >= c_total:
        raise ShapeError(
            f"fusion tail of {m} channels does not fit decoder features with {c_total} channels"
        )
    if (
        encoder_feats.data.shape[0] != b
        or encoder_feats.data.shape[2:] != decoder_feats.data.shape[2:]
    ):
        raise ShapeError(
            f"fusion shape mismatch: encoder {encoder_feats.data.shape} vs decoder {decoder_feats.data.shape}"
        )
    head = ops.slice_channels(decoder_feats, 0, c_total - m)
    tail = ops.slice_channels(decoder_feats, c_total - m, m)
    fused = ops.elementwise_max(encoder_feats, tail)
    return ops.concat_channels(head, fused)


class CrossModalModel:
    """The four networks over one parameter registry.

    Construction order (e_i, e_n, d_n, d_i) fixes the rng stream, so equal
    seeds and equal layer shapes give bit-identical initial weights.
    """

    def __init__(self, config):
        if not isinstance(config, ModelConfig):
            config = ModelConfig.from_dict(dict(config))
        config.validate()
        self.config = config
        self.registry = ParamRegistry()
        rng = np.random.default_rng(config.seed)

        self.e_i = Encoder(self.registry, rng, "e_i", config)
        self.e_n = Encoder(self.registry, rng, "e_n", config) if config.has_normal_encoder else None
        d_n_taps = {"deactivable": "deactivable", "none": "none", "standard_concat": "standard_concat"}[
            config.skip_mode
        ]
        self.d_n = Decoder(self.registry, rng, "d_n", config, d_n_taps, out_sigmoid=False)
        self.d_i = (
            Decoder(self.registry, rng, "d_i", config, "plain", out_sigmoid=True)
            if config.has_image_decoder
            else None
        )

    def zero_grad(self):
        self.registry.zero_grad()

    def parameters(self):
        return dict(self.registry.items())

    def astype(self, dtype):
        """Cast parameters in place (float64 for gradient checking)."""
        for _, t in self.registry.items():
            t.data = t.data.astype(dtype)
        return self

    def encode(self, name, x):
        encoder = {"e_i": self.e_i, "e_n": self.e_n}[name]
        if encoder is None:
            raise ConfigError(f"model was configured without {name}")
        return encoder(x)

    def forward(self, x, mode):
        if mode is ForwardMode.IMAGE_TO_NORMAL:
            latent, pyramid = self.e_i(x)
            if self.config.skip_mode == "none":
                return self.d_n(latent, None, SkipState.INACTIVE)
            return self.d_n(latent, pyramid, SkipState.ACTIVE)
        if mode is ForwardMode.IMAGE_TO_IMAGE:
            if self.d_i is None:
                raise ConfigError("image-to-image pass requires the image decoder")
            latent, _ = self.e_i(x)
            return self.d_i(latent)
        if mode is ForwardMode.NORMAL_TO_NORMAL:
            if self.e_n is None:
                raise ConfigError("normal-to-normal pass requires the normal encoder")
            if self.config.skip_mode == "standard_concat":
                raise ConfigError(
                    "standard_concat skips cannot run a normal-to-normal pass; "
                    "use the deactivable skip mode or drop the normal encoder"
                )
            latent, _ = self.e_n(x)
            return self.d_n(latent, None, SkipState.INACTIVE)
        raise ConfigError(f"unknown forward mode {mode!r}")

    def paired_forward(self, image):
        """One image encoding, decoded to normals (skips active) and, when
        present, back to an image. Gradients from both heads sum into e_i."""
        latent, pyramid = self.e_i(image)
        if self.config.skip_mode == "none":
            out_n = self.d_n(latent, None, SkipState.INACTIVE)
        else:
            out_n = self.d_n(latent, pyramid, SkipState.ACTIVE)
        out_i = self.d_i(latent) if self.d_i is not None else None
        return out_n, out_i

    def subnetwork_prefixes(self, mode):
        if mode is ForwardMode.IMAGE_TO_NORMAL:
            return ("e_i.", "d_n.")
        if mode is ForwardMode.IMAGE_TO_IMAGE:
            return ("e_i.", "d_i.")
        if mode is ForwardMode.NORMAL_TO_NORMAL:
            return ("e_n.", "d_n.")
        raise ConfigError(f"unknown forward mode {mode!r}")
