"""Training procedure: per-kind batch dispatch, Adam updates, CSV logging.

Paired batches run two sequential updates: a normal-to-normal iteration,
then an image-to-normal plus image-to-image iteration whose losses sum with
equal weights. Single-modality batches run the matching autoencoding
iteration. Every batch must be homogeneous in kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .data import SampleKind
from .model import ConfigError, ForwardMode, ModelConfig
from .tensor import NumericalError, Tensor, add


class MissingGradError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 40          # paper-scale preset; step budget drives desk runs
    steps: int = 300
    batch_size: int = 4
    seed: int = 0
    paired_single_update: bool = False  # accumulate both paired phases into one update
    data_dir: str | None = None
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)

    def to_dict(self):
        d = self.__dict__.copy()
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


class Adam:
    """Adam with bias correction; one step counter shared by all parameters."""

    def __init__(self, registry, learning_rate=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.registry = registry
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in registry.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in registry.items()}

    def step(self, params):
        """Update the given name->Tensor mapping from their gradients, then
        clear those gradients. Every parameter passed in must have a grad."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = p.grad
            if g is None:
                raise MissingGradError(f"parameter {name!r} has no gradient")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / c1
            v_hat = v / c2
            p.data -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
            p.zero_grad()


@dataclass
class PhaseRecord:
    phase: str
    loss: float | None
    updated: bool
    skipped_reason: str | None = None


def stack_batch(samples, attr):
    arrays = [getattr(s, attr) for s in samples]
    return Tensor(np.stack(arrays).astype(np.float32))


def _finite_loss(loss, phase):
    value = float(loss.data)
    if not math.isfinite(value):
        raise NumericalError(f"{phase} loss is not finite: {value}")
    return value


def train_iteration(model, batch, optimizer, paired_single_update=False):
    """Run the update(s) for one homogeneous batch; returns phase records."""
    kinds = {s.kind for s in batch}
    if len(kinds) != 1:
        raise ValueError(f"batch mixes sample kinds: {sorted(k.value for k in kinds)}")
    kind = kinds.pop()
    cfg = model.config
    mask = stack_batch(batch, "mask")
    records = []

    if kind is SampleKind.PAIRED:
        images = stack_batch(batch, "image")
        normals = stack_batch(batch, "normals")

        can_n2n = cfg.has_normal_encoder and cfg.skip_mode != "standard_concat"
        if can_n2n:
            model.zero_grad()
            out = model.forward(normals, ForwardMode.NORMAL_TO_NORMAL)
            loss = losses.cosine_loss(normals, out, mask)
            value = _finite_loss(loss, "n2n")
            loss.backward()
            if paired_single_update:
                records.append(PhaseRecord("n2n", value, updated=False))
            else:
                optimizer.step(model.registry.subset(model.subnetwork_prefixes(ForwardMode.NORMAL_TO_NORMAL)))
                records.append(PhaseRecord("n2n", value, updated=True))
        else:
            reason = "no normal encoder" if not cfg.has_normal_encoder else "standard_concat skips"
            records.append(PhaseRecord("n2n", None, updated=False, skipped_reason=reason))

        if not paired_single_update or not can_n2n:
            model.zero_grad()
        out_n, out_i = model.paired_forward(images)
        loss = losses.cosine_loss(normals, out_n, mask)
        phase = "i2n"
        prefixes = {"e_i.", "d_n."}
        if out_i is not None:
            loss = add(loss, losses.l2_loss(images, out_i, mask))
            phase = "i2n+i2i"
            prefixes.add("d_i.")
        value = _finite_loss(loss, phase)
        loss.backward()
        if paired_single_update and can_n2n:
            prefixes.update(("e_n.",))
        optimizer.step(model.registry.subset(tuple(prefixes)))
        records.append(PhaseRecord(phase, value, updated=True))
        return records

    if kind is SampleKind.IMAGE_ONLY:
        if not cfg.has_image_decoder:
            return [PhaseRecord("i2i", None, updated=False, skipped_reason="no image decoder")]
        images = stack_batch(batch, "image")
        model.zero_grad()
        out = model.forward(images, ForwardMode.IMAGE_TO_IMAGE)
        loss = losses.l2_loss(images, out, mask)
        value = _finite_loss(loss, "i2i")
        loss.backward()
        optimizer.step(model.registry.subset(model.subnetwork_prefixes(ForwardMode.IMAGE_TO_IMAGE)))
        return [PhaseRecord("i2i", value, updated=True)]

    if kind is SampleKind.NORMAL_ONLY:
        if not cfg.has_normal_encoder:
            return [PhaseRecord("n2n", None, updated=False, skipped_reason="no normal encoder")]
        if cfg.skip_mode == "standard_concat":
            return [PhaseRecord("n2n", None, updated=False, skipped_reason="standard_concat skips")]
        normals = stack_batch(batch, "normals")
        model.zero_grad()
        out = model.forward(normals, ForwardMode.NORMAL_TO_NORMAL)
        loss = losses.cosine_loss(normals, out, mask)
        value = _finite_loss(loss, "n2n")
        loss.backward()
        optimizer.step(model.registry.subset(model.subnetwork_prefixes(ForwardMode.NORMAL_TO_NORMAL)))
        return [PhaseRecord("n2n", value, updated=True)]

    raise ValueError(f"unknown sample kind {kind!r}")


class BatchScheduler:
    """Round-robin over kinds (paired, image-only, normal-only) as available;
    each kind's pool reshuffles when it empties."""

    KIND_ORDER = (SampleKind.PAIRED, SampleKind.IMAGE_ONLY, SampleKind.NORMAL_ONLY)

    def __init__(self, samples, batch_size, seed):
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self.pools = {k: [s for s in samples if s.kind is k] for k in self.KIND_ORDER}
        self.pools = {k: v for k, v in self.pools.items() if len(v) >= batch_size}
        if not self.pools:
            raise ValueError("no sample kind has enough samples for one batch")
        self.queues = {k: [] for k in self.pools}
        self._cursor = 0

    def _refill(self, kind):
        pool = list(self.pools[kind])
        order = self.rng.permutation(len(pool))
        self.queues[kind] = [pool[i] for i in order]

    def next_batch(self):
        kinds = [k for k in self.KIND_ORDER if k in self.pools]
        kind = kinds[self._cursor % len(kinds)]
        self._cursor += 1
        if len(self.queues[kind]) < self.batch_size:
            self._refill(kind)
        batch = self.queues[kind][: self.batch_size]
        self.queues[kind] = self.queues[kind][self.batch_size:]
        return kind, batch


def train(model, samples, config, steps=None, log_stream=None, progress=None):
    """Run the step-budgeted training loop; returns the per-step records.

    Writes `step,kind,phase,loss` CSV rows to log_stream when given (skipped
    phases carry 'skipped:<reason>' in the loss column).
    """
    steps = config.steps if steps is None else steps
    optimizer = Adam(
        model.registry,
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
    )
    scheduler = BatchScheduler(samples, config.batch_size, config.seed)
    if log_stream is not None:
        log_stream.write("step,kind,phase,loss\n")
    history = []
    for step in range(1, steps + 1):
        kind, batch = scheduler.next_batch()
        records = train_iteration(
            model, batch, optimizer, paired_single_update=config.paired_single_update
        )
        history.append((step, kind, records))
        if log_stream is not None:
            for rec in records:
                loss_field = (
                    f"{rec.loss:.6f}" if rec.loss is not None else f"skipped:{rec.skipped_reason}"
                )
                log_stream.write(f"{step},{kind.value},{rec.phase},{loss_field}\n")
        if progress is not None:
            progress(step, kind, records)
    return optimizer, history


def smoothed_phase_losses(history, phase, alpha=0.1):
    """Exponentially smoothed series of one phase's losses, keyed by step."""
    smoothed = {}
    value = None
    for step, _, records in history:
        for rec in records:
            if rec.phase == phase and rec.loss is not None:
                value = rec.loss if value is None else alpha * rec.loss + (1 - alpha) * value
                smoothed[step] = value
    return smoothed
