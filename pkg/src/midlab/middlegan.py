"""
Three-player GAN: one generator against a source and a target discriminator.

One model is trained per class. Each minibatch performs, in order, one Adam
step for the source discriminator (real source vs. fake), one for the
target discriminator (real target vs. fake), and one for the generator
against both discriminators at once.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .domains import LabeledDataset, sample_noise
from .errors import ClassMismatchError, DivergenceError, NonFiniteError
from .nn_core import AdamState, Network, PROB_FLOOR, adam_step, bce_loss

log = logging.getLogger(__name__)

VARIANTS = ("saturating", "non_saturating")


@dataclass
class GanTrainConfig:
    epochs: int = 100
    batch_size: int = 64
    noise_dim: int = 4
    lr_g: float = 0.0002
    lr_ds: float = 0.0002
    lr_dt: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    generator_hidden: tuple = (32, 32)
    discriminator_hidden: tuple = (32, 32)
    generator_loss_variant: str = "saturating"
    label_smoothing: float = 0.0

    def __post_init__(self):
        # epochs == 0 is accepted here (untrained model); config files demand >= 1
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.noise_dim < 1:
            raise ValueError("noise_dim must be >= 1")
        if self.generator_loss_variant not in VARIANTS:
            raise ValueError(f"generator_loss_variant must be one of {VARIANTS}")
        if not 0.0 <= self.label_smoothing <= 0.2:
            raise ValueError("label_smoothing must lie in [0, 0.2]")
        for name in ("lr_g", "lr_ds", "lr_dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        self.generator_hidden = tuple(int(h) for h in self.generator_hidden)
        self.discriminator_hidden = tuple(int(h) for h in self.discriminator_hidden)


@dataclass
class EpochRecord:
    epoch: int
    loss_g: float
    loss_ds: float
    loss_dt: float
    v_estimate: float


@dataclass
class MiddleGanModel:
    generator: Network
    disc_source: Network
    disc_target: Network
    class_label: int
    class_count: int
    output_scale: float
    history: list = field(default_factory=list)
    # discriminator outputs on the final minibatch, before its D updates
    last_probabilities: dict | None = None

    @property
    def noise_dim(self):
        return self.generator.in_dim

    def sample(self, z):
        return self.output_scale * self.generator(z)

    def history_csv(self) -> str:
        return history_to_csv([self])


def history_to_csv(models) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "epoch", "loss_g", "loss_ds", "loss_dt", "v_estimate"])
    for m in models:
        for r in m.history:
            w.writerow(
                [m.class_label, r.epoch]
                + [repr(float(v)) for v in (r.loss_g, r.loss_ds, r.loss_dt, r.v_estimate)]
            )
    return buf.getvalue()


def value_objective_estimate(ds_real, dt_real, ds_fake, dt_fake, with_diagnostics=False):
    """Monte-Carlo estimate of the three-player value.

    mean log Ds(x_s) + mean log(1 - Ds(G(z))) + mean log Dt(x_t)
    + mean log(1 - Dt(G(z))). Probabilities are clamped to [1e-7, 1 - 1e-7];
    with ``with_diagnostics`` the number of clamped entries is returned too.
    """
    arrays = [np.asarray(a, dtype=np.float64).reshape(-1) for a in (ds_real, dt_real, ds_fake, dt_fake)]
    if any(a.size == 0 for a in arrays):
        raise ValueError("probability sets must be nonempty")
    clamped = 0
    out = []
    for a in arrays:
        c = np.clip(a, PROB_FLOOR, 1.0 - PROB_FLOOR)
        clamped += int(np.count_nonzero(c != a))
        out.append(c)
    if clamped:
        log.debug("value estimate clamped %d probabilities", clamped)
    ds_r, dt_r, ds_f, dt_f = out
    v = float(
        np.mean(np.log(ds_r))
        + np.mean(np.log1p(-ds_f))
        + np.mean(np.log(dt_r))
        + np.mean(np.log1p(-dt_f))
    )
    return (v, clamped) if with_diagnostics else v


def _single_class(data: LabeledDataset, role: str) -> int:
    present = np.unique(data.labels)
    if present.size != 1:
        raise ClassMismatchError(f"{role} dataset holds classes {present.tolist()}; expected one")
    return int(present[0])


def build_model(data_dim, class_label, class_count, output_scale, cfg: GanTrainConfig, rng):
    g_sizes = [cfg.noise_dim, *cfg.generator_hidden, data_dim]
    d_sizes = [data_dim, *cfg.discriminator_hidden, 1]
    g_acts = ["leaky_relu"] * len(cfg.generator_hidden) + ["tanh"]
    d_acts = ["leaky_relu"] * len(cfg.discriminator_hidden) + ["sigmoid"]
    return MiddleGanModel(
        Network.build(g_sizes, g_acts, rng),
        Network.build(d_sizes, d_acts, rng),
        Network.build(d_sizes, d_acts, rng),
        class_label,
        class_count,
        output_scale,
    )


def output_scale_for(*datasets) -> float:
    """Generator output range: tanh scaled to cover the data with margin."""
    m = max(float(np.max(np.abs(d.points))) for d in datasets)
    return 1.25 * max(m, 1e-3)


def _disc_step(disc, state, real, fake, smooth):
    p_real, c_real = disc.forward(real)
    p_fake, c_fake = disc.forward(fake)
    l_real, g_real = bce_loss(p_real, 1.0 - smooth)
    l_fake, g_fake = bce_loss(p_fake, 0.0)
    grads_r, _ = disc.backward(c_real, g_real)
    grads_f, _ = disc.backward(c_fake, g_fake)
    adam_step(disc, [a + b for a, b in zip(grads_r, grads_f)], state)
    return l_real + l_fake, p_real, p_fake


def _generator_step(model, state, z, variant):
    x, g_cache = model.generator.forward(z)
    fake = model.output_scale * x
    loss = 0.0
    d_input = np.zeros_like(fake)
    for disc in (model.disc_source, model.disc_target):
        p, cache = disc.forward(fake)
        pc = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
        n = p.shape[0]
        if variant == "non_saturating":
            loss -= float(np.mean(np.log(pc)))
            up = -1.0 / pc / n
        else:
            loss += float(np.mean(np.log1p(-pc)))
            up = -1.0 / (1.0 - pc) / n
        _, dx = disc.backward(cache, up)
        d_input += dx
    grads, _ = model.generator.backward(g_cache, d_input * model.output_scale)
    adam_step(model.generator, grads, state)
    return loss


def train_middlegan(
    source_cls: LabeledDataset,
    target_cls: LabeledDataset,
    cfg: GanTrainConfig,
    seed: int,
) -> MiddleGanModel:
    """Train one generator between a single-class source and target sample."""
    ks = _single_class(source_cls, "source")
    kt = _single_class(target_cls, "target")
    if ks != kt:
        raise ClassMismatchError(f"source holds class {ks} but target holds class {kt}", ks)
    if source_cls.dim != target_cls.dim:
        raise ValueError("source and target dimensions differ")
    rng = np.random.default_rng(seed)
    model = build_model(
        source_cls.dim,
        ks,
        max(source_cls.class_count, target_cls.class_count),
        output_scale_for(source_cls, target_cls),
        cfg,
        rng,
    )
    opt = dict(beta1=cfg.beta1, beta2=cfg.beta2)
    st_g = AdamState.for_network(model.generator, cfg.lr_g, **opt)
    st_s = AdamState.for_network(model.disc_source, cfg.lr_ds, **opt)
    st_t = AdamState.for_network(model.disc_target, cfg.lr_dt, **opt)

    xs, xt = source_cls.points, target_cls.points
    bs = cfg.batch_size
    n_batches = max(1, max(len(xs), len(xt)) // bs)
    for epoch in range(1, cfg.epochs + 1):
        idx_s = _cycled_permutation(rng, len(xs), n_batches * bs)
        idx_t = _cycled_permutation(rng, len(xt), n_batches * bs)
        try:
            for b in range(n_batches):
                sl = slice(b * bs, (b + 1) * bs)
                z = sample_noise(bs, cfg.noise_dim, rng)
                fake = model.sample(z)
                loss_ds, ds_real, ds_fake = _disc_step(
                    model.disc_source, st_s, xs[idx_s[sl]], fake, cfg.label_smoothing
                )
                loss_dt, dt_real, dt_fake = _disc_step(
                    model.disc_target, st_t, xt[idx_t[sl]], fake, cfg.label_smoothing
                )
                loss_g = _generator_step(model, st_g, z, cfg.generator_loss_variant)
        except NonFiniteError as exc:
            raise DivergenceError(f"training diverged in epoch {epoch}: {exc}", epoch) from exc
        v = value_objective_estimate(ds_real, dt_real, ds_fake, dt_fake)
        if not all(math.isfinite(x) for x in (loss_g, loss_ds, loss_dt, v)):
            raise DivergenceError(f"non-finite loss in epoch {epoch}", epoch)
        model.last_probabilities = dict(
            ds_real=ds_real, dt_real=dt_real, ds_fake=ds_fake, dt_fake=dt_fake
        )
        model.history.append(EpochRecord(epoch, loss_g, loss_ds, loss_dt, v))
    return model


def _cycled_permutation(rng, n, length):
    reps = -(-length // n)
    return np.concatenate([rng.permutation(n) for _ in range(reps)])[:length]


def generate(model: MiddleGanModel, n: int, seed: int) -> LabeledDataset:
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    z = sample_noise(n, model.noise_dim, rng)
    return LabeledDataset(
        model.sample(z), np.full(n, model.class_label), "generated", model.class_count
    )


def generate_all_classes(
    source: LabeledDataset,
    target_pseudo: LabeledDataset,
    cfg: GanTrainConfig,
    n_fake_per_class: int | None,
    seed: int,
):
    """Train one MiddleGAN per class and pool their samples.

    Class k's model uses seed derive_seed(seed, k) and samples with
    derive_seed(seed, k, GENERATE). ``n_fake_per_class`` defaults to the
    source's per-class count. Returns (fake_dataset, models).
    """
    if source.class_count != target_pseudo.class_count:
        raise ClassMismatchError(
            f"class counts differ: source {source.class_count}, target {target_pseudo.class_count}"
        )
    counts_s = source.class_counts()
    counts_t = target_pseudo.class_counts()
    for k in range(source.class_count):
        if counts_s[k] == 0 or counts_t[k] == 0:
            where = "source" if counts_s[k] == 0 else "target"
            raise ClassMismatchError(f"class {k} absent from the {where} dataset", k)
    models, chunks = [], []
    for k in range(source.class_count):
        model = train_middlegan(
            source.of_class(k), target_pseudo.of_class(k), cfg, seeding.derive_seed(seed, k)
        )
        models.append(model)
        n = int(counts_s[k]) if n_fake_per_class is None else n_fake_per_class
        if n > 0:
            chunks.append(generate(model, n, seeding.derive_seed(seed, k, seeding.GENERATE)))
    if not chunks:
        return None, models
    fake = LabeledDataset(
        np.concatenate([c.points for c in chunks]),
        np.concatenate([c.labels for c in chunks]),
        "generated",
        source.class_count,
    )
    return fake, models


def fit_discriminator(
    model: MiddleGanModel,
    real: LabeledDataset,
    cfg: GanTrainConfig,
    steps: int,
    seed: int,
    which: str = "source",
) -> Network:
    """Train one discriminator against the model's frozen generator.

    With the generator fixed, the discriminator's optimum is the density
    ratio p / (p + pm); this isolates that half of the game.
    """
    disc = model.disc_source if which == "source" else model.disc_target
    lr = cfg.lr_ds if which == "source" else cfg.lr_dt
    state = AdamState.for_network(disc, lr, beta1=cfg.beta1, beta2=cfg.beta2)
    rng = np.random.default_rng(seed)
    bs = cfg.batch_size
    for _ in range(steps):
        idx = rng.integers(0, len(real), size=bs)
        fake = model.sample(sample_noise(bs, model.noise_dim, rng))
        _disc_step(disc, state, real.points[idx], fake, cfg.label_smoothing)
    return disc
