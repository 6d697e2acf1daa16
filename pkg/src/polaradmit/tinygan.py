"""Desk-scale constrained CycleGAN.

Domain X is polarimetric (4 intensity channels), domain Y is RGB.  ``M_XY``
maps polar to RGB, ``M_YX`` maps RGB to polar, ``D_X`` / ``D_Y`` score
images of each domain.  Images enter the networks scaled from [0, 255] to
[-1, 1]; generator outputs come out of a tanh and are mapped back to
(0, 255) before the calibration and admissibility penalties are applied.
"""
import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import read_key_value
from .errors import EmptyDataset, NonFiniteLoss, ShapeMismatch
from .stokes import DEFAULT_CALIBRATION

POLAR_CHANNELS = 4
RGB_CHANNELS = 3


# ---------------------------------------------------------------------------
# layers


class Conv3x3:
    kind = "conv"

    def __init__(self, cin, cout, name):
        self.cin, self.cout, self.name = cin, cout, name
        self.weight = Tensor(np.zeros((cout, cin, 3, 3)), requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(cout), requires_grad=True, name=f"{name}.bias")

    def params(self):
        return [self.weight, self.bias]

    def init(self, rng, gain):
        std = gain / math.sqrt(self.cin * 9)
        self.weight.value = rng.normal(0.0, std, self.weight.shape)
        self.bias.value = np.zeros(self.cout)

    def __call__(self, x):
        return ad.conv2d(x, self.weight, self.bias)


class Affine:
    """Per-pixel channel mixing (a 1x1 convolution)."""

    kind = "affine"

    def __init__(self, cin, cout, name):
        self.cin, self.cout, self.name = cin, cout, name
        self.weight = Tensor(np.zeros((cout, cin)), requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(cout), requires_grad=True, name=f"{name}.bias")

    def params(self):
        return [self.weight, self.bias]

    def init(self, rng, gain):
        self.weight.value = rng.normal(0.0, gain / math.sqrt(self.cin), self.weight.shape)
        self.bias.value = np.zeros(self.cout)

    def __call__(self, x):
        return ad.channel_linear(x, self.weight, self.bias)


class LeakyReLU:
    kind = "leaky_relu"

    def __init__(self, slope=0.2):
        self.slope = slope

    def params(self):
        return []

    def __call__(self, x):
        return ad.leaky_relu(x, self.slope)


class Tanh:
    kind = "tanh"

    def params(self):
        return []

    def __call__(self, x):
        return ad.tanh(x)


class SpatialMean:
    kind = "spatial_mean"

    def params(self):
        return []

    def __call__(self, x):
        return ad.spatial_mean(x)


class TinyNet:
    def __init__(self, layers, name="net"):
        self.layers = list(layers)
        self.name = name
        chans = [l for l in self.layers if hasattr(l, "cin")]
        if not chans:
            raise ValueError("a TinyNet needs at least one parametric layer")
        for prev, nxt in zip(chans, chans[1:]):
            if prev.cout != nxt.cin:
                raise ShapeMismatch(f"{prev.name} outputs {prev.cout} channels but {nxt.name} expects {nxt.cin}")
        self.in_channels = chans[0].cin
        self.out_channels = chans[-1].cout

    def parameters(self):
        return {p.name: p for layer in self.layers for p in layer.params()}

    def state(self):
        return {f"{self.name}.{k}": v.value.copy() for k, v in self.parameters().items()}

    def load_state(self, state):
        for k, p in self.parameters().items():
            arr = np.asarray(state[f"{self.name}.{k}"])
            if arr.shape != p.shape:
                raise ShapeMismatch(f"{k}: checkpoint shape {arr.shape} != {p.shape}")
            p.value = arr.copy()
        return self

    def astype(self, dtype):
        for p in self.parameters().values():
            p.value = p.value.astype(dtype)
        return self

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def forward(self, x):
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.value.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatch(f"{self.name} expects (B, {self.in_channels}, H, W) input, got {x.shape}")
        for layer in self.layers:
            x = layer(x)
        return x

    __call__ = forward


def build_generator(cin, cout, width=16, name="gen", rng=None, slope=0.2, out_gain=1.0):
    """conv(cin->width) -> lrelu -> conv(width->width) -> lrelu -> conv(width->cout) -> tanh."""
    net = TinyNet([
        Conv3x3(cin, width, "conv0"), LeakyReLU(slope),
        Conv3x3(width, width, "conv1"), LeakyReLU(slope),
        Conv3x3(width, cout, "conv2"), Tanh(),
    ], name=name)
    if rng is not None:
        gain = math.sqrt(2.0 / (1.0 + slope * slope))
        net.layers[0].init(rng, gain)
        net.layers[2].init(rng, gain)
        net.layers[4].init(rng, out_gain)
    return net


def build_discriminator(cin, width=16, name="disc", rng=None, slope=0.2):
    """conv(cin->width) -> lrelu -> conv(width->1) -> spatial mean; output shape (B, 1)."""
    net = TinyNet([
        Conv3x3(cin, width, "conv0"), LeakyReLU(slope),
        Conv3x3(width, 1, "conv1"), SpatialMean(),
    ], name=name)
    if rng is not None:
        net.layers[0].init(rng, math.sqrt(2.0 / (1.0 + slope * slope)))
        net.layers[2].init(rng, 1.0)
    return net


def forward(net, x):
    return net.forward(x)


# ---------------------------------------------------------------------------
# losses


def scale_to_intensity(t):
    """Map tanh outputs in (-1, 1) to intensities in (0, 255)."""
    if isinstance(t, Tensor):
        return (t + 1.0) * 127.5
    return 127.5 * (np.asarray(t) + 1.0)


def intensity_to_unit(v):
    """Inverse of ``scale_to_intensity`` for data arrays."""
    return np.asarray(v) / 127.5 - 1.0


def lsgan_losses(d_real, d_fake):
    """Least-squares adversarial losses: ``(d_loss, g_loss)``."""
    d_loss = ad.mean(ad.square(d_real - 1.0)) + ad.mean(ad.square(d_fake))
    g_loss = ad.mean(ad.square(d_fake - 1.0))
    return d_loss, g_loss


def cycle_loss(x, x_rec, y, y_rec):
    if x.shape != x_rec.shape or y.shape != y_rec.shape:
        raise ShapeMismatch(f"cycle pairs differ in shape: {x.shape}/{x_rec.shape}, {y.shape}/{y_rec.shape}")
    return ad.mean(ad.absolute(y - y_rec)) + ad.mean(ad.absolute(x - x_rec))


def constraint_losses(fake_polar, c=DEFAULT_CALIBRATION):
    """Calibration and admissibility penalties of a (B, 4, H, W) intensity batch.

    Returns ``(l_c1, l_c2)``: the batch-and-pixel means of
    ``||I - A a_pinv I||_2`` and of ``max(s1^2 + s2^2 - s0^2, 0)``.
    """
    if fake_polar.value.ndim != 4 or fake_polar.shape[1] != POLAR_CHANNELS:
        raise ShapeMismatch(f"constraint losses need a (B, 4, H, W) batch, got {fake_polar.shape}")
    s = ad.channel_linear(fake_polar, c.a_pinv)
    rec = ad.channel_linear(s, c.a)
    l_c1 = ad.mean(ad.channel_norm(fake_polar - rec))
    excess = ad.square(s[:, 1]) + ad.square(s[:, 2]) - ad.square(s[:, 0])
    l_c2 = ad.mean(ad.relu(excess))
    return l_c1, l_c2


def c2_violation_fraction(polar_intensity, c=DEFAULT_CALIBRATION):
    """Fraction of pixels of a (B, 4, H, W) intensity array with s1^2 + s2^2 > s0^2."""
    v = np.asarray(polar_intensity, dtype=np.float64)
    s = np.einsum("oc,bchw->bohw", c.a_pinv, v)
    return float(np.mean(s[:, 1] ** 2 + s[:, 2] ** 2 > s[:, 0] ** 2))


def c3_holds(polar_intensity, c=DEFAULT_CALIBRATION):
    v = np.asarray(polar_intensity, dtype=np.float64)
    s0 = np.einsum("c,bchw->bhw", c.a_pinv[0], v)
    return bool(np.all(s0 > 0))


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    lambda_cyc: float = 10.0
    mu: float = 1.0
    nu: float = 1.0
    lr_start: float = 2e-4
    lr_end: float = 2e-6
    epochs: int = 1
    batch: int = 4
    patch: int = 16
    seed: int = 0
    steps_per_epoch: int = 0  # 0: one pass over the larger dataset per epoch
    width: int = 16
    slope: float = 0.2
    out_gain: float = 3.0
    dtype: str = "f32"

    def __post_init__(self):
        for k in ("lambda_cyc", "mu", "nu"):
            if not getattr(self, k) >= 0:
                raise ValueError(f"{k} must be >= 0")
        if not self.lr_start >= self.lr_end > 0:
            raise ValueError("learning rates must satisfy lr_start >= lr_end > 0")
        if self.epochs < 1 or self.batch < 1 or self.patch < 1 or self.width < 1:
            raise ValueError("epochs, batch, patch and width must be positive")
        if self.steps_per_epoch < 0:
            raise ValueError("steps_per_epoch must be >= 0")
        if self.dtype not in ("f32", "f64"):
            raise ValueError("dtype must be f32 or f64")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "f32" else np.float64

    def lr_at(self, epoch):
        if self.epochs == 1:
            return self.lr_start
        t = epoch / (self.epochs - 1)
        return (1.0 - t) * self.lr_start + t * self.lr_end

    @classmethod
    def from_mapping(cls, values):
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            key = key.strip().lower()
            if key == "lambda":
                key = "lambda_cyc"
            if key not in types:
                raise ValueError(f"unknown training key {key!r}")
            t = types[key]
            kw[key] = raw if t is str else (int(raw) if t is int else float(raw))
        return cls(**kw)

    @classmethod
    def load(cls, path):
        return cls.from_mapping(read_key_value(path))


LOG_COLUMNS = ("step", "l_gan_x", "l_gan_y", "l_reco", "l_c1", "l_c2", "l_final", "lr")


@dataclass
class StepRecord:
    step: int
    l_gan_x: float
    l_gan_y: float
    l_reco: float
    l_c1: float
    l_c2: float
    l_final: float
    lr: float
    # diagnostics on the generated polar batch, not exported to CSV
    c2_frac: float = 0.0
    c3_ok: bool = True


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in self.records:
            w.writerow([r.step] + [repr(float(getattr(r, k))) for k in LOG_COLUMNS[1:]])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


@dataclass
class TrainResult:
    m_xy: TinyNet
    m_yx: TinyNet
    d_x: TinyNet
    d_y: TinyNet
    log: TrainLog

    def state(self):
        out = {}
        for net in (self.m_xy, self.m_yx, self.d_x, self.d_y):
            out.update(net.state())
        return out


def build_models(cfg, rng=None):
    dtype = cfg.np_dtype
    kw = dict(width=cfg.width, rng=rng, slope=cfg.slope)
    nets = (
        build_generator(POLAR_CHANNELS, RGB_CHANNELS, name="m_xy", out_gain=cfg.out_gain, **kw),
        build_generator(RGB_CHANNELS, POLAR_CHANNELS, name="m_yx", out_gain=cfg.out_gain, **kw),
        build_discriminator(POLAR_CHANNELS, name="d_x", **kw),
        build_discriminator(RGB_CHANNELS, name="d_y", **kw),
    )
    return tuple(n.astype(dtype) for n in nets)


def models_from_state(state, dtype=None):
    """Rebuild (m_xy, m_yx, d_x, d_y) from a checkpoint dict; missing nets are None."""
    out = []
    for name, builder, cin in (("m_xy", build_generator, POLAR_CHANNELS),
                               ("m_yx", build_generator, RGB_CHANNELS),
                               ("d_x", build_discriminator, POLAR_CHANNELS),
                               ("d_y", build_discriminator, RGB_CHANNELS)):
        key = f"{name}.conv0.weight"
        if key not in state:
            out.append(None)
            continue
        width = state[key].shape[0]
        if builder is build_generator:
            net = builder(cin, state[f"{name}.conv2.weight"].shape[0], width=width, name=name)
        else:
            net = builder(cin, width=width, name=name)
        net.load_state(state)
        if dtype is not None:
            net.astype(dtype)
        out.append(net)
    return tuple(out)


def _sgd(net, lr):
    for p in net.parameters().values():
        if p.grad is not None:
            p.value = p.value - p.value.dtype.type(lr) * p.grad
    net.zero_grad()


def _check_data(data, channels, patch, what):
    data = np.asarray(data)
    if data.ndim != 4 or data.shape[0] == 0:
        raise EmptyDataset(f"{what} dataset is empty")
    if data.shape[1] != channels or data.shape[2:] != (patch, patch):
        raise ShapeMismatch(f"{what} patches must be (N, {channels}, {patch}, {patch}), got {data.shape}")
    return data


def _sample(rng, data, m):
    idx = rng.integers(0, data.shape[0], m)
    flip = rng.random(m) < 0.5
    batch = data[idx].copy()
    batch[flip] = batch[flip][..., ::-1]
    return batch


def train(cfg, data_x, data_y, c=DEFAULT_CALIBRATION, progress=None, _skip_constraints=False):
    """Constrained CycleGAN training on polar patches ``data_x`` and RGB patches ``data_y``.

    Both inputs are ``(N, C, patch, patch)`` arrays of intensities in
    [0, 255].  One step performs, in order: a D_X update, a D_Y update,
    fresh mini-batches, an M_XY update on its adversarial loss plus the
    weighted cycle loss, then an M_YX update on its adversarial loss, the
    weighted cycle loss and the weighted C1/C2 penalties.  Learning rate
    decays linearly from ``lr_start`` to ``lr_end`` across epochs.
    """
    dtype = cfg.np_dtype
    data_x = intensity_to_unit(_check_data(data_x, POLAR_CHANNELS, cfg.patch, "polar")).astype(dtype)
    data_y = intensity_to_unit(_check_data(data_y, RGB_CHANNELS, cfg.patch, "RGB")).astype(dtype)

    init_seq, sample_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    m_xy, m_yx, d_x, d_y = build_models(cfg, np.random.default_rng(init_seq))
    rng = np.random.default_rng(sample_seq)
    nets = (m_xy, m_yx, d_x, d_y)
    lam = cfg.lambda_cyc
    steps = cfg.steps_per_epoch or max(1, max(len(data_x), len(data_y)) // cfg.batch)
    log = TrainLog()
    step = 0

    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        for _ in range(steps):
            last_good = {k: v for n in nets for k, v in n.state().items()}

            # discriminators, generators frozen
            x = Tensor(_sample(rng, data_x, cfg.batch))
            y = Tensor(_sample(rng, data_y, cfg.batch))
            fake_x = Tensor(m_yx(y).value)
            d_loss_x, _ = lsgan_losses(d_x(x), d_x(fake_x))
            ad.backward(d_loss_x)
            _sgd(d_x, lr)
            fake_y = Tensor(m_xy(x).value)
            d_loss_y, _ = lsgan_losses(d_y(y), d_y(fake_y))
            ad.backward(d_loss_y)
            _sgd(d_y, lr)

            # M_XY
            x = Tensor(_sample(rng, data_x, cfg.batch))
            y = Tensor(_sample(rng, data_y, cfg.batch))
            fy = m_xy(x)
            g_y = ad.mean(ad.square(d_y(fy) - 1.0))
            reco = cycle_loss(x, m_yx(fy), y, m_xy(m_yx(y)))
            ad.backward(g_y + lam * reco)
            for n in nets:
                if n is not m_xy:
                    n.zero_grad()
            _sgd(m_xy, lr)

            # M_YX; l_final is the full objective at this point, and only
            # its M_YX-dependent terms contribute gradient here
            fy = m_xy(x)
            fx = m_yx(y)
            g_y = ad.mean(ad.square(d_y(fy) - 1.0))
            g_x = ad.mean(ad.square(d_x(fx) - 1.0))
            reco = cycle_loss(x, m_yx(fy), y, m_xy(fx))
            fx_int = scale_to_intensity(fx)
            l_c1, l_c2 = constraint_losses(fx_int, c)
            if _skip_constraints:
                objective = g_x + g_y + lam * reco
                final = objective.item() + cfg.mu * l_c1.item() + cfg.nu * l_c2.item()
            else:
                objective = g_x + g_y + lam * reco + cfg.mu * l_c1 + cfg.nu * l_c2
                final = objective.item()
            ad.backward(objective)
            for n in nets:
                if n is not m_yx:
                    n.zero_grad()
            _sgd(m_yx, lr)

            rec = StepRecord(step, g_x.item(), g_y.item(), reco.item(), l_c1.item(), l_c2.item(),
                             final, lr, c2_violation_fraction(fx_int.value, c), c3_holds(fx_int.value, c))
            if not all(math.isfinite(getattr(rec, k)) for k in LOG_COLUMNS[1:]):
                for n in nets:
                    n.load_state(last_good)
                raise NonFiniteLoss(f"non-finite loss at step {step}", checkpoint=last_good, log=log)
            log.records.append(rec)
            if progress is not None:
                progress(rec)
            step += 1

    return TrainResult(m_xy, m_yx, d_x, d_y, log)


def generate_polar(m_yx, rgb):
    """Translate one RGB image ``(H, W, 3)`` in [0, 255] to intensities ``(H, W, 4)`` in (0, 255)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    dtype = next(iter(m_yx.parameters().values())).dtype
    x = intensity_to_unit(rgb).transpose(2, 0, 1)[None].astype(dtype)
    out = scale_to_intensity(m_yx(Tensor(x)).value[0])
    return out.transpose(1, 2, 0).astype(np.float64)


def config_dict(cfg):
    return asdict(cfg)


def with_weights(cfg, mu, nu):
    return replace(cfg, mu=mu, nu=nu)
