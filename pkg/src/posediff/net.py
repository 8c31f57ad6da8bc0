"""Score and energy networks conditioned on a point cloud.

Both roles share one architecture: a per-point MLP with max-pooling encodes the
cloud, an MLP embeds the 9D pose, frozen random Fourier features embed time,
and three parallel heads predict the Rx, Ry and T blocks. The raw head output
is divided by sigma(t). The energy role returns <p, head(p, t | O) / sigma(t)>.
"""

from __future__ import annotations

import copy
import io
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import seeding
from .errors import CheckpointError, ConfigError, Diverged, NonFinite
from .sde import NoiseSchedule

ROLES = ("score", "energy")
MAGIC = b"GPDM"
FORMAT_VERSION = 1
POSE_DATA_STD = 0.5  # rough per-entry spread of clean 9D poses
PARAMETERIZATIONS = ("noise", "denoiser", "preconditioned", "score")
# "sigma2": lambda = sigma^2; "uniform-output": lambda = sigma^2 (sigma^2 + s_d^2) / s_d^2, which puts unit
# weight on the preconditioned head output at every noise level; "unit": lambda = 1, which weights small t
# heavily and is only usable together with antithetic noise pairs
WEIGHTINGS = ("sigma2", "uniform-output", "unit")


@dataclass(frozen=True)
class NetConfig:
    point_layers: tuple[int, ...] = (64, 128, 256)
    pose_dim: int = 128
    time_dim: int = 128
    n_freq: int = 64
    fourier_scale: float = 16.0
    head_hidden: int = 256
    head_layers: int = 2
    # "noise": heads predict -z directly; "denoiser": heads predict the clean pose D and -z = (D - p) / sigma;
    # "preconditioned": D = c_skip p + c_out F with unit-scale F targets at every noise level;
    # "score": the score itself is -p / (sigma^2 + s_d^2) + F / sqrt(sigma^2 + s_d^2), so F stays O(1) and
    # smooth in t where the data score is, which suits smooth densities but not near-delta pose targets
    parameterization: str = "noise"

    def __post_init__(self):
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(f"parameterization must be one of {PARAMETERIZATIONS}")

    def descriptor(self) -> list[int]:
        return [len(self.point_layers), *self.point_layers, self.pose_dim, self.time_dim,
                self.n_freq, self.head_hidden, self.head_layers, PARAMETERIZATIONS.index(self.parameterization)]

    @classmethod
    def from_descriptor(cls, desc: list[int], fourier_scale: float) -> "NetConfig":
        n = desc[0]
        pl = tuple(desc[1:1 + n])
        pose_dim, time_dim, n_freq, head_hidden, head_layers, param = desc[1 + n:7 + n]
        if param >= len(PARAMETERIZATIONS):
            raise ValueError(f"unknown parameterization id {param}")
        return cls(pl, pose_dim, time_dim, n_freq, fourier_scale, head_hidden, head_layers, PARAMETERIZATIONS[param])


class PointEncoder(nn.Module):
    """Shared per-point MLP + max-pool; the bounding-box center is appended.

    Points are centered on their bounding-box midpoint before the MLP. Both the
    max and the box midpoint are exact under permutation and duplication, and
    the appended center keeps the feature sensitive to translation.
    """

    def __init__(self, widths: tuple[int, ...]):
        super().__init__()
        layers: list[nn.Module] = []
        d = 3
        for i, w in enumerate(widths):
            layers.append(nn.Linear(d, w))
            if i < len(widths) - 1:
                layers.append(nn.ReLU())
            d = w
        self.mlp = nn.Sequential(*layers)
        self.out_dim = d + 3

    def forward(self, pts: torch.Tensor) -> torch.Tensor:
        center = 0.5 * (pts.amax(dim=1) + pts.amin(dim=1))
        h = self.mlp(pts - center[:, None, :])
        return torch.cat([h.amax(dim=1), center], dim=-1)


class FourierTime(nn.Module):
    def __init__(self, n_freq: int, scale: float, generator: torch.Generator):
        super().__init__()
        W = torch.randn(n_freq, generator=generator, dtype=torch.float64) * scale
        self.register_buffer("W", W.to(torch.float32))

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        proj = 2 * np.pi * t[:, None] * self.W[None, :]
        return torch.cat([torch.sin(proj), torch.cos(proj)], dim=-1)


def _mlp(d_in: int, hidden: int, layers: int, d_out: int, zero_last: bool) -> nn.Sequential:
    mods: list[nn.Module] = []
    d = d_in
    for _ in range(layers):
        mods += [nn.Linear(d, hidden), nn.SiLU()]
        d = hidden
    last = nn.Linear(d, d_out)
    if zero_last:
        nn.init.zeros_(last.weight)
        nn.init.zeros_(last.bias)
    mods.append(last)
    return nn.Sequential(*mods)


class PoseNet(nn.Module):
    def __init__(self, role: str = "score", config: NetConfig | None = None,
                 schedule: NoiseSchedule | None = None, seed: int = 0):
        super().__init__()
        if role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        self.role = role
        self.config = config or NetConfig()
        self.schedule = schedule or NoiseSchedule()
        self.seed = int(seed)
        gen = torch.Generator().manual_seed(self.seed)
        cfg = self.config
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seeding.child_seed(self.seed, "init"))
            self.encoder = PointEncoder(cfg.point_layers)
            self.time_embed = FourierTime(cfg.n_freq, cfg.fourier_scale, gen)
            self.time_mlp = nn.Sequential(nn.Linear(2 * cfg.n_freq, cfg.time_dim), nn.SiLU(),
                                          nn.Linear(cfg.time_dim, cfg.time_dim))
            self.pose_mlp = nn.Sequential(nn.Linear(9, cfg.pose_dim), nn.SiLU(),
                                          nn.Linear(cfg.pose_dim, cfg.pose_dim))
            d = self.encoder.out_dim + cfg.pose_dim + cfg.time_dim
            self.heads = nn.ModuleList(
                [_mlp(d, cfg.head_hidden, cfg.head_layers, 3, zero_last=True) for _ in range(3)])

    @property
    def feature_dim(self) -> int:
        return self.encoder.out_dim

    def sigma(self, t: torch.Tensor) -> torch.Tensor:
        s = self.schedule
        return s.sigma_min * (s.sigma_max / s.sigma_min) ** t

    def features(self, cloud: torch.Tensor) -> torch.Tensor:
        return self.encoder(cloud)

    def head(self, feat: torch.Tensor, p: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        """Score-shaped output for rows of ``p`` (the energy role's auxiliary vector, whose inner product with p is the energy)."""
        sig = self.sigma(t)[:, None]
        # unit-scale pose input at every noise level; the output scaling stays 1/sigma
        p_in = p / torch.sqrt(sig ** 2 + POSE_DATA_STD ** 2)
        h = torch.cat([feat, self.pose_mlp(p_in), self.time_mlp(self.time_embed(t))], dim=-1)
        raw = torch.cat([branch(h) for branch in self.heads], dim=-1)
        param = self.config.parameterization
        if param == "noise":
            return raw / sig
        var = sig ** 2 + POSE_DATA_STD ** 2
        if param == "denoiser":
            learned, base = raw / sig ** 2, -p / sig ** 2
        elif param == "preconditioned":
            # (c_skip p + c_out F - p) / sigma^2 with c_skip = s_d^2 / var, c_out = sigma s_d / sqrt(var)
            learned, base = POSE_DATA_STD * raw / (sig * torch.sqrt(var)), -p / var
        else:
            learned, base = raw / torch.sqrt(var), -p / var
        if self.role == "energy":
            # the gradient of <p, -a p> is -2 a p, so halving the linear part gives the energy the same
            # zero-output gradient as the score head
            base = base / 2
        return learned + base

    def energy(self, feat, p, t) -> torch.Tensor:
        return torch.sum(p * self.head(feat, p, t), dim=-1)

    def energy_grad(self, feat, p, t, create_graph: bool = False) -> torch.Tensor:
        with torch.enable_grad():
            if not p.requires_grad:
                p = p.detach().requires_grad_(True)
            e = self.energy(feat, p, t)
            (g,) = torch.autograd.grad(e.sum(), p, create_graph=create_graph)
        return g

    def field(self, feat, p, t, create_graph: bool = False) -> torch.Tensor:
        """Estimated score: the head for the score role, the energy gradient otherwise."""
        if self.role == "score":
            return self.head(feat, p, t)
        return self.energy_grad(feat, p, t, create_graph=create_graph)

    def forward(self, cloud, p, t):
        feat = self.features(cloud)
        if feat.shape[0] != p.shape[0]:
            feat = feat.expand(p.shape[0], -1)
        return self.head(feat, p, t)


# ------------------------------------------------------------- numpy facade

def _as_cloud(cloud) -> torch.Tensor:
    c = torch.as_tensor(np.asarray(cloud, dtype=np.float32))
    if c.ndim == 2:
        c = c[None]
    if c.shape[-1] != 3 or c.shape[1] < 16:
        raise ValueError(f"point cloud must be (N>=16, 3), got {tuple(c.shape)}")
    if not torch.all(torch.isfinite(c)):
        raise ValueError("point cloud contains non-finite values")
    return c


def _dtype(net: nn.Module) -> torch.dtype:
    return next(net.parameters()).dtype


def _finite(x: torch.Tensor, what: str) -> torch.Tensor:
    if not torch.all(torch.isfinite(x)):
        raise NonFinite(f"{what} produced non-finite values")
    return x


class BoundField:
    """A network with its point-cloud feature cached, callable on numpy batches.

    ``__call__`` gives the estimated score (for the energy role, the energy
    gradient); ``divergence`` its exact Jacobian trace; ``probe_quadratic``
    the Hutchinson terms v^T J v.
    """

    def __init__(self, net: PoseNet, cloud):
        self.net = net
        self.dtype = _dtype(net)
        with torch.no_grad():
            self.feat = net.features(_as_cloud(cloud).to(self.dtype))

    def _pt(self, p, t):
        p = torch.as_tensor(np.asarray(p), dtype=self.dtype)
        t = torch.as_tensor(np.broadcast_to(np.asarray(t, dtype=float), (p.shape[0],)).copy(), dtype=self.dtype)
        return p, t, self.feat.expand(p.shape[0], -1)

    def __call__(self, p, t) -> np.ndarray:
        p, t, f = self._pt(p, t)
        if self.net.role == "score":
            with torch.no_grad():
                out = self.net.head(f, p, t)
        else:
            out = self.net.energy_grad(f, p, t)
        return _finite(out, "score field").detach().double().numpy()

    def energy(self, p, t) -> np.ndarray:
        p, t, f = self._pt(p, t)
        with torch.no_grad():
            e = self.net.energy(f, p, t)
        return e.double().numpy()

    def divergence(self, p, t) -> np.ndarray:
        p, t, f = self._pt(p, t)
        with torch.enable_grad():
            p = p.requires_grad_(True)
            out = self.net.field(f, p, t, create_graph=True)
            div = torch.zeros(p.shape[0], dtype=self.dtype)
            for i in range(out.shape[1]):
                (g,) = torch.autograd.grad(out[:, i].sum(), p, retain_graph=i < out.shape[1] - 1)
                div = div + g[:, i]
        return _finite(div, "divergence").double().numpy()

    def probe_quadratic(self, p, t, probes) -> np.ndarray:
        """v^T J v for each probe; ``probes`` has shape (B, P, 9), returns (B, P)."""
        probes = np.asarray(probes)
        B, P, D = probes.shape
        p_rep = np.repeat(np.asarray(p), P, axis=0)
        t_rep = np.repeat(np.broadcast_to(np.asarray(t, dtype=float), (B,)), P)
        pt, tt, f = self._pt(p_rep, t_rep)
        v = torch.as_tensor(probes.reshape(B * P, D), dtype=self.dtype)
        with torch.enable_grad():
            pt = pt.requires_grad_(True)
            out = self.net.field(f, pt, tt, create_graph=True)
            (g,) = torch.autograd.grad((out * v).sum(), pt)
        return _finite((g * v).sum(-1), "probe").double().numpy().reshape(B, P)


def encode_pointcloud(cloud, net: PoseNet) -> np.ndarray:
    with torch.no_grad():
        return net.features(_as_cloud(cloud).to(_dtype(net)))[0].double().numpy()


def score_forward(p, t, cloud, net: PoseNet) -> np.ndarray:
    p = np.atleast_2d(p)
    return BoundField(net, cloud)(p, t)


def energy_forward(p, t, cloud, net: PoseNet) -> np.ndarray:
    p = np.atleast_2d(p)
    return BoundField(net, cloud).energy(p, t)


def energy_input_gradient(p, t, cloud, net: PoseNet) -> np.ndarray:
    p = np.atleast_2d(p)
    bf = BoundField(net, cloud)
    pt, tt, f = bf._pt(p, t)
    return _finite(net.energy_grad(f, pt, tt), "energy gradient").double().numpy()


# ---------------------------------------------------------------- training

@dataclass
class TrainingConfig:
    batch_size: int = 192
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    steps: int = 1000
    seed: int = 0
    weighting: str = "sigma2"
    poses_per_cloud: int = 4
    checkpoint_every: int = 100
    grad_clip: float | None = None
    lr_decay_final: float = 1.0
    log_every: int = 0
    # pair every noise draw z with -z at the same clean pose and time: the loss stays unbiased and the
    # leading 1/sigma noise term in the gradient cancels, which is what makes small-t training tractable
    antithetic: bool = False

    def validate(self) -> "TrainingConfig":
        problems = []
        if self.batch_size <= 0:
            problems.append("batch_size must be positive")
        if self.steps <= 0:
            problems.append("steps must be positive")
        if self.lr <= 0:
            problems.append("lr must be positive")
        if self.weighting not in WEIGHTINGS:
            problems.append(f"weighting must be one of {WEIGHTINGS}")
        if self.poses_per_cloud <= 0 or self.batch_size % max(self.poses_per_cloud, 1):
            problems.append("poses_per_cloud must be positive and divide batch_size")
        if self.antithetic and self.poses_per_cloud % 2:
            problems.append("antithetic pairs need an even poses_per_cloud")
        if not 0 < self.lr_decay_final <= 1:
            problems.append("lr_decay_final must lie in (0, 1]")
        if problems:
            raise ConfigError(problems)
        return self


class PoseDataset:
    """In-memory (cloud, pose) pairs; each draw repeats a pose for several noise draws."""

    def __init__(self, clouds, poses):
        self.clouds = torch.as_tensor(np.asarray(clouds, dtype=np.float32))
        self.poses = np.asarray(poses, dtype=np.float64)
        if len(self.clouds) == 0 or len(self.clouds) != len(self.poses):
            raise ValueError("dataset must be non-empty with one pose per cloud")

    def __len__(self):
        return len(self.poses)

    def draw(self, rng: np.random.Generator, n_clouds: int, per_cloud: int):
        idx = rng.integers(0, len(self.poses), size=n_clouds)
        return self.clouds[idx], np.repeat(self.poses[idx], per_cloud, axis=0)


class GmmToyData:
    """Fixed condition cloud with poses drawn from a Gaussian-mixture oracle."""

    def __init__(self, oracle, cloud):
        self.oracle = oracle
        self.cloud = torch.as_tensor(np.asarray(cloud, dtype=np.float32))[None]

    def __len__(self):
        return 1

    def draw(self, rng, n_clouds, per_cloud):
        poses = self.oracle.sample(None, 0.0, n_clouds * per_cloud, rng)
        return self.cloud.expand(n_clouds, -1, -1), poses


@dataclass
class TrainLog:
    losses: list[float] = field(default_factory=list)
    role: str = "score"

    def window_means(self, frac: float = 0.1) -> tuple[float, float]:
        n = max(1, int(len(self.losses) * frac))
        return float(np.mean(self.losses[:n])), float(np.mean(self.losses[-n:]))


def loss_weight(sig: torch.Tensor, weighting: str = "sigma2") -> torch.Tensor:
    if weighting == "sigma2":
        return sig ** 2
    if weighting == "uniform-output":
        return sig ** 2 * (sig ** 2 + POSE_DATA_STD ** 2) / POSE_DATA_STD ** 2
    if weighting == "unit":
        return torch.ones_like(sig)
    raise ValueError(f"weighting must be one of {WEIGHTINGS}")


def dsm_batch_loss(net: PoseNet, feat, p0: torch.Tensor, t: torch.Tensor, z: torch.Tensor,
                   weighting: str = "sigma2") -> torch.Tensor:
    """Weighted denoising score-matching loss, lambda(t) = sigma(t)^2 by default."""
    sig = net.sigma(t)[:, None]
    pt = p0 + sig * z
    if net.role == "energy":
        pt = pt.detach().requires_grad_(True)
    est = net.field(feat, pt, t, create_graph=True)
    target = -z / sig
    return torch.mean(torch.sum(loss_weight(sig, weighting) * (est - target) ** 2, dim=-1))


def _train(net: PoseNet, data, config: TrainingConfig, on_step=None) -> tuple[PoseNet, TrainLog]:
    config.validate()
    if len(data) == 0:
        raise ValueError("empty dataset")
    dtype = _dtype(net)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr, betas=config.betas)
    decay = config.lr_decay_final ** (1.0 / max(config.steps - 1, 1))
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=decay)
    rng = seeding.stream(config.seed, "train", net.role)
    per = config.poses_per_cloud
    n_clouds = config.batch_size // per
    log = TrainLog(role=net.role)
    last_good = copy.deepcopy(net.state_dict())
    eps = net.schedule.eps_min
    net.train()
    for step in range(config.steps):
        if config.antithetic:
            clouds, p0 = data.draw(rng, n_clouds, per // 2)
            t = np.repeat(rng.uniform(eps, 1.0, size=len(p0)), 2)
            z = rng.standard_normal(p0.shape)
            p0, z = np.repeat(p0, 2, axis=0), np.stack([z, -z], axis=1).reshape(-1, p0.shape[1])
        else:
            clouds, p0 = data.draw(rng, n_clouds, per)
            t = rng.uniform(eps, 1.0, size=len(p0))
            z = rng.standard_normal(p0.shape)
        feat = net.features(clouds.to(dtype)).repeat_interleave(per, dim=0)
        loss = dsm_batch_loss(net, feat, torch.as_tensor(p0, dtype=dtype),
                              torch.as_tensor(t, dtype=dtype), torch.as_tensor(z, dtype=dtype), config.weighting)
        val = float(loss.detach())
        if not np.isfinite(val):
            net.load_state_dict(last_good)
            err = Diverged(f"{net.role} loss became non-finite at step {step}")
            err.state_dict = last_good
            raise err
        opt.zero_grad(set_to_none=True)
        loss.backward()
        if config.grad_clip:
            nn.utils.clip_grad_norm_(net.parameters(), config.grad_clip)
        opt.step()
        sched.step()
        log.losses.append(val)
        if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            last_good = copy.deepcopy(net.state_dict())
        if on_step is not None:
            on_step(step, val)
    net.eval()
    return net, log


def train_score(data, config: TrainingConfig, net: PoseNet | None = None,
                net_config: NetConfig | None = None, on_step=None) -> tuple[PoseNet, TrainLog]:
    if net is None:
        net = PoseNet("score", net_config, seed=config.seed)
    if net.role != "score":
        raise ValueError("train_score needs a score-role network")
    return _train(net, data, config, on_step)


def energy_from_score(score_net: PoseNet) -> PoseNet:
    """Energy network warm-started from score weights (same architecture, independent copy)."""
    e = PoseNet("energy", score_net.config, score_net.schedule, seed=score_net.seed)
    e.load_state_dict(copy.deepcopy(score_net.state_dict()))
    return e.to(_dtype(score_net))


def train_energy(data, config: TrainingConfig, init_from: PoseNet | None = None,
                 net: PoseNet | None = None, net_config: NetConfig | None = None,
                 on_step=None) -> tuple[PoseNet, TrainLog]:
    if net is None:
        net = energy_from_score(init_from) if init_from is not None else PoseNet(
            "energy", net_config, seed=config.seed)
    if net.role != "energy":
        raise ValueError("train_energy needs an energy-role network")
    return _train(net, data, config, on_step)


# -------------------------------------------------------------- checkpoints

def save_checkpoint(net: PoseNet, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(net))


def checkpoint_bytes(net: PoseNet) -> bytes:
    buf = io.BytesIO()
    cfg = net.config
    desc = cfg.descriptor()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<B", ROLES.index(net.role)))
    buf.write(struct.pack("<I", len(desc)))
    buf.write(struct.pack(f"<{len(desc)}I", *desc))
    buf.write(struct.pack("<ddd", cfg.fourier_scale, net.schedule.sigma_min, net.schedule.sigma_max))
    buf.write(struct.pack("<d", net.schedule.eps_min))
    buf.write(struct.pack("<Q", net.seed))
    W = net.time_embed.W.detach().to(torch.float32).numpy()
    buf.write(struct.pack("<I", W.size))
    buf.write(W.astype("<f4").tobytes())
    params = [(k, v) for k, v in net.state_dict().items() if k != "time_embed.W"]
    buf.write(struct.pack("<I", len(params)))
    for _, v in params:
        arr = v.detach().to(torch.float32).numpy().astype("<f4")
        buf.write(struct.pack("<I", arr.size))
        buf.write(arr.tobytes())
    return buf.getvalue()


def load_checkpoint(path) -> PoseNet:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return checkpoint_from_bytes(raw, str(path))


def checkpoint_from_bytes(raw: bytes, name: str = "<bytes>") -> PoseNet:
    buf = io.BytesIO(raw)

    def read(fmt):
        size = struct.calcsize(fmt)
        chunk = buf.read(size)
        if len(chunk) != size:
            raise CheckpointError(f"{name}: truncated checkpoint")
        return struct.unpack(fmt, chunk)

    magic = buf.read(4)
    if magic != MAGIC:
        raise CheckpointError(f"{name}: bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = read("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{name}: unsupported format version {version}, expected {FORMAT_VERSION}")
    (role_id,) = read("<B")
    if role_id >= len(ROLES):
        raise CheckpointError(f"{name}: unknown role byte {role_id}")
    (n_desc,) = read("<I")
    desc = list(read(f"<{n_desc}I"))
    fourier_scale, smin, smax = read("<ddd")
    (eps,) = read("<d")
    (seed,) = read("<Q")
    try:
        cfg = NetConfig.from_descriptor(desc, fourier_scale)
    except ValueError as exc:
        raise CheckpointError(f"{name}: bad architecture descriptor ({exc})") from exc
    net = PoseNet(ROLES[role_id], cfg, NoiseSchedule(smin, smax, eps), seed=seed)
    (n_w,) = read("<I")
    chunk = buf.read(4 * n_w)
    if len(chunk) != 4 * n_w:
        raise CheckpointError(f"{name}: truncated Fourier block")
    W = np.frombuffer(chunk, dtype="<f4")
    state = net.state_dict()
    keys = [k for k in state if k != "time_embed.W"]
    (n_t,) = read("<I")
    if n_t != len(keys):
        raise CheckpointError(f"{name}: expected {len(keys)} tensors, found {n_t}")
    new_state = {"time_embed.W": torch.from_numpy(W.copy()).reshape(state["time_embed.W"].shape)}
    for k in keys:
        (size,) = read("<I")
        if size != state[k].numel():
            raise CheckpointError(f"{name}: tensor {k} has {size} values, expected {state[k].numel()}")
        chunk = buf.read(4 * size)
        if len(chunk) != 4 * size:
            raise CheckpointError(f"{name}: truncated tensor {k}")
        arr = np.frombuffer(chunk, dtype="<f4")
        new_state[k] = torch.from_numpy(arr.copy()).reshape(state[k].shape)
    net.load_state_dict(new_state)
    net.eval()
    return net


def config_dict(net: PoseNet) -> dict:
    return {"role": net.role, "seed": net.seed, **asdict(net.config),
            "schedule": asdict(net.schedule)}
