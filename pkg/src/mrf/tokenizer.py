"""Per-character motion tokenizer: temporal-conv encoder/decoder with an
EMA-reset vector quantizer.

An H-frame normalized window (H x C channels) is encoded to H/4 latent
vectors of dimension code_dim, each snapped to its nearest codebook entry.
Training uses smooth-L1 reconstruction plus a commitment term; the codebook
itself is maintained by exponential moving averages with dead-entry resets.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import Activation, Sequential, TemporalConv, UpsampleNearest
from .motion import (MotionClip, MotionWindow, NormStats, compute_stats,
                     denormalize)
from .optim import AdamW, schedule_lr


class TrainingAborted(RuntimeError):
    """Training hit a non-finite loss; the last good checkpoint was kept."""


@dataclass
class TokenizerConfig:
    # data
    window_size: int = 32
    batch_size: int = 128
    # architecture (paper scale: nb_code=512, code_dim=512, width=512, depth=3)
    nb_code: int = 64
    code_dim: int = 32
    width: int = 64
    depth: int = 1           # extra convs per resolution stage
    down_t: int = 2
    stride_t: int = 2
    activation: str = "relu"
    dropout: float = 0.0
    # optimization (paper scale: total_iter=100k, milestones [50k, 100k])
    total_iter: int = 5000
    warmup_iter: int = 500
    lr: float = 2e-4
    betas: tuple[float, float] = (0.9, 0.99)
    weight_decay: float = 0.0
    lr_milestones: tuple[int, ...] = (2500,)
    lr_gamma: float = 0.05
    # loss
    commit_beta: float = 0.02
    smooth_l1_delta: float = 1.0
    # quantizer
    mu: float = 0.99
    laplace_eps: float = 1e-5
    dead_code_min_size: float = 1.0
    dead_code_steps: int = 200
    # bookkeeping
    seed: int = 123
    log_every: int = 50
    val_every: int = 500

    def downsample_factor(self) -> int:
        return self.stride_t ** self.down_t


class Codebook:
    """K x d embedding table with EMA statistics and dead-code resets."""

    def __init__(self, entries: np.ndarray, mu: float = 0.99, laplace_eps: float = 1e-5,
                 dead_min_size: float = 1.0, dead_steps: int = 200):
        self.entries = np.asarray(entries, dtype=np.float64)
        if self.entries.ndim != 2 or self.entries.shape[0] == 0:
            raise ValueError("codebook needs a non-empty K x d entry table")
        K = self.entries.shape[0]
        self.mu = mu
        self.laplace_eps = laplace_eps
        self.dead_min_size = dead_min_size
        self.dead_steps = dead_steps
        self.ema_size = np.ones(K)
        self.ema_sum = self.entries.copy()
        self.steps_below = np.zeros(K, dtype=np.int64)
        self.reset_counts = np.zeros(K, dtype=np.int64)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    @staticmethod
    def init_from_latents(latents: np.ndarray, nb_code: int, rng: np.random.Generator,
                          **kw) -> "Codebook":
        n = latents.shape[0]
        replace = n < nb_code
        idx = rng.choice(n, size=nb_code, replace=replace)
        return Codebook(latents[idx].copy(), **kw)

    def nearest(self, z: np.ndarray) -> np.ndarray:
        """Indices of nearest entries for (N, d) queries; ties to lowest index.

        Scores drop the query-norm term (constant per row): ||e||^2 - 2 z.e,
        which preserves the argmin and runs as one matmul. Exact duplicate
        entries produce identical scores, so ties still break to the lowest
        index.
        """
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        scores = (self.entries * self.entries).sum(axis=1)[None, :] - 2.0 * (z @ self.entries.T)
        return np.argmin(scores, axis=1)

    def lookup(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices)
        if indices.size and (indices.min() < 0 or indices.max() >= self.size):
            raise IndexError(f"token index out of range [0, {self.size})")
        return self.entries[indices]

    def ema_update_and_reset(self, latents: np.ndarray, indices: np.ndarray,
                             rng: np.random.Generator) -> None:
        """One EMA maintenance step over a batch of latents and their tokens."""
        if self.mu >= 1.0:
            return  # decay 1 accumulates nothing: exact no-op
        K, d = self.size, self.dim
        counts = np.bincount(indices, minlength=K).astype(np.float64)
        sums = np.zeros((K, d))
        np.add.at(sums, indices, latents)
        self.ema_size = self.mu * self.ema_size + (1.0 - self.mu) * counts
        self.ema_sum = self.mu * self.ema_sum + (1.0 - self.mu) * sums
        n = self.ema_size.sum()
        if n > 0:
            smoothed = (self.ema_size + self.laplace_eps) / (n + K * self.laplace_eps) * n
            self.entries = self.ema_sum / smoothed[:, None]
        self.steps_below = np.where(self.ema_size < self.dead_min_size,
                                    self.steps_below + 1, 0)
        dead = np.flatnonzero(self.steps_below >= self.dead_steps)
        if dead.size:
            take = min(dead.size, latents.shape[0])  # reset as many as the batch allows
            dead = dead[:take]
            picks = rng.choice(latents.shape[0], size=take, replace=False)
            self.entries[dead] = latents[picks]
            self.ema_size[dead] = self.dead_min_size
            self.ema_sum[dead] = latents[picks] * self.dead_min_size
            self.steps_below[dead] = 0
            self.reset_counts[dead] += 1


def quantize(codebook: Codebook, z):
    """Nearest-entry quantization of a latent (or Tensor batch).

    Returns (index, z_hat, z_hat_st): the chosen entry index/indices, the
    snapped embedding, and the straight-through value that forwards z_hat
    while routing gradients to z.
    """
    if isinstance(z, Tensor):
        flat = z.data.reshape(-1, codebook.dim)
        idx = codebook.nearest(flat)
        zq = codebook.lookup(idx).reshape(z.shape)
        z_st = ad.add(z, Tensor(zq - z.data))
        return idx.reshape(z.shape[:-1]), zq, z_st
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    idx = codebook.nearest(z.reshape(-1, codebook.dim))
    zq = codebook.lookup(idx)
    if single:
        return int(idx[0]), zq[0], zq[0].copy()
    return idx, zq, zq.copy()


def build_encoder(channels: int, cfg: TokenizerConfig, rng: np.random.Generator) -> Sequential:
    layers = [TemporalConv(channels, cfg.width, 3, rng, name="enc.stem"),
              Activation(cfg.activation)]
    for s in range(cfg.down_t):
        layers += [TemporalConv(cfg.width, cfg.width, 4, rng, stride=cfg.stride_t, pad=1,
                                name=f"enc.down{s}"), Activation(cfg.activation)]
        for r in range(cfg.depth):
            layers += [TemporalConv(cfg.width, cfg.width, 3, rng, name=f"enc.res{s}_{r}"),
                       Activation(cfg.activation)]
    layers.append(TemporalConv(cfg.width, cfg.code_dim, 3, rng, name="enc.head"))
    return Sequential(layers)


def build_decoder(channels: int, cfg: TokenizerConfig, rng: np.random.Generator) -> Sequential:
    layers = [TemporalConv(cfg.code_dim, cfg.width, 3, rng, name="dec.stem"),
              Activation(cfg.activation)]
    for s in range(cfg.down_t):
        layers += [UpsampleNearest(cfg.stride_t),
                   TemporalConv(cfg.width, cfg.width, 3, rng, name=f"dec.up{s}"),
                   Activation(cfg.activation)]
        for r in range(cfg.depth):
            layers += [TemporalConv(cfg.width, cfg.width, 3, rng, name=f"dec.res{s}_{r}"),
                       Activation(cfg.activation)]
    layers.append(TemporalConv(cfg.width, channels, 3, rng, name="dec.head"))
    return Sequential(layers)


@dataclass
class TokenSequence:
    character_id: str
    indices: np.ndarray  # (L,) codebook indices
    window_start: int = 0


class TokenizerModel:
    def __init__(self, character_id: str, channels: int, cfg: TokenizerConfig,
                 stats: NormStats, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.character_id = character_id
        self.channels = channels
        self.config = cfg
        self.stats = stats
        self.encoder = build_encoder(channels, cfg, rng)
        self.decoder = build_decoder(channels, cfg, rng)
        self.codebook = Codebook(np.zeros((cfg.nb_code, cfg.code_dim)), mu=cfg.mu,
                                 laplace_eps=cfg.laplace_eps,
                                 dead_min_size=cfg.dead_code_min_size,
                                 dead_steps=cfg.dead_code_steps)

    @property
    def latent_len(self) -> int:
        return self.config.window_size // self.config.downsample_factor()

    def parameters(self) -> list[tuple[str, Tensor]]:
        return self.encoder.parameters() + self.decoder.parameters()

    def set_trainable(self, flag: bool) -> None:
        for _, p in self.parameters():
            p.requires_grad = flag

    # -- core ops ------------------------------------------------------------

    def _check_window_length(self, frames: int):
        if frames != self.config.window_size:
            raise ValueError(f"window has {frames} frames; tokenizer expects "
                             f"{self.config.window_size}")

    def encode_array(self, norm_batch: np.ndarray, train: bool = False) -> Tensor:
        """Normalized (B, H, C) batch -> latent Tensor (B, L, d)."""
        B, H, C = norm_batch.shape
        self._check_window_length(H)
        x = Tensor(np.ascontiguousarray(norm_batch.transpose(0, 2, 1)))
        z = self.encoder(x, train=train)  # (B, d, L)
        return ad.transpose(z, (0, 2, 1))

    def encode(self, window: MotionWindow) -> np.ndarray:
        """Eval-mode latent sequence (L, d) for one window."""
        self._check_window_length(window.length)
        norm = window.normalized(self.stats).reshape(window.length, self.channels)
        return self.encode_array(norm[None]).data[0]

    def tokenize(self, window: MotionWindow) -> TokenSequence:
        z = self.encode(window)
        idx = self.codebook.nearest(z)
        return TokenSequence(self.character_id, idx, window.start)

    def decode_array(self, z: Tensor | np.ndarray, train: bool = False) -> Tensor:
        """Latents (B, L, d) -> normalized channel Tensor (B, H, C)."""
        z = z if isinstance(z, Tensor) else Tensor(z)
        y = self.decoder(ad.transpose(z, (0, 2, 1)), train=train)  # (B, C, H)
        return ad.transpose(y, (0, 2, 1))

    def decode(self, tokens: TokenSequence | np.ndarray) -> MotionWindow:
        """Token indices -> denormalized window with re-orthonormalized rotations."""
        idx = tokens.indices if isinstance(tokens, TokenSequence) else np.asarray(tokens)
        if idx.shape != (self.latent_len,):
            raise ValueError(f"expected {self.latent_len} token indices, got shape {idx.shape}")
        z = self.codebook.lookup(idx)
        norm = self.decode_array(z[None]).data[0]  # (H, C)
        channels = denormalize(norm, self.stats)
        joints = (self.channels - 3) // 12
        clip = MotionClip.from_channels(self.character_id, 32.0, channels, joints,
                                        orthonormalize=True)
        return MotionWindow(clip, 0, self.config.window_size)

    # -- persistence -----------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.parameters()}
        state["codebook.entries"] = self.codebook.entries
        state["codebook.ema_size"] = self.codebook.ema_size
        state["codebook.ema_sum"] = self.codebook.ema_sum
        state["codebook.steps_below"] = self.codebook.steps_below.astype(np.float64)
        state["codebook.reset_counts"] = self.codebook.reset_counts.astype(np.float64)
        state["stats.mean"] = self.stats.mean
        state["stats.std"] = self.stats.std
        return state

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.parameters():
            p.data = state[name].copy()
        self.codebook.entries = state["codebook.entries"].copy()
        self.codebook.ema_size = state["codebook.ema_size"].copy()
        self.codebook.ema_sum = state["codebook.ema_sum"].copy()
        self.codebook.steps_below = state["codebook.steps_below"].astype(np.int64)
        self.codebook.reset_counts = state["codebook.reset_counts"].astype(np.int64)
        self.stats = NormStats(state["stats.mean"].copy(), state["stats.std"].copy())

    def save(self, path, fingerprint: str | None = None, seed: int | None = None) -> None:
        path = Path(path)
        save_checkpoint(path, self.state_dict())
        manifest = {
            "kind": "tokenizer",
            "character_id": self.character_id,
            "channels": self.channels,
            "config": asdict(self.config),
            "fingerprint": fingerprint,
            "seed": seed,
        }
        path.with_suffix(path.suffix + ".json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @staticmethod
    def load(path) -> "TokenizerModel":
        path = Path(path)
        manifest = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        cfg_d = manifest["config"]
        for key in ("betas", "lr_milestones"):
            cfg_d[key] = tuple(cfg_d[key])
        cfg = TokenizerConfig(**cfg_d)
        state = load_checkpoint(path)
        model = TokenizerModel(manifest["character_id"], manifest["channels"], cfg,
                               NormStats(state["stats.mean"], state["stats.std"]))
        model.load_state(state)
        return model


def vq_losses(model: TokenizerModel, norm_batch: np.ndarray, train: bool = True):
    """Loss terms for a normalized (B, H, C) batch.

    Returns (loss_tensor, parts, latents, indices): loss_tensor carries the
    gradient path (reconstruction + commitment; the codebook term is EMA-
    maintained and reported for monitoring only).
    """
    cfg = model.config
    x = Tensor(np.ascontiguousarray(norm_batch.transpose(0, 2, 1)))  # (B, C, H)
    z = model.encoder(x, train=train)            # (B, d, L)
    z_flat = ad.reshape(ad.transpose(z, (0, 2, 1)), (-1, cfg.code_dim))
    idx = model.codebook.nearest(z_flat.data)
    zq = model.codebook.lookup(idx)

    z_st = ad.add(z_flat, Tensor(zq - z_flat.data))  # straight-through
    B, L = norm_batch.shape[0], z.shape[2]
    xhat = model.decoder(ad.transpose(ad.reshape(z_st, (B, L, cfg.code_dim)), (0, 2, 1)),
                         train=train)
    l_rec = ad.smooth_l1(xhat, x, delta=cfg.smooth_l1_delta)
    diff = ad.sub(z_flat, Tensor(zq))
    l_commit = ad.mul(ad.mean(ad.mul(diff, diff)), Tensor(cfg.commit_beta))
    loss = ad.add(l_rec, l_commit)

    l_code = float(np.mean((zq - z_flat.data) ** 2))
    parts = {
        "l_rec": float(l_rec.data),
        "l_code": l_code,
        "l_commit": float(l_commit.data),
        "l_vq": float(l_rec.data) + l_code + float(l_commit.data),
    }
    return loss, parts, z_flat.data, idx


@dataclass
class TrainResult:
    model: TokenizerModel
    log_rows: list[dict]
    val_history: list[tuple[int, float]]
    initial_val: float
    final_val: float
    usage_fraction: float


def _window_index(clips: list[MotionClip], H: int) -> list[tuple[int, int]]:
    pairs = []
    for ci, clip in enumerate(clips):
        if clip.frame_count >= H:
            pairs.extend((ci, s) for s in range(clip.frame_count - H + 1))
    return pairs


class WindowSampler:
    """Uniform sampler over all valid windows, on cached normalized channels."""

    def __init__(self, clips: list[MotionClip], stats: NormStats, H: int):
        self.H = H
        self.norm = [(c.channels() - stats.mean) / stats.std for c in clips]
        self.pairs = _window_index(clips, H)

    def __len__(self):
        return len(self.pairs)

    def batch(self, picks) -> np.ndarray:
        H = self.H
        return np.stack([self.norm[ci][s:s + H] for ci, s in (self.pairs[i] for i in picks)])


def normalize_window(clip: MotionClip, start: int, H: int, stats: NormStats) -> np.ndarray:
    return (clip.channels()[start:start + H] - stats.mean) / stats.std


def evaluate_reconstruction(model: TokenizerModel, norm_batch: np.ndarray) -> float:
    _, parts, _, _ = vq_losses(model, norm_batch, train=False)
    return parts["l_rec"]


def train_tokenizer(clips: list[MotionClip], cfg: TokenizerConfig,
                    character_id: str | None = None,
                    stats: NormStats | None = None,
                    seed: int | None = None,
                    progress: bool = False) -> TrainResult:
    """Train a tokenizer on a clip dataset; returns the model and its log."""
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    character_id = character_id or clips[0].skeleton_id
    stats = stats or compute_stats(clips)
    H = cfg.window_size

    # hold out ~5% of clips for validation (at least one)
    n_val = max(1, len(clips) // 20) if len(clips) > 1 else 0
    val_clips = clips[:n_val]
    train_clips = clips[n_val:] if n_val else clips
    sampler = WindowSampler(train_clips, stats, H)
    if not len(sampler):
        raise ValueError(f"no trainable windows: clips shorter than H={H}")

    channels = train_clips[0].channels().shape[1]
    model = TokenizerModel(character_id, channels, cfg, stats,
                           rng=np.random.default_rng(seed + 1))

    # fixed validation batch
    val_sampler = WindowSampler(val_clips, stats, H) if val_clips else sampler
    vp = rng.choice(len(val_sampler), size=min(cfg.batch_size, len(val_sampler)), replace=False)
    val_batch = val_sampler.batch(vp)

    # codebook init from the first batch's latents
    first = rng.integers(0, len(sampler), size=cfg.batch_size)
    first_batch = sampler.batch(first)
    with_latents = model.encode_array(first_batch).data.reshape(-1, cfg.code_dim)
    model.codebook = Codebook.init_from_latents(with_latents, cfg.nb_code, rng,
                                                mu=cfg.mu, laplace_eps=cfg.laplace_eps,
                                                dead_min_size=cfg.dead_code_min_size,
                                                dead_steps=cfg.dead_code_steps)

    initial_val = evaluate_reconstruction(model, val_batch)
    opt = AdamW(model.parameters(), lr=cfg.lr, betas=cfg.betas,
                weight_decay=cfg.weight_decay)
    log_rows: list[dict] = []
    val_history: list[tuple[int, float]] = [(0, initial_val)]
    last_good = model.state_dict()
    last_good = {k: v.copy() for k, v in last_good.items()}

    for it in range(cfg.total_iter):
        opt.lr = schedule_lr("warmup-then-milestones", it, peak=cfg.lr,
                             warmup_iter=cfg.warmup_iter, milestones=cfg.lr_milestones,
                             gamma=cfg.lr_gamma)
        picks = rng.integers(0, len(sampler), size=cfg.batch_size)
        batch = sampler.batch(picks)
        loss, parts, latents, idx = vq_losses(model, batch, train=True)
        if not np.isfinite(loss.data):
            model.load_state(last_good)
            raise TrainingAborted(
                f"non-finite loss at iter {it}; restored last good state (iter {val_history[-1][0]})")
        opt.zero_grad()
        loss.backward()
        opt.step()
        model.codebook.ema_update_and_reset(latents, idx, rng)

        if it % cfg.log_every == 0 or it == cfg.total_iter - 1:
            counts = np.bincount(idx, minlength=cfg.nb_code)
            probs = counts / counts.sum()
            nz = probs[probs > 0]
            log_rows.append({
                "iter": it,
                "lr": opt.lr,
                "l_rec": parts["l_rec"],
                "l_code": parts["l_code"],
                "l_commit": parts["l_commit"],
                "usage": float((counts > 0).mean()),
                "perplexity": float(np.exp(-(nz * np.log(nz)).sum())),
            })
        if (it + 1) % cfg.val_every == 0 or it == cfg.total_iter - 1:
            val = evaluate_reconstruction(model, val_batch)
            val_history.append((it + 1, val))
            if np.isfinite(val):
                last_good = {k: v.copy() for k, v in model.state_dict().items()}
            if progress:
                print(f"  iter {it + 1}/{cfg.total_iter}  val l_rec {val:.6f}")

    # usage measured over the validation batch tokens
    _, _, _, val_idx = vq_losses(model, val_batch, train=False)
    usage = float(len(np.unique(val_idx)) / cfg.nb_code)
    return TrainResult(model, log_rows, val_history, initial_val,
                       val_history[-1][1], usage)


def write_log_csv(path, rows: list[dict], fingerprint: str | None = None,
                  seed: int | None = None) -> None:
    header = "iter,lr,l_rec,l_code,l_commit,usage,perplexity"
    lines = []
    if fingerprint is not None or seed is not None:
        lines.append(f"# fingerprint={fingerprint or '-'} seed={seed if seed is not None else '-'}")
    lines.append(header)
    for r in rows:
        lines.append(f"{r['iter']},{r['lr']:.10g},{r['l_rec']:.10g},{r['l_code']:.10g},"
                     f"{r['l_commit']:.10g},{r['usage']:.10g},{r['perplexity']:.10g}")
    Path(path).write_text("\n".join(lines) + "\n")
