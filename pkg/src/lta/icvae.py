"""Intention-conditioned variational transformer for future action generation.

Training: verb/noun embeddings of observed and future actions, prefixed by
per-intention learnable distribution tokens, run through a transformer encoder
whose first two output rows parameterize the latent (mean, log-variance). A
sampled latent, shifted by a per-intention bias, is the single memory token of
a non-autoregressive transformer decoder that fills Z future slots at once.
Inference samples the latent from a standard normal and uses the decoder only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from lta.datagen import AnticipationExample
from lta.h3m import class_balanced_weights, weighted_ce
from lta.seeding import substream, substream_seed
from lta.taxonomy import ActionLabel, ActionSequence


@dataclass(frozen=True)
class ICVAEConfig:
    d: int = 32                 # per-component embedding dim; model width is 2d
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    ff_mult: int = 4
    lambda_rec: float = 1.0
    lambda_ce: float = 1.0
    lambda_kl: float = 1e-4
    logvar_clamp: float = 10.0
    no_intention: bool = False
    beta: float = 0.99          # class-balance parameter for the weighted CE
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 30

    @property
    def width(self) -> int:
        return 2 * self.d


def positional_encoding(length: int, width: int,
                        dtype=torch.float32) -> torch.Tensor:
    """Sinusoidal encoding: (p, 2i) -> sin(p/10000^(2i/W)), (p, 2i+1) -> cos."""
    if width % 2 != 0:
        raise ValueError(f"width must be even, got {width}")
    pos = torch.arange(length, dtype=dtype).unsqueeze(1)
    i = torch.arange(0, width, 2, dtype=dtype)
    angle = pos / torch.pow(torch.tensor(10000.0, dtype=dtype), i / width)
    pe = torch.zeros(length, width, dtype=dtype)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle)
    return pe


class MultiheadAttention(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        if width % heads != 0:
            raise ValueError("width must be divisible by heads")
        self.heads = heads
        self.head_dim = width // heads
        self.q_proj = nn.Linear(width, width)
        self.k_proj = nn.Linear(width, width)
        self.v_proj = nn.Linear(width, width)
        self.out_proj = nn.Linear(width, width)

    def forward(self, query: torch.Tensor, key: torch.Tensor,
                value: torch.Tensor) -> torch.Tensor:
        B, Lq, W = query.shape
        Lk = key.shape[1]

        def split(x, L):
            return x.view(B, L, self.heads, self.head_dim).transpose(1, 2)

        q = split(self.q_proj(query), Lq)
        k = split(self.k_proj(key), Lk)
        v = split(self.v_proj(value), Lk)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(B, Lq, W)
        return self.out_proj(out)


class EncoderLayer(nn.Module):
    """Post-norm self-attention + feed-forward block (no masking)."""

    def __init__(self, width: int, heads: int, ff_width: int):
        super().__init__()
        self.self_attn = MultiheadAttention(width, heads)
        self.norm1 = nn.LayerNorm(width)
        self.ff = nn.Sequential(
            nn.Linear(width, ff_width), nn.ReLU(), nn.Linear(ff_width, width))
        self.norm2 = nn.LayerNorm(width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.self_attn(x, x, x))
        return self.norm2(x + self.ff(x))


class DecoderLayer(nn.Module):
    """Post-norm self-attention, cross-attention to memory, feed-forward."""

    def __init__(self, width: int, heads: int, ff_width: int):
        super().__init__()
        self.self_attn = MultiheadAttention(width, heads)
        self.norm1 = nn.LayerNorm(width)
        self.cross_attn = MultiheadAttention(width, heads)
        self.norm2 = nn.LayerNorm(width)
        self.ff = nn.Sequential(
            nn.Linear(width, ff_width), nn.ReLU(), nn.Linear(ff_width, width))
        self.norm3 = nn.LayerNorm(width)

    def forward(self, x: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.self_attn(x, x, x))
        x = self.norm2(x + self.cross_attn(x, memory, memory))
        return self.norm3(x + self.ff(x))


class ActionEmbedder(nn.Module):
    """Separate verb/noun embedding tables, concatenated per action."""

    def __init__(self, num_verbs: int, num_nouns: int, d: int):
        super().__init__()
        self.verb_table = nn.Embedding(num_verbs, d)
        self.noun_table = nn.Embedding(num_nouns, d)

    def forward(self, verbs: torch.Tensor, nouns: torch.Tensor) -> torch.Tensor:
        return torch.cat([self.verb_table(verbs), self.noun_table(nouns)], dim=-1)


class ICVAE(nn.Module):
    def __init__(self, num_verbs: int, num_nouns: int, num_intentions: int,
                 config: ICVAEConfig = ICVAEConfig()):
        super().__init__()
        self.config = config
        W = config.width
        rows = 1 if config.no_intention else num_intentions
        self.num_intentions = num_intentions
        self.embedder = ActionEmbedder(num_verbs, num_nouns, config.d)
        self.mu_tokens = nn.Parameter(torch.randn(rows, W) * 0.02)
        self.sigma_tokens = nn.Parameter(torch.randn(rows, W) * 0.02)
        self.bias = nn.Parameter(torch.randn(rows, W) * 0.02)
        ff = config.ff_mult * W
        self.encoder = nn.ModuleList(
            [EncoderLayer(W, config.heads, ff) for _ in range(config.enc_layers)])
        self.decoder = nn.ModuleList(
            [DecoderLayer(W, config.heads, ff) for _ in range(config.dec_layers)])
        self.verb_head = nn.Linear(W, num_verbs)
        self.noun_head = nn.Linear(W, num_nouns)

    def _row(self, table: torch.Tensor, intention: torch.Tensor) -> torch.Tensor:
        if self.config.no_intention:
            return table[0].expand(intention.shape[0], -1)
        return table[intention]

    def embed(self, verbs: torch.Tensor, nouns: torch.Tensor) -> torch.Tensor:
        return self.embedder(verbs, nouns)

    def encode(self, e_obs: torch.Tensor, e_pred: torch.Tensor,
               intention: torch.Tensor):
        """[mu_token; sigma_token; E_obs; E_pred] + PE -> (mean, log_var)."""
        B = e_obs.shape[0]
        mu_tok = self._row(self.mu_tokens, intention).unsqueeze(1)
        sig_tok = self._row(self.sigma_tokens, intention).unsqueeze(1)
        x = torch.cat([mu_tok, sig_tok, e_obs, e_pred], dim=1)
        pe = positional_encoding(x.shape[1], x.shape[2], dtype=x.dtype)
        x = x + pe.to(x.device)
        for layer in self.encoder:
            x = layer(x)
        mean = x[:, 0]
        c = self.config.logvar_clamp
        log_var = x[:, 1].clamp(-c, c)
        return mean, log_var

    def decode(self, z: torch.Tensor, e_obs: torch.Tensor,
               intention: torch.Tensor, Z: int) -> torch.Tensor:
        """Decode Z future embeddings non-autoregressively.

        Target = [E_obs; zeros x Z] + PE; memory = single token z + bias(I).
        """
        B, N, W = e_obs.shape
        zeros = e_obs.new_zeros(B, Z, W)
        x = torch.cat([e_obs, zeros], dim=1)
        pe = positional_encoding(N + Z, W, dtype=x.dtype)
        x = x + pe.to(x.device)
        memory = (z + self._row(self.bias, intention)).unsqueeze(1)
        for layer in self.decoder:
            x = layer(x, memory)
        return x[:, N:]

    def action_head(self, e_pred_hat: torch.Tensor):
        return self.verb_head(e_pred_hat), self.noun_head(e_pred_hat)


def reparameterize(mean: torch.Tensor, log_var: torch.Tensor,
                   noise: torch.Tensor) -> torch.Tensor:
    return mean + torch.exp(0.5 * log_var) * noise


def kl_to_standard_normal(mean: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """KL( N(mean, diag exp(log_var)) || N(0, I) ), mean over the batch."""
    per_example = 0.5 * (mean.pow(2) + log_var.exp() - 1.0 - log_var).sum(dim=-1)
    return per_example.mean()


def icvae_loss(e_pred_hat: torch.Tensor, e_pred: torch.Tensor,
               verb_logits: torch.Tensor, noun_logits: torch.Tensor,
               fut_verbs: torch.Tensor, fut_nouns: torch.Tensor,
               mean: torch.Tensor, log_var: torch.Tensor,
               config: ICVAEConfig,
               w_verb: torch.Tensor | None = None,
               w_noun: torch.Tensor | None = None):
    """lambda_rec * L2 + lambda_ce * weighted CE (verbs+nouns) + lambda_kl * KL."""
    rec = torch.mean((e_pred_hat - e_pred) ** 2)
    num_verbs = verb_logits.shape[-1]
    num_nouns = noun_logits.shape[-1]
    ce = (weighted_ce(verb_logits.reshape(-1, num_verbs), fut_verbs.reshape(-1), w_verb)
          + weighted_ce(noun_logits.reshape(-1, num_nouns), fut_nouns.reshape(-1), w_noun))
    kl = kl_to_standard_normal(mean, log_var)
    total = config.lambda_rec * rec + config.lambda_ce * ce + config.lambda_kl * kl
    return total, {"rec": rec, "ce": ce, "kl": kl}


def _label_tensors(seqs: Sequence[ActionSequence]):
    verbs = torch.tensor([[a.verb_id for a in s] for s in seqs], dtype=torch.long)
    nouns = torch.tensor([[a.noun_id for a in s] for s in seqs], dtype=torch.long)
    return verbs, nouns


@torch.no_grad()
def generate(model: ICVAE, observed: ActionSequence, intention_id: int,
             Z: int, K: int, seed: int = 0) -> list[ActionSequence]:
    """Draw K latents from N(0, I) and decode K candidate futures."""
    if K < 1 or Z < 1:
        raise ValueError(f"K={K} and Z={Z} must be >= 1")
    batches = generate_batch(model, [observed], [intention_id], Z, K, seed)
    return batches[0]


@torch.no_grad()
def generate_batch(model: ICVAE, observed: Sequence[ActionSequence],
                   intentions: Sequence[int], Z: int, K: int,
                   seed: int = 0) -> list[list[ActionSequence]]:
    """Batched generation; each example owns a seeded noise stream, so results
    are independent of batching."""
    if K < 1 or Z < 1:
        raise ValueError(f"K={K} and Z={Z} must be >= 1")
    model.eval()
    B = len(observed)
    W = model.config.width
    obs_v, obs_n = _label_tensors(observed)
    e_obs = model.embed(obs_v, obs_n)
    intent = torch.tensor(list(intentions), dtype=torch.long)

    z = torch.empty(B, K, W)
    for b in range(B):
        gen = torch.Generator().manual_seed(substream_seed(seed, "z", b))
        z[b] = torch.randn(K, W, generator=gen)

    out: list[list[ActionSequence]] = [[] for _ in range(B)]
    for k in range(K):
        e_hat = model.decode(z[:, k], e_obs, intent, Z)
        vl, nl = model.action_head(e_hat)
        verb_ids = vl.numpy().argmax(axis=-1)  # first max = lowest class index
        noun_ids = nl.numpy().argmax(axis=-1)
        for b in range(B):
            out[b].append(ActionSequence(
                tuple(ActionLabel(int(v), int(n))
                      for v, n in zip(verb_ids[b], noun_ids[b])),
                role="future"))
    return out


def icvae_train(examples: Sequence[AnticipationExample], num_verbs: int,
                num_nouns: int, num_intentions: int,
                config: ICVAEConfig = ICVAEConfig(), seed: int = 0):
    """Train the variational generator; deterministic given (examples, config,
    seed). With ``config.no_intention`` all intention lookups resolve to one
    shared row, removing the conditioning signal. Returns (model, log)."""
    if len(examples) == 0:
        raise ValueError("empty dataset")
    obs_v, obs_n = _label_tensors([ex.observed_actions for ex in examples])
    fut_v, fut_n = _label_tensors([ex.future_actions for ex in examples])
    intent = torch.tensor([ex.intention_id for ex in examples], dtype=torch.long)
    M = len(examples)
    Z = fut_v.shape[1]

    torch.manual_seed(substream_seed(seed, "icvae-init"))
    model = ICVAE(num_verbs, num_nouns, num_intentions, config)

    w_verb = class_balanced_weights(
        np.bincount(fut_v.reshape(-1), minlength=num_verbs), config.beta)
    w_noun = class_balanced_weights(
        np.bincount(fut_n.reshape(-1), minlength=num_nouns), config.beta)

    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    shuffle_rng = substream(seed, "icvae-shuffle")
    noise_gen = torch.Generator().manual_seed(substream_seed(seed, "icvae-noise"))
    log: list[float] = []

    for _ in range(config.epochs):
        order = shuffle_rng.permutation(M)
        for start in range(0, M, config.batch_size):
            idx = torch.from_numpy(order[start:start + config.batch_size].copy())
            e_obs = model.embed(obs_v[idx], obs_n[idx])
            e_pred = model.embed(fut_v[idx], fut_n[idx])
            mean, log_var = model.encode(e_obs, e_pred, intent[idx])
            noise = torch.randn(mean.shape, generator=noise_gen)
            z = reparameterize(mean, log_var, noise)
            e_hat = model.decode(z, e_obs, intent[idx], Z)
            vl, nl = model.action_head(e_hat)
            # reconstruction target must not receive gradient through E_pred twice;
            # detach so the embedder is driven by the CE and encoder paths
            total, _parts = icvae_loss(
                e_hat, e_pred.detach(), vl, nl, fut_v[idx], fut_n[idx],
                mean, log_var, config, w_verb, w_noun)
            opt.zero_grad()
            total.backward()
            opt.step()
            log.append(float(total.detach()))

    model.eval()
    return model, log
