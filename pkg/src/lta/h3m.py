"""Hierarchical multitask MLP-Mixer: per-clip action classification + intention.

An action mixer runs on each clip's T x D feature matrix independently and is
global-average-pooled over T into a clip representation. A shared action head
classifies each representation into a (verb, noun) pair; an intention mixer
over the N clip representations classifies the video-level intention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from lta.datagen import AnticipationExample
from lta.seeding import substream, substream_seed
from lta.taxonomy import ActionLabel, ActionSequence


@dataclass(frozen=True)
class H3MConfig:
    depth: int = 2
    token_hidden: int | None = None    # default 2T
    channel_hidden: int | None = None  # default D // 4
    noise_inj: float = 0.05
    beta: float = 0.99
    focal_gamma: float = 0.0
    masked_gap: bool = False
    lr: float = 1e-3
    batch_size: int = 64
    phase1_epochs: int = 8
    phase2_epochs: int = 4
    schedule: str = "two-phase"  # "two-phase" or "joint"
    lambda_intention: float = 1.0
    lambda_action: float = 1.0

    def __post_init__(self):
        if self.schedule not in ("two-phase", "joint"):
            raise ValueError(f"invalid schedule {self.schedule!r}")


class MixerLayer(nn.Module):
    """Pre-norm token-mixing and channel-mixing MLPs with residuals."""

    def __init__(self, tokens: int, channels: int, token_hidden: int,
                 channel_hidden: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(channels)
        self.token_mlp = nn.Sequential(
            nn.Linear(tokens, token_hidden), nn.GELU(),
            nn.Linear(token_hidden, tokens),
        )
        self.norm2 = nn.LayerNorm(channels)
        self.channel_mlp = nn.Sequential(
            nn.Linear(channels, channel_hidden), nn.GELU(),
            nn.Linear(channel_hidden, channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (..., tokens, channels)
        y = x + self.token_mlp(self.norm1(x).transpose(-1, -2)).transpose(-1, -2)
        return y + self.channel_mlp(self.norm2(y))


class MixerStack(nn.Module):
    def __init__(self, tokens: int, channels: int, depth: int,
                 token_hidden: int, channel_hidden: int):
        super().__init__()
        self.layers = nn.ModuleList([
            MixerLayer(tokens, channels, token_hidden, channel_hidden)
            for _ in range(depth)
        ])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class H3M(nn.Module):
    def __init__(self, T: int, D: int, N: int, num_verbs: int, num_nouns: int,
                 num_intentions: int, config: H3MConfig = H3MConfig()):
        super().__init__()
        self.T, self.D, self.N = T, D, N
        self.config = config
        h_tok = config.token_hidden or 2 * T
        h_ch = config.channel_hidden or max(D // 4, 4)
        self.action_mixer = MixerStack(T, D, config.depth, h_tok, h_ch)
        self.verb_head = nn.Linear(D, num_verbs)
        self.noun_head = nn.Linear(D, num_nouns)
        h_tok_i = config.token_hidden or 2 * N
        self.intention_mixer = MixerStack(N, D, config.depth, h_tok_i, h_ch)
        self.intention_head = nn.Linear(D, num_intentions)

    def clip_representation(self, feats: torch.Tensor,
                            valid_rows: torch.Tensor | None = None) -> torch.Tensor:
        """Action mixer + global average pooling over T. feats: (..., T, D)."""
        x = self.action_mixer(feats)
        if self.config.masked_gap and valid_rows is not None:
            t = torch.arange(self.T, device=feats.device)
            mask = (t.view(1, -1) < valid_rows.view(-1, 1)).to(x.dtype)
            mask = mask.view(*feats.shape[:-2], self.T, 1)
            return (x * mask).sum(dim=-2) / mask.sum(dim=-2).clamp(min=1)
        return x.mean(dim=-2)

    def forward(self, feats: torch.Tensor, valid_rows: torch.Tensor | None = None):
        """feats: (B, N, T, D) -> verb (B,N,V), noun (B,N,Nn), intention (B,I)."""
        reps = self.clip_representation(feats, valid_rows)  # (B, N, D)
        verb_logits = self.verb_head(reps)
        noun_logits = self.noun_head(reps)
        pooled = self.intention_mixer(reps).mean(dim=-2)  # (B, D)
        intention_logits = self.intention_head(pooled)
        return verb_logits, noun_logits, intention_logits

    def intention_parameters(self):
        yield from self.intention_mixer.parameters()
        yield from self.intention_head.parameters()

    def action_parameters(self):
        yield from self.action_mixer.parameters()
        yield from self.verb_head.parameters()
        yield from self.noun_head.parameters()


def class_balanced_weights(counts: Sequence[int], beta: float) -> torch.Tensor:
    """Effective-number class weights w_c = (1-beta)/(1-beta^n_c).

    Absent classes get weight 0; present-class weights are rescaled to mean 1.
    """
    if not (0 <= beta < 1):
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("negative class count")
    present = counts >= 1
    weights = np.zeros_like(counts)
    if beta == 0:
        weights[present] = 1.0
    else:
        weights[present] = (1.0 - beta) / (1.0 - np.power(beta, counts[present]))
    if present.any():
        weights[present] /= weights[present].mean()
    return torch.from_numpy(weights)


def weighted_ce(logits: torch.Tensor, targets: torch.Tensor,
                weights: torch.Tensor | None = None,
                focal_gamma: float = 0.0) -> torch.Tensor:
    """Per-class weighted cross-entropy, plain mean over the batch.

    Unlike ``F.cross_entropy(weight=...)`` the reduction does not renormalize
    by the summed target weights. Optional focal modulation (1-p_t)^gamma.
    """
    logp = torch.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    if focal_gamma > 0:
        p_t = torch.exp(-nll)
        nll = (1.0 - p_t).pow(focal_gamma) * nll
    if weights is not None:
        nll = nll * weights.to(logits.dtype)[targets]
    return nll.mean()


def _stack_examples(examples: Sequence[AnticipationExample]):
    feats = np.stack([
        np.stack([f.matrix for f in ex.observed_features]) for ex in examples
    ]).astype(np.float32)
    verbs = np.array([[a.verb_id for a in ex.observed_actions] for ex in examples])
    nouns = np.array([[a.noun_id for a in ex.observed_actions] for ex in examples])
    intentions = np.array([ex.intention_id for ex in examples])
    return (torch.from_numpy(feats), torch.from_numpy(verbs),
            torch.from_numpy(nouns), torch.from_numpy(intentions))


def h3m_train(examples: Sequence[AnticipationExample], num_verbs: int,
              num_nouns: int, num_intentions: int,
              config: H3MConfig = H3MConfig(), seed: int = 0):
    """Train an H3M classifier; deterministic given (examples, config, seed).

    Two-phase schedule: joint intention+action multitask training, then
    action-only fine-tuning with the intention mixer and head frozen.
    Returns (model, log) where log is the per-step loss sequence.
    """
    if len(examples) == 0:
        raise ValueError("empty dataset")
    feats, verbs, nouns, intentions = _stack_examples(examples)
    M, N, T, D = feats.shape

    torch.manual_seed(substream_seed(seed, "h3m-init"))
    model = H3M(T, D, N, num_verbs, num_nouns, num_intentions, config)

    w_verb = class_balanced_weights(
        np.bincount(verbs.reshape(-1), minlength=num_verbs), config.beta)
    w_noun = class_balanced_weights(
        np.bincount(nouns.reshape(-1), minlength=num_nouns), config.beta)
    w_int = class_balanced_weights(
        np.bincount(intentions, minlength=num_intentions), config.beta)

    shuffle_rng = substream(seed, "h3m-shuffle")
    noise_gen = torch.Generator().manual_seed(substream_seed(seed, "h3m-noise"))
    log: list[float] = []

    def run_phase(epochs: int, params, with_intention: bool, with_action: bool):
        if epochs <= 0:
            return
        opt = torch.optim.Adam(params, lr=config.lr)
        for _ in range(epochs):
            order = shuffle_rng.permutation(M)
            for start in range(0, M, config.batch_size):
                idx = torch.from_numpy(order[start:start + config.batch_size].copy())
                x = feats[idx]
                if config.noise_inj > 0:
                    x = x + config.noise_inj * torch.randn(
                        x.shape, generator=noise_gen)
                vl, nl, il = model(x)
                loss = x.new_zeros(())
                if with_action:
                    loss = loss + config.lambda_action * (
                        weighted_ce(vl.reshape(-1, num_verbs), verbs[idx].reshape(-1),
                                    w_verb, config.focal_gamma)
                        + weighted_ce(nl.reshape(-1, num_nouns), nouns[idx].reshape(-1),
                                      w_noun, config.focal_gamma))
                if with_intention:
                    loss = loss + config.lambda_intention * weighted_ce(
                        il, intentions[idx], w_int, config.focal_gamma)
                opt.zero_grad()
                loss.backward()
                opt.step()
                log.append(float(loss.detach()))

    if config.schedule == "joint":
        run_phase(config.phase1_epochs + config.phase2_epochs,
                  model.parameters(), with_intention=True, with_action=True)
    else:
        run_phase(config.phase1_epochs, model.parameters(),
                  with_intention=True, with_action=True)
        for p in model.intention_parameters():
            p.requires_grad_(False)
        run_phase(config.phase2_epochs, model.action_parameters(),
                  with_intention=False, with_action=True)
        for p in model.intention_parameters():
            p.requires_grad_(True)

    model.eval()
    return model, log


@torch.no_grad()
def h3m_infer(model: H3M, observed_features) -> tuple[ActionSequence, int]:
    """Argmax inference for one example; ties break to the lowest class index."""
    feats = torch.from_numpy(np.stack(
        [f.matrix for f in observed_features])[None].astype(np.float32))
    vl, nl, il = model(feats)
    verb_ids = vl[0].numpy().argmax(axis=-1)
    noun_ids = nl[0].numpy().argmax(axis=-1)
    intention = int(il[0].numpy().argmax())
    actions = ActionSequence(
        tuple(ActionLabel(int(v), int(n)) for v, n in zip(verb_ids, noun_ids)),
        role="observed")
    return actions, intention


@torch.no_grad()
def h3m_infer_batch(model: H3M, examples: Sequence[AnticipationExample],
                    batch_size: int = 128):
    """Batched argmax inference; same tie-break as h3m_infer."""
    out = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        feats = torch.from_numpy(np.stack([
            np.stack([f.matrix for f in ex.observed_features]) for ex in chunk
        ]).astype(np.float32))
        vl, nl, il = model(feats)
        verb_ids = vl.numpy().argmax(axis=-1)
        noun_ids = nl.numpy().argmax(axis=-1)
        intent_ids = il.numpy().argmax(axis=-1)
        for b in range(len(chunk)):
            actions = ActionSequence(
                tuple(ActionLabel(int(v), int(n))
                      for v, n in zip(verb_ids[b], noun_ids[b])),
                role="observed")
            out.append((actions, int(intent_ids[b])))
    return out


@torch.no_grad()
def h3m_scores(model: H3M, examples: Sequence[AnticipationExample],
               batch_size: int = 128):
    """Per-clip verb/noun logits and per-example intention logits (numpy)."""
    verb_all, noun_all, int_all = [], [], []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        feats = torch.from_numpy(np.stack([
            np.stack([f.matrix for f in ex.observed_features]) for ex in chunk
        ]).astype(np.float32))
        vl, nl, il = model(feats)
        verb_all.append(vl.numpy())
        noun_all.append(nl.numpy())
        int_all.append(il.numpy())
    return (np.concatenate(verb_all), np.concatenate(noun_all),
            np.concatenate(int_all))
