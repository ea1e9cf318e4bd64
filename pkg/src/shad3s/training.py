"""Losses and the alternating minimax loop for direct and split bundles.

Objectives follow the conditional-GAN structure: per step one discriminator
update maximizing mean[log D(real) + log(1 - D(fake))], then one generator
update minimizing L1 + adv_weight * adversarial term.  The generator uses
the non-saturating form -log D(fake) for stability.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import torch

from .models import discriminate, forward_direct, forward_split, save_bundle

LOG_EPS = 1e-7


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    kind: str = "direct"  # direct | split
    adv_weight: float = 0.01
    lr: float = 2e-4
    betas: tuple = (0.5, 0.999)
    batch_size: int = 4
    epochs: int = 20
    teacher_forcing: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.adv_weight < 0:
            raise ValueError("adv_weight must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def loss_l1_direct(s, s_hat):
    """Per-pixel mean absolute reconstruction error."""
    if s.shape != s_hat.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {s_hat.shape}")
    return (s - s_hat).abs().mean()


def adversarial_objective(real_scores, fake_scores):
    """mean log D(real) + mean log(1 - D(fake)); the quantity the
    discriminator maximizes."""
    real = real_scores.clamp(LOG_EPS, 1 - LOG_EPS)
    fake = fake_scores.clamp(LOG_EPS, 1 - LOG_EPS)
    return real.log().mean() + (1 - fake).log().mean()


def generator_adversarial(fake_scores):
    """Non-saturating generator term: -mean log D(fake)."""
    return -fake_scores.clamp(LOG_EPS, 1 - LOG_EPS).log().mean()


def loss_adv_direct(disc, s, s_hat, condition):
    """(d_loss, g_loss) for one discriminator.

    d_loss is the negated objective (a minimization target); g_loss is the
    non-saturating generator term on non-detached fakes.
    """
    real = discriminate(disc, condition, s)
    fake = discriminate(disc, condition, s_hat.detach())
    d_loss = -adversarial_objective(real, fake)
    g_loss = generator_adversarial(discriminate(disc, condition, s_hat))
    return d_loss, g_loss


def loss_split(m, m_hat, s, s_hat, d1, d2, cond1, cond2):
    """All split-model components; l1 and adversarial terms are additive
    over the two stages."""
    l1 = loss_l1_direct(m, m_hat) + loss_l1_direct(s, s_hat)
    d1_loss, g1_loss = loss_adv_direct(d1, m, m_hat, cond1)
    d2_loss, g2_loss = loss_adv_direct(d2, s, s_hat, cond2)
    return {"l1": l1, "d_loss": d1_loss + d2_loss,
            "g_adv": g1_loss + g2_loss}


# ---------------------------------------------------------------------------
# Data plumbing
# ---------------------------------------------------------------------------

def batch_from_rows(root, rows):
    """Stack manifest rows into training tensors (c, l, t, m, s)."""
    from .dataset import load_planes
    cs, ls, ts, ms, ss = [], [], [], [], []
    for row in rows:
        planes, crops = load_planes(root, row)
        cs.append(torch.tensor(planes["cnt"], dtype=torch.float32)[None])
        ls.append(torch.tensor(planes["ill"], dtype=torch.float32)[None])
        ts.append(torch.stack([torch.tensor(c, dtype=torch.float32)
                               for c in crops]))
        ms.append(torch.stack([torch.tensor(planes[n], dtype=torch.float32)
                               for n in ("hi", "mid", "sha", "shw")]))
        ss.append(torch.tensor(planes["sk"], dtype=torch.float32)[None])
    return (torch.stack(cs), torch.stack(ls), torch.stack(ts),
            torch.stack(ms), torch.stack(ss))


class TensorCorpus:
    """All data points pre-loaded as tensors; index-stable."""

    def __init__(self, c, l, t, m, s):
        self.c, self.l, self.t, self.m, self.s = c, l, t, m, s

    @classmethod
    def from_manifest(cls, root, rows):
        return cls(*batch_from_rows(root, rows))

    def __len__(self):
        return self.c.shape[0]

    def select(self, idx):
        return (self.c[idx], self.l[idx], self.t[idx], self.m[idx], self.s[idx])


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def _generator_forward(bundle, config, c, l, t, m):
    if bundle.kind == "direct":
        s_hat = forward_direct(bundle.generators["g"], c, l, t)
        return None, s_hat
    teacher = m if config.teacher_forcing else None
    m_hat, s_hat = forward_split(bundle, c, l, t, teacher_masks=teacher)
    return m_hat, s_hat


def _validation_l1(bundle, config, corpus, idx):
    bundle.eval()
    with torch.no_grad():
        c, l, t, m, s = corpus.select(idx)
        m_hat, s_hat = _generator_forward(bundle, config, c, l, t, m)
        val = loss_l1_direct(s, s_hat)
        if m_hat is not None:
            val = val + loss_l1_direct(m, m_hat)
    bundle.train()
    return float(val)


def train(bundle, corpus, config, out_dir, val_corpus=None, log_every=1):
    """Alternating minimax optimization; emits ckpt_e{epoch}.bin and an
    append-only metrics.jsonl under out_dir.  Deterministic in
    (seed, config, data order)."""
    if len(corpus) == 0:
        raise ValueError("empty training corpus")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)
    bundle.train()
    g_params = [p for m in bundle.generators.values() for p in m.parameters()]
    d_params = [p for m in bundle.discriminators.values()
                for p in m.parameters()]
    opt_g = torch.optim.Adam(g_params, lr=config.lr, betas=config.betas)
    opt_d = torch.optim.Adam(d_params, lr=config.lr, betas=config.betas)
    order_rng = torch.Generator().manual_seed(config.seed)
    history = []
    step = 0
    log_path = out_dir / "metrics.jsonl"
    with open(log_path, "a") as log:
        for epoch in range(1, config.epochs + 1):
            perm = torch.randperm(len(corpus), generator=order_rng)
            for start in range(0, len(corpus), config.batch_size):
                idx = perm[start:start + config.batch_size]
                c, l, t, m, s = corpus.select(idx)
                m_hat, s_hat = _generator_forward(bundle, config, c, l, t, m)

                # discriminator step (generator params untouched)
                if config.adv_weight > 0:
                    if bundle.kind == "direct":
                        cond = torch.cat([c, l, t], dim=1)
                        d_loss, _ = loss_adv_direct(
                            bundle.discriminators["d"], s, s_hat, cond)
                    else:
                        comp = loss_split(
                            m, m_hat, s, s_hat,
                            bundle.discriminators["d1"],
                            bundle.discriminators["d2"],
                            torch.cat([c, l], dim=1),
                            torch.cat([m, t], dim=1))
                        d_loss = comp["d_loss"]
                    opt_d.zero_grad()
                    (0.5 * d_loss).backward()
                    opt_d.step()
                else:
                    d_loss = torch.tensor(0.0)

                # generator step (discriminator params untouched)
                m_hat, s_hat = _generator_forward(bundle, config, c, l, t, m)
                g_l1 = loss_l1_direct(s, s_hat)
                if m_hat is not None:
                    g_l1 = g_l1 + loss_l1_direct(m, m_hat)
                if config.adv_weight > 0:
                    if bundle.kind == "direct":
                        cond = torch.cat([c, l, t], dim=1)
                        g_adv = generator_adversarial(
                            discriminate(bundle.discriminators["d"], cond,
                                         s_hat))
                    else:
                        g_adv = (generator_adversarial(discriminate(
                                    bundle.discriminators["d1"],
                                    torch.cat([c, l], dim=1), m_hat))
                                 + generator_adversarial(discriminate(
                                    bundle.discriminators["d2"],
                                    torch.cat([m, t], dim=1), s_hat)))
                else:
                    g_adv = torch.tensor(0.0)
                g_total = g_l1 + config.adv_weight * g_adv
                if not math.isfinite(float(g_l1.detach())):
                    raise TrainingDiverged(
                        f"generator L1 became non-finite at step {step}")
                opt_g.zero_grad()
                g_total.backward()
                opt_g.step()
                step += 1
                if step % log_every == 0:
                    log.write(json.dumps({
                        "step": step, "epoch": epoch,
                        "d_loss": float(d_loss.detach()),
                        "g_adv": float(g_adv.detach()),
                        "g_l1": float(g_l1.detach())}) + "\n")

            record = {"epoch": epoch, "step": step,
                      "g_l1": float(g_l1.detach())}
            if val_corpus is not None and len(val_corpus):
                record["val_l1"] = _validation_l1(
                    bundle, config, val_corpus,
                    torch.arange(len(val_corpus)))
                log.write(json.dumps({"step": step, "epoch": epoch,
                                      "val_l1": record["val_l1"]}) + "\n")
            history.append(record)
            save_bundle(bundle, out_dir / f"ckpt_e{epoch}.bin")
    bundle.eval()
    return history


def discriminator_accuracy(bundle, config, corpus, idx):
    """Real-vs-fake classification accuracy at threshold 0.5."""
    bundle.eval()
    with torch.no_grad():
        c, l, t, m, s = corpus.select(idx)
        m_hat, s_hat = _generator_forward(bundle, config, c, l, t, m)
        if bundle.kind == "direct":
            cond = torch.cat([c, l, t], dim=1)
            disc = bundle.discriminators["d"]
        else:
            cond = torch.cat([m, t], dim=1)
            disc = bundle.discriminators["d2"]
        real = discriminate(disc, cond, s)
        fake = discriminate(disc, cond, s_hat)
    bundle.train()
    correct = (real > 0.5).float().mean() + (fake <= 0.5).float().mean()
    return float(correct) / 2
