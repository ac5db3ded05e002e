"""Losses: supervised contrastive, two-view InfoNCE, cross-entropy and distillation.

All functions take torch tensors and work in whatever dtype they are given,
so the same code path is used for float32 training and float64 gradient
checks. Every softmax/log-sum-exp is computed in its stabilised form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

SUPCON_TAU = 0.1
SSL_TAU = 0.1
KD_TAU = 4.0
LAMBDA_SUP = 0.1
LAMBDA_CE = 1.0
LAMBDA_KD = 1.0


@dataclass
class LossValue:
    total: torch.Tensor
    components: dict[str, torch.Tensor] = field(default_factory=dict)

    def items(self) -> dict[str, float]:
        out = {k: float(v.detach()) for k, v in self.components.items()}
        out["total"] = float(self.total.detach())
        return out


@dataclass
class EmbeddingBatch:
    """Rows of unit-norm embeddings with their labels, view tags and source clips."""

    embeddings: torch.Tensor  # [B, C]
    labels: torch.Tensor  # [B]
    view_tags: list[str]
    clip_ids: list

    def validate(self, n_c: int | None = None, n_v: int | None = None, atol: float = 1e-6) -> None:
        B = self.embeddings.shape[0]
        if not (len(self.labels) == len(self.view_tags) == len(self.clip_ids) == B):
            raise ValueError("embedding batch fields have inconsistent lengths")
        norms = self.embeddings.detach().norm(dim=1)
        if bool(((norms - 1).abs() > atol).any()):
            raise ValueError("embedding rows must be unit norm")
        if n_c is not None and n_v is not None:
            if B != 2 * n_c * n_v:
                raise ValueError(f"SupCon batch has {B} rows, expected 2*n_c*n_v = {2 * n_c * n_v}")
            _, counts = torch.unique(self.labels, return_counts=True)
            if len(counts) != n_c or bool((counts != 2 * n_v).any()):
                raise ValueError(f"each class must contribute exactly {2 * n_v} rows")


def positive_negative_sets(labels, i: int) -> tuple[list[int], list[int]]:
    labels = [int(y) for y in labels]
    pos = [p for p, y in enumerate(labels) if p != i and y == labels[i]]
    neg = [a for a, y in enumerate(labels) if a != i and y != labels[i]]
    return pos, neg


def supcon_loss(embeddings: torch.Tensor, labels: torch.Tensor, tau: float = SUPCON_TAU) -> torch.Tensor:
    """Mean over anchors of -1/|P(i)| sum_p log softmax_{a != i}(z_i . z_a / tau)[p]."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = embeddings
    labels = torch.as_tensor(labels, device=z.device)
    B = z.shape[0]
    self_mask = torch.eye(B, dtype=torch.bool, device=z.device)
    pos_mask = (labels[:, None] == labels[None, :]) & ~self_mask
    n_pos = pos_mask.sum(1)
    if bool((n_pos == 0).any()):
        bad = torch.nonzero(n_pos == 0).flatten().tolist()
        raise ValueError(f"anchors {bad} have no positives; the batch is not class balanced")
    sim = (z @ z.T / tau).masked_fill(self_mask, float("-inf"))
    log_prob = sim - torch.logsumexp(sim, dim=1, keepdim=True)
    log_prob = log_prob.masked_fill(~pos_mask, 0.0)
    per_anchor = -log_prob.sum(1) / n_pos
    return per_anchor.mean()


def _unit_rows(x: torch.Tensor, name: str) -> torch.Tensor:
    norm = x.norm(dim=1, keepdim=True)
    if bool((norm == 0).any()):
        raise ValueError(f"{name} contains a zero-norm row; cosine similarity is undefined")
    return x / norm


def ssl_per_anchor(fast: torch.Tensor, slow: torch.Tensor, tau: float = SSL_TAU) -> torch.Tensor:
    """Per-clip InfoNCE terms with the fast view as anchor.

    Denominator for anchor i: its slow view plus both views of every other
    clip, 1 + 2 (B_u - 1) terms.
    """
    if fast.shape != slow.shape or fast.dim() != 2:
        raise ValueError(f"fast and slow must both be [B_u, C], got {tuple(fast.shape)} and {tuple(slow.shape)}")
    B = fast.shape[0]
    if B < 2:
        raise ValueError("ssl_loss needs B_u >= 2 clips to form negatives")
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    f = _unit_rows(fast, "fast")
    s = _unit_rows(slow, "slow")
    self_mask = torch.eye(B, dtype=torch.bool, device=f.device)
    ff = (f @ f.T / tau).masked_fill(self_mask, float("-inf"))
    fs = f @ s.T / tau
    logits = torch.cat([fs, ff], dim=1)
    return torch.logsumexp(logits, dim=1) - fs.diagonal()


def ssl_loss(fast: torch.Tensor, slow: torch.Tensor, tau: float = SSL_TAU) -> torch.Tensor:
    return ssl_per_anchor(fast, slow, tau).mean()


def _check_labels(labels: torch.Tensor, K: int) -> None:
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= K):
        raise ValueError(f"label out of range [0, {K}): {labels.tolist()}")


def ce_loss(logits: torch.Tensor, labels) -> torch.Tensor:
    """Mean cross-entropy; accepts a single [K] logit vector with an int label."""
    labels = torch.as_tensor(labels, device=logits.device)
    if logits.dim() == 1:
        logits, labels = logits[None], labels.reshape(1)
    _check_labels(labels, logits.shape[-1])
    return F.cross_entropy(logits, labels.long())


def kd_loss(z_t: torch.Tensor, z_s: torch.Tensor, tau: float = KD_TAU) -> torch.Tensor:
    """tau^2 KL(softmax(z_t/tau) || softmax(z_s/tau)), averaged over the batch; z_t is detached."""
    if z_t.shape != z_s.shape:
        raise ValueError(f"teacher and student logits differ in shape: {tuple(z_t.shape)} vs {tuple(z_s.shape)}")
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    log_pt = F.log_softmax(z_t.detach() / tau, dim=-1)
    log_ps = F.log_softmax(z_s / tau, dim=-1)
    kl = (log_pt.exp() * (log_pt - log_ps)).sum(-1)
    return tau**2 * kl.mean()


def teacher_loss(logits: torch.Tensor, labels, embeddings: torch.Tensor | None, emb_labels=None,
                 tau: float = SUPCON_TAU, lambda_sup: float = LAMBDA_SUP) -> LossValue:
    ce = ce_loss(logits, labels)
    components = {"ce": ce}
    total = ce
    if embeddings is not None:
        sup = supcon_loss(embeddings, labels if emb_labels is None else emb_labels, tau)
        components["supcon"] = sup
        total = ce + lambda_sup * sup
    return LossValue(total, components)


def student_loss(z_t: torch.Tensor, z_s: torch.Tensor, labels, tau: float = KD_TAU,
                 lambda_ce: float = LAMBDA_CE, lambda_kd: float = LAMBDA_KD) -> LossValue:
    ce = ce_loss(z_s, labels)
    kd = kd_loss(z_t, z_s, tau)
    return LossValue(lambda_ce * ce + lambda_kd * kd, {"ce": ce, "kd": kd})


__all__ = [
    "LossValue", "EmbeddingBatch", "positive_negative_sets", "supcon_loss", "ssl_loss", "ssl_per_anchor",
    "ce_loss", "kd_loss", "teacher_loss", "student_loss",
    "SUPCON_TAU", "SSL_TAU", "KD_TAU", "LAMBDA_SUP", "LAMBDA_CE", "LAMBDA_KD",
]
