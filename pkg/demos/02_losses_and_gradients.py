"""
Losses and their gradient checks
================================

The four objectives on tiny hand-made batches, then the finite-difference
check that every loss and both networks are run through.
"""

import math

import torch

from actlumos.gradcheck import LOSS_NAMES, grad_check
from actlumos.objectives import ce_loss, kd_loss, positive_negative_sets, ssl_loss, supcon_loss

# A 16-row contrastive batch: 4 classes x 2 clips x (dark, retinex) views.
labels = torch.tensor([k for k in range(4) for _ in range(4)])
P, N = positive_negative_sets(labels, 0)
print(f"anchor 0: positives {P}, {len(N)} negatives")

# Identical embeddings give the uniform value log(B - 1).
z = torch.zeros(16, 8, dtype=torch.float64)
z[:, 0] = 1
print(f"supcon, identical rows: {supcon_loss(z, labels):.6f}  (log 15 = {math.log(15):.6f})")

# Two tight, orthogonal classes.
micro = torch.tensor([[1.0, 0], [1, 0], [0, 1], [0, 1]], dtype=torch.float64)
print(f"supcon, 2 classes:      {supcon_loss(micro, torch.tensor([0, 0, 1, 1])):.3e}")

# Fast/slow views: orthogonal clips, views agree.
e = torch.eye(2, dtype=torch.float64)
print(f"ssl, tau=0.5:           {ssl_loss(e, e, 0.5):.6f}")

print(f"ce, uniform over 10:    {ce_loss(torch.zeros(10), 0):.6f}")
print(f"kd, (4,0) vs (0,0):     {kd_loss(torch.tensor([4.0, 0]), torch.tensor([0.0, 0])):.6f}")

# Autograd against central differences on seeded micro-instances.
for name in LOSS_NAMES:
    print(grad_check(name, instance_seed=0).line())
