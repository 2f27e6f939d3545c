"""Hand-checkable walkthrough of every loss term.

Each block builds the smallest possible instance, states the arithmetic in a
comment, and confirms the implementation reproduces it.

Run:  python demos/02_losses_walkthrough.py
"""

import math

import torch

torch.set_grad_enabled(False)  # evaluation only

from rdcfa.discriminator import ClassMeans, dissimilarity_matrix, kld_loss, repulsive_loss
from rdcfa.losses import attract_loss, repel_loss, total_loss
from rdcfa.memory_bank import MemoryBank


def bank_of(rows):
    return MemoryBank(entries=torch.tensor(rows, dtype=torch.float64), augmented=False)


# --- attraction -------------------------------------------------------------
# One query at the origin, nearest stored feature at (3, 4): squared distance
# 25, hypersphere radius^2 = 1, so the hinge contributes 25 - 1 = 24.
bank = bank_of([[3.0, 4.0], [100.0, 100.0]])
value = attract_loss(torch.zeros(1, 2, dtype=torch.float64), bank, k=1, r_sq=1.0)
print(f"attraction: {float(value):.6f}  (expect 24)")

# --- repulsion --------------------------------------------------------------
# The rank-2 neighbor sits at squared distance 0.25; with r^2 = 1 and margin
# 0.5 the hinge gives max(0, 1 - 0.25 - 0.5) = 0.25.
bank = bank_of([[0.0, 0.0], [0.5, 0.0]])
value = repel_loss(torch.zeros(1, 2, dtype=torch.float64), bank, k=1, j=1, r_sq=1.0, alpha=0.5)
print(f"repulsion:  {float(value):.6f}  (expect 0.25)")

# --- divergence -------------------------------------------------------------
# Scalar Gaussian with mu = 1 against a class mean at 0, variance = 2:
# (1-0)^2 + 2 - ln 2 - 1 = 2 - ln 2.
cm = ClassMeans(1, 1, rho=10.0, seed=0)
with torch.no_grad():
    cm.means.zero_()
value = kld_loss(
    torch.ones(1, 1, 1, 1), torch.full((1, 1, 1, 1), math.log(2.0)), torch.tensor([0]), cm
)
print(f"divergence: {float(value):.6f}  (expect {2 - math.log(2):.6f})")

# --- anchor repulsion -------------------------------------------------------
# Two anchors at 0 and 2 (squared distance 4), rho = 10, uniform weighting:
# two ordered pairs of max(0, 10 - 4)^2 / 10 = 3.6 each, total 7.2.
cm = ClassMeans(2, 1, rho=10.0, seed=0)
with torch.no_grad():
    cm.means.copy_(torch.tensor([[0.0], [2.0]]))
value = repulsive_loss(cm, torch.tensor([0, 1]), torch.ones(2, 2), rho=10.0)
print(f"anchors:    {float(value):.6f}  (expect 7.2)")

# --- dissimilarity weights --------------------------------------------------
# With two samples the min-max scaling always yields [[0, 1], [1, 0]].
dm = dissimilarity_matrix(torch.tensor([0.0, 2.0]).reshape(2, 1, 1, 1))
print(f"dissimilarity matrix:\n{dm.numpy()}")

# --- combination ------------------------------------------------------------
# total = 0.5 * kld + 0.1 * d_rep + f_att + f_rep
#       = 0.5 * 1 + 0.1 * 2 + 3 + 4 = 7.7
value = total_loss(
    torch.tensor(3.0), torch.tensor(4.0), torch.tensor(1.0), torch.tensor(2.0),
    alpha_kl=0.5, alpha_dr=0.1,
)
print(f"total:      {float(value):.6f}  (expect 7.7)")
