"""The four training losses on toy embeddings."""

import numpy as np

from cda import losses

rng = np.random.default_rng(1)


def unit(z):
    return z / np.linalg.norm(z, axis=1, keepdims=True)


# Classification loss on logits.
print("CE, uniform logits over 10 classes:", losses.cross_entropy(np.zeros((4, 10)), [0, 3, 5, 9]).item())

# Domain loss: D outputs the probability that a sample is from the target.
# A maximally confused discriminator gives 2 log 0.5.
print("adversarial loss at D = 0.5:", losses.adversarial_loss([0.5, 0.5], [0.5, 0.5]).item())

# Supervised contrastive loss pulls same-class embeddings together.
y = np.array([0, 0, 0, 1, 1, 1])
tight = unit(np.array([[1, 0.1], [1, 0], [1, -0.1], [-1, 0.1], [-1, 0], [-1, -0.1]]))
loose = unit(rng.standard_normal((6, 2)))
print("SupCL, clustered:", round(losses.sup_contrastive(tight, y, 0.5).item(), 4))
print("SupCL, random:   ", round(losses.sup_contrastive(loose, y, 0.5).item(), 4))

# Cross-domain contrastive loss compares per-class centroids across domains.
# Target labels here play the role of pseudo-labels.
z_s = tight
z_t_aligned = unit(tight + 0.05 * rng.standard_normal(tight.shape))
z_t_swapped = z_t_aligned[::-1]
print("CrossCL, aligned domains:", round(losses.cross_domain_contrastive(z_s, y, z_t_aligned, y, 0.5).item(), 4))
print("CrossCL, classes swapped:", round(losses.cross_domain_contrastive(z_s, y, z_t_swapped, y, 0.5).item(), 4))
