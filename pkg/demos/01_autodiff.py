"""Reverse-mode autodiff: build a small graph, backpropagate, check against finite differences."""

import numpy as np

from cda import autodiff as ad

rng = np.random.default_rng(0)

# A two-layer ReLU net on five inputs. Parameters are leaves that collect .grad.
X = rng.standard_normal((5, 3))
W1 = ad.parameter(rng.standard_normal((3, 4)))
W2 = ad.parameter(rng.standard_normal((4, 1)))
out = ad.matmul(ad.relu(ad.matmul(X, W1)), W2)
loss = ad.mean(ad.mul(out, out))
ad.backward(loss)
print("loss", loss.item())
print("dL/dW2", W2.grad.ravel())

# grad_check compares the analytic gradient with central differences.
def loss_of_W1(w):
    h = ad.matmul(ad.relu(ad.matmul(X, w)), W2.data)
    return ad.mean(ad.mul(h, h))


print(f"max relative error for W1: {ad.grad_check(loss_of_W1, W1.data):.2e}")

# Gradient reversal is the identity going forward and flips (and scales) the
# gradient going back. This is how the feature extractor learns to fool the
# domain discriminator in the same backward pass that trains the discriminator.
x = ad.parameter([1.0, -2.0, 3.0])
y = ad.gradient_reversal(x, 0.5)
ad.backward(ad.sum(y))
print("forward unchanged:", np.array_equal(y.data, x.data), " grad:", x.grad)

# Shape mistakes fail loudly with the op and both shapes.
try:
    ad.matmul(np.ones((2, 3)), np.ones((2, 3)))
except ad.ShapeError as exc:
    print("ShapeError:", exc)
