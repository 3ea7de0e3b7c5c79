# coding: utf-8

# # The tensor core
#
# The codec is built on a small reverse-mode autodiff layer over numpy.
# Here we poke at the ops one at a time and check a few gradients by hand.

# In[1]:

import numpy as np

from sca import functional as F
from sca.tensor import Tensor, no_grad


# A tensor that requires grad records every op applied to it. Calling
# backward() on a scalar walks the tape in reverse creation order.

# In[2]:

x = Tensor(np.array([3.0]), requires_grad=True, dtype=np.float64)
y = (x * x).sum()
y.backward()
print(x.grad)  # d(x^2)/dx at 3 is 6


# Convolutions are 3x3 with "same" padding. Stride 2 halves each spatial side.

# In[3]:

img = Tensor(np.ones((1, 1, 4, 4)))
w = Tensor(np.ones((2, 1, 3, 3)))
b = Tensor(np.zeros(2))
print(F.conv2d(img, w, b).data[0, 0])
print(F.conv2d(img, w, b, stride=2).shape)


# Upsampling is bilinear with the corners pinned, so a row [0, 2] stretched
# to four samples lands on thirds.

# In[4]:

row = Tensor(np.array([[[[0.0, 2.0]]]]), dtype=np.float64)
print(F.bilinear_upsample(row, 2).data[0, 0, 0])


# Top-k keeps the k largest magnitudes and zeros the rest. Ties go to the
# lower index, so the result never depends on sort stability.

# In[5]:

v = np.array([[0.5, -2.0, 0.5, 1.0, -0.5]])
print(F.top_k_sparsify(v, 3))


# Through top-k the gradient only flows to the kept entries.

# In[6]:

z = Tensor(v.copy(), requires_grad=True, dtype=np.float64)
(F.top_k_sparsify(z, 3) * Tensor(np.ones_like(v), dtype=np.float64)).sum().backward()
print(z.grad)


# Inside no_grad nothing is recorded, which is what inference uses.

# In[7]:

with no_grad():
    out = F.relu(Tensor(np.array([-1.0, 2.0]), requires_grad=True))
print(out.requires_grad)


# A quick finite-difference check on a conv layer in 64-bit.

# In[8]:

rng = np.random.default_rng(0)
xa = rng.normal(size=(1, 2, 5, 5))
wa = rng.normal(size=(3, 2, 3, 3))
ba = rng.normal(size=3)


def loss(wv):
    return (F.conv2d(Tensor(xa, dtype=np.float64), Tensor(wv, dtype=np.float64), Tensor(ba, dtype=np.float64)) ** 2).sum()


wt = Tensor(wa, requires_grad=True, dtype=np.float64)
(F.conv2d(Tensor(xa, dtype=np.float64), wt, Tensor(ba, dtype=np.float64)) ** 2).sum().backward()

h = 1e-5
e = np.zeros_like(wa)
e[1, 0, 2, 1] = h
numeric = (loss(wa + e).item() - loss(wa - e).item()) / (2 * h)
print(wt.grad[1, 0, 2, 1], numeric)
