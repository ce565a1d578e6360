"""
Reverse-mode gradients on a tape
================================

Build a tiny expression, run one backward pass and compare against central
differences.  Then push an image through the fixed Sobel operator.
"""

import numpy as np

from labnav import autodiff as ad

x = ad.Tensor([1.0, -2.0, 3.0], requires_grad=True)
W = ad.Tensor(np.arange(6.0).reshape(3, 2) / 10, requires_grad=True)
y = ad.mean(ad.sigmoid(ad.matmul(x.reshape((1, 3)), W)))
ad.backward(y)
print("loss", y.item())
print("dL/dx", x.grad)

# central differences for the first entry of x
h = 1e-6
def f(v):
    with ad.no_grad():
        return ad.mean(ad.sigmoid(ad.matmul(np.array(v).reshape(1, 3), W.data))).item()
print("fd   ", (f([1 + h, -2, 3]) - f([1 - h, -2, 3])) / (2 * h))

# the tape is freed after backward
print("nodes left on tape:", len(ad.get_tape().nodes))

# Sobel: channel 2c is the x-gradient of input channel c, 2c+1 the y-gradient
img = np.zeros((1, 1, 6, 8))
img[..., 4:] = 1.0
edges = ad.sobel_conv2d(img).data
print(edges[0, 0].astype(int))
