"""Differentiable building blocks for the policy network.

Plain numpy, float64, reverse-mode by hand. Each block caches what its
backward pass needs during forward and accumulates parameter gradients in
place; ``zero_grads`` resets them between optimizer steps. The stack is
deliberately narrow: one affine map, one fixed-geometry convolution, one
smooth nonlinearity, one pooling mode, one loss.
"""

from __future__ import annotations

import numpy as np


class PolicyError(Exception):
    """Raised for malformed policy inputs, shapes, or serialization."""


class TrainingDivergedError(PolicyError):
    """A loss or parameter turned non-finite during training.

    ``last_checkpoint`` holds the most recent checkpoint written before the
    divergence, or None when training never reached one.
    """

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


class Linear:
    """Affine map y = x @ W + b over row vectors."""

    def __init__(self, n_in: int, n_out: int, rng=None, zero_init=False):
        if zero_init:
            self.W = np.zeros((n_in, n_out))
        elif rng is None:
            raise PolicyError("Linear needs an rng unless zero_init is set")
        else:
            self.W = rng.standard_normal((n_in, n_out)) / np.sqrt(n_in)
        self.b = np.zeros(n_out)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)
        self._x = None

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.W.shape[0]:
            raise PolicyError(
                f"linear layer expects (batch, {self.W.shape[0]}), got {x.shape}"
            )
        self._x = x
        return x @ self.W + self.b

    def backward(self, dy):
        self.gW += self._x.T @ dy
        self.gb += dy.sum(axis=0)
        return dy @ self.W.T

    def param_arrays(self):
        return [self.W, self.b]

    def grad_arrays(self):
        return [self.gW, self.gb]


class Tanh:
    """Elementwise smooth nonlinearity."""

    def __init__(self):
        self._y = None

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y * self._y)

    def param_arrays(self):
        return []

    def grad_arrays(self):
        return []


class Conv2d:
    """3x3 convolution, stride 2, zero padding 1, NCHW layout.

    The only conv geometry the image encoder needs. im2col turns the forward
    pass into one matmul per batch, so the backward pass is its transpose
    plus a scatter back to image layout.
    """

    KSIZE = 3
    STRIDE = 2
    PAD = 1

    def __init__(self, c_in: int, c_out: int, rng):
        fan_in = c_in * self.KSIZE * self.KSIZE
        self.W = rng.standard_normal((c_out, c_in, self.KSIZE, self.KSIZE)) / np.sqrt(
            fan_in
        )
        self.b = np.zeros(c_out)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)
        self.c_in = c_in
        self.c_out = c_out
        self._cols = None
        self._shape = None

    def _out_hw(self, h, w):
        oh = (h + 2 * self.PAD - self.KSIZE) // self.STRIDE + 1
        ow = (w + 2 * self.PAD - self.KSIZE) // self.STRIDE + 1
        return oh, ow

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise PolicyError(
                f"conv expects (batch, {self.c_in}, h, w), got {x.shape}"
            )
        B, _, H, W = x.shape
        oh, ow = self._out_hw(H, W)
        if oh < 1 or ow < 1:
            raise PolicyError(f"image {H}x{W} too small for a 3x3 stride-2 conv")
        xp = np.zeros((B, self.c_in, H + 2, W + 2))
        xp[:, :, 1 : 1 + H, 1 : 1 + W] = x
        cols = np.empty((B, self.c_in, 9, oh, ow))
        k = 0
        for i in range(self.KSIZE):
            for j in range(self.KSIZE):
                cols[:, :, k] = xp[:, :, i : i + 2 * oh - 1 : 2, j : j + 2 * ow - 1 : 2]
                k += 1
        cols = cols.reshape(B, self.c_in * 9, oh * ow)
        wmat = self.W.reshape(self.c_out, self.c_in * 9)
        y = np.matmul(wmat[None], cols) + self.b[None, :, None]
        self._cols = cols
        self._shape = (B, H, W, oh, ow)
        return y.reshape(B, self.c_out, oh, ow)

    def backward(self, dy):
        B, H, W, oh, ow = self._shape
        dmat = dy.reshape(B, self.c_out, oh * ow)
        wmat = self.W.reshape(self.c_out, self.c_in * 9)
        self.gW += np.einsum("bol,bfl->of", dmat, self._cols).reshape(self.W.shape)
        self.gb += dy.sum(axis=(0, 2, 3))
        dcols = np.matmul(wmat.T[None], dmat).reshape(B, self.c_in, 9, oh, ow)
        dxp = np.zeros((B, self.c_in, H + 2, W + 2))
        k = 0
        for i in range(self.KSIZE):
            for j in range(self.KSIZE):
                dxp[:, :, i : i + 2 * oh - 1 : 2, j : j + 2 * ow - 1 : 2] += dcols[
                    :, :, k
                ]
                k += 1
        return dxp[:, :, 1 : 1 + H, 1 : 1 + W]

    def param_arrays(self):
        return [self.W, self.b]

    def grad_arrays(self):
        return [self.gW, self.gb]


class GlobalAvgPool:
    """Spatial mean, (B, C, H, W) -> (B, C)."""

    def __init__(self):
        self._shape = None

    def forward(self, x):
        if x.ndim != 4:
            raise PolicyError(f"pool expects a 4-d activation, got {x.shape}")
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dy):
        B, C, H, W = self._shape
        return np.broadcast_to(dy[:, :, None, None] / (H * W), self._shape).copy()

    def param_arrays(self):
        return []

    def grad_arrays(self):
        return []


class Chain:
    """Sequential container with reverse-mode backward."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def param_arrays(self):
        out = []
        for layer in self.layers:
            out.extend(layer.param_arrays())
        return out

    def grad_arrays(self):
        out = []
        for layer in self.layers:
            out.extend(layer.grad_arrays())
        return out


def mse_loss(pred, target):
    """Mean over batch rows of the squared error norm.

    Returns (loss, d loss / d pred). Rows are whole samples, so the norm sums
    over features while the mean runs over the batch only.
    """
    if pred.shape != target.shape:
        raise PolicyError(f"loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    n = pred.shape[0]
    loss = float(np.sum(diff * diff) / n)
    return loss, (2.0 / n) * diff


def flat_params(module) -> np.ndarray:
    arrs = module.param_arrays()
    if not arrs:
        return np.zeros(0)
    return np.concatenate([a.ravel() for a in arrs])


def flat_grads(module) -> np.ndarray:
    arrs = module.grad_arrays()
    if not arrs:
        return np.zeros(0)
    return np.concatenate([a.ravel() for a in arrs])


def set_flat_params(module, theta) -> None:
    theta = np.asarray(theta, dtype=np.float64)
    off = 0
    for a in module.param_arrays():
        n = a.size
        a[...] = theta[off : off + n].reshape(a.shape)
        off += n
    if off != theta.size:
        raise PolicyError(f"parameter vector has {theta.size} entries, model has {off}")


def zero_grads(module) -> None:
    for g in module.grad_arrays():
        g[...] = 0.0


def param_count(module) -> int:
    return sum(a.size for a in module.param_arrays())
