"""Minimal feed-forward network with analytic backpropagation.

Hidden layers use relu; the output layer is identity or sigmoid.  Weights
are float64 and every operation is deterministic given the seeding
``numpy.random.Generator``, which makes reruns bit-identical.  The weight
file format is a versioned binary header followed by little-endian float64
parameter blocks.

Conventions
-----------
``weights[i]`` has shape (fan_in, fan_out) and a forward step is
``activation(a @ W + b)`` with batch-major ``a``.  Gradients returned by
:meth:`Mlp.backward` are summed over the batch; divide the upstream loss
derivative if a mean is wanted.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .validation import as_float_array

_MAGIC = b"ADTW"
_FORMAT_VERSION = 1
_HIDDEN_CODES = {"relu": 0}
_OUTPUT_CODES = {"identity": 0, "sigmoid": 1}
_HIDDEN_NAMES = {v: k for k, v in _HIDDEN_CODES.items()}
_OUTPUT_NAMES = {v: k for k, v in _OUTPUT_CODES.items()}


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class Gradients:
    """Per-layer weight and bias gradients, same shapes as the network."""

    weights: list
    biases: list


class Mlp:
    """Fully connected network: relu hidden layers, identity/sigmoid output.

    Parameters
    ----------
    layer_sizes : sequence of int
        At least (input, output); e.g. (6, 64, 64, 2).
    output_activation : {"identity", "sigmoid"}
    rng : numpy.random.Generator
        Source for the He-style uniform fan-in initialization.
    """

    def __init__(self, layer_sizes, output_activation="identity", rng=None):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"layer_sizes must be >= 2 positive sizes, got {layer_sizes}")
        if output_activation not in _OUTPUT_CODES:
            raise ValueError(f"unknown output activation {output_activation!r}")
        if rng is None:
            rng = np.random.default_rng()
        self.layer_sizes = sizes
        self.output_activation = output_activation
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / fan_in)
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def _apply_output(self, z):
        if self.output_activation == "sigmoid":
            return _sigmoid(z)
        return z

    def forward(self, x):
        """Network output for a single vector or a (batch, in) matrix."""
        a = as_float_array(x, "x")
        single = a.ndim == 1
        if single:
            a = a.reshape(1, -1)
        if a.shape[1] != self.layer_sizes[0]:
            raise ValueError(
                f"input has {a.shape[1]} features, network expects {self.layer_sizes[0]}"
            )
        for i in range(self.n_layers - 1):
            a = np.maximum(a @ self.weights[i] + self.biases[i], 0.0)
        out = self._apply_output(a @ self.weights[-1] + self.biases[-1])
        return out[0] if single else out

    def forward_cache(self, x):
        """Forward pass keeping pre-activations for backprop.

        Returns (output, cache); feed the cache to :meth:`backward`.
        """
        a = as_float_array(x, "x")
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if a.shape[1] != self.layer_sizes[0]:
            raise ValueError(
                f"input has {a.shape[1]} features, network expects {self.layer_sizes[0]}"
            )
        activations = [a]
        pre = []
        for i in range(self.n_layers - 1):
            z = activations[-1] @ self.weights[i] + self.biases[i]
            pre.append(z)
            activations.append(np.maximum(z, 0.0))
        z = activations[-1] @ self.weights[-1] + self.biases[-1]
        pre.append(z)
        out = self._apply_output(z)
        activations.append(out)
        return out, (activations, pre)

    def backward(self, cache, output_error):
        """Backpropagate dLoss/dOutput through the cached forward pass.

        ``output_error`` has the output's (batch, out) shape; the returned
        gradients are summed over the batch.
        """
        activations, pre = cache
        err = np.asarray(output_error, dtype=np.float64)
        if err.ndim == 1:
            err = err.reshape(1, -1)
        if err.shape != activations[-1].shape:
            raise ValueError(
                f"output_error shape {err.shape} does not match output {activations[-1].shape}"
            )
        if self.output_activation == "sigmoid":
            y = activations[-1]
            delta = err * y * (1.0 - y)
        else:
            delta = err
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        for layer in range(self.n_layers - 1, -1, -1):
            grads_w[layer] = activations[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (pre[layer - 1] > 0.0)
        return Gradients(grads_w, grads_b)

    def copy_parameters_from(self, other):
        """Overwrite this network's parameters with another's (target sync)."""
        if other.layer_sizes != self.layer_sizes:
            raise ValueError("networks have different layer sizes")
        for i in range(self.n_layers):
            np.copyto(self.weights[i], other.weights[i])
            np.copyto(self.biases[i], other.biases[i])

    def clone(self):
        dup = Mlp.__new__(Mlp)
        dup.layer_sizes = list(self.layer_sizes)
        dup.output_activation = self.output_activation
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def save(self, path):
        """Write the versioned binary weight file."""
        parts = [
            _MAGIC,
            struct.pack("<I", _FORMAT_VERSION),
            struct.pack("<BB", _HIDDEN_CODES["relu"], _OUTPUT_CODES[self.output_activation]),
            struct.pack("<I", len(self.layer_sizes)),
            struct.pack(f"<{len(self.layer_sizes)}I", *self.layer_sizes),
        ]
        for w, b in zip(self.weights, self.biases):
            parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        from ._io import atomic_write_bytes

        atomic_write_bytes(path, b"".join(parts))

    @classmethod
    def load(cls, path):
        """Read a weight file back; exact float64 round trip."""
        with open(path, "rb") as fh:
            blob = fh.read()
        header = struct.calcsize("<4sIBBI")
        if len(blob) < header:
            raise ValueError(f"{path}: truncated weight file")
        magic, version, hidden_code, output_code, n_sizes = struct.unpack_from("<4sIBBI", blob)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a weight file (bad magic {magic!r})")
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        if hidden_code not in _HIDDEN_NAMES or output_code not in _OUTPUT_NAMES:
            raise ValueError(f"{path}: unknown activation code")
        offset = header
        try:
            sizes = struct.unpack_from(f"<{n_sizes}I", blob, offset)
        except struct.error:
            raise ValueError(f"{path}: truncated layer size table") from None
        offset += 4 * n_sizes
        if n_sizes < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"{path}: invalid layer sizes {sizes}")
        expected = sum(
            (fan_in * fan_out + fan_out) * 8 for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
        )
        if len(blob) - offset != expected:
            raise ValueError(
                f"{path}: parameter block is {len(blob) - offset} bytes, expected {expected}"
            )
        net = cls.__new__(cls)
        net.layer_sizes = list(sizes)
        net.output_activation = _OUTPUT_NAMES[output_code]
        net.weights = []
        net.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(blob, dtype="<f8", count=fan_in * fan_out, offset=offset)
            offset += fan_in * fan_out * 8
            b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=offset)
            offset += fan_out * 8
            net.weights.append(w.reshape(fan_in, fan_out).copy())
            net.biases.append(b.copy())
        return net


class SgdOptimizer:
    """Plain gradient descent: theta <- theta - lr * grad."""

    def __init__(self, lr=1e-2):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.lr = lr

    def step(self, net, grads):
        for i in range(net.n_layers):
            net.weights[i] -= self.lr * grads.weights[i]
            net.biases[i] -= self.lr * grads.biases[i]


class AdamOptimizer:
    """Adam with bias correction; the library default (lr 1e-3)."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = None
        self._v = None

    def _ensure_state(self, net):
        if self._m is None:
            self._m = [np.zeros_like(w) for w in net.weights] + [
                np.zeros_like(b) for b in net.biases
            ]
            self._v = [np.zeros_like(a) for a in self._m]

    def step(self, net, grads):
        self._ensure_state(net)
        self.t += 1
        flat_grads = list(grads.weights) + list(grads.biases)
        flat_params = list(net.weights) + list(net.biases)
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(flat_params, flat_grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def make_optimizer(name, lr):
    if name == "adam":
        return AdamOptimizer(lr=lr)
    if name == "sgd":
        return SgdOptimizer(lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")


def gradient_check(net, x, target, step=1e-5):
    """Max relative disagreement between backprop and central differences.

    The loss is the summed squared error against ``target``.  Relative error
    uses denominator max(|analytic|, |numeric|, 1e-4), so gradients below
    1e-4 are compared absolutely at 1e-8 sensitivity (the finite-difference
    noise floor).  Intended for networks with < 200 parameters.
    """
    if net.n_params >= 200:
        raise ValueError("gradient_check is for networks with < 200 parameters")
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)

    out, cache = net.forward_cache(x)
    if target.shape != out.shape:
        target = target.reshape(out.shape)
    grads = net.backward(cache, 2.0 * (out - target))

    def loss():
        delta = net.forward(x).reshape(out.shape) - target
        return float(np.sum(delta * delta))

    worst = 0.0
    analytic = list(grads.weights) + list(grads.biases)
    params = list(net.weights) + list(net.biases)
    for p, g in zip(params, analytic):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            keep = flat_p[i]
            flat_p[i] = keep + step
            up = loss()
            flat_p[i] = keep - step
            down = loss()
            flat_p[i] = keep
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(flat_g[i]), abs(numeric), 1e-4)
            worst = max(worst, abs(flat_g[i] - numeric) / denom)
    return worst
