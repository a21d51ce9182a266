"""Classifier and deferrer models with exact parameter gradients.

Both models keep a flat ``params`` vector.  ``forward`` works on a batch
(n, d) and can return a cache; ``backward`` maps an upstream gradient on the
model output to a gradient on ``params`` summed over the batch.
"""

from __future__ import annotations

import numpy as np

CHECKPOINT_MAGIC = "multidefer-checkpoint"
CHECKPOINT_VERSION = 1

CLASSIFIER_KINDS = ("linear", "two-layer")
DEFERRER_KINDS = ("global", "input")


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logistic(z):
    # exp(-softplus(-z)): no overflow and full relative precision in both tails
    return np.exp(-np.logaddexp(0.0, -np.asarray(z, dtype=np.float64)))


def project_box(v):
    """Euclidean projection onto the unit hypercube [0, 1]^m."""
    return np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)


def _as_batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"expected inputs of dimension {dim}, got shape {np.shape(x)}")
    return x, single


class _TwoLayer:
    """tanh hidden layer followed by an affine output layer."""

    def __init__(self, input_dim, hidden_dim, output_dim):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.output_dim = output_dim

    @property
    def size(self):
        d, h, o = self.input_dim, self.hidden_dim, self.output_dim
        return h * d + h + o * h + o

    def unpack(self, params):
        d, h, o = self.input_dim, self.hidden_dim, self.output_dim
        i = 0
        w1 = params[i : i + h * d].reshape(h, d)
        i += h * d
        b1 = params[i : i + h]
        i += h
        w2 = params[i : i + o * h].reshape(o, h)
        i += o * h
        b2 = params[i : i + o]
        return w1, b1, w2, b2

    def forward(self, params, x):
        w1, b1, w2, b2 = self.unpack(params)
        hidden = np.tanh(x @ w1.T + b1)
        return hidden @ w2.T + b2, hidden

    def backward(self, params, x, hidden, g_out):
        _, _, w2, _ = self.unpack(params)
        g_w2 = g_out.T @ hidden
        g_b2 = g_out.sum(axis=0)
        g_hidden = (g_out @ w2) * (1.0 - hidden**2)
        g_w1 = g_hidden.T @ x
        g_b1 = g_hidden.sum(axis=0)
        return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])

    def init(self, seed):
        """Glorot-uniform weights, U(-1, 1) hidden biases, zero output biases."""
        rng = np.random.default_rng(seed)
        d, h, o = self.input_dim, self.hidden_dim, self.output_dim
        a1 = np.sqrt(6.0 / (d + h))
        a2 = np.sqrt(6.0 / (h + o))
        return np.concatenate([
            rng.uniform(-a1, a1, h * d),
            rng.uniform(-1.0, 1.0, h),
            rng.uniform(-a2, a2, o * h),
            np.zeros(o),
        ])


class _Affine:
    def __init__(self, input_dim, output_dim):
        self.input_dim = input_dim
        self.output_dim = output_dim

    @property
    def size(self):
        return self.output_dim * self.input_dim + self.output_dim

    def forward(self, params, x):
        o, d = self.output_dim, self.input_dim
        w = params[: o * d].reshape(o, d)
        return x @ w.T + params[o * d :], None

    def backward(self, params, x, hidden, g_out):
        return np.concatenate([(g_out.T @ x).ravel(), g_out.sum(axis=0)])

    def init(self, seed):
        return np.random.default_rng(seed).uniform(-0.1, 0.1, self.size)


class ClassifierModel:
    """Maps features to a distribution over ``num_classes`` labels.

    ``kind="linear"`` is multinomial logistic regression; ``"two-layer"`` adds
    a tanh hidden layer of width ``hidden_dim``.
    """

    def __init__(self, input_dim, num_classes, kind="linear", hidden_dim=16, params=None, seed=0):
        if kind not in CLASSIFIER_KINDS:
            raise ValueError(f"unknown classifier kind {kind!r}")
        self.kind = kind
        self.input_dim = int(input_dim)
        self.num_classes = int(num_classes)
        self.hidden_dim = int(hidden_dim) if kind == "two-layer" else 0
        if kind == "linear":
            self._net = _Affine(self.input_dim, self.num_classes)
        else:
            self._net = _TwoLayer(self.input_dim, self.hidden_dim, self.num_classes)
        if params is None:
            params = self._net.init(seed)
        self.params = np.array(params, dtype=np.float64)
        if self.params.shape != (self._net.size,):
            raise ValueError(f"expected {self._net.size} parameters, got {self.params.shape}")

    @property
    def num_params(self):
        return self._net.size

    def logits(self, x, return_cache=False):
        x, single = _as_batch(x, self.input_dim)
        z, hidden = self._net.forward(self.params, x)
        if return_cache:
            return z, (x, hidden)
        return z[0] if single else z

    def forward(self, x, return_cache=False):
        """Label distribution for one input (d,) or a batch (n, d)."""
        x_b, single = _as_batch(x, self.input_dim)
        z, hidden = self._net.forward(self.params, x_b)
        probs = softmax(z)
        if return_cache:
            return probs, (x_b, hidden, probs)
        return probs[0] if single else probs

    __call__ = forward

    def predict(self, x):
        return np.argmax(self.forward(np.atleast_2d(x)), axis=1)

    def backward_logits(self, cache, g_logits):
        x, hidden = cache[0], cache[1]
        return self._net.backward(self.params, x, hidden, g_logits)

    def backward(self, cache, g_probs):
        """Gradient on params given ``dL/dprobs`` (n, C)."""
        probs = cache[2]
        g_logits = probs * (g_probs - np.sum(g_probs * probs, axis=1, keepdims=True))
        return self.backward_logits(cache, g_logits)

    def copy(self):
        return ClassifierModel(
            self.input_dim, self.num_classes, self.kind, self.hidden_dim or 16, self.params.copy()
        )

    def dims(self):
        return {"input": self.input_dim, "hidden": self.hidden_dim, "output": self.num_classes}


class DeferrerModel:
    """Maps features to expert weights in [0, 1]^m (identity expert last).

    ``kind="global"`` keeps one input-independent weight vector that is
    projected back onto the box after every update.  ``kind="input"`` is a
    two-layer tanh network whose outputs pass through the logistic function.
    """

    def __init__(self, input_dim, num_experts, kind="input", hidden_dim=16, params=None, seed=0):
        if kind not in DEFERRER_KINDS:
            raise ValueError(f"unknown deferrer kind {kind!r}")
        self.kind = kind
        self.input_dim = int(input_dim)
        self.num_experts = int(num_experts)
        self.hidden_dim = int(hidden_dim) if kind == "input" else 0
        if kind == "input":
            self._net = _TwoLayer(self.input_dim, self.hidden_dim, self.num_experts)
            size = self._net.size
        else:
            self._net = None
            size = self.num_experts
        if params is None:
            if kind == "global":
                params = project_box(np.random.default_rng(seed).uniform(-0.1, 0.1, size))
            else:
                params = self._net.init(seed)
        self.params = np.array(params, dtype=np.float64)
        if self.params.shape != (size,):
            raise ValueError(f"expected {size} parameters, got {self.params.shape}")

    @property
    def num_params(self):
        return self.params.size

    def forward(self, x, return_cache=False):
        x_b, single = _as_batch(x, self.input_dim)
        if self.kind == "global":
            out = np.broadcast_to(self.params, (x_b.shape[0], self.num_experts)).copy()
            cache = (x_b, None, out)
        else:
            pre, hidden = self._net.forward(self.params, x_b)
            out = logistic(pre)
            cache = (x_b, hidden, out)
        if return_cache:
            return out, cache
        return out[0] if single else out

    __call__ = forward

    def backward(self, cache, g_out):
        """Gradient on params given ``dL/dD(x)`` (n, m)."""
        if self.kind == "global":
            return np.asarray(g_out).sum(axis=0)
        x, hidden, out = cache
        g_pre = g_out * out * (1.0 - out)
        return self._net.backward(self.params, x, hidden, g_pre)

    def project(self):
        if self.kind == "global":
            self.params = project_box(self.params)

    def copy(self):
        return DeferrerModel(
            self.input_dim, self.num_experts, self.kind, self.hidden_dim or 16, self.params.copy()
        )

    def dims(self):
        return {"input": self.input_dim, "hidden": self.hidden_dim, "output": self.num_experts}


# ------------------------------------------------------------- checkpoints


def save_checkpoint(model, path):
    """Text checkpoint: magic/version line, role, kind, dims, then one param per line."""
    role = "classifier" if isinstance(model, ClassifierModel) else "deferrer"
    dims = model.dims()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
        fh.write(f"role {role}\n")
        fh.write(f"kind {model.kind}\n")
        fh.write(f"dims {dims['input']} {dims['hidden']} {dims['output']}\n")
        fh.write(f"params {model.params.size}\n")
        for v in model.params:
            fh.write(repr(float(v)) + "\n")


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh.read().splitlines()]
    magic, version = lines[0].split()
    if magic != CHECKPOINT_MAGIC or int(version) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a v{CHECKPOINT_VERSION} checkpoint")
    role = lines[1].split()[1]
    kind = lines[2].split()[1]
    d_in, d_hidden, d_out = (int(v) for v in lines[3].split()[1:])
    count = int(lines[4].split()[1])
    params = np.array([float(v) for v in lines[5 : 5 + count]])
    if params.size != count:
        raise ValueError(f"{path}: truncated parameter block")
    hidden = d_hidden or 16
    if role == "classifier":
        return ClassifierModel(d_in, d_out, kind, hidden, params)
    if role == "deferrer":
        return DeferrerModel(d_in, d_out, kind, hidden, params)
    raise ValueError(f"{path}: unknown role {role!r}")
