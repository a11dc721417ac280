"""Small differentiable classifier with exact input gradients, plus FGSM.

Layers (3x3 same-padding convolution, ReLU, 2x2 max pooling, dense) are
implemented directly on float64 numpy arrays with hand-written backward
passes, so the loss gradient with respect to the input image is exact
reverse-mode differentiation. The fast gradient sign attack perturbs a
pixel by eps/255 in the direction that increases the classification loss.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class TrainingError(Exception):
    pass


@dataclass
class CnnConfig:
    input_size: int = 64
    conv_channels: tuple = (8, 16)
    hidden: int = 32
    n_classes: int = 2
    epochs: int = 40
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    lr_decay: float = 0.5
    decay_every: int = 10
    seed: int = 0


class Conv3x3:
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved)."""

    def __init__(self, w, b):
        self.w = w  # (out_ch, in_ch, 3, 3)
        self.b = b

    @property
    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        n, c, h, w = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (n,c,h,w,3,3)
        col = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, h, w, c * 9)
        wmat = self.w.reshape(self.w.shape[0], -1)
        y = col @ wmat.T + self.b
        return y.transpose(0, 3, 1, 2), (col, x.shape)

    def backward(self, dy, cache):
        col, x_shape = cache
        n, c, h, w = x_shape
        dyt = dy.transpose(0, 2, 3, 1)
        wmat = self.w.reshape(self.w.shape[0], -1)
        dw = np.tensordot(dyt, col, axes=([0, 1, 2], [0, 1, 2])).reshape(self.w.shape)
        db = dyt.sum(axis=(0, 1, 2))
        dcol = (dyt @ wmat).reshape(n, h, w, c, 3, 3)
        dxp = np.zeros((n, c, h + 2, w + 2))
        for di in range(3):
            for dj in range(3):
                dxp[:, :, di:di + h, dj:dj + w] += \
                    dcol[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
        return dxp[:, :, 1:h + 1, 1:w + 1], [dw, db]


class ReLU:
    params = []

    def forward(self, x):
        return np.maximum(x, 0.0), x

    def backward(self, dy, cache):
        return dy * (cache > 0.0), []


class MaxPool2:
    """2x2 max pooling; gradients route to the first maximum in each window."""

    params = []

    def forward(self, x):
        n, c, h, w = x.shape
        win = x.reshape(n, c, h // 2, 2, w // 2, 2)
        win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        idx = win.argmax(axis=-1)
        y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return y, (idx, x.shape)

    def backward(self, dy, cache):
        idx, (n, c, h, w) = cache
        dwin = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
        dwin = dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return dwin.reshape(n, c, h, w), []


class Flatten:
    params = []

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), []


class Dense:
    def __init__(self, w, b):
        self.w = w  # (out, in)
        self.b = b

    @property
    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        return x @ self.w.T + self.b, x

    def backward(self, dy, cache):
        return dy @ self.w, [dy.T @ cache, dy.sum(axis=0)]


@dataclass
class DiffModel:
    layers: list
    input_size: int
    n_classes: int
    config: CnnConfig = None

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params)
        return out


@dataclass
class Perturbation:
    rho: np.ndarray  # (h, w, 3) signed pixel deltas
    epsilon: int     # 8-bit units
    norm_order: float = np.inf
    alpha: float = None  # nominal budget, epsilon/255 unless overridden


@dataclass
class AdversarialExample:
    original: np.ndarray
    perturbed: np.ndarray
    perturbation: Perturbation
    source_label: int


def init_model(config=None):
    """Fresh He-initialized model: 2x(conv-relu-pool), dense, relu, dense."""
    config = config or CnnConfig()
    if config.input_size % 4 != 0:
        raise ValueError("input_size must be divisible by 4")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 11]))
    c1, c2 = config.conv_channels
    side = config.input_size // 4
    layers = [
        Conv3x3(*_he_conv(rng, c1, 3)),
        ReLU(),
        MaxPool2(),
        Conv3x3(*_he_conv(rng, c2, c1)),
        ReLU(),
        MaxPool2(),
        Flatten(),
        Dense(*_he_dense(rng, config.hidden, c2 * side * side)),
        ReLU(),
        Dense(*_he_dense(rng, config.n_classes, config.hidden)),
    ]
    return DiffModel(layers, config.input_size, config.n_classes, config)


def _he_conv(rng, out_ch, in_ch):
    scale = np.sqrt(2.0 / (in_ch * 9))
    return rng.normal(0.0, scale, (out_ch, in_ch, 3, 3)), np.zeros(out_ch)


def _he_dense(rng, out_d, in_d):
    scale = np.sqrt(2.0 / in_d)
    return rng.normal(0.0, scale, (out_d, in_d)), np.zeros(out_d)


def _to_batch(x):
    """Accept (h, w, 3) RGB rasters or (n, 3, h, w) batches."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3 and x.shape[-1] == 3:
        return x.transpose(2, 0, 1)[None], True
    if x.ndim == 4 and x.shape[1] == 3:
        return x, False
    raise ValueError(f"expected (h, w, 3) or (n, 3, h, w) input, got {x.shape}")


def _from_batch(x, single):
    return x[0].transpose(1, 2, 0) if single else x


def forward_logits(model, x_batch):
    caches = []
    out = x_batch
    for layer in model.layers:
        out, cache = layer.forward(out)
        caches.append(cache)
    return out, caches


def _log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(model, x):
    """Class probabilities; they sum to 1 per example."""
    xb, single = _to_batch(x)
    _check_shape(model, xb)
    logits, _ = forward_logits(model, xb)
    probs = np.exp(_log_softmax(logits))
    return probs[0] if single else probs


def _check_shape(model, xb):
    if xb.shape[2] != model.input_size or xb.shape[3] != model.input_size:
        raise ValueError(
            f"input is {xb.shape[2]}x{xb.shape[3]}, model expects "
            f"{model.input_size}x{model.input_size}")


def loss(model, x, y):
    """Mean cross-entropy -log p(y) over the batch (single value for one
    image)."""
    xb, _ = _to_batch(x)
    _check_shape(model, xb)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    logits, _ = forward_logits(model, xb)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(len(y)), y].mean())


def grad_input(model, x, y):
    """Exact gradient of each example's own loss w.r.t. its pixels."""
    xb, single = _to_batch(x)
    _check_shape(model, xb)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    logits, caches = forward_logits(model, xb)
    probs = np.exp(_log_softmax(logits))
    dlogits = probs.copy()
    dlogits[np.arange(len(y)), y] -= 1.0
    dout = dlogits
    for layer, cache in zip(reversed(model.layers), reversed(caches)):
        dout, _ = layer.backward(dout, cache)
    return _from_batch(dout, single)


def grad_params(model, x, y):
    """Parameter gradients of the mean batch loss, ordered like params()."""
    xb, _ = _to_batch(x)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    logits, caches = forward_logits(model, xb)
    probs = np.exp(_log_softmax(logits))
    dlogits = probs
    dlogits[np.arange(len(y)), y] -= 1.0
    dlogits /= len(y)
    grads = []
    dout = dlogits
    for layer, cache in zip(reversed(model.layers), reversed(caches)):
        dout, g = layer.backward(dout, cache)
        grads = g + grads
    return grads


def predict_classes(model, x):
    probs = forward(model, x)
    return int(np.argmax(probs)) if probs.ndim == 1 else probs.argmax(axis=-1)


def _check_epsilon(epsilon):
    if int(epsilon) != epsilon or not 1 <= int(epsilon) <= 255:
        raise ValueError(f"epsilon must be an integer in 1..255, got {epsilon}")
    return int(epsilon)


def fgsm(model, x, y_l, epsilon):
    """One-step sign attack: rho = (eps/255) * sign(grad_x loss)."""
    epsilon = _check_epsilon(epsilon)
    x = np.asarray(x, dtype=np.float64)
    g = grad_input(model, x, y_l)
    rho = (epsilon / 255.0) * np.sign(g)
    perturbed = np.clip(x + rho, 0.0, 1.0)
    pert = Perturbation(rho=rho, epsilon=epsilon, norm_order=np.inf,
                        alpha=epsilon / 255.0)
    return AdversarialExample(original=x, perturbed=perturbed,
                              perturbation=pert, source_label=int(y_l))


def fgsm_batch(model, X, y, epsilon):
    """Batched attack; returns (perturbed, rho) as (n, 3, h, w) arrays."""
    epsilon = _check_epsilon(epsilon)
    g = grad_input(model, X, y)
    rho = (epsilon / 255.0) * np.sign(g)
    return np.clip(X + rho, 0.0, 1.0), rho


def perturbation_norm(a, b, p=np.inf):
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    if np.isinf(p):
        return float(d.max())
    return float((d ** p).sum() ** (1.0 / p))


def is_adversarial(model, ex, p=np.inf, alpha=None):
    """True iff the predicted class flips and the perturbation norm is
    strictly under alpha."""
    if alpha is None:
        alpha = ex.perturbation.alpha
    cls_orig = predict_classes(model, ex.original)
    cls_pert = predict_classes(model, ex.perturbed)
    if cls_orig == cls_pert:
        return False
    return perturbation_norm(ex.original, ex.perturbed, p) < alpha


def linear_activation_growth(w, rho):
    """Dot product w . rho: the score change a perturbation induces on a
    linear activation (equal to eps * ||w||_1 when rho = eps * sign(w))."""
    w = np.asarray(w, dtype=np.float64).ravel()
    rho = np.asarray(rho, dtype=np.float64).ravel()
    if w.shape != rho.shape:
        raise ValueError(f"length mismatch: {w.shape} vs {rho.shape}")
    return float(w @ rho)


def train_model(data, config=None, val_data=None):
    """Minibatch SGD with momentum and step decay; deterministic per seed.

    data is (X, y) with X shaped (n, 3, s, s) in [0, 1] and integer class
    labels y. Returns (model, stats) where stats carries train/val accuracy
    and the per-epoch loss curve. Raises TrainingError when the loss turns
    non-finite.
    """
    config = config or CnnConfig()
    X, y = data
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    model = init_model(config)
    params = model.params()
    velocity = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 29]))

    n = X.shape[0]
    lr = config.lr
    epoch_losses = []
    for epoch in range(config.epochs):
        if epoch > 0 and epoch % config.decay_every == 0:
            lr *= config.lr_decay
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = X[idx], y[idx]
            logits, caches = forward_logits(model, xb)
            logp = _log_softmax(logits)
            total += float(-logp[np.arange(len(yb)), yb].sum())
            dlogits = np.exp(logp)
            dlogits[np.arange(len(yb)), yb] -= 1.0
            dlogits /= len(yb)
            grads = []
            dout = dlogits
            for layer, cache in zip(reversed(model.layers), reversed(caches)):
                dout, g = layer.backward(dout, cache)
                grads = g + grads
            for p, v, g in zip(params, velocity, grads):
                v *= config.momentum
                v -= lr * g
                p += v
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise TrainingError(
                f"loss diverged to {epoch_loss} at epoch {epoch + 1}; "
                "try a lower learning rate")
        epoch_losses.append(epoch_loss)

    stats = {"epoch_losses": epoch_losses,
             "train_accuracy": float(np.mean(predict_classes(model, X) == y))}
    if val_data is not None:
        Xv, yv = val_data
        stats["val_accuracy"] = float(
            np.mean(predict_classes(model, np.asarray(Xv, dtype=np.float64))
                    == np.asarray(yv)))
    return model, stats


def save_model(model, path):
    """JSON header line (shapes, hyperparameters, seed) + raw float64 data."""
    cfg = model.config or CnnConfig(input_size=model.input_size,
                                    n_classes=model.n_classes)
    params = model.params()
    header = {
        "input_size": cfg.input_size,
        "conv_channels": list(cfg.conv_channels),
        "hidden": cfg.hidden,
        "n_classes": cfg.n_classes,
        "seed": cfg.seed,
        "lr": cfg.lr,
        "momentum": cfg.momentum,
        "epochs": cfg.epochs,
        "param_shapes": [list(p.shape) for p in params],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for p in params:
            fh.write(np.ascontiguousarray(p, dtype=np.float64).tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = fh.read()
    cfg = CnnConfig(input_size=header["input_size"],
                    conv_channels=tuple(header["conv_channels"]),
                    hidden=header["hidden"], n_classes=header["n_classes"],
                    seed=header["seed"], lr=header["lr"],
                    momentum=header["momentum"], epochs=header["epochs"])
    model = init_model(cfg)
    offset = 0
    for p in model.params():
        count = p.size
        vals = np.frombuffer(raw, dtype=np.float64, count=count,
                             offset=offset * 8).reshape(p.shape)
        p[...] = vals
        offset += count
    return model
