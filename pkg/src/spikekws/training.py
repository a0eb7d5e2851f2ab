"""Losses over the readout trace and surrogate-gradient training.

Four loss variants share the cross-entropy core. With p[t] = softmax(U_R[t])
and the running sum O[t] = sum_{i<=t} p[i]:

    spike_rate  CE(mean_t U_R[t], y)
    tet         (1/T) sum_t CE(U_R[t], y)
    cumulative  CE(O[T-1], y)
    ct          (1/T) sum_t CE(O[t], y)

O[t] is not a distribution, so the cross-entropy re-normalizes it with a
log-softmax; ct_loss also accepts normalize="mean" which instead treats
O[t]/(t+1) as probabilities directly.

Backpropagation through time is hand-rolled: the Heaviside derivative is
replaced by a boxcar of configurable width around the threshold, and the
reset term is detached (no gradient flows through -v_th * S[t-1]).
"""

from dataclasses import dataclass

import numpy as np

from .network import (
    ADAPT_A_RANGE,
    ADAPT_B_RANGE,
    ALPHA_RANGE,
    BETA_RANGE,
    Network,
    forward_batch,
)

LOSS_KINDS = ("spike_rate", "tet", "cumulative", "ct")


@dataclass
class TrainConfig:
    """Optimization hyperparameters; the seed fixes the whole run."""

    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    surrogate_width: float = 1.0
    loss: str = "ct"
    rate_penalty: float = 0.0  # weight of the optional mean-spike-rate L2 term
    keep_best: bool = True  # return the best-validation epoch, not the last

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0 or self.surrogate_width <= 0 or self.rate_penalty < 0:
            raise ValueError("learning_rate, surrogate_width, rate_penalty must be valid")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")


def softmax(x, axis=-1):
    """Numerically stable softmax."""
    x = np.asarray(x, dtype=np.float64)
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    """Numerically stable log-softmax."""
    x = np.asarray(x, dtype=np.float64)
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def _as_u_r(trace):
    u_r = getattr(trace, "u_r", trace)
    u_r = np.asarray(u_r, dtype=np.float64)
    if u_r.ndim != 2:
        raise ValueError("expected a (T, n_classes) readout trace")
    if not np.all(np.isfinite(u_r)):
        raise ValueError("readout trace contains non-finite values")
    return u_r


def _check_label(label, n_classes):
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    return int(label)


def cumulative_output(trace) -> np.ndarray:
    """Running sum of per-timestep softmaxes, shape (T, n_classes)."""
    u_r = _as_u_r(trace)
    return np.cumsum(softmax(u_r, axis=-1), axis=0)


def ct_loss(trace, label, normalize="softmax") -> float:
    """Mean over timesteps of cross-entropy on the cumulative output."""
    u_r = _as_u_r(trace)
    label = _check_label(label, u_r.shape[1])
    o = cumulative_output(u_r)
    if normalize == "softmax":
        per_t = -log_softmax(o, axis=-1)[:, label]
    elif normalize == "mean":
        t_plus_1 = np.arange(1, o.shape[0] + 1)
        per_t = -np.log(o[:, label] / t_plus_1)
    else:
        raise ValueError("normalize must be 'softmax' or 'mean'")
    return float(per_t.mean())


def tet_loss(trace, label) -> float:
    """Mean over timesteps of cross-entropy on each raw readout vector."""
    u_r = _as_u_r(trace)
    label = _check_label(label, u_r.shape[1])
    return float(-log_softmax(u_r, axis=-1)[:, label].mean())


def spike_rate_loss(trace, label) -> float:
    """Cross-entropy of the time-averaged readout potential."""
    u_r = _as_u_r(trace)
    label = _check_label(label, u_r.shape[1])
    return float(-log_softmax(u_r.mean(axis=0))[label])


def cumulative_loss(trace, label) -> float:
    """Cross-entropy on the cumulative output at the final timestep only."""
    u_r = _as_u_r(trace)
    label = _check_label(label, u_r.shape[1])
    return float(-log_softmax(cumulative_output(u_r)[-1])[label])


def loss_and_grad(kind, u_r_batch, labels):
    """Batch-mean loss and its gradient with respect to the readout trace.

    u_r_batch has shape (B, T, K); labels shape (B,). Returns (scalar,
    gradient of the same shape as u_r_batch).
    """
    u = np.asarray(u_r_batch, dtype=np.float64)
    B, T, K = u.shape
    labels = np.asarray(labels)
    onehot = np.zeros((B, K))
    onehot[np.arange(B), labels] = 1.0

    if kind == "spike_rate":
        m = u.mean(axis=1)
        loss = -log_softmax(m, axis=-1)[np.arange(B), labels].mean()
        g_m = (softmax(m, axis=-1) - onehot) / B
        grad = np.repeat(g_m[:, None, :], T, axis=1) / T
        return float(loss), grad

    if kind == "tet":
        loss = -log_softmax(u, axis=-1)[np.arange(B), :, labels].mean()
        grad = (softmax(u, axis=-1) - onehot[:, None, :]) / (B * T)
        return float(loss), grad

    p = softmax(u, axis=-1)
    o = np.cumsum(p, axis=1)
    if kind == "cumulative":
        loss = -log_softmax(o[:, -1], axis=-1)[np.arange(B), labels].mean()
        g_o_last = (softmax(o[:, -1], axis=-1) - onehot) / B
        # every p[t] feeds O[T-1] with weight one
        g_p = np.repeat(g_o_last[:, None, :], T, axis=1)
    elif kind == "ct":
        loss = -log_softmax(o, axis=-1)[np.arange(B), :, labels].mean()
        g_o = (softmax(o, axis=-1) - onehot[:, None, :]) / (B * T)
        # p[i] feeds every O[t] with t >= i: suffix-sum the upstream gradient
        g_p = np.flip(np.cumsum(np.flip(g_o, axis=1), axis=1), axis=1)
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    # softmax Jacobian: dL/du = p * (g - <p, g>)
    inner = (p * g_p).sum(axis=-1, keepdims=True)
    grad = p * (g_p - inner)
    return float(loss), grad


def boxcar_surrogate(u_mem, v_th, width):
    """Stand-in for dS/dU: 1/width inside |U - v_th| <= width/2, else 0."""
    return (np.abs(u_mem - v_th) <= width / 2.0) / width


def backward(net: Network, features, labels, loss_kind, surrogate_width=1.0,
             rate_penalty=0.0, cache=None):
    """Reverse-mode gradients of the batch-mean loss for all trainables.

    features has shape (B, T, n_inputs). Returns (loss, grads) where grads
    mirrors the parameter layout: {"layers": [{weights, alpha, beta, a, b},
    ...], "readout_weights": ...}.
    """
    features = np.asarray(features, dtype=np.float64)
    if cache is None:
        cache = forward_batch(net, features)
    B, T, _ = features.shape
    loss, g_u_r = loss_and_grad(loss_kind, cache["u_r"], labels)

    s_last = cache["hidden"][-1]["S"]
    if rate_penalty > 0.0:
        n_total = sum(p.size for p in net.layers)
        mean_rate = sum(h["S"][:, 1:].sum() for h in cache["hidden"]) / (B * T * n_total)
        loss += rate_penalty * mean_rate**2
        rate_grad = 2.0 * rate_penalty * mean_rate / (B * T * n_total)
    else:
        rate_grad = 0.0

    # Readout reverse scan: g_r[t] = dL/dU_R[t] + decay * g_r[t+1].
    decay = net.config.readout_decay
    g_r = np.zeros_like(g_u_r)
    carry = np.zeros((B, net.config.n_classes))
    for t in range(T - 1, -1, -1):
        carry = g_u_r[:, t] + decay * carry
        g_r[:, t] = carry
    grad_readout = np.einsum("btk,btn->kn", g_r, s_last[:, 1:])
    delta_s = g_r @ net.readout_weights  # dL/dS_last[t], shape (B, T, n_last)

    grads = {"layers": [None] * len(net.layers), "readout_weights": grad_readout}
    for l in range(len(net.layers) - 1, -1, -1):
        params = net.layers[l]
        h = cache["hidden"][l]
        U, S, drive = h["U"], h["S"], h["drive"]
        sg = boxcar_surrogate(U[:, 1:], params.v_th, surrogate_width)

        if rate_grad:
            delta_s = delta_s + rate_grad

        # Reverse scan within the layer. delta_u[t] collects the surrogate
        # spike path plus the a-coupling and alpha-decay carries; the reset
        # path is detached by design.
        delta_u = np.zeros((B, T, params.size))
        carry_u = np.zeros((B, params.size))
        a_plus_alpha = params.a + params.alpha
        for t in range(T - 1, -1, -1):
            ds_t = delta_s[:, t] + params.b * carry_u
            carry_u = ds_t * sg[:, t] + a_plus_alpha * carry_u
            delta_u[:, t] = carry_u
        if not np.all(np.isfinite(delta_u)):
            bad_t = int(np.where(~np.isfinite(delta_u).all(axis=(0, 2)))[0][0])
            raise FloatingPointError(
                f"non-finite gradient in hidden layer {l} around timestep {bad_t}"
            )

        u_prev, s_prev = U[:, :T], S[:, :T]
        layer_inputs = features if l == 0 else cache["hidden"][l - 1]["S"][:, :T]
        scaled = params.beta * delta_u
        grads["layers"][l] = {
            "weights": np.einsum("btn,btm->nm", scaled, layer_inputs),
            "alpha": np.einsum("btn,btn->n", delta_u, u_prev - params.v_th * s_prev),
            "beta": np.einsum("btn,btn->n", delta_u, drive),
            "a": np.einsum("btn,btn->n", delta_u, u_prev),
            "b": np.einsum("btn,btn->n", delta_u, s_prev),
        }
        if l > 0:
            # drive[t] = W @ S_{l-1}[t-1]: shift by the synaptic delay
            below = np.zeros((B, T, net.layers[l - 1].size))
            below[:, : T - 1] = scaled[:, 1:] @ params.weights
            delta_s = below
    return loss, grads


def _trainable_arrays(net: Network):
    """Flat (name, array) list over all trainable parameters, fixed order."""
    out = []
    for l, p in enumerate(net.layers):
        for name in ("weights", "alpha", "beta", "a", "b"):
            out.append((f"layer{l}.{name}", getattr(p, name)))
    out.append(("readout_weights", net.readout_weights))
    return out


def _grad_arrays(grads):
    out = []
    for layer in grads["layers"]:
        for name in ("weights", "alpha", "beta", "a", "b"):
            out.append(layer[name])
    out.append(grads["readout_weights"])
    return out


class Adam:
    """Adaptive moment estimation over the network's parameter list."""

    def __init__(self, net: Network, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(arr) for _, arr in _trainable_arrays(net)]
        self.v = [np.zeros_like(arr) for _, arr in _trainable_arrays(net)]
        self.t = 0

    def step(self, net: Network, grads):
        self.t += 1
        params = _trainable_arrays(net)
        gs = _grad_arrays(grads)
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for (_, arr), g, m, v in zip(params, gs, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            arr -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        clamp_params(net)


def clamp_params(net: Network):
    """Clip the per-neuron constants back into their allowed ranges."""
    for p in net.layers:
        np.clip(p.alpha, *ALPHA_RANGE, out=p.alpha)
        np.clip(p.beta, *BETA_RANGE, out=p.beta)
        np.clip(p.a, *ADAPT_A_RANGE, out=p.a)
        np.clip(p.b, *ADAPT_B_RANGE, out=p.b)


def _early_late_predictions(u_r_batch, threshold, min_timestep):
    """Early/late argmax predictions and decision timesteps from traces."""
    p = softmax(u_r_batch, axis=-1)
    o = np.cumsum(p, axis=1)
    cs = softmax(o, axis=-1).max(axis=-1)  # (B, T)
    B, T, _ = u_r_batch.shape
    crossed = cs >= threshold
    crossed[:, : min_timestep - 1] = False
    t_d = np.where(crossed.any(axis=1), crossed.argmax(axis=1) + 1, T)
    early_pred = o[np.arange(B), t_d - 1].argmax(axis=-1)
    late_pred = o[:, -1].argmax(axis=-1)
    return early_pred, late_pred, t_d


def validation_metrics(net: Network, features, labels, threshold=0.9, min_timestep=1,
                       batch_size=256):
    """Early/late accuracy (percent), mean decision time and mean spike rate."""
    labels = np.asarray(labels)
    n = len(labels)
    n_total = sum(p.size for p in net.layers)
    early_hits = late_hits = 0
    td_sum = 0.0
    spike_sum = 0.0
    T = features.shape[1]
    for start in range(0, n, batch_size):
        chunk = slice(start, min(start + batch_size, n))
        cache = forward_batch(net, features[chunk])
        early_pred, late_pred, t_d = _early_late_predictions(
            cache["u_r"], threshold, min_timestep
        )
        early_hits += int((early_pred == labels[chunk]).sum())
        late_hits += int((late_pred == labels[chunk]).sum())
        td_sum += float(t_d.sum())
        spike_sum += float(sum(h["S"][:, 1:].sum() for h in cache["hidden"]))
    return {
        "acc_early": 100.0 * early_hits / n,
        "acc_late": 100.0 * late_hits / n,
        "mean_td": td_sum / n,
        "mean_spike_rate": spike_sum / (n * T * n_total),
    }


def train(net: Network, train_features, train_labels, cfg: TrainConfig,
          val_features=None, val_labels=None, decision_threshold=0.9,
          log=None):
    """Mini-batch Adam training; returns per-epoch metric rows.

    train_features has shape (N, T, n_inputs). Validation metrics are
    computed per epoch when a validation set is given; with keep_best the
    network is left at the epoch with the highest validation accuracy
    (late, then early as tie-break) instead of the last one. A fixed seed
    makes the whole run deterministic.
    """
    train_labels = np.asarray(train_labels)
    if len(train_labels) == 0:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(net, cfg.learning_rate)
    history = []
    best_score = None
    best_params = None
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_labels))
        losses = []
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            loss, grads = backward(
                net,
                train_features[idx],
                train_labels[idx],
                cfg.loss,
                surrogate_width=cfg.surrogate_width,
                rate_penalty=cfg.rate_penalty,
            )
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged: non-finite loss at batch {b}")
            opt.step(net, grads)
            losses.append(loss)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if val_features is not None and len(val_features):
            metrics = validation_metrics(
                net, val_features, val_labels, threshold=decision_threshold
            )
            row["val_acc_late"] = metrics["acc_late"]
            row["val_acc_early"] = metrics["acc_early"]
            row["mean_spike_rate"] = metrics["mean_spike_rate"]
        else:
            row["val_acc_late"] = float("nan")
            row["val_acc_early"] = float("nan")
            row["mean_spike_rate"] = float("nan")
        history.append(row)
        if log is not None:
            log(row)
        if cfg.keep_best and val_features is not None and len(val_features):
            score = (row["val_acc_late"], row["val_acc_early"])
            if best_score is None or score > best_score:
                best_score = score
                best_params = [arr.copy() for _, arr in _trainable_arrays(net)]
    if best_params is not None:
        for (_, arr), saved in zip(_trainable_arrays(net), best_params):
            arr[...] = saved
    return history
