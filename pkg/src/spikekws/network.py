"""Adaptive leaky integrate-and-fire network with a non-spiking readout.

Per hidden neuron and timestep t (all products elementwise per neuron):

    I[t] = beta * drive[t] + a * U[t-1] + b * S[t-1]
    U[t] = alpha * (U[t-1] - v_th * S[t-1]) + I[t]
    S[t] = 1 if U[t] >= v_th else 0

The first hidden layer is driven by the real-valued feature frame of the
current timestep; every deeper hidden layer is driven by the previous
layer's spikes from the previous timestep (one-step synaptic delay). The
readout integrates the last hidden layer's current spikes without delay:

    U_R[t] = readout_decay * U_R[t-1] + W_R @ S_last[t]

and never spikes or resets. All state starts at zero.
"""

import json
from dataclasses import dataclass

import numpy as np

# Clamp ranges for the trainable per-neuron constants; initialization draws
# uniformly from the same intervals.
ALPHA_RANGE = (0.36, 0.96)
BETA_RANGE = (0.36, 0.96)
ADAPT_A_RANGE = (-1.0, 1.0)
ADAPT_B_RANGE = (0.0, 2.0)

DEFAULT_V_TH = 1.0

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class NetworkConfig:
    """Architecture of the feed-forward spiking classifier."""

    n_inputs: int = 40
    hidden_sizes: tuple = (128, 128)
    n_classes: int = 35
    readout_decay: float = 0.9

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if self.n_inputs < 1 or self.n_classes < 1 or not self.hidden_sizes:
            raise ValueError("n_inputs, n_classes and every hidden size must be >= 1")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be >= 1")
        if not (0.0 < self.readout_decay < 1.0):
            raise ValueError("readout_decay must lie in (0, 1)")


@dataclass
class AdLifParams:
    """Per-neuron constants and input weights of one hidden layer."""

    weights: np.ndarray  # (n_neurons, n_inputs)
    alpha: np.ndarray  # membrane decay, per neuron
    beta: np.ndarray  # synaptic decay, per neuron
    a: np.ndarray  # subthreshold adaptation coupling, per neuron
    b: np.ndarray  # spike-triggered adaptation, per neuron
    v_th: float = DEFAULT_V_TH

    @property
    def size(self):
        return self.weights.shape[0]

    def validate(self):
        n = self.size
        for name in ("alpha", "beta", "a", "b"):
            arr = getattr(self, name)
            if arr.shape != (n,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be a finite vector of length {n}")
        lo, hi = ALPHA_RANGE
        if np.any(self.alpha < lo) or np.any(self.alpha > hi):
            raise ValueError(f"alpha must lie in [{lo}, {hi}]")
        lo, hi = BETA_RANGE
        if np.any(self.beta < lo) or np.any(self.beta > hi):
            raise ValueError(f"beta must lie in [{lo}, {hi}]")
        if self.v_th <= 0:
            raise ValueError("v_th must be positive")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")


@dataclass
class LayerState:
    """Synaptic current, membrane potential and spikes of one layer."""

    i_syn: np.ndarray
    u_mem: np.ndarray
    spikes: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))


@dataclass
class ReadoutTrace:
    """Readout potentials over time plus per-layer spike totals.

    u_r has shape (T, n_classes); spike_counts has shape (n_hidden_layers, T)
    and holds the number of spikes each layer emitted at each timestep.
    """

    u_r: np.ndarray
    spike_counts: np.ndarray


def adlif_step(state: LayerState, weighted_input, params: AdLifParams) -> LayerState:
    """Advance one layer by one timestep; weighted_input is weights @ input."""
    weighted_input = np.asarray(weighted_input, dtype=np.float64)
    if weighted_input.shape != state.u_mem.shape:
        raise ValueError(
            f"weighted_input has shape {weighted_input.shape}, "
            f"layer expects {state.u_mem.shape}"
        )
    if not np.all(np.isfinite(weighted_input)):
        raise ValueError("weighted_input contains non-finite values")
    i_syn = params.beta * weighted_input + params.a * state.u_mem + params.b * state.spikes
    u_mem = params.alpha * (state.u_mem - params.v_th * state.spikes) + i_syn
    spikes = (u_mem >= params.v_th).astype(np.float64)
    return LayerState(i_syn, u_mem, spikes)


def readout_step(u_r_prev, weighted_input, decay):
    """Leaky non-spiking integration: U_R[t] = decay * U_R[t-1] + input."""
    u_r_prev = np.asarray(u_r_prev, dtype=np.float64)
    weighted_input = np.asarray(weighted_input, dtype=np.float64)
    if u_r_prev.shape != weighted_input.shape:
        raise ValueError("readout input width mismatch")
    if not (np.all(np.isfinite(u_r_prev)) and np.all(np.isfinite(weighted_input))):
        raise ValueError("readout inputs must be finite")
    return decay * u_r_prev + weighted_input


class Network:
    """Parameter container plus forward passes (offline and streaming)."""

    def __init__(self, config: NetworkConfig, layers, readout_weights, classes=None):
        self.config = config
        self.layers = list(layers)
        self.readout_weights = np.asarray(readout_weights, dtype=np.float64)
        self.classes = list(classes) if classes is not None else None
        widths = [config.n_inputs] + list(config.hidden_sizes)
        for params, (n_in, n_out) in zip(self.layers, zip(widths[:-1], widths[1:])):
            if params.weights.shape != (n_out, n_in):
                raise ValueError("layer weight shape does not match the config")
            params.validate()
        if self.readout_weights.shape != (config.n_classes, config.hidden_sizes[-1]):
            raise ValueError("readout weight shape does not match the config")

    @property
    def v_th(self):
        return self.layers[0].v_th

    def forward(self, features) -> ReadoutTrace:
        """Run one sample (T, n_inputs) through the network."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.config.n_inputs:
            raise ValueError(
                f"features must have shape (T, {self.config.n_inputs}), "
                f"got {features.shape}"
            )
        cache = forward_batch(self, features[None])
        counts = np.stack([c["spikes"][0, 1:].sum(axis=1) for c in cache["hidden"]])
        return ReadoutTrace(u_r=cache["u_r"][0], spike_counts=counts)

    def stepper(self):
        return NetworkStepper(self)


class NetworkStepper:
    """Stateful frame-by-frame evaluator for streaming inference."""

    def __init__(self, net: Network):
        self.net = net
        self.states = [LayerState.zeros(p.size) for p in net.layers]
        self.u_r = np.zeros(net.config.n_classes)
        self.t = 0

    def step(self, frame):
        """Consume one feature frame; returns (u_r, per-layer spike counts)."""
        frame = np.asarray(frame, dtype=np.float64)
        if frame.shape != (self.net.config.n_inputs,):
            raise ValueError(
                f"frame has shape {frame.shape}, expected ({self.net.config.n_inputs},)"
            )
        # Drives are computed from the pre-update states so that layer l sees
        # the previous timestep's spikes of layer l-1.
        drives = [self.net.layers[0].weights @ frame]
        for l in range(1, len(self.net.layers)):
            drives.append(self.net.layers[l].weights @ self.states[l - 1].spikes)
        for l, drive in enumerate(drives):
            self.states[l] = adlif_step(self.states[l], drive, self.net.layers[l])
        self.u_r = readout_step(
            self.u_r,
            self.net.readout_weights @ self.states[-1].spikes,
            self.net.config.readout_decay,
        )
        self.t += 1
        counts = np.array([s.spikes.sum() for s in self.states])
        return self.u_r.copy(), counts


def init_network(config: NetworkConfig, seed, classes=None) -> Network:
    """Draw initial parameters: weights U(+-1/sqrt(fan_in)), constants
    uniform over their clamp ranges, shared fixed threshold."""
    rng = np.random.default_rng(seed)
    widths = [config.n_inputs] + list(config.hidden_sizes)
    layers = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(n_in)
        layers.append(
            AdLifParams(
                weights=rng.uniform(-bound, bound, size=(n_out, n_in)),
                alpha=rng.uniform(*ALPHA_RANGE, size=n_out),
                beta=rng.uniform(*BETA_RANGE, size=n_out),
                a=rng.uniform(*ADAPT_A_RANGE, size=n_out),
                b=rng.uniform(*ADAPT_B_RANGE, size=n_out),
                v_th=DEFAULT_V_TH,
            )
        )
    bound = 1.0 / np.sqrt(config.hidden_sizes[-1])
    readout = rng.uniform(-bound, bound, size=(config.n_classes, config.hidden_sizes[-1]))
    return Network(config, layers, readout, classes=classes)


def count_parameters(config: NetworkConfig) -> int:
    """Trainable parameter count: all weights plus alpha/beta/a/b per hidden
    neuron. The threshold and readout decay are fixed scalars."""
    widths = [config.n_inputs] + list(config.hidden_sizes)
    n = sum(n_in * n_out for n_in, n_out in zip(widths[:-1], widths[1:]))
    n += config.hidden_sizes[-1] * config.n_classes
    n += 4 * sum(config.hidden_sizes)
    return n


def forward_batch(net: Network, features) -> dict:
    """Vectorized forward over a batch of samples.

    features has shape (B, T, n_inputs). Returns a cache with everything the
    backward pass needs: per hidden layer the drive (B, T, n) and the state
    arrays U, S of shape (B, T+1, n) whose index 0 holds the zero initial
    state, plus the readout trace u_r (B, T, K).
    """
    features = np.asarray(features, dtype=np.float64)
    B, T, _ = features.shape
    hidden = []
    prev_spikes = None  # (B, T+1, n) of the previous layer
    for l, params in enumerate(net.layers):
        n = params.size
        if l == 0:
            drive = features @ params.weights.T
        else:
            # index t of prev_spikes holds S_{l-1}[t-1]: the one-step delay
            drive = prev_spikes[:, :T] @ params.weights.T
        U = np.zeros((B, T + 1, n))
        S = np.zeros((B, T + 1, n))
        alpha, beta, a, b, v_th = params.alpha, params.beta, params.a, params.b, params.v_th
        for t in range(T):
            i_t = beta * drive[:, t] + a * U[:, t] + b * S[:, t]
            u_t = alpha * (U[:, t] - v_th * S[:, t]) + i_t
            U[:, t + 1] = u_t
            S[:, t + 1] = u_t >= v_th
        if not np.all(np.isfinite(U)):
            raise FloatingPointError(f"non-finite membrane potential in hidden layer {l}")
        hidden.append({"drive": drive, "U": U, "S": S})
        prev_spikes = S

    r_drive = prev_spikes[:, 1:] @ net.readout_weights.T  # readout sees S_last[t]
    u_r = np.zeros((B, T, net.config.n_classes))
    decay = net.config.readout_decay
    prev = np.zeros((B, net.config.n_classes))
    for t in range(T):
        prev = decay * prev + r_drive[:, t]
        u_r[:, t] = prev
    return {"features": features, "hidden": hidden, "u_r": u_r}


def save_checkpoint(net: Network, path):
    """Write the network as a single JSON document."""
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "network": {
            "n_inputs": net.config.n_inputs,
            "hidden_sizes": list(net.config.hidden_sizes),
            "n_classes": net.config.n_classes,
            "readout_decay": net.config.readout_decay,
            "v_th": net.v_th,
        },
        "classes": net.classes,
        "layers": [
            {
                "weights": p.weights.flatten().tolist(),  # row-major
                "alpha": p.alpha.tolist(),
                "beta": p.beta.tolist(),
                "a": p.a.tolist(),
                "b": p.b.tolist(),
            }
            for p in net.layers
        ],
        "readout_weights": net.readout_weights.flatten().tolist(),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_checkpoint(path) -> Network:
    """Load a network checkpoint, rejecting unknown format versions."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint format_version {version!r}; "
            f"this build reads version {CHECKPOINT_FORMAT_VERSION}"
        )
    nc = doc["network"]
    config = NetworkConfig(
        n_inputs=nc["n_inputs"],
        hidden_sizes=tuple(nc["hidden_sizes"]),
        n_classes=nc["n_classes"],
        readout_decay=nc["readout_decay"],
    )
    v_th = nc.get("v_th", DEFAULT_V_TH)
    widths = [config.n_inputs] + list(config.hidden_sizes)
    layers = []
    for spec, (n_in, n_out) in zip(doc["layers"], zip(widths[:-1], widths[1:])):
        layers.append(
            AdLifParams(
                weights=np.array(spec["weights"], dtype=np.float64).reshape(n_out, n_in),
                alpha=np.array(spec["alpha"], dtype=np.float64),
                beta=np.array(spec["beta"], dtype=np.float64),
                a=np.array(spec["a"], dtype=np.float64),
                b=np.array(spec["b"], dtype=np.float64),
                v_th=v_th,
            )
        )
    readout = np.array(doc["readout_weights"], dtype=np.float64).reshape(
        config.n_classes, config.hidden_sizes[-1]
    )
    return Network(config, layers, readout, classes=doc.get("classes"))
