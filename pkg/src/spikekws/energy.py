"""Event-driven operation counting and the 45 nm energy estimate.

The paper-style price list charges 4.6 pJ per multiply-accumulate and
0.9 pJ per plain accumulate. Which operation lands in which bucket is a
convention this module pins down in count_ops (and nowhere else), so an
alternate accounting is a one-function edit. Per timestep up to t_stop:

  MAC    n_inputs * h1          dense real-valued frame into the first layer
  MAC    2 per hidden neuron    alpha-decay of U and the a*U coupling
  MAC    n_classes              readout decay
  ACC    spikes(l-1, t-1) * h_l spike propagation into layer l >= 2
  ACC    h_l if any input spike merging the beta-scaled drive, layer l >= 2
  ACC    spikes(l, t-1)         spike-triggered b adaptation, event-driven
  ACC    spikes(last, t) * K    spike propagation into the readout

Softmax/argmax of the decision rule and memory traffic are not counted.
"""

from dataclasses import dataclass

import numpy as np

CONVENTION_VERSION = 1


@dataclass(frozen=True)
class EnergyModel:
    """Per-operation energy prices in joules."""

    e_mac: float = 4.6e-12
    e_acc: float = 0.9e-12

    def __post_init__(self):
        if self.e_mac <= 0 or self.e_acc <= 0:
            raise ValueError("energy prices must be positive")


@dataclass(frozen=True)
class OpCount:
    """Operation totals accumulated over timesteps 1..t_stop."""

    n_mac: int
    n_acc: int
    t_stop: int


def count_ops(n_inputs, hidden_sizes, n_classes, spike_counts, t_stop) -> OpCount:
    """Count MACs and accumulates up to t_stop (inclusive, 1-based).

    spike_counts has shape (n_hidden_layers, T) holding the number of spikes
    each hidden layer emitted at each timestep.
    """
    counts = np.asarray(spike_counts)
    L, T = counts.shape
    if L != len(hidden_sizes):
        raise ValueError("spike record layer count does not match hidden_sizes")
    if not 0 <= t_stop <= T:
        raise ValueError(f"t_stop {t_stop} out of range [0, {T}]")
    if t_stop == 0:
        return OpCount(0, 0, 0)

    n_mac = t_stop * (n_inputs * hidden_sizes[0] + 2 * sum(hidden_sizes) + n_classes)

    # prev[:, t] holds the spike counts of timestep t-1 (zero state before t=1)
    prev = np.zeros_like(counts[:, :t_stop])
    prev[:, 1:] = counts[:, : t_stop - 1]
    n_acc = 0
    for l in range(1, L):
        incoming = prev[l - 1]
        n_acc += int(incoming.sum()) * hidden_sizes[l]
        n_acc += int(np.count_nonzero(incoming)) * hidden_sizes[l]
    n_acc += int(prev.sum())
    n_acc += int(counts[-1, :t_stop].sum()) * n_classes
    return OpCount(int(n_mac), int(n_acc), int(t_stop))


def estimate_energy(count: OpCount, model: EnergyModel = EnergyModel()) -> float:
    """Joules for an operation count under the given price list."""
    return count.n_mac * model.e_mac + count.n_acc * model.e_acc


def spike_rate_trace(spike_counts, hidden_sizes) -> np.ndarray:
    """Per-timestep mean firing rate: total spikes over total neurons."""
    counts = np.asarray(spike_counts, dtype=np.float64)
    if counts.size == 0:
        raise ValueError("empty spike record")
    return counts.sum(axis=0) / float(sum(hidden_sizes))


def energy_report(count: OpCount, model: EnergyModel = EnergyModel()) -> dict:
    """JSON-ready energy summary."""
    return {
        "n_mac": count.n_mac,
        "n_acc": count.n_acc,
        "joules": estimate_energy(count, model),
        "t_stop": count.t_stop,
        "convention_version": CONVENTION_VERSION,
    }
