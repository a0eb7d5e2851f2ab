"""Confidence-gated early stopping and the evaluation metrics built on it.

At every timestep the cumulative output O[t] (running sum of per-timestep
softmaxes) yields a confidence score CS_t = max(softmax(O[t])). Streaming
inference halts at the first timestep at or past min_timestep where CS_t
reaches the threshold; otherwise it runs to the end of the clip. Reported
metrics: early/late accuracy, mean decision time, the mean gap between the
decision time and the annotated keyword end, mean spike rate and estimated
energy.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .energy import EnergyModel, count_ops, estimate_energy
from .features import FbankConfig
from .network import Network, forward_batch
from .training import softmax

# Validation sweep grid for picking the threshold.
SWEEP_GRID = tuple(round(0.50 + 0.05 * i, 2) for i in range(10)) + (0.99,)


@dataclass
class DecisionConfig:
    """Early-decision threshold and warm-up floor."""

    threshold_c: float = 0.9
    min_timestep: int = 1

    def __post_init__(self):
        if not (0.0 < self.threshold_c <= 1.0):
            raise ValueError("threshold_c must lie in (0, 1]")
        if self.min_timestep < 1:
            raise ValueError("min_timestep must be >= 1")


@dataclass
class DecisionOutcome:
    """Result of one streaming run; t_d counts timesteps from 1."""

    predicted: int
    t_d: int
    early: bool
    confidence_trace: np.ndarray  # CS_t for t = 1..t_d
    spike_counts_until_td: np.ndarray  # per-layer spike totals up to t_d
    spike_record: np.ndarray  # per-layer per-timestep counts, shape (L, t_d)


@dataclass
class EvalReport:
    """Dataset-level metrics; energies are per-sample means in joules."""

    acc_early: float
    acc_late: float
    mean_td: float
    delta_td: Optional[float]
    mean_spike_rate: float
    mean_energy: float
    mean_energy_full: float
    energy_ratio: float
    n_samples: int

    def to_dict(self):
        return {
            "acc_early": self.acc_early,
            "acc_late": self.acc_late,
            "mean_td": self.mean_td,
            "delta_td": self.delta_td,
            "mean_spike_rate": self.mean_spike_rate,
            "mean_energy": self.mean_energy,
            "mean_energy_full": self.mean_energy_full,
            "energy_ratio": self.energy_ratio,
            "n_samples": self.n_samples,
        }


def confidence(o_t) -> float:
    """Confidence score of one cumulative-output row: max of its softmax."""
    o_t = np.asarray(o_t, dtype=np.float64)
    if not np.all(np.isfinite(o_t)):
        raise ValueError("cumulative output contains non-finite values")
    return float(softmax(o_t).max())


def annotation_to_frame(t_end_seconds, config: FbankConfig, total_frames) -> int:
    """Map an annotation time to the first frame whose coverage includes it.

    Frame t (1-based) is taken to cover audio up to (t*hop + window) samples;
    times past the last frame's coverage clamp to the final frame.
    """
    need = t_end_seconds * config.sample_rate - config.window_len
    frame = math.ceil(need / config.hop_len - 1e-9)
    return int(min(max(frame, 1), total_frames))


def decide_stream(net: Network, frames, cfg: DecisionConfig,
                  total_frames=None) -> DecisionOutcome:
    """Consume feature frames one at a time until the confidence threshold
    triggers or the source is exhausted; never reads past the decision."""
    stepper = net.stepper()
    o = np.zeros(net.config.n_classes)
    cs_trace = []
    counts = []
    triggered = False
    for frame in frames:
        u_r, layer_counts = stepper.step(frame)
        o += softmax(u_r)
        cs = confidence(o)
        cs_trace.append(cs)
        counts.append(layer_counts)
        if stepper.t >= cfg.min_timestep and cs >= cfg.threshold_c:
            triggered = True
            break
    if stepper.t == 0:
        raise ValueError("frame source yielded no frames")
    t_d = stepper.t
    early = triggered and (total_frames is None or t_d < total_frames)
    record = np.array(counts).T  # (L, t_d)
    return DecisionOutcome(
        predicted=int(np.argmax(o)),
        t_d=t_d,
        early=early,
        confidence_trace=np.array(cs_trace),
        spike_counts_until_td=record.sum(axis=1),
        spike_record=record,
    )


def decision_table(u_r_batch, cfg: DecisionConfig):
    """Early/late decisions for a batch of full readout traces.

    Returns (early_pred, late_pred, t_d, cs_at_td) arrays; traces whose
    confidence never crosses the threshold decide at the final timestep.
    """
    u = np.asarray(u_r_batch, dtype=np.float64)
    B, T, _ = u.shape
    o = np.cumsum(softmax(u, axis=-1), axis=1)
    q = softmax(o, axis=-1)
    cs = q.max(axis=-1)
    crossed = cs >= cfg.threshold_c
    crossed[:, : cfg.min_timestep - 1] = False
    t_d = np.where(crossed.any(axis=1), crossed.argmax(axis=1) + 1, T)
    rows = np.arange(B)
    early_pred = o[rows, t_d - 1].argmax(axis=-1)
    late_pred = o[:, -1].argmax(axis=-1)
    return early_pred, late_pred, t_d, cs[rows, t_d - 1]


def evaluate(net: Network, features, labels, cfg: DecisionConfig,
             t_end_frames=None, energy_model: EnergyModel = EnergyModel(),
             sample_ids=None, batch_size=256):
    """Run every sample once, recording both the early and the late decision.

    features has shape (N, T, n_inputs); t_end_frames is an optional array
    with the annotated keyword-end frame per sample (NaN when absent).
    Returns (EvalReport, per_sample_rows).
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    N, T, _ = features.shape
    if N == 0:
        raise ValueError("evaluation set is empty")
    hidden_sizes = net.config.hidden_sizes
    n_total = sum(hidden_sizes)

    rows = []
    early_hits = late_hits = 0
    td_sum = 0.0
    spike_sum = 0.0
    e_td_sum = 0.0
    e_full_sum = 0.0
    deltas = []
    for start in range(0, N, batch_size):
        stop = min(start + batch_size, N)
        cache = forward_batch(net, features[start:stop])
        early_pred, late_pred, t_d, cs_td = decision_table(cache["u_r"], cfg)
        # per-layer per-timestep spike counts: (B, L, T)
        counts = np.stack([h["S"][:, 1:].sum(axis=2) for h in cache["hidden"]], axis=1)
        for i in range(stop - start):
            g = start + i
            record = counts[i]
            ops_td = count_ops(
                net.config.n_inputs, hidden_sizes, net.config.n_classes,
                record, int(t_d[i]),
            )
            ops_full = count_ops(
                net.config.n_inputs, hidden_sizes, net.config.n_classes, record, T
            )
            e_td = estimate_energy(ops_td, energy_model)
            e_full = estimate_energy(ops_full, energy_model)
            e_td_sum += e_td
            e_full_sum += e_full
            spike_sum += float(record.sum())
            td_sum += float(t_d[i])
            early_hits += int(early_pred[i] == labels[g])
            late_hits += int(late_pred[i] == labels[g])
            t_end = None
            if t_end_frames is not None and not np.isnan(t_end_frames[g]):
                t_end = int(t_end_frames[g])
                deltas.append(float(t_d[i]) - t_end)
            rows.append(
                {
                    "sample_id": sample_ids[g] if sample_ids is not None else g,
                    "label": int(labels[g]),
                    "predicted": int(early_pred[i]),
                    "predicted_late": int(late_pred[i]),
                    "t_d": int(t_d[i]),
                    "t_end_frame": t_end,
                    "cs_at_td": float(cs_td[i]),
                    "energy_td": e_td,
                    "energy_full": e_full,
                }
            )
    report = EvalReport(
        acc_early=100.0 * early_hits / N,
        acc_late=100.0 * late_hits / N,
        mean_td=td_sum / N,
        delta_td=(float(np.mean(deltas)) if deltas else None),
        mean_spike_rate=spike_sum / (N * T * n_total),
        mean_energy=e_td_sum / N,
        mean_energy_full=e_full_sum / N,
        energy_ratio=(e_td_sum / e_full_sum) if e_full_sum > 0 else 1.0,
        n_samples=N,
    )
    return report, rows


def sweep_thresholds(net: Network, features, labels, t_end_frames=None,
                     grid=SWEEP_GRID, min_timestep=1,
                     energy_model: EnergyModel = EnergyModel()):
    """Evaluate each threshold on the grid; pick the one maximizing early
    accuracy, breaking ties toward the smaller mean decision time."""
    results = []
    for c in grid:
        cfg = DecisionConfig(threshold_c=c, min_timestep=min_timestep)
        report, _ = evaluate(
            net, features, labels, cfg, t_end_frames=t_end_frames,
            energy_model=energy_model,
        )
        results.append((c, report))
    best = max(results, key=lambda cr: (cr[1].acc_early, -cr[1].mean_td))
    return results, best[0]
