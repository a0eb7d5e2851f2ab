"""Command-line surface: train, eval, stream, dataset-gen, energy-report.

Every command takes --config/--seed/--threads overrides and writes fixed
filenames under --out-dir (checkpoint.json, epochs.csv, eval.json,
per_sample.csv, trace.csv, energy.json, config.toml). Failures exit nonzero
with a single machine-parseable line on stderr.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_config, save_config
from .data import extract_features, load_gsc, load_manifest, synth_dataset
from .decision import (
    DecisionConfig,
    decide_stream,
    evaluate,
    sweep_thresholds,
)
from .energy import count_ops, estimate_energy, CONVENTION_VERSION, spike_rate_trace
from .features import compute_fbank
from .network import (
    NetworkConfig,
    forward_batch,
    init_network,
    load_checkpoint,
    save_checkpoint,
)
from .training import train
from .wav import read_wav

EPOCH_FIELDS = ("epoch", "train_loss", "val_acc_late", "val_acc_early", "mean_spike_rate")
PER_SAMPLE_FIELDS = ("sample_id", "label", "predicted", "t_d", "t_end_frame", "cs_at_td")


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, fields, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row.get(k)) for k in fields])


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_dataset(cfg, arg_manifest=None):
    manifest_path = arg_manifest or cfg.paths.get("manifest")
    if manifest_path:
        return load_manifest(manifest_path, sample_rate=cfg.features.sample_rate)
    data_root = cfg.paths.get("data_root")
    if data_root:
        return load_gsc(data_root)
    raise FileNotFoundError("no dataset configured: set paths.manifest or paths.data_root")


def _resolved_config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out_dir is not None:
        cfg.paths["out_dir"] = args.out_dir
    return cfg


def _out_dir(cfg):
    out = Path(cfg.paths["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args):
    cfg = _resolved_config(args)
    manifest = _load_dataset(cfg)
    # the dataset fixes the class count; the feature config fixes the width
    cfg.network = NetworkConfig(
        n_inputs=cfg.features.n_filters,
        hidden_sizes=cfg.network.hidden_sizes,
        n_classes=manifest.n_classes,
        readout_decay=cfg.network.readout_decay,
    )
    out = _out_dir(cfg)
    save_config(cfg, out / "config.toml")

    train_x, train_y, _, _ = extract_features(
        manifest, "train", cfg.features, threads=cfg.threads
    )
    try:
        val_x, val_y, _, _ = extract_features(
            manifest, "val", cfg.features, threads=cfg.threads
        )
    except ValueError:
        val_x = val_y = None

    net = init_network(cfg.network, cfg.seed, classes=manifest.classes)
    history = train(
        net, train_x, train_y, cfg.train,
        val_features=val_x, val_labels=val_y,
        decision_threshold=cfg.decision.threshold_c,
        log=lambda row: print(
            "epoch {epoch}: loss {train_loss:.6f} "
            "val_acc_late {val_acc_late:.2f} val_acc_early {val_acc_early:.2f}".format(**row)
        ),
    )
    save_checkpoint(net, out / "checkpoint.json")
    _write_csv(out / "epochs.csv", EPOCH_FIELDS, history)
    print(f"wrote {out / 'checkpoint.json'} and {out / 'epochs.csv'}")
    return 0


def _report_table(pairs):
    header = f"{'C':>6} {'acc_early':>10} {'acc_late':>10} {'mean_td':>8} {'delta_td':>9} {'energy_uJ':>10}"
    lines = [header]
    for c, rep in pairs:
        delta = f"{rep.delta_td:9.2f}" if rep.delta_td is not None else f"{'-':>9}"
        lines.append(
            f"{c:6.2f} {rep.acc_early:10.2f} {rep.acc_late:10.2f} "
            f"{rep.mean_td:8.2f} {delta} {rep.mean_energy * 1e6:10.4f}"
        )
    return "\n".join(lines)


def cmd_eval(args):
    cfg = _resolved_config(args)
    net = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest, sample_rate=cfg.features.sample_rate)
    if manifest.n_classes != net.config.n_classes:
        raise ValueError(
            f"class-count mismatch: checkpoint has {net.config.n_classes}, "
            f"manifest has {manifest.n_classes}"
        )
    feats, labels, t_end_frames, samples = extract_features(
        manifest, args.split, cfg.features, threads=cfg.threads
    )
    sample_ids = [s.audio_path for s in samples]
    threshold = args.threshold if args.threshold is not None else cfg.decision.threshold_c
    out = _out_dir(cfg)

    if args.sweep:
        results, selected = sweep_thresholds(
            net, feats, labels, t_end_frames=t_end_frames,
            min_timestep=cfg.decision.min_timestep, energy_model=cfg.energy,
        )
        threshold = selected
        doc = {
            "sweep": [dict(threshold=c, **rep.to_dict()) for c, rep in results],
            "selected_c": selected,
        }
        print(_report_table(results))
        print(f"selected C = {selected}")
    else:
        doc = {}

    decision_cfg = DecisionConfig(threshold_c=threshold, min_timestep=cfg.decision.min_timestep)
    report, rows = evaluate(
        net, feats, labels, decision_cfg,
        t_end_frames=t_end_frames, energy_model=cfg.energy, sample_ids=sample_ids,
    )
    doc["threshold"] = threshold
    doc["report"] = report.to_dict()
    _write_json(out / "eval.json", doc)
    _write_csv(out / "per_sample.csv", PER_SAMPLE_FIELDS, rows)
    if not args.sweep:
        print(_report_table([(threshold, report)]))
    print(f"wrote {out / 'eval.json'} and {out / 'per_sample.csv'}")
    return 0


def cmd_stream(args):
    cfg = _resolved_config(args)
    net = load_checkpoint(args.checkpoint)
    audio, _ = read_wav(args.wav, expect_rate=cfg.features.sample_rate)
    feats = compute_fbank(audio, cfg.features)
    threshold = args.threshold if args.threshold is not None else cfg.decision.threshold_c
    decision_cfg = DecisionConfig(threshold_c=threshold, min_timestep=cfg.decision.min_timestep)
    outcome = decide_stream(net, iter(feats), decision_cfg, total_frames=feats.shape[0])
    label = (
        net.classes[outcome.predicted]
        if net.classes is not None
        else str(outcome.predicted)
    )
    print(
        json.dumps(
            {
                "predicted": label,
                "predicted_index": outcome.predicted,
                "t_d": outcome.t_d,
                "early": outcome.early,
                "cs_at_td": outcome.confidence_trace[-1],
                "threshold": threshold,
            },
            sort_keys=True,
        )
    )
    if args.trace:
        rates = spike_rate_trace(outcome.spike_record, net.config.hidden_sizes)
        out = _out_dir(cfg)
        rows = [
            {"t": t + 1, "cs": float(outcome.confidence_trace[t]), "spike_rate": float(rates[t])}
            for t in range(outcome.t_d)
        ]
        _write_csv(out / "trace.csv", ("t", "cs", "spike_rate"), rows)
        print(f"wrote {out / 'trace.csv'}")
    return 0


def cmd_dataset_gen(args):
    cfg = _resolved_config(args)
    out = Path(args.out_dir if args.out_dir is not None else cfg.paths["out_dir"])
    manifest = synth_dataset(args.classes, args.per_class, cfg.seed, out)
    print(
        json.dumps(
            {
                "classes": manifest.n_classes,
                "samples": len(manifest.samples),
                "manifest": str(out / "manifest.jsonl"),
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_energy_report(args):
    cfg = _resolved_config(args)
    net = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest, sample_rate=cfg.features.sample_rate)
    if manifest.n_classes != net.config.n_classes:
        raise ValueError(
            f"class-count mismatch: checkpoint has {net.config.n_classes}, "
            f"manifest has {manifest.n_classes}"
        )
    feats, labels, _, _ = extract_features(
        manifest, args.split, cfg.features, threads=cfg.threads
    )
    threshold = args.threshold if args.threshold is not None else 1.0
    decision_cfg = DecisionConfig(threshold_c=threshold, min_timestep=cfg.decision.min_timestep)
    from .decision import decision_table

    total_mac = total_acc = 0
    td_sum = 0.0
    N, T, _ = feats.shape
    for start in range(0, N, 256):
        chunk = feats[start : start + 256]
        cache = forward_batch(net, chunk)
        _, _, t_d, _ = decision_table(cache["u_r"], decision_cfg)
        counts = np.stack([h["S"][:, 1:].sum(axis=2) for h in cache["hidden"]], axis=1)
        for i in range(chunk.shape[0]):
            ops = count_ops(
                net.config.n_inputs, net.config.hidden_sizes, net.config.n_classes,
                counts[i], int(t_d[i]),
            )
            total_mac += ops.n_mac
            total_acc += ops.n_acc
            td_sum += ops.t_stop
    doc = {
        "n_mac": total_mac / N,
        "n_acc": total_acc / N,
        "joules": (total_mac * cfg.energy.e_mac + total_acc * cfg.energy.e_acc) / N,
        "t_stop": td_sum / N,
        "convention_version": CONVENTION_VERSION,
        "n_samples": N,
        "threshold": threshold,
    }
    out = _out_dir(cfg)
    _write_json(out / "energy.json", doc)
    print(json.dumps(doc, sort_keys=True))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spikekws",
        description="Streaming spiking keyword spotting with early decisions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="TOML config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
        p.add_argument("--out-dir", default=None, help="output directory")

    p = sub.add_parser("train", help="train a model and write checkpoint + metrics")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--threshold", type=float, default=None, help="decision threshold C")
    p.add_argument("--sweep", action="store_true", help="sweep thresholds and pick C")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stream", help="stream one WAV through the model")
    common(p)
    p.add_argument("wav", help="input WAV file (PCM16 mono)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--trace", action="store_true", help="write per-timestep trace.csv")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("dataset-gen", help="generate the synthetic annotated corpus")
    common(p)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=200)
    p.set_defaults(func=cmd_dataset_gen)

    p = sub.add_parser("energy-report", help="operation counts and energy estimate")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--threshold", type=float, default=None,
                   help="count up to the decision time under this threshold")
    p.set_defaults(func=cmd_energy_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single-line machine-parseable failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
