"""Command-line surface: data generation, training, evaluation,
prediction, gradient checking and the fusion ablation report.

Exit codes: 0 success, 1 runtime failure, 2 usage error. A plain-text
`key = value` file can be passed with --config; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np

from . import baselines, coupled, data, gradcheck, metrics, train, upsample
from .coupled import FULL, PAPER, MultimodalModel

MODEL_MAGIC = b"MMRN"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sI4I")


def save_model(path, model: MultimodalModel) -> None:
    """Binary model file: magic, version, dims, then every parameter
    block as little-endian float64 in the canonical blocks() order."""
    blob = _MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, *model.dims)
    blob += b"".join(arr.astype("<f8").tobytes() for _, arr in model.blocks())
    Path(path).write_bytes(blob)


def load_model(path) -> MultimodalModel:
    blob = Path(path).read_bytes()
    if len(blob) < _MODEL_HEADER.size:
        raise ValueError(f"{path}: truncated header, {len(blob)} bytes")
    magic, version, d_c, d_d, d_h, b = _MODEL_HEADER.unpack_from(blob, 0)
    if magic != MODEL_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    model = coupled.zeros_model(d_c, d_d, d_h, b)
    expect = _MODEL_HEADER.size + 8 * sum(arr.size for _, arr in model.blocks())
    if len(blob) != expect:
        raise ValueError(f"{path}: expected {expect} bytes, got {len(blob)}")
    off = _MODEL_HEADER.size
    for _, arr in model.blocks():
        arr[...] = np.frombuffer(blob, dtype="<f8", count=arr.size, offset=off).reshape(arr.shape)
        off += 8 * arr.size
    return model


def write_pgm(path, labels: np.ndarray) -> None:
    """P5 map, one byte per pixel holding the class index."""
    h, w = labels.shape
    if labels.max(initial=0) > 255:
        raise ValueError("class index does not fit in a PGM byte")
    header = f"P5\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + labels.astype(np.uint8).tobytes())


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--clip", type=float, default=2000.0)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--decay", type=float, default=0.99)
    p.add_argument("--mode", choices=[FULL, PAPER], default=FULL)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="mmrnn")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("gen-data", help="generate a synthetic scene directory")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=40)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--ambiguity", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--unlabeled-frac", type=float, default=0.1)
    p.add_argument("--feat-dim-c", type=int, default=16)
    p.add_argument("--feat-dim-d", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    subs["gen-data"] = p

    p = sub.add_parser("train", help="train the coupled model on a scene directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    subs["train"] = p

    p = sub.add_parser("eval", help="score a trained model on a scene directory")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    subs["eval"] = p

    p = sub.add_parser("predict", help="write the upsampled label map of one scene file")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--out", required=True)
    subs["predict"] = p

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    subs["gradcheck"] = p

    p = sub.add_parser("ablate", help="train and score the full fusion ablation family")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    subs["ablate"] = p

    return parser, subs


def _apply_config(subs, path: str) -> None:
    """Use file values as defaults; explicit flags still override them."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        values[key.strip().replace("-", "_")] = raw.strip()
    for sp in subs.values():
        updates = {}
        for action in sp._actions:
            if action.dest in values:
                raw = values[action.dest]
                updates[action.dest] = action.type(raw) if action.type else raw
        if updates:
            sp.set_defaults(**updates)


def _extract_config(argv: list[str]):
    out, path = [], None
    it = iter(range(len(argv)))
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "--config":
            if i + 1 >= len(argv):
                raise ValueError("--config needs a file argument")
            path = argv[i + 1]
            i += 2
            continue
        if arg.startswith("--config="):
            path = arg.split("=", 1)[1]
            i += 1
            continue
        out.append(arg)
        i += 1
    return out, path


def _train_config(args) -> train.TrainConfig:
    return train.TrainConfig(
        epochs=args.epochs,
        seed=args.seed,
        lr0=args.lr,
        lr_decay_per_epoch=args.decay,
        momentum=args.momentum,
        clip_threshold=args.clip,
        hidden_dim=args.hidden_dim,
        backward_mode=args.mode,
    )


def _cmd_gen_data(args) -> int:
    scenes = []
    for i in range(args.scenes):
        spec = data.SceneSpec(
            height=args.height,
            width=args.width,
            num_classes=args.classes,
            ambiguity=args.ambiguity,
            noise_sigma=args.noise,
            unlabeled_frac=args.unlabeled_frac,
            seed=args.seed + i,
            feat_dim_c=args.feat_dim_c,
            feat_dim_d=args.feat_dim_d,
        )
        scenes.append(data.generate_scene(spec))
    names = data.write_dataset(args.out, scenes)
    print(f"wrote {len(names)} scenes to {args.out}")
    return 0


def _cmd_train(args) -> int:
    dataset = data.read_dataset(args.data)
    model, _ = train.train_epochs(_train_config(args), dataset, log_stream=sys.stdout)
    save_model(args.out, model)
    return 0


def _eval_model(model: MultimodalModel, dataset) -> dict:
    cm = metrics.new_confusion(dataset[0][0].num_classes)
    for pair in dataset:
        cache = coupled.forward_coupled(model, *pair)
        metrics.accumulate(cm, coupled.predict_labels(cache), pair[0])
    return metrics.summarize(cm)


def _cmd_eval(args) -> int:
    dataset = data.read_dataset(args.data)
    print(json.dumps(_eval_model(load_model(args.model), dataset)))
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    pair = data.read_grid_pair(args.grid)
    cache = coupled.forward_coupled(model, *pair)
    probs = coupled.fused_probs(cache)
    h, w = probs.shape[:2]
    up = upsample.bilinear_upsample(probs, h * args.scale, w * args.scale)
    labels = upsample.argmax_map(up)
    write_pgm(args.out, labels)
    sidecar = {
        "height": int(labels.shape[0]),
        "width": int(labels.shape[1]),
        "num_classes": int(probs.shape[-1]),
    }
    Path(str(args.out) + ".json").write_text(json.dumps(sidecar) + "\n")
    return 0


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(np.random.SeedSequence((args.seed & (1 << 64) - 1, 0xAC)))
    d_c, d_d, d_h, b = 3, 2, 4, 3
    cfg = train.TrainConfig(hidden_dim=d_h, seed=args.seed)
    model = train.init_model(cfg, (d_c, d_d, d_h, b), args.seed)
    height, width = 2, 3
    labels = rng.integers(0, b, size=(height, width))
    g_c = data.PatchGrid.create(rng.normal(size=(height, width, d_c)), labels, b)
    g_d = data.PatchGrid.create(rng.normal(size=(height, width, d_d)), labels, b)
    cache = coupled.forward_coupled(model, g_c, g_d)
    analytic, _ = coupled.backward_coupled(model, g_c, g_d, cache, FULL)
    numeric = gradcheck.finite_diff_grad(
        lambda m: coupled.loss_coupled(coupled.forward_coupled(m, g_c, g_d), g_c, g_d), model
    )
    errs = gradcheck.relative_error(analytic, numeric)
    for name in sorted(errs):
        print(f"{name}: {errs[name]:.3e}")
    worst_name, worst = gradcheck.worst_block(errs)
    print(f"worst block: {worst_name} ({worst:.3e}), tolerance {args.tol:.1e}")
    return 0 if worst <= args.tol else 1


def _cmd_ablate(args) -> int:
    dataset = data.read_dataset(args.data)
    report = baselines.ablation_report(dataset, _train_config(args))
    Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "gradcheck": _cmd_gradcheck,
    "ablate": _cmd_ablate,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        argv, config_path = _extract_config(argv)
        if config_path:
            _apply_config(subs, config_path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
