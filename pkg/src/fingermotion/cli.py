"""Command-line entry point.

Every failure prints one line ``error: <category>: <detail>`` to stderr and
exits with status 2 (usage and input errors) or 1 (failed checks).

Config files are flat ``key = value`` text; keys are the field names of
:class:`~fingermotion.model.ModelConfig` and
:class:`~fingermotion.trainer.TrainConfig`. Lists are comma separated and
edges are written ``a-b``::

    # desk-scale run
    batch_size = 64
    epochs = 3
    stride = 20
    horizon_weights = 1,1,1,1,1,1,1,1,1,1
"""
import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path


from .errors import ConfigError, FingerMotionError

_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(key, raw, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in _BOOL:
                raise ValueError(raw)
            return _BOOL[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if key == "edges":
            return tuple(tuple(e.strip().split("-", 1)) for e in raw.split(",") if e.strip())
        if key == "joints":
            return tuple(j.strip() for j in raw.split(",") if j.strip())
        if isinstance(default, tuple):
            kind = int if default and isinstance(default[0], int) else float
            return tuple(kind(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_config(text, source="<config>"):
    """Split a flat config document into ``(model_kwargs, train_kwargs)``."""
    from .model import ModelConfig
    from .trainer import TrainConfig

    model_defaults = {f.name: getattr(ModelConfig(), f.name) for f in fields(ModelConfig)}
    train_defaults = {f.name: getattr(TrainConfig(), f.name) for f in fields(TrainConfig)}
    model_kw, train_kw = {}, {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in model_defaults:
            model_kw[key] = _coerce(key, value, model_defaults[key])
        elif key in train_defaults:
            train_kw[key] = _coerce(key, value, train_defaults[key])
        else:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
    return model_kw, train_kw


def load_config(path=None, **model_overrides):
    from .model import ModelConfig
    from .trainer import TrainConfig

    model_kw, train_kw = ({}, {}) if path is None else parse_config(Path(path).read_text(), str(path))
    model_kw.update(model_overrides)
    return ModelConfig(**model_kw), TrainConfig(**train_kw)


def _times(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad --times-ms list {text!r}") from None


# -- subcommands ------------------------------------------------------------------

def cmd_synth(args):
    from .data import SynthSpec, synth_dataset, synth_generate, write_motion_csv

    extra = {"layout": args.layout, "rate_hz": args.rate_hz}
    if args.coupling is not None:
        extra["finger_coupling"] = args.coupling
    if args.noise is not None:
        extra["noise_ratio"] = args.noise
    out = Path(args.out)
    if out.suffix == ".csv":
        seq = synth_generate(SynthSpec(duration_s=args.minutes * 60.0, seed=args.seed, **extra))
        out.parent.mkdir(parents=True, exist_ok=True)
        write_motion_csv(seq, out)
        print(json.dumps({"path": str(out), "frames": len(seq)}))
    else:
        n = args.recordings
        split = (n - 2, 1, 1) if n >= 3 else (n, 0, 0)
        seqs = synth_dataset(out, args.minutes, n_recordings=n, split=split, seed=args.seed, **extra)
        print(json.dumps({"path": str(out), **{k: len(v) for k, v in seqs.items()}}))


def cmd_train(args):
    from .data import load_splits
    from .trainer import train

    overrides = {}
    if args.no_kfe:
        overrides["use_kfe"] = False
    if args.no_gcn:
        overrides["use_gcn"] = False
    model_cfg, train_cfg = load_config(args.config, **overrides)
    if args.deterministic:
        train_cfg.deterministic = True
    splits = load_splits(args.data)
    t_s = splits["train"][0].t_s
    if abs(t_s - model_cfg.t_s) > 1e-9:
        from dataclasses import replace
        from .data import default_horizons_ms
        model_cfg = replace(model_cfg, t_s=t_s, horizons_ms=default_horizons_ms(t_s))
    log = args.log or str(Path(args.out).with_suffix(".log.csv"))

    def progress(row):
        print(json.dumps({k: (round(v, 6) if isinstance(v, float) else v) for k, v in row.items()}),
              flush=True)

    result = train(splits, model_cfg, train_cfg, out=args.out, log_path=log,
                   snapshot=args.snapshot, resume=args.resume, progress=progress)
    if not Path(args.out).exists():
        from .checkpoint import save_model
        save_model(result.model, args.out)
    print(json.dumps({"checkpoint": args.out, "log": log, "best_epoch": result.best_epoch}))


def cmd_eval(args):
    from .data import load_splits
    from .evaluator import evaluate

    from .checkpoint import load_model
    model = load_model(args.ckpt)[0]
    seqs = load_splits(args.data)[args.split]
    if not seqs:
        raise ConfigError(f"split {args.split!r} under {args.data} is empty")
    times = _times(args.times_ms) if args.times_ms else None
    report = evaluate(model, seqs, times, stride=args.stride)
    report.to_csv(args.report)
    print(report.format())


def cmd_predict(args):
    from .checkpoint import load_model
    from .data import horizon_frames, load_motion_csv

    model = load_model(args.ckpt)[0]
    seq = load_motion_csv(args.window)
    W = model.cfg.window
    if len(seq) < W:
        raise ConfigError(f"{args.window}: {len(seq)} frames, the model needs {W}")
    horizon_frames(args.t_ms, seq.t_s)
    window = seq.frames[-W:]
    pose = model.predict(window, [args.t_ms / 1000.0])[0]
    names = model.cfg.skeleton.channel_names()
    print(json.dumps({"t_ms": args.t_ms, "pose": dict(zip(names, pose.tolist()))}))
    if args.export_pose:
        with open(args.export_pose, "w") as fh:
            fh.write(f"# unit: {seq.meta.unit}\n# t_ms: {args.t_ms:g}\n")
            fh.write("joint,x,y,z,x0,y0,z0\n")
            last = window[-1]
            for j, name in enumerate(model.cfg.skeleton.joints):
                vals = list(pose[3 * j:3 * j + 3]) + list(last[3 * j:3 * j + 3])
                fh.write(name + "," + ",".join(repr(float(v)) for v in vals) + "\n")


def cmd_params(args):
    from .model import parameter_count

    model_cfg, _ = load_config(args.config)
    print(json.dumps(parameter_count(model_cfg)))


def cmd_gradcheck(args):
    from .diagnostics import gradcheck_suite

    results = gradcheck_suite(full=args.full)
    ok = True
    for name, err, tol in results:
        passed = err < tol
        ok &= passed
        print(json.dumps({"check": name, "max_rel_error": err, "tol": tol, "pass": passed}))
    if not ok:
        print("error: gradcheck: relative error above tolerance", file=sys.stderr)
        return 1
    return 0


class _Parser(argparse.ArgumentParser):
    """Argument errors follow the same one-line format as every other failure."""

    def error(self, message):
        self.exit(2, f"error: usage: {message}\n")


def build_parser():
    ap = _Parser(prog="fingermotion", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write synthetic recordings")
    p.add_argument("--out", required=True, help="a .csv file, or a directory for train/val/test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--minutes", type=float, default=10.0)
    p.add_argument("--rate-hz", type=float, default=100.0, choices=(100.0, 90.0))
    p.add_argument("--layout", default="vrhands14", choices=("vrhands14", "reinterhand21"))
    p.add_argument("--recordings", type=int, default=10)
    p.add_argument("--coupling", type=float, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.add_argument("--snapshot", help="resumable full-precision state, rewritten every epoch")
    p.add_argument("--resume", help="continue from a snapshot")
    p.add_argument("--no-kfe", action="store_true")
    p.add_argument("--no-gcn", action="store_true")
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against zero velocity")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--times-ms")
    p.add_argument("--report", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict the pose t ms after a window")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--window", required=True, help="motion CSV; its last frames form the window")
    p.add_argument("--t-ms", type=float, required=True)
    p.add_argument("--export-pose")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("params", help="parameter counts")
    p.add_argument("--config")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--full", action="store_true", help="also check the ablation variants and a three-joint model")
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except FingerMotionError as e:
        print(f"error: {e.category}: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
