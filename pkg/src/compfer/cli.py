"""Command-line entry point: ``compfer <command> [flags]``.

Every command prints its resolved configuration (JSON) before doing any work.
Settings come from built-in defaults, then ``--config`` JSON, then explicit
flags; flags win. Exit codes: 0 success, 2 usage or parse errors, 3 runtime
failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from compfer.autodiff.checkpoint import load_checkpoint
from compfer.codec.bitstream import CodecParams, _iter_raw, decode_video, encode_video, read_compressed
from compfer.codec.frames import Frame, read_image, write_ppm
from compfer.errors import ConfigError, DimensionError, ParseError
from compfer.model.config import ModelConfig
from compfer.pipeline.ablation import run_ablations, write_ablation_csv
from compfer.pipeline.bench import bench_throughput
from compfer.pipeline.config import TAGS, FoldPlan, RunConfig, make_folds
from compfer.pipeline.data import load_corpus
from compfer.pipeline.evaluate import CrossValidation, evaluate
from compfer.pipeline.reports import EvalReport, as_jsonable, save_fold_checkpoints, write_json
from compfer.pipeline.train import fit_identity_encoder, train_fold
from compfer.synthdata.corpus import DatasetManifest, ManifestRecord, build_corpus, load_external

log = logging.getLogger("compfer")

USAGE_ERRORS = (ParseError, ConfigError, DimensionError, ValueError, OSError)


class UsageError(Exception):
    """Bad flag values detected after argument parsing."""


# --- helpers -------------------------------------------------------------------

def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {v}")
    return v


def nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def load_json_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return cfg


def merge(defaults: dict, config: dict, flags: dict) -> dict:
    unknown = set(config) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    out = {**defaults, **config}
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def show(resolved: dict) -> None:
    print("config: " + json.dumps(as_jsonable(resolved), sort_keys=True), flush=True)


def out_dir(args) -> Path:
    p = Path(args.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def tree_digest(root) -> str:
    """sha256 over every file below ``root`` (relative path + contents, sorted)."""
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def read_frame_dir(path: Path) -> list[Frame]:
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".ppm", ".png"))
    if not files:
        raise ParseError(f"{path}: no PPM/PNG frames", 0)
    frames = [read_image(p) for p in files]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise DimensionError(f"{path}: frames differ in size {sorted(shapes)}")
    return frames


# --- codec commands ------------------------------------------------------------

CODEC_DEFAULTS = {"gop": 16, "block": 8, "radius": 7, "qstep": 4}


def codec_settings(args) -> CodecParams:
    s = merge(CODEC_DEFAULTS, load_json_config(args.config),
              {"gop": args.gop, "block": args.block, "radius": args.radius, "qstep": args.qstep})
    show({"command": args.command, "input": str(args.input), "out": str(args.out), "seed": seed_of(args), **s})
    return CodecParams(s["gop"], s["block"], s["radius"], s["qstep"])


def cmd_encode(args) -> int:
    params = codec_settings(args)
    src = Path(args.input)
    if src.is_dir():
        frames = read_frame_dir(src)
        bs = encode_video(frames, params.gop_length, params.block_size, params.search_radius,
                          params.quantizer_step)
        blob = bs.to_bytes()
        Path(args.out).write_bytes(blob)
        raw = sum(f.levels.nbytes for f in frames)
        print(f"frames={len(frames)} bytes={len(blob)} compression_ratio={raw / len(blob):.3f}")
        return 0
    if not src.is_file():
        raise ParseError(f"{src}: no such file or directory", 0)
    # a manifest: encode every sequence into the --out directory
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest.read_csv(src)
    records, raw, packed = [], 0, 0
    for rec, seq in zip(manifest.records, load_external(src)):
        bs = encode_video(seq.frames, params.gop_length, params.block_size, params.search_radius,
                          params.quantizer_step)
        name = f"{len(records):05d}_{Path(rec.path).stem}.rgop"
        blob = bs.to_bytes()
        (dest / name).write_bytes(blob)
        raw += sum(f.levels.nbytes for f in seq.frames)
        packed += len(blob)
        records.append(ManifestRecord(name, rec.subject, rec.label, rec.apex_index, len(seq.frames)))
    DatasetManifest(records, dest).write_csv(dest / "manifest.csv")
    ratio = raw / packed if packed else float("nan")
    print(f"sequences={len(records)} bytes={packed} compression_ratio={ratio:.3f}")
    return 0


def cmd_decode(args) -> int:
    show({"command": "decode", "input": str(args.input), "out": str(args.out), "seed": seed_of(args)})
    frames = decode_video(Path(args.input).read_bytes())
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        write_ppm(dest / f"frame_{i:04d}.ppm", f)
    print(f"frames={len(frames)}")
    return 0


def cmd_inspect(args) -> int:
    show({"command": "inspect", "input": str(args.input), "gop": args.gop, "frame": args.frame,
          "dump_residual": args.dump_residual, "dump_motion": args.dump_motion, "seed": seed_of(args)})
    blob = Path(args.input).read_bytes()
    it = _iter_raw(blob)
    h, w, bsz, qstep, gop_count = next(it)
    p_counts = [len(recs) for _, recs in it]
    print(f"height={h} width={w} block_size={bsz} quantizer_step={qstep}")
    print(f"gop_count={gop_count}")
    print("p_counts=" + ",".join(map(str, p_counts)))
    dumping = args.dump_residual is not None or args.dump_motion is not None
    if not dumping and args.gop is None and args.frame is None:
        return 0
    gop = args.gop or 0
    frame = args.frame or 0
    if not 0 <= gop < gop_count:
        raise UsageError(f"--gop {gop} out of range [0, {gop_count})")
    if not 0 <= frame < p_counts[gop]:
        raise UsageError(f"--frame {frame} out of range [0, {p_counts[gop]}) in GOP {gop}")
    view = next(v for g, v in enumerate(read_compressed(blob)) if g == gop)
    mv, res = view.p_frames[frame]
    print(f"gop={gop} frame={frame} max_motion={mv.max_magnitude()} "
          f"residual_abs_max={int(np.abs(res.levels).max())}")
    if args.dump_residual:
        # bias-shift [-255, 255] into [0, 1]: zero residual becomes mid-gray
        write_ppm(args.dump_residual, Frame.from_float((res.levels / 255.0 + 1.0) / 2.0))
    if args.dump_motion:
        with open(args.dump_motion, "w", encoding="utf-8") as fh:
            fh.write("block_row,block_col,dy,dx\n")
            gh, gw = mv.grid_shape
            for by in range(gh):
                for bx in range(gw):
                    dy, dx = mv.vectors[by, bx]
                    fh.write(f"{by},{bx},{dy},{dx}\n")
    return 0


# --- data / training commands --------------------------------------------------

GEN_DEFAULTS = {"subjects": 20, "per_class": 1, "frames": 16, "size": 64, "apex_policy": "last",
                "gop": None, "block": 8, "radius": 7, "qstep": 4, "folds": 10}


def cmd_gen_data(args) -> int:
    s = merge(GEN_DEFAULTS, load_json_config(args.config),
              {"subjects": args.subjects, "per_class": args.per_class, "frames": args.frames,
               "size": args.size, "apex_policy": args.apex_policy, "qstep": args.qstep, "gop": args.gop})
    s["gop"] = s["gop"] or s["frames"]
    show({"command": "gen-data", "seed": seed_of(args), "out_dir": str(args.out_dir), **s})
    dest = out_dir(args)
    codec = CodecParams(s["gop"], s["block"], s["radius"], s["qstep"])
    manifest = build_corpus(s["subjects"], s["per_class"], s["frames"], dest, seed_of(args), s["size"],
                            s["apex_policy"], codec, s["folds"])
    print(f"sequences={len(manifest)} corpus_sha256={tree_digest(dest)}")
    return 0


def run_config(args) -> RunConfig:
    """RunConfig from defaults, ``--config`` and flags; ``--tag`` derives the ablation variant."""
    cfg = load_json_config(args.config)
    flags = {"alpha": args.alpha, "beta": args.beta, "e_warm": args.e_warm, "epochs": args.epochs,
             "batch_size": args.batch_size, "lr": args.lr, "k": args.k, "seed": seed_of(args)}
    merged = merge(RunConfig().to_dict(), cfg, flags)
    tag = getattr(args, "tag", None) or merged["tag"]
    if tag == "no_apex" and merged["beta"] != 0 and (args.beta is not None or "beta" in cfg):
        raise ConfigError("tag no_apex requires beta = 0")
    model = merged["model"]
    model = model if isinstance(model, ModelConfig) else ModelConfig.from_dict(model)
    model = replace(model, fer=replace(model.fer, input_mode="residual_only"))
    return RunConfig.from_dict({**merged, "tag": "base", "model": model}).with_tag(tag)


def seed_of(args) -> int:
    return 0 if args.seed is None else args.seed


def _train_one(job):
    data, plan, fold, cfg, identity = job
    return train_fold(data, plan, fold, cfg, identity)


def cmd_train(args) -> int:
    cfg = run_config(args)
    show({"command": "train", "data": str(args.data), "out_dir": str(args.out_dir),
          "folds": args.fold, "workers": args.workers, "run": cfg.to_dict()})
    data = load_corpus(args.data)
    plan = make_folds(data.subjects, cfg.k, cfg.seed)
    folds = sorted(set(args.fold)) if args.fold else list(range(plan.k))
    for f in folds:
        if not 0 <= f < plan.k:
            raise UsageError(f"--fold {f} out of range [0, {plan.k})")
    identity = fit_identity_encoder(data, cfg.model, cfg.seed, cfg.id_epochs)
    jobs = [(data, plan, f, cfg, identity) for f in folds]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_train_one(job))
            log.info("fold %d trained", job[2])
    cv = CrossValidation(cfg, plan, [], results, identity.digest)
    dest = out_dir(args)
    hashes = save_fold_checkpoints(cv, dest / "checkpoints")
    write_json(dest / "train_log.json", {str(r.fold): r.log for r in results})
    write_json(dest / "plan.json", {"k": plan.k, "seed": plan.seed, "assignment": plan.assignment,
                                    "digest": plan.digest()})
    for f, h in sorted(hashes.items()):
        print(f"fold={f} checkpoint_sha256={h}")
    return 0


def _load_fold_checkpoints(ckpt_dir: Path):
    paths = sorted(ckpt_dir.glob("fold*.rprm"), key=lambda p: int(p.stem[4:]))
    if not paths:
        raise ParseError(f"{ckpt_dir}: no fold checkpoints", 0)
    out = []
    for p in paths:
        params, manifest = load_checkpoint(p)
        if manifest is None:
            raise ParseError(f"{p}: missing manifest {p}.json", 0)
        out.append((params, manifest))
    return out


def cmd_eval(args) -> int:
    ckpt_dir = Path(args.checkpoints) if args.checkpoints else Path(args.out_dir) / "checkpoints"
    show({"command": "eval", "data": str(args.data), "checkpoints": str(ckpt_dir),
          "out_dir": str(args.out_dir), "seed": seed_of(args)})
    data = load_corpus(args.data)
    folds, counts, config = {}, None, None
    for params, man in _load_fold_checkpoints(ckpt_dir):
        plan = FoldPlan(man["k"], man["assignment"], man["plan_seed"])
        model = ModelConfig.from_dict(man["config"]["model"])
        ev = evaluate(params, model, data, plan, man["fold"])
        folds[ev.fold] = ev.accuracy
        counts = ev.counts if counts is None else counts + ev.counts
        config = man["config"]
    report = EvalReport.from_folds(folds, counts, config,
                                   {"run": config["seed"], "folds": plan.seed}, plan.digest())
    report.write(out_dir(args))
    print(f"mean_accuracy={report.mean_accuracy:.4f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = run_config(args)
    seeds = tuple(args.seeds) if args.seeds else (cfg.seed,)
    show({"command": "ablate", "data": str(args.data), "out_dir": str(args.out_dir),
          "seeds": seeds, "bench_repeats": args.repeats, "run": cfg.to_dict()})
    data = load_corpus(args.data)
    plan = make_folds(data.subjects, cfg.k, cfg.seed)
    rows = run_ablations(data, plan, cfg, seeds, args.repeats)
    dest = out_dir(args)
    write_ablation_csv(rows, dest / "ablations.csv")
    for r in rows:
        print(f"tag={r.tag} mean_accuracy={r.mean_accuracy:.4f} compressed_fps={r.compressed_fps:.1f} "
              f"decoded_fps={r.decoded_fps:.1f}")
    return 0


def cmd_bench(args) -> int:
    show({"command": "bench", "data": str(args.data), "checkpoint": str(args.checkpoint),
          "repeats": args.repeats, "out_dir": str(args.out_dir), "seed": seed_of(args)})
    data = load_corpus(args.data)
    params, man = load_checkpoint(args.checkpoint)
    if man is None:
        raise ParseError(f"{args.checkpoint}: missing manifest", 0)
    model = ModelConfig.from_dict(man["config"]["model"])
    res = bench_throughput(data.sources, params, model, args.repeats)
    write_json(out_dir(args) / "bench.json", res.to_dict())
    print(json.dumps(res.to_dict(), sort_keys=True))
    return 0 if res.identical else 3


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--config", type=Path, help="JSON config; explicit flags override it")
    common.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="compfer", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def codec_flags(p):
        p.add_argument("--gop", type=positive_int)
        p.add_argument("--block", type=positive_int)
        p.add_argument("--radius", type=nonneg_int)
        p.add_argument("--qstep", type=positive_int)

    p = sub.add_parser("encode", parents=[common], help="encode frames (or a manifest) to RGOP")
    p.add_argument("--input", type=Path, required=True, help="frame directory or manifest CSV")
    p.add_argument("--out", type=Path, required=True, help="output file (directory for a manifest)")
    codec_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[common], help="decode an RGOP file to PPM frames")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="directory for frame_NNNN.ppm")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("inspect", parents=[common], help="summarise a bitstream, dump residual/motion")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--gop", type=int, help="GOP index (default 0)")
    p.add_argument("--frame", type=int, help="P-frame index inside the GOP (default 0)")
    p.add_argument("--dump-residual", type=Path, help="bias-shifted residual as PPM")
    p.add_argument("--dump-motion", type=Path, help="block motion vectors as CSV")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("gen-data", parents=[common], help="render and encode the synthetic corpus")
    p.add_argument("--subjects", type=positive_int)
    p.add_argument("--per-class", type=positive_int)
    p.add_argument("--frames", type=positive_int)
    p.add_argument("--size", type=positive_int)
    p.add_argument("--apex-policy", choices=("last", "middle"))
    p.add_argument("--gop", type=positive_int)
    p.add_argument("--qstep", type=positive_int)
    p.set_defaults(func=cmd_gen_data)

    def run_flags(p, tag=True):
        p.add_argument("--data", type=Path, required=True, help="corpus manifest.csv")
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--e-warm", type=nonneg_int)
        p.add_argument("--epochs", type=positive_int)
        p.add_argument("--batch-size", type=positive_int)
        p.add_argument("--lr", type=float)
        p.add_argument("--k", type=positive_int, help="number of folds")
        if tag:
            p.add_argument("--tag", choices=TAGS)

    p = sub.add_parser("train", parents=[common], help="train fold models")
    run_flags(p)
    p.add_argument("--fold", type=int, action="append", help="train only this fold (repeatable)")
    p.add_argument("--workers", type=positive_int, default=1, help="folds trained in parallel")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate fold checkpoints")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoints", type=Path, help="checkpoint directory (default OUT_DIR/checkpoints)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="base / no_apex / plus_motion comparison")
    run_flags(p, tag=False)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--repeats", type=positive_int, default=5)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", parents=[common], help="compressed vs decoded throughput")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--repeats", type=positive_int, default=5)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, *USAGE_ERRORS) as err:
        print(f"compfer {args.command}: error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - any other failure is a runtime error
        print(f"compfer {args.command}: runtime failure: {type(err).__name__}: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
