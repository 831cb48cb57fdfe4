"""Command-line entry point: data generation through study serving."""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import (
    cumulative_attention,
    format_important_visemes,
    important_visemes,
    top_frames,
    view_importance,
)
from .attention import AttentionTrace
from .beam import DecodeConfig, joint_beam_search
from .checkpoint import load_model
from .compressor import apply_plan, compression_factor, plan, uniform_baseline
from .dataio import (
    GenConfig,
    export_frames_png,
    load_manifest,
    save_frames,
)
from .metrics import evaluate_pairs
from .model import ModelConfig
from .train import TrainConfig, train as run_training
from .vocab import build_vocabulary


def _parse_views(text: str):
    return tuple(int(v) for v in text.split(",") if v.strip() != "")


def _parse_splits(text: str):
    out = []
    for part in text.split(","):
        name, frac = part.split("=")
        out.append((name.strip(), float(frac)))
    return tuple(out)


def _run_dir(base: str | None, config: dict) -> Path:
    """Content-addressed run directory unless an explicit --out is given."""
    if base:
        out = Path(base)
    else:
        digest = hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()
        ).hexdigest()[:8]
        stamp = time.strftime("%Y%m%d-%H%M%S")
        out = Path("runs") / f"{stamp}-{digest}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return out


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True) + "\n")


@click.group(name="mvlip")
@click.version_option(__version__)
def main():
    """Multi-view lipreading: generate, train, decode, analyze, compress."""


@main.command("gen-data")
@click.option("--out", required=True, type=click.Path())
@click.option("--num-clips", default=30, show_default=True)
@click.option("--views", default="0,30,45,60,90", show_default=True)
@click.option("--t-min", default=6, show_default=True)
@click.option("--t-max", default=12, show_default=True)
@click.option("--frame-size", default=64, show_default=True)
@click.option("--noise", default=0.02, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--splits", default="train=1.0", show_default=True,
              help="e.g. train=0.8,val=0.1,test=0.1")
@click.option("--class-weights", default="", help="e.g. C=3,D=3,G=3,H=3")
@click.option("--grammar", default="uniform", show_default=True,
              type=click.Choice(["uniform", "cv"]))
@click.option("--appearance-jitter", default=1.0, show_default=True,
              help="scale of per-clip brightness/size/position variation")
def gen_data(out, num_clips, views, t_min, t_max, frame_size, noise, seed,
             splits, class_weights, grammar, appearance_jitter):
    """Render a synthetic multi-view dataset."""
    weights = None
    if class_weights:
        weights = {k: float(v) for k, v in
                   (p.split("=") for p in class_weights.split(","))}
    cfg = GenConfig(
        num_clips=num_clips,
        views=_parse_views(views),
        t_range=(t_min, t_max),
        frame_size=(frame_size, frame_size),
        noise_level=noise,
        seed=seed,
        class_weights=weights,
        splits=_parse_splits(splits),
        grammar=grammar,
        appearance_jitter=appearance_jitter,
    )
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps({
        "subcommand": "gen-data", "num_clips": num_clips, "views": list(cfg.views),
        "t_range": list(cfg.t_range), "frame_size": frame_size, "noise": noise,
        "seed": seed, "splits": splits, "class_weights": class_weights,
        "grammar": grammar, "appearance_jitter": appearance_jitter,
    }, indent=2, sort_keys=True) + "\n")
    from .dataio import generate_synthetic
    manifest = generate_synthetic(cfg, out)
    click.echo(f"wrote {len(manifest)} clips under {out}")


@main.command("train")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--views", default=None, help="defaults to the views in the manifest")
@click.option("--scorer", default="location_aware", show_default=True,
              type=click.Choice(["additive", "multiplicative", "location_aware"]))
@click.option("--cell-size", default=256, show_default=True)
@click.option("--epochs", default=100, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--ctc-weight-train", "alpha", default=0.4, show_default=True)
@click.option("--lr", default=0.001, show_default=True)
@click.option("--label-smoothing", default=0.1, show_default=True)
@click.option("--dropout", default=0.1, show_default=True)
@click.option("--patience", default=10, show_default=True)
def train_cmd(manifest_path, out, seed, views, scorer, cell_size, epochs,
              batch_size, alpha, lr, label_smoothing, dropout, patience):
    """Train the hybrid recognizer on a manifest's train split."""
    manifest = load_manifest(manifest_path)
    if views is None:
        present = sorted({v for r in manifest.records for v in r.views})
        view_tuple = tuple(present)
    else:
        view_tuple = _parse_views(views)
    model_cfg = ModelConfig(views=view_tuple, scorer=scorer, cell_size=cell_size)
    train_cfg = TrainConfig(
        ctc_weight=alpha, learning_rate=lr, batch_size=batch_size, epochs=epochs,
        label_smoothing=label_smoothing, dropout=dropout, patience=patience,
    )
    run = _run_dir(out, {
        "subcommand": "train", "manifest": str(manifest_path), "seed": seed,
        "views": list(view_tuple), "scorer": scorer, "cell_size": cell_size,
        "train": train_cfg.to_dict(),
    })
    model, history = run_training(manifest, model_cfg, train_cfg, seed, run)
    from .report import save_training_curve
    save_training_curve(history, run / "training_curve.png")
    final = history[-1]
    click.echo(f"trained {len(history)} epochs; final loss {final.train_loss:.4f}; "
               f"checkpoint at {run / 'checkpoint.mvck'}")


@main.command("decode")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, type=click.Path())
@click.option("--beam", default=5, show_default=True)
@click.option("--ctc-weight", "lam", default=0.3, show_default=True)
@click.option("--split", default=None, help="restrict to one manifest split")
def decode_cmd(ckpt, manifest_path, out, beam, lam, split):
    """Joint CTC/attention beam decoding; writes hypotheses and traces."""
    model, _ = load_model(ckpt)
    manifest = load_manifest(manifest_path)
    records = [r for r in manifest.records if split is None or r.split == split]
    if not records:
        raise click.ClickException(f"no records in split {split!r}")
    run = _run_dir(out, {
        "subcommand": "decode", "ckpt": str(ckpt), "manifest": str(manifest_path),
        "beam": beam, "ctc_weight": lam, "split": split,
    })
    (run / "traces").mkdir(exist_ok=True)
    cfg = DecodeConfig(beam_width=beam, ctc_weight=lam)
    lines = []
    for rec in records:
        clip = manifest.load_clip(rec)
        enc = model.encode(clip.views)
        hyp, trace, best = joint_beam_search(model, enc, cfg, clip_id=rec.clip_id)
        trace.save_json(run / "traces" / f"{rec.clip_id}.json")
        lines.append(json.dumps({
            "clip_id": rec.clip_id,
            "hypothesis": hyp,
            "reference": rec.transcript,
            "att_logp": best.att_logp,
            "ctc_logp": best.ctc_prefix_logp,
            "joint": best.joint,
        }, sort_keys=True))
    (run / "hypotheses.jsonl").write_text("".join(l + "\n" for l in lines))
    click.echo(f"decoded {len(records)} clips into {run}")


@main.command("score")
@click.option("--hyp", "hyp_path", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", default=None, type=click.Path(exists=True),
              help="reference transcripts; defaults to references in the hyp file")
@click.option("--out", default=None, type=click.Path())
def score_cmd(hyp_path, manifest_path, out):
    """Score hypotheses: VER report, confusion CSV, confusion figure."""
    refs = {}
    if manifest_path:
        manifest = load_manifest(manifest_path)
        refs = {r.clip_id: list(r.transcript) for r in manifest.records}
    pairs = []
    for line in Path(hyp_path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        ref = refs.get(obj["clip_id"], obj.get("reference"))
        if ref is None:
            raise click.ClickException(
                f"no reference for clip {obj['clip_id']}; pass --manifest"
            )
        pairs.append((obj["hypothesis"], ref))
    run = _run_dir(out, {"subcommand": "score", "hyp": str(hyp_path),
                         "manifest": str(manifest_path)})
    report = evaluate_pairs(pairs)
    report.save_json(run / "report.json")
    report.save_confusion_csv(run / "confusion.csv")
    from .report import save_confusion_figure
    save_confusion_figure(report, run / "confusion.png")
    click.echo(f"VER {report.ver:.4f} "
               f"(ins {report.insertions} sub {report.substitutions} "
               f"del {report.deletions}) over {report.num_pairs} clips -> {run}")


@main.command("attend")
@click.option("--traces", "traces_dir", required=True, type=click.Path(exists=True))
@click.option("--hyp", "hyp_path", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, type=click.Path())
@click.option("--fraction", default=0.3, show_default=True)
def attend_cmd(traces_dir, hyp_path, manifest_path, out, fraction):
    """Frame importance, important visemes, and view importance from traces."""
    manifest = load_manifest(manifest_path)
    by_id = {r.clip_id: r for r in manifest.records}
    hyps = {}
    for line in Path(hyp_path).read_text().splitlines():
        if line.strip():
            obj = json.loads(line)
            hyps[obj["clip_id"]] = obj["hypothesis"]
    run = _run_dir(out, {"subcommand": "attend", "traces": str(traces_dir),
                         "hyp": str(hyp_path), "manifest": str(manifest_path),
                         "fraction": fraction})
    (run / "importance").mkdir(exist_ok=True)
    (run / "figures").mkdir(exist_ok=True)

    from .report import save_frame_importance_figure, save_view_importance_figure

    vi_pairs = []
    rows = ["clip_id,top_frames,important_visemes"]
    for trace_file in sorted(Path(traces_dir).glob("*.json")):
        trace = AttentionTrace.load_json(trace_file)
        if trace.num_steps == 0:
            continue
        rec = by_id.get(trace.clip_id)
        imp = cumulative_attention(trace)
        top = top_frames(imp, fraction)
        imp.save_json(run / "importance" / f"{trace.clip_id}.json")
        alignment = None
        tokens = []
        if rec is not None and rec.alignment is not None:
            alignment = manifest.load_clip_alignment(rec)
            tokens = important_visemes(top, alignment)
        save_frame_importance_figure(
            imp, top, run / "figures" / f"{trace.clip_id}.png", alignment
        )
        rows.append(
            f"{trace.clip_id},{' '.join(str(t) for t in sorted(top))},"
            f"\"{format_important_visemes(tokens)}\""
        )
        if trace.clip_id in hyps:
            vi_pairs.append((trace, hyps[trace.clip_id]))
    (run / "important_visemes.csv").write_text("\n".join(rows) + "\n")
    if vi_pairs:
        table = view_importance(vi_pairs)
        table.save_csv(run / "view_importance.csv")
        _dump_json(run / "view_importance.json", table.to_dict())
        if table.mean_weights:
            save_view_importance_figure(table, run / "figures" / "view_importance.png")
    click.echo(f"analyzed {len(rows) - 1} traces -> {run}")


@main.command("compress")
@click.option("--traces", "traces_dir", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, type=click.Path())
@click.option("--view", default=0, show_default=True,
              help="camera angle to compress and export")
@click.option("--fps", default=8.0, show_default=True)
@click.option("--study-json/--no-study-json", default=True, show_default=True,
              help="emit a ready-to-serve study config over the media")
def compress_cmd(traces_dir, manifest_path, out, view, fps, study_json):
    """Attention-planned downscaling plus the matched uniform baseline."""
    manifest = load_manifest(manifest_path)
    by_id = {r.clip_id: r for r in manifest.records}
    run = _run_dir(out, {"subcommand": "compress", "traces": str(traces_dir),
                         "manifest": str(manifest_path), "view": view, "fps": fps})
    (run / "plans").mkdir(exist_ok=True)
    (run / "media").mkdir(exist_ok=True)
    rows = ["clip_id,attention_factor,uniform_factor"]
    phrases = []
    for trace_file in sorted(Path(traces_dir).glob("*.json")):
        trace = AttentionTrace.load_json(trace_file)
        rec = by_id.get(trace.clip_id)
        if rec is None or trace.num_steps == 0:
            continue
        clip = manifest.load_clip(rec)
        if view not in clip.views:
            raise click.ClickException(f"clip {rec.clip_id} has no view {view}")
        frames = clip.views[view]
        imp = cumulative_attention(trace)
        att_plan = plan(imp, frames.shape[1:3])
        att_plan.save_json(run / "plans" / f"{rec.clip_id}.attention.json")
        degraded = apply_plan(frames, att_plan)
        factor = compression_factor(att_plan)
        uni_frames, uni_plan = uniform_baseline(frames, min(factor, 0.7499),
                                                clip_id=rec.clip_id)
        uni_plan.save_json(run / "plans" / f"{rec.clip_id}.uniform.json")

        media = run / "media" / rec.clip_id
        for cond, arr in (("O", frames), ("M", degraded), ("V", uni_frames)):
            save_frames(run / "media" / f"{rec.clip_id}.{cond}.vlns", arr)
            export_frames_png(media / cond, arr, fps=fps)
        rows.append(f"{rec.clip_id},{factor:.6f},{compression_factor(uni_plan):.6f}")
        phrases.append(rec)
    (run / "factors.csv").write_text("\n".join(rows) + "\n")

    if study_json and phrases:
        vocab = build_vocabulary()
        texts = {r.clip_id: " ".join(r.transcript) for r in phrases}
        specs = []
        for i, rec in enumerate(phrases[:3]):  # study protocol: 3 phrases
            correct = texts[rec.clip_id]
            # similar-sounding distractor: substitute one viseme deterministically
            symbols = list(rec.transcript)
            pool = [c for c in vocab.viseme_classes if c != symbols[0]]
            similar = " ".join([pool[i % len(pool)]] + symbols[1:])
            others = [texts[r.clip_id] for r in phrases if r.clip_id != rec.clip_id]
            different = (others + ["H H H", "V4 G V4"])[:2]
            specs.append({
                "phrase_id": rec.clip_id,
                "text": correct,
                "media": {c: f"/media/{rec.clip_id}/{c}/meta.json"
                          for c in ("O", "M", "V")},
                "options": [correct, similar] + different,
                "correct_index": 0,
            })
        _dump_json(run / "study.json",
                   {"phrases": specs, "with_audio": False, "seed": 0})
    click.echo(f"compressed {len(rows) - 1} clips -> {run}")


@main.command("study-serve")
@click.option("--study-config", "study_path", required=True, type=click.Path(exists=True))
@click.option("--media-root", required=True, type=click.Path(exists=True))
@click.option("--journal", default="study_journal.jsonl", show_default=True,
              type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8777, show_default=True)
def study_serve_cmd(study_path, media_root, journal, host, port):
    """Serve the human-verification study API over the given media."""
    import uvicorn

    from .evalsvc import StudyConfig, StudyStore, build_app

    store = StudyStore(journal)
    cfg = StudyConfig.from_dict(json.loads(Path(study_path).read_text()))
    study_id = store.create_study(cfg)
    app = build_app(store, media_root=media_root)
    click.echo(f"study {study_id} at http://{host}:{port} "
               f"(journal: {journal})")
    uvicorn.run(app, host=host, port=port, log_level="warning")


def entrypoint(argv=None) -> int:
    try:
        main.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.UsageError as e:
        e.show()
        return 2
    except click.ClickException as e:
        e.show()
        return 1
    except Exception as e:  # structured runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(entrypoint())
