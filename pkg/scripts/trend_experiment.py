"""Exploration script for the multi-view trend check (not part of the suite).

Trains the four ablation variants over several seeds and prints held-out
VER so the acceptance-test configuration can be pinned with evidence.
"""

import sys
import tempfile
import time
from pathlib import Path

from mvlip.dataio import GenConfig, generate_synthetic
from mvlip.model import ModelConfig
from mvlip.train import TrainConfig, train, evaluate_ver, _load_dataset

FRAME = int(sys.argv[1]) if len(sys.argv) > 1 else 24
EPOCHS = int(sys.argv[2]) if len(sys.argv) > 2 else 45
CELL = int(sys.argv[3]) if len(sys.argv) > 3 else 128
SEEDS = [int(s) for s in sys.argv[4].split(",")] if len(sys.argv) > 4 else [0, 1, 2]

CONV = (8, 16, 32, 48) if CELL <= 128 else (16, 32, 64, 96)
VIEWS = (0, 30, 45, 60, 90)


def variant_cfg(views, scorer="location_aware"):
    return ModelConfig(views=views, scorer=scorer, conv_channels=CONV, cell_size=CELL)


def main():
    root = Path(tempfile.mkdtemp())
    gen = GenConfig(
        num_clips=64,
        views=VIEWS,
        t_range=(6, 9),
        frame_size=(FRAME, FRAME),
        noise_level=0.02,
        seed=100,
        class_weights={"C": 3.0, "D": 3.0, "G": 3.0, "H": 3.0},
        splits=(("train", 0.75), ("test", 0.25)),
        appearance_jitter=0.4,
        grammar="cv",
    )
    manifest = generate_synthetic(gen, root / "data")
    n_train = len([r for r in manifest.records if r.split == "train"])
    n_test = len([r for r in manifest.records if r.split == "test"])
    print(f"dataset: {n_train} train / {n_test} test @ {FRAME}x{FRAME}")

    test_records = [r for r in manifest.records if r.split == "test"]
    test_all = _load_dataset(manifest, test_records, VIEWS)
    test_front = _load_dataset(manifest, test_records, (0,))

    variants = {
        "multi_hybrid": (VIEWS, 0.4, 0.3),
        "single_hybrid": ((0,), 0.4, 0.3),
        "multi_ctc": (VIEWS, 1.0, 1.0),
        "multi_att": (VIEWS, 0.0, 0.0),
    }
    results = {}
    for seed in SEEDS:
        for name, (views, alpha, lam) in variants.items():
            tcfg = TrainConfig(epochs=EPOCHS, batch_size=16, ctc_weight=alpha,
                               learning_rate=0.002, patience=1000)
            t0 = time.time()
            model, hist = train(manifest, variant_cfg(views), tcfg, seed,
                                root / f"run-{name}-{seed}")
            data = test_front if views == (0,) else test_all
            ver = evaluate_ver(model, data, beam_width=5, ctc_weight=lam)
            results[(name, seed)] = ver
            print(f"seed {seed} {name:14s} ver {ver:.3f} "
                  f"(loss {hist[-1].train_loss:.2f}, {time.time()-t0:.0f}s)",
                  flush=True)

    print("\nper-seed trend:")
    wins = 0
    for seed in SEEDS:
        mh = results[("multi_hybrid", seed)]
        ok = (mh <= results[("single_hybrid", seed)]
              and mh <= results[("multi_ctc", seed)]
              and mh <= results[("multi_att", seed)])
        wins += ok
        print(f"  seed {seed}: multi_hybrid {mh:.3f} "
              f"single {results[('single_hybrid', seed)]:.3f} "
              f"ctc {results[('multi_ctc', seed)]:.3f} "
              f"att {results[('multi_att', seed)]:.3f} -> {'OK' if ok else 'FAIL'}")
    print(f"majority: {wins}/{len(SEEDS)}")


if __name__ == "__main__":
    main()
