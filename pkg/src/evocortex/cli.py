"""Command-line entry points for the robustness experiment stages."""

import argparse
import json
import os
import sys

import numpy as np


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="evocortex",
        description="Evolve visual-cortex classifiers and measure FGSM "
                    "robustness against a differentiable baseline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the two-class texture dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("evolve", help="evolve a program on a dataset's train split")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="JSON evolution parameters")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-cnn", help="train the differentiable baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("attack", help="craft FGSM sets against a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--eps", default="2,4,8,16,32")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score both classifiers on clean and "
                                        "adversarial sets")
    p.add_argument("--bp", required=True, help="best individual file")
    p.add_argument("--svm", required=True, help="svm model file")
    p.add_argument("--cnn", required=True, help="cnn model file")
    p.add_argument("--data", required=True)
    p.add_argument("--adv", required=True, help="attack output directory")
    p.add_argument("--out", required=True)

    p = sub.add_parser("run-all", help="run the full experiment from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--quiet", action="store_true")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except Exception as exc:
        stage = getattr(exc, "stage", args.command)
        print(f"error in {stage}: {exc}", file=sys.stderr)
        return 1


def _manifest_for(data_dir, seed=0):
    from . import harness

    path = os.path.join(data_dir, "manifest.json")
    if os.path.exists(path):
        return harness.load_manifest(path)
    return harness.ingest_dataset(data_dir, seed=seed)


def _dispatch(args):
    from . import harness

    if args.command == "gen-data":
        manifest = harness.make_texture_dataset(args.out, args.per_class,
                                                args.seed)
        counts = manifest.counts()
        print(f"wrote {sum(counts.values())} images: {counts}")
        return 0

    if args.command == "evolve":
        from . import avc, engine

        manifest = _manifest_for(args.data)
        params = {}
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                params = json.load(fh)
        working_size = params.pop("working_size", harness.TEXTURE_SIZE)
        evo = engine.EvolutionConfig(**params)
        pairs = harness.load_split(manifest, "train")
        evaluator = avc.FitnessEvaluator(pairs, n=evo.descriptor_n,
                                         seed=evo.seed,
                                         working_size=working_size,
                                         dtype=np.float32)
        best, history = engine.evolve(
            None, evo, fitness_fn=evaluator,
            on_generation=lambda r: print(
                f"gen {r.generation}: best={r.best_fitness:.4f} "
                f"mean={r.mean_fitness:.4f}"))
        os.makedirs(args.out, exist_ok=True)
        engine.save_individual(best, os.path.join(args.out,
                                                  "best_individual.txt"))
        engine.save_history(history, args.out)
        print(f"best fitness {best.fitness:.4f}")
        return 0

    if args.command == "train-cnn":
        from . import cnn

        manifest = _manifest_for(args.data)
        cfg = cnn.CnnConfig(seed=args.seed)
        X, y = harness._load_image_batch(manifest.root,
                                         manifest.splits["train"],
                                         cfg.input_size)
        model, stats = cnn.train_model((X, harness._class_index(y)), cfg)
        os.makedirs(args.out, exist_ok=True)
        cnn.save_model(model, os.path.join(args.out, "cnn_model.bin"))
        with open(os.path.join(args.out, "cnn_stats.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(stats, fh, indent=2)
        print(f"train accuracy {stats['train_accuracy']:.4f}")
        return 0

    if args.command == "attack":
        from . import cnn

        manifest = _manifest_for(args.data)
        model = cnn.load_model(args.model)
        epsilons = tuple(int(e) for e in args.eps.split(","))
        entries = manifest.splits[harness._eval_split_name(manifest)]
        os.makedirs(args.out, exist_ok=True)
        harness.generate_attack_sets(model, manifest, entries, epsilons,
                                     args.out)
        print(f"wrote adversarial sets for eps={list(epsilons)}")
        return 0

    if args.command == "evaluate":
        return _evaluate_cmd(args)

    if args.command == "run-all":
        config = harness.ExperimentConfig.from_json(args.config)
        report = harness.run_experiment(config, force=args.force,
                                        verbose=not args.quiet)
        for method in sorted(report.rows):
            row = report.rows[method]
            eps = " ".join(f"e{e}={row[f'eps_{e}']:.4f}"
                           for e in report.epsilons)
            print(f"{method}: train={row['train']:.4f} "
                  f"clean={row['clean']:.4f} {eps}")
        return 0

    raise ValueError(f"unknown command {args.command!r}")


def _evaluate_cmd(args):
    from . import avc, cnn, engine, harness, svm

    manifest = _manifest_for(args.data)
    entries = manifest.splits[harness._eval_split_name(manifest)]
    best = engine.load_individual(args.bp)
    svm_model, scaler = svm.load_model(args.svm)
    model = cnn.load_model(args.cnn)
    os.makedirs(args.out, exist_ok=True)

    sets = {"clean": manifest.root}
    for name in sorted(os.listdir(args.adv)):
        if name.startswith("eps_") and os.path.isdir(
                os.path.join(args.adv, name)):
            sets[name] = os.path.join(args.adv, name)

    accs = {"bp": {}, "cnn": {}}
    for name, root in sets.items():
        desc = harness.describe_entries(best, root, entries,
                                        svm_model.weights.shape[0],
                                        harness.TEXTURE_SIZE)
        preds = svm.predict(svm_model, svm.apply_scaler(scaler, desc))
        labels = np.array([lab for _, lab in entries])
        accs["bp"][name] = svm.accuracy(preds, labels)
        X, y = harness._load_image_batch(root, entries, model.input_size)
        cls_pred = cnn.predict_classes(model, X)
        accs["cnn"][name] = float(np.mean(cls_pred == harness._class_index(y)))
        print(f"{name}: bp={accs['bp'][name]:.4f} cnn={accs['cnn'][name]:.4f}")

    with open(os.path.join(args.out, "accuracies.json"), "w",
              encoding="utf-8") as fh:
        json.dump(accs, fh, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
