"""Dataset ingestion, texture generation and the robustness experiment.

The experiment evolves a feature-extraction program on the training split,
trains the differentiable baseline on the same split, crafts FGSM examples
against the baseline over a sweep of perturbation strengths, and scores both
classifiers on the clean and perturbed evaluation sets. Attacks are only
ever crafted on the differentiable model and transferred to the evolved
classifier. Every stage checkpoints to its own directory and reruns resume
from the last completed stage.
"""

import hashlib
import json
import os
import shutil
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from PIL import Image

from . import avc, cnn, engine, svm
from .engine import EvolutionConfig
from .cnn import CnnConfig
from .grids import load_image, resize_rgb

TEXTURE_SIZE = 64
STAGES = ("dataset", "evolve", "svm", "cnn", "attack", "evaluate")


class IngestError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass
class DatasetManifest:
    root: str
    classes: list            # two sorted class names
    labels: dict             # class name -> +1 / -1
    splits: dict             # split name -> [[relpath, label], ...]
    seed: int

    def counts(self):
        out = {c: 0 for c in self.classes}
        for entries in self.splits.values():
            for rel, _ in entries:
                out[rel.split(os.sep, 1)[0]] += 1
        return out

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        splits = {k: [[rel, int(lab)] for rel, lab in v]
                  for k, v in d["splits"].items()}
        return cls(root=d["root"], classes=list(d["classes"]),
                   labels={k: int(v) for k, v in d["labels"].items()},
                   splits=splits, seed=int(d["seed"]))


def save_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)


def load_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return DatasetManifest.from_dict(json.load(fh))


IMAGE_EXTS = (".png", ".jpg", ".jpeg")


def ingest_dataset(root, split_spec=(0.75, 0.25, 0.0), seed=0,
                   target_class=None):
    """Deterministic stratified split of a two-class directory dataset.

    root must contain exactly one directory per class; the target class
    (label +1) defaults to the alphabetically first. Writes manifest.json
    into root and returns the manifest.
    """
    if not os.path.isdir(root):
        raise IngestError(f"dataset root {root!r} is not a directory")
    classes = sorted(d for d in os.listdir(root)
                     if os.path.isdir(os.path.join(root, d)))
    if len(classes) != 2:
        raise IngestError(
            f"expected exactly two class directories under {root!r}, "
            f"found {classes}")
    if target_class is None:
        target_class = classes[0]
    if target_class not in classes:
        raise IngestError(f"target class {target_class!r} not in {classes}")
    labels = {c: (1 if c == target_class else -1) for c in classes}

    names = ("train", "validation", "test")
    splits = {name: [] for name in names}
    for ci, cls in enumerate(classes):
        cdir = os.path.join(root, cls)
        files = sorted(f for f in os.listdir(cdir)
                       if f.lower().endswith(IMAGE_EXTS))
        if not files:
            raise IngestError(f"class directory {cdir!r} contains no images")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 17, ci]))
        files = [files[i] for i in rng.permutation(len(files))]
        n = len(files)
        c1 = int(round(n * split_spec[0]))
        c2 = int(round(n * (split_spec[0] + split_spec[1])))
        for name, chunk in zip(names, (files[:c1], files[c1:c2], files[c2:])):
            splits[name] += [[os.path.join(cls, f), labels[cls]] for f in chunk]

    train_labels = {lab for _, lab in splits["train"]}
    if train_labels != {-1, 1}:
        raise IngestError("training split must contain both classes")
    manifest = DatasetManifest(root=os.path.abspath(root), classes=classes,
                               labels=labels, splits=splits, seed=seed)
    save_manifest(manifest, os.path.join(root, "manifest.json"))
    return manifest


def save_png(img, path):
    """Quantize a [0, 1] float image to 8-bit and write a PNG."""
    arr = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def _random_colors(rng, min_contrast=0.4):
    for _ in range(100):
        c0 = rng.uniform(0.0, 1.0, 3)
        c1 = rng.uniform(0.0, 1.0, 3)
        if np.abs(c1 - c0).max() >= min_contrast:
            return c0, c1
    return np.zeros(3), np.ones(3)


def _band_texture(rng, size):
    """Oriented sinusoidal stripe field with random color pair and noise."""
    theta = rng.uniform(0.0, np.pi)
    wavelength = rng.uniform(8.0, 20.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    yy, xx = np.mgrid[0:size, 0:size]
    proj = np.cos(theta) * xx + np.sin(theta) * yy
    s = 0.5 * (1.0 + np.sin(2.0 * np.pi * proj / wavelength + phase))
    return _colorize(rng, s)


def _blob_texture(rng, size):
    """Isotropic cellular field: smoothed noise, same coloring as bands."""
    from .grids import gaussian_blur, minmax_rescale

    sigma = rng.uniform(2.5, 4.0)
    s = minmax_rescale(gaussian_blur(rng.normal(size=(size, size)), sigma))
    return _colorize(rng, s)


def _colorize(rng, s):
    c0, c1 = _random_colors(rng)
    img = c0 + (c1 - c0) * s[..., None]
    img = img + rng.normal(0.0, 0.03, img.shape)
    return np.clip(img, 0.0, 1.0)


def make_texture_dataset(out_dir, per_class, seed,
                         split_spec=(0.75, 0.25, 0.0)):
    """Generate the two texture families as PNG files and ingest them.

    Class "bands" holds oriented stripe fields, class "blobs" isotropic
    cellular fields; both share the same color distribution so that mean
    color carries no class signal. Files are deterministic per seed.
    """
    if per_class < 20:
        raise ValueError(f"per_class must be >= 20, got {per_class}")
    makers = {"bands": _band_texture, "blobs": _blob_texture}
    for ci, (cls, maker) in enumerate(sorted(makers.items())):
        cdir = os.path.join(out_dir, cls)
        os.makedirs(cdir, exist_ok=True)
        for i in range(per_class):
            rng = np.random.default_rng(np.random.SeedSequence([seed, ci, i]))
            img = maker(rng, TEXTURE_SIZE)
            save_png(img, os.path.join(cdir, f"{cls}_{i:04d}.png"))
    return ingest_dataset(out_dir, split_spec=split_spec, seed=seed)


def load_split(manifest, split):
    """List of (rgb_image, label) pairs for a split, in manifest order."""
    return [(load_image(os.path.join(manifest.root, rel)), lab)
            for rel, lab in manifest.splits[split]]


def mean_color_baseline(train_pairs, eval_pairs):
    """Best single-channel mean-color threshold fit on train, scored on eval."""
    def feats(pairs):
        X = np.array([img.mean(axis=(0, 1)) for img, _ in pairs])
        y = np.array([lab for _, lab in pairs])
        return X, y

    Xtr, ytr = feats(train_pairs)
    Xev, yev = feats(eval_pairs)
    best = None
    for ch in range(3):
        vals = np.sort(np.unique(Xtr[:, ch]))
        cuts = np.concatenate([[vals[0] - 1e-6],
                               0.5 * (vals[1:] + vals[:-1]),
                               [vals[-1] + 1e-6]])
        for cut in cuts:
            for sign in (1, -1):
                pred = np.where(Xtr[:, ch] > cut, sign, -sign)
                acc = float(np.mean(pred == ytr))
                if best is None or acc > best[0]:
                    best = (acc, ch, cut, sign)
    _, ch, cut, sign = best
    pred = np.where(Xev[:, ch] > cut, sign, -sign)
    return float(np.mean(pred == yev))


@dataclass
class ExperimentConfig:
    out_dir: str
    data_dir: str = None          # existing dataset root; generated if None
    per_class: int = 400
    epsilons: tuple = (2, 4, 8, 16, 32)
    descriptor_n: int = 128
    working_size: int = 64        # evolved-pipeline resolution
    split: tuple = (0.75, 0.25, 0.0)
    svm_C: float = 1.0
    master_seed: int = 0
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    cnn: CnnConfig = field(default_factory=CnnConfig)

    def __post_init__(self):
        eps = tuple(int(e) for e in self.epsilons)
        if any(not 1 <= e <= 255 for e in eps):
            raise ValueError(f"epsilons must be integers in 1..255: {eps}")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ValueError(f"epsilons must be strictly increasing: {eps}")
        self.epsilons = eps

    def to_dict(self):
        d = asdict(self)
        d["epsilons"] = list(self.epsilons)
        d["split"] = list(self.split)
        d["cnn"]["conv_channels"] = list(self.cnn.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "evolution" in d and isinstance(d["evolution"], dict):
            d["evolution"] = EvolutionConfig(**d["evolution"])
        if "cnn" in d and isinstance(d["cnn"], dict):
            c = dict(d["cnn"])
            if "conv_channels" in c:
                c["conv_channels"] = tuple(c["conv_channels"])
            d["cnn"] = CnnConfig(**c)
        if "epsilons" in d:
            d["epsilons"] = tuple(d["epsilons"])
        if "split" in d:
            d["split"] = tuple(d["split"])
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RunReport:
    epsilons: list
    rows: dict        # method -> {"train": acc, "clean": acc, "eps_2": ...}
    metadata: dict
    complete: bool = True

    def to_dict(self):
        return {"epsilons": list(self.epsilons), "rows": self.rows,
                "metadata": self.metadata, "complete": self.complete}

    @classmethod
    def from_dict(cls, d):
        return cls(epsilons=[int(e) for e in d["epsilons"]],
                   rows=d["rows"], metadata=d["metadata"],
                   complete=bool(d["complete"]))


def emit_report(report, out_dir):
    """Write report.json, the accuracy matrix CSV and the plot series CSV."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    paths["json"] = os.path.join(out_dir, "report.json")
    with open(paths["json"], "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)

    cols = ["train", "clean"] + [f"eps{e}" for e in report.epsilons]
    keys = ["train", "clean"] + [f"eps_{e}" for e in report.epsilons]
    lines = ["method," + ",".join(cols)]
    for method in sorted(report.rows):
        row = report.rows[method]
        lines.append(method + "," + ",".join(f"{row[k]:.4f}" for k in keys))
    paths["csv"] = os.path.join(out_dir, "report.csv")
    with open(paths["csv"], "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")

    series = ["method,epsilon,accuracy"]
    for method in sorted(report.rows):
        row = report.rows[method]
        series.append(f"{method},0,{row['clean']:.4f}")
        for e in report.epsilons:
            series.append(f"{method},{e},{row[f'eps_{e}']:.4f}")
    paths["series"] = os.path.join(out_dir, "accuracy_vs_epsilon.csv")
    with open(paths["series"], "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(series) + "\n")
    return paths


def _derive_seed(master, tag):
    return int(np.random.SeedSequence([master, tag]).generate_state(1)[0])


def _stage_dir(config, stage):
    return os.path.join(config.out_dir, "stages", stage)


def _is_done(sdir):
    return os.path.exists(os.path.join(sdir, "DONE"))


def _mark_done(sdir):
    with open(os.path.join(sdir, "DONE"), "w", encoding="utf-8") as fh:
        fh.write("done\n")


def _fresh_stage(config, stage, force):
    sdir = _stage_dir(config, stage)
    if force and os.path.isdir(sdir):
        shutil.rmtree(sdir)
    os.makedirs(sdir, exist_ok=True)
    return sdir


def _class_index(label):
    """Map the +-1 class labels onto softmax class indices {1, 0}."""
    return (np.asarray(label) + 1) // 2


def _load_image_batch(manifest_root, entries, size):
    imgs = []
    for rel, _ in entries:
        img = load_image(os.path.join(manifest_root, rel))
        if img.shape[0] != size or img.shape[1] != size:
            img = resize_rgb(img, size, size)
        imgs.append(img.transpose(2, 0, 1))
    X = np.stack(imgs)
    y = np.array([lab for _, lab in entries], dtype=np.int64)
    return X, y


def describe_entries(ind, root, entries, n, working_size, chunk=512):
    """Descriptors for (relpath, label) entries, chunked to bound memory."""
    descs = []
    for start in range(0, len(entries), chunk):
        part = entries[start:start + chunk]
        imgs = [load_image(os.path.join(root, rel)) for rel, _ in part]
        env = avc.stack_decompositions(imgs, working_size, dtype=np.float32)
        descs.append(np.asarray(avc.describe_decomposition(ind, env, n),
                                dtype=np.float64))
    return np.concatenate(descs, axis=0)


def _write_predictions(path, entries, preds):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("path,label,prediction\n")
        for (rel, lab), p in zip(entries, preds):
            fh.write(f"{rel},{lab},{int(p)}\n")


def read_predictions(path):
    entries, preds = [], []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            rel, lab, pred = line.rstrip("\n").rsplit(",", 2)
            entries.append([rel, int(lab)])
            preds.append(int(pred))
    return entries, np.array(preds, dtype=np.int64)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _eval_split_name(manifest):
    if manifest.splits.get("validation"):
        return "validation"
    if manifest.splits.get("test"):
        return "test"
    raise ValueError("dataset has no evaluation split")


def run_experiment(config, force=False, verbose=False):
    """Run every stage (resuming from checkpoints) and emit the report."""
    os.makedirs(config.out_dir, exist_ok=True)
    timings = {}
    say = print if verbose else (lambda *a, **k: None)

    def run_stage(name, fn):
        sdir = _fresh_stage(config, name, force)
        if _is_done(sdir):
            say(f"[{name}] checkpoint found, skipping")
            return sdir
        say(f"[{name}] running")
        t0 = time.perf_counter()
        try:
            fn(sdir)
        except Exception as exc:
            _emit_partial(config, name, exc)
            raise StageError(name, exc) from exc
        timings[name] = round(time.perf_counter() - t0, 3)
        _mark_done(sdir)
        return sdir

    seeds = {
        "dataset": _derive_seed(config.master_seed, 0),
        "evolve": _derive_seed(config.master_seed, 1),
        "svm": _derive_seed(config.master_seed, 2),
        "cnn": _derive_seed(config.master_seed, 3),
    }

    # -- dataset ------------------------------------------------------------
    data_root = config.data_dir or os.path.join(config.out_dir, "dataset")

    def stage_dataset(sdir):
        if config.data_dir is None:
            make_texture_dataset(data_root, config.per_class,
                                 seeds["dataset"], split_spec=config.split)
        else:
            ingest_dataset(data_root, split_spec=config.split,
                           seed=seeds["dataset"])

    run_stage("dataset", stage_dataset)
    manifest = load_manifest(os.path.join(data_root, "manifest.json"))
    eval_split = _eval_split_name(manifest)
    train_entries = manifest.splits["train"]
    eval_entries = manifest.splits[eval_split]

    # -- evolve -------------------------------------------------------------
    evolve_dir = _stage_dir(config, "evolve")
    best_path = os.path.join(evolve_dir, "best_individual.txt")

    def stage_evolve(sdir):
        train_pairs = load_split(manifest, "train")
        evo = EvolutionConfig(**{**asdict(config.evolution),
                                 "seed": seeds["evolve"],
                                 "descriptor_n": config.descriptor_n})
        evaluator = avc.FitnessEvaluator(
            train_pairs, n=config.descriptor_n, seed=evo.seed,
            working_size=config.working_size, C=config.svm_C,
            dtype=np.float32)
        progress = (lambda rec: say(
            f"  gen {rec.generation}: best={rec.best_fitness:.4f} "
            f"mean={rec.mean_fitness:.4f}")) if verbose else None
        best, history = engine.evolve(None, evo, fitness_fn=evaluator,
                                      on_generation=progress)
        engine.save_individual(best, best_path)
        engine.save_history(history, sdir)

    run_stage("evolve", stage_evolve)

    # -- final svm on full training descriptors ------------------------------
    svm_dir = _stage_dir(config, "svm")
    svm_path = os.path.join(svm_dir, "svm_model.txt")

    def stage_svm(sdir):
        best = engine.load_individual(best_path)
        desc = describe_entries(best, manifest.root, train_entries,
                                config.descriptor_n, config.working_size)
        labels = np.array([lab for _, lab in train_entries], dtype=np.int64)
        scaler = svm.fit_scaler(desc)
        model = svm.train_svm(svm.apply_scaler(scaler, desc), labels,
                              C=config.svm_C, seed=seeds["svm"])
        svm.save_model(model, svm_path, scaler)
        preds = svm.predict(model, svm.apply_scaler(scaler, desc))
        _write_predictions(os.path.join(sdir, "predictions_train.csv"),
                           train_entries, preds)

    run_stage("svm", stage_svm)

    # -- differentiable baseline ---------------------------------------------
    cnn_dir = _stage_dir(config, "cnn")
    cnn_path = os.path.join(cnn_dir, "cnn_model.bin")

    def stage_cnn(sdir):
        cfg = CnnConfig(**{**asdict(config.cnn), "seed": seeds["cnn"]})
        Xtr, ytr = _load_image_batch(manifest.root, train_entries,
                                     cfg.input_size)
        Xev, yev = _load_image_batch(manifest.root, eval_entries,
                                     cfg.input_size)
        model, stats = cnn.train_model((Xtr, _class_index(ytr)), cfg,
                                       val_data=(Xev, _class_index(yev)))
        cnn.save_model(model, cnn_path)
        with open(os.path.join(sdir, "cnn_stats.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(stats, fh, indent=2)

    run_stage("cnn", stage_cnn)

    # -- fgsm attack sets ----------------------------------------------------
    attack_dir = _stage_dir(config, "attack")

    def stage_attack(sdir):
        model = cnn.load_model(cnn_path)
        generate_attack_sets(model, manifest, eval_entries, config.epsilons,
                             sdir)

    run_stage("attack", stage_attack)

    # -- evaluate both methods -----------------------------------------------
    eval_dir = _stage_dir(config, "evaluate")

    def stage_evaluate(sdir):
        best = engine.load_individual(best_path)
        svm_model, scaler = svm.load_model(svm_path)
        model = cnn.load_model(cnn_path)
        _, train_preds = read_predictions(
            os.path.join(svm_dir, "predictions_train.csv"))
        train_labels = np.array([lab for _, lab in train_entries])
        with open(os.path.join(cnn_dir, "cnn_stats.json"),
                  encoding="utf-8") as fh:
            cnn_stats = json.load(fh)

        accs = {"bp": {"train": svm.accuracy(train_preds, train_labels)},
                "cnn": {"train": cnn_stats["train_accuracy"]}}
        sets = {"clean": (manifest.root, eval_entries)}
        for e in config.epsilons:
            eps_root = os.path.join(attack_dir, f"eps_{e}")
            sets[f"eps_{e}"] = (eps_root, eval_entries)

        X_clean, _ = _load_image_batch(manifest.root, eval_entries,
                                       model.input_size)
        for name, (root, entries) in sets.items():
            if name.startswith("eps_"):
                budget = int(name.split("_")[1]) / 255.0
                X_adv, _ = _load_image_batch(root, entries, model.input_size)
                worst = float(np.abs(X_adv - X_clean).max())
                if worst > budget + 1e-12:
                    raise RuntimeError(
                        f"adversarial set {name} violates its budget: "
                        f"{worst} > {budget}")
            desc = describe_entries(best, root, entries, config.descriptor_n,
                                    config.working_size)
            preds = svm.predict(svm_model, svm.apply_scaler(scaler, desc))
            labels = np.array([lab for _, lab in entries])
            accs["bp"][name] = svm.accuracy(preds, labels)
            _write_predictions(os.path.join(sdir, f"predictions_bp_{name}.csv"),
                               entries, preds)

            X, y = _load_image_batch(root, entries, model.input_size)
            cls_pred = cnn.predict_classes(model, X)
            accs["cnn"][name] = float(np.mean(cls_pred == _class_index(y)))
            pred_labels = cls_pred * 2 - 1
            _write_predictions(os.path.join(sdir, f"predictions_cnn_{name}.csv"),
                               entries, pred_labels)
            say(f"  {name}: bp={accs['bp'][name]:.4f} "
                f"cnn={accs['cnn'][name]:.4f}")

        with open(os.path.join(sdir, "accuracies.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(accs, fh, indent=2, sort_keys=True)

    run_stage("evaluate", stage_evaluate)

    # -- report ---------------------------------------------------------------
    with open(os.path.join(eval_dir, "accuracies.json"), encoding="utf-8") as fh:
        accs = json.load(fh)
    metadata = {
        "master_seed": config.master_seed,
        "stage_seeds": seeds,
        "epsilons": list(config.epsilons),
        "timings_s": timings,
        "file_hashes": {
            "best_individual": _sha256(best_path),
            "svm_model": _sha256(svm_path),
            "cnn_model": _sha256(cnn_path),
            "manifest": _sha256(os.path.join(data_root, "manifest.json")),
        },
        "eval_split": eval_split,
    }
    report = RunReport(epsilons=list(config.epsilons), rows=accs,
                       metadata=metadata, complete=True)
    emit_report(report, config.out_dir)
    return report


def generate_attack_sets(model, manifest, entries, epsilons, out_dir):
    """Craft FGSM sets for every epsilon and export quantized PNG files.

    The input gradient sign is computed once per image; each epsilon scales
    it. Exported pixels are exact multiples of 1/255, and because the clean
    sources are 8-bit the quantized perturbation never exceeds eps/255. A
    sidecar JSON per image records epsilon, the source label and the
    model's prediction before and after.
    """
    X, y = _load_image_batch(manifest.root, entries, model.input_size)
    cls = _class_index(y)
    g = cnn.grad_input(model, X, cls)
    sgn = np.sign(g)
    pred_before = cnn.predict_classes(model, X)
    norms = {}
    for e in epsilons:
        Xadv = np.clip(X + (e / 255.0) * sgn, 0.0, 1.0)
        max_norm = float(np.abs(Xadv - X).max())
        if max_norm > e / 255.0 + 1e-12:
            raise RuntimeError(
                f"perturbation norm {max_norm} exceeds {e}/255 budget")
        norms[str(e)] = max_norm
        pred_after = cnn.predict_classes(model, Xadv)
        eps_root = os.path.join(out_dir, f"eps_{e}")
        for i, (rel, lab) in enumerate(entries):
            dest = os.path.join(eps_root, rel)
            os.makedirs(os.path.dirname(dest), exist_ok=True)
            save_png(Xadv[i].transpose(1, 2, 0), dest)
            sidecar = {
                "epsilon": int(e),
                "source_label": int(lab),
                "source_class": int(cls[i]),
                "prediction_before": int(pred_before[i]),
                "prediction_after": int(pred_after[i]),
            }
            with open(os.path.splitext(dest)[0] + ".json", "w",
                      encoding="utf-8") as fh:
                json.dump(sidecar, fh, sort_keys=True)
    with open(os.path.join(out_dir, "attack_norms.json"), "w",
              encoding="utf-8") as fh:
        json.dump(norms, fh, indent=2, sort_keys=True)


def _emit_partial(config, failed_stage, exc):
    try:
        report = RunReport(epsilons=list(config.epsilons), rows={},
                           metadata={"failed_stage": failed_stage,
                                     "error": str(exc)},
                           complete=False)
        with open(os.path.join(config.out_dir, "report.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    except OSError:
        pass
