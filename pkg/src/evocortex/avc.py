"""Artificial-visual-cortex feature extraction and SVM-backed fitness.

An individual's four operator trees turn the ten color channels into one
visual map per dimension. Each visual map feeds a blur-and-halve pyramid
whose center-surround differences form a conspicuity map; the merge trees
are summed over each conspicuity map into a mental map, and the largest
pooled mental-map responses become the image descriptor.

Every stage accepts batched (n, h, w) arrays, so a whole dataset can be
described with one pass of array operations per tree node.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import svm
from .dsl import Dimension, evaluate_tree
from .engine import VO_DIMS
from .grids import (decompose_colors, downsample_half, gaussian_blur,
                    minmax_rescale, resize, resize_rgb)

PYRAMID_LEVELS = 9
PYRAMID_SIGMA = 1.0
# Classic saliency center-surround pairs (center level, surround level).
CS_PAIRS = ((2, 5), (2, 6), (3, 6), (3, 7), (4, 7), (4, 8))
DEFAULT_WORKING_SIZE = 256
DEFAULT_DESCRIPTOR_N = 128


def compute_visual_map(ind, dim, dec):
    """Evaluate the individual's operator tree for one dimension."""
    tree = ind.vo_trees[VO_DIMS.index(dim)]
    return evaluate_tree(tree, dec)


def build_pyramid(vm):
    """Blur-then-halve pyramid: up to 9 levels, stopping at the 1-pixel floor."""
    levels = [np.asarray(vm)]
    while len(levels) < PYRAMID_LEVELS:
        cur = levels[-1]
        if min(cur.shape[-2], cur.shape[-1]) < 2:
            break
        levels.append(downsample_half(gaussian_blur(cur, PYRAMID_SIGMA)))
    return levels


def center_surround(pyr):
    """Combine six center-surround level pairs into a conspicuity map.

    Each |center - surround| difference is taken after both levels are
    upscaled back to the base size, min-max normalized, summed, and the sum
    normalized again. Pairs whose levels were truncated away are dropped;
    with fewer than two usable pairs the map falls back to the difference
    between the base and the coarsest level.
    """
    base = pyr[0]
    h, w = base.shape[-2], base.shape[-1]
    diffs = []
    for c, s in CS_PAIRS:
        if s < len(pyr):
            d = np.abs(resize(pyr[c], w, h) - resize(pyr[s], w, h))
            diffs.append(minmax_rescale(d))
    if len(diffs) < 2:
        d = np.abs(base - resize(pyr[-1], w, h))
        return minmax_rescale(d)
    return minmax_rescale(sum(diffs))


def compute_mental_map(ind, cm):
    """Sum the merge-tree responses over one conspicuity map (no rescale)."""
    env = {"cm": np.asarray(cm)}
    total = None
    for tree in ind.mm_trees:
        out = evaluate_tree(tree, env)
        total = out if total is None else total + out
    return total


def build_descriptor(mms, n):
    """Pool the mental maps and keep the n largest values, sorted descending.

    mms is the sequence of four mental maps (each possibly batched as
    (..., h, w)); pooling order is dimension order then row-major, which
    fixes tie handling.
    """
    lead = np.asarray(mms[0]).shape[:-2]
    flat = np.concatenate(
        [np.asarray(m).reshape(lead + (-1,)) for m in mms], axis=-1)
    total = flat.shape[-1]
    if n < 1 or total < n:
        raise ValueError(f"descriptor size {n} needs <= {total} pooled values")
    top = np.partition(flat, total - n, axis=-1)[..., total - n:]
    return np.sort(top, axis=-1)[..., ::-1].copy()


def describe_decomposition(ind, dec, n):
    """Descriptor from an already-decomposed environment (batched or single)."""
    mms = []
    for dim in VO_DIMS:
        vm = compute_visual_map(ind, dim, dec)
        cm = center_surround(build_pyramid(vm))
        mms.append(compute_mental_map(ind, cm))
    return build_descriptor(mms, n)


def describe_image(ind, img, n=DEFAULT_DESCRIPTOR_N,
                   working_size=DEFAULT_WORKING_SIZE):
    """Full pipeline for one RGB image: resize, decompose, extract, pool."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[0] != working_size or img.shape[1] != working_size:
        img = resize_rgb(img, working_size, working_size)
    return describe_decomposition(ind, decompose_colors(img), n)


def stack_decompositions(images, working_size, dtype=np.float64):
    """Decompose a list of RGB images into batched channel stacks."""
    envs = []
    for img in images:
        img = np.asarray(img, dtype=np.float64)
        if img.shape[0] != working_size or img.shape[1] != working_size:
            img = resize_rgb(img, working_size, working_size)
        envs.append(decompose_colors(img))
    names = envs[0].keys()
    return {name: np.stack([e[name] for e in envs]).astype(dtype, copy=False)
            for name in names}


def stratified_folds(labels, n_folds, seed):
    """Deterministic stratified fold ids; shrinks to 2 folds if a training
    side would lose a class, and raises if that cannot be fixed."""
    labels = np.asarray(labels)
    for folds in (n_folds, 2):
        ids = np.empty(len(labels), dtype=np.int64)
        for ci, cls in enumerate(np.unique(labels)):
            idx = np.flatnonzero(labels == cls)
            rng = np.random.default_rng(np.random.SeedSequence([seed, 71, ci]))
            idx = idx[rng.permutation(len(idx))]
            ids[idx] = np.arange(len(idx)) % folds
        if _folds_trainable(labels, ids, folds):
            return ids, folds
    raise ValueError("dataset too small for stratified cross-validation")


def _folds_trainable(labels, ids, folds):
    for f in range(folds):
        train_labels = labels[ids != f]
        if np.unique(train_labels).size < 2:
            return False
    return True


class FitnessEvaluator:
    """Shared-state fitness: decomposes the training set once, then scores
    individuals by cross-validated SVM accuracy on their descriptors.

    Two speedups, both result-preserving: images are processed in chunks
    small enough to stay cache-resident (every operation in the pipeline is
    per-image, so chunking cannot change values), and conspicuity maps,
    which depend only on one operator tree, are memoized by serialized tree
    because evolution reuses trees across many individuals."""

    def __init__(self, data, n=DEFAULT_DESCRIPTOR_N, seed=0,
                 working_size=DEFAULT_WORKING_SIZE, folds=3, C=1.0,
                 dtype=np.float64, cache_maps=32, chunk=64, workers=None):
        if not data:
            raise ValueError("fitness requires a non-empty training set")
        images = [img for img, _ in data]
        self.labels = np.asarray([label for _, label in data], dtype=np.int64)
        classes, counts = np.unique(self.labels, return_counts=True)
        if classes.size < 2:
            raise ValueError("fitness requires both class labels present")
        if counts.min() < 2:
            raise ValueError("fitness requires at least 2 images per label")
        self._envs = [stack_decompositions(images[s:s + chunk], working_size,
                                           dtype)
                      for s in range(0, len(images), chunk)]
        self.n = n
        self.seed = seed
        self.C = C
        self.fold_ids, self.n_folds = stratified_folds(self.labels, folds, seed)
        self._cm_cache = {}
        self._cm_capacity = cache_maps
        if workers is None:
            workers = min(4, os.cpu_count() or 1)
        self._pool = (ThreadPoolExecutor(max_workers=workers)
                      if workers > 1 else None)

    def _map(self, fn, items):
        """Ordered map over independent chunks; threading never changes the
        per-chunk arithmetic, so results match the serial path exactly."""
        if self._pool is None:
            return [fn(item) for item in items]
        return list(self._pool.map(fn, items))

    def _conspicuity(self, tree):
        """Per-chunk conspicuity maps for one operator tree, memoized."""
        from .dsl import serialize

        key = serialize(tree)
        cached = self._cm_cache.pop(key, None)
        if cached is None:
            cached = self._map(
                lambda env: center_surround(build_pyramid(
                    evaluate_tree(tree, env))),
                self._envs)
        self._cm_cache[key] = cached
        while len(self._cm_cache) > self._cm_capacity:
            self._cm_cache.pop(next(iter(self._cm_cache)))
        return cached

    def describe_all(self, ind):
        """Descriptors for the whole training set, shape (n_images, n).

        The four per-dimension conspicuity maps are stacked so each merge
        tree is evaluated once per chunk; reductions stay per image."""
        cm_chunks = [self._conspicuity(tree) for tree in ind.vo_trees]

        def one_chunk(ci):
            cm_stack = np.stack([cm_chunks[d][ci] for d in range(4)])
            env = {"cm": cm_stack}
            total = None
            for tree in ind.mm_trees:
                out = evaluate_tree(tree, env)
                total = out if total is None else total + out
            return build_descriptor(list(total), self.n)

        descs = self._map(one_chunk, range(len(self._envs)))
        return np.concatenate(descs, axis=0)

    def __call__(self, ind):
        desc = np.asarray(self.describe_all(ind), dtype=np.float64)

        def one_fold(f):
            tr = self.fold_ids != f
            va = ~tr
            scaler = svm.fit_scaler(desc[tr])
            model = svm.train_svm(svm.apply_scaler(scaler, desc[tr]),
                                  self.labels[tr], C=self.C,
                                  seed=self.seed + f)
            pred = svm.predict(model, svm.apply_scaler(scaler, desc[va]))
            return svm.accuracy(pred, self.labels[va])

        accs = self._map(one_fold, range(self.n_folds))
        return float(np.mean(accs))


def fitness(ind, data, n=DEFAULT_DESCRIPTOR_N, seed=0,
            working_size=DEFAULT_WORKING_SIZE, C=1.0):
    """Cross-validated classification rate of an individual's descriptors."""
    return FitnessEvaluator(data, n=n, seed=seed, working_size=working_size,
                            C=C)(ind)
