"""Evolutionary loop over multi-tree individuals.

An individual carries four dimension-typed visual-operator trees plus one to
eight merge trees. Crossover swaps merge-list tails (cut-and-splice) or
role-matched subtrees; mutation replaces whole genes or subtrees. Selection
is fitness-proportional with one elite copied unchanged, so the recorded best
fitness never decreases.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import dsl
from .dsl import Dimension, Node

VO_DIMS = (Dimension.ORIENTATION, Dimension.COLOR, Dimension.SHAPE,
           Dimension.INTENSITY)
VO_ROLES = ("VO_O", "VO_C", "VO_S", "VO_I")
MAX_MM_TREES = 8
INIT_DEPTH = 6


class FitnessError(Exception):
    """Fitness evaluation failed; message carries the individual's text."""


@dataclass(frozen=True)
class Individual:
    vo_trees: tuple  # exactly 4, ordered as VO_DIMS
    mm_trees: tuple  # 1..8 merge trees
    fitness: float = None

    def with_fitness(self, value):
        return replace(self, fitness=float(value))

    @property
    def tree_count(self):
        return len(self.vo_trees) + len(self.mm_trees)


@dataclass
class EvolutionConfig:
    population_size: int = 30
    max_generations: int = 30
    target_fitness: float = 1.0
    p_crossover: float = 0.8
    p_mutation: float = 0.2
    p_chromosome_level: float = 0.5
    elitism_count: int = 1
    seed: int = 0
    descriptor_n: int = 128

    def __post_init__(self):
        for name in ("p_crossover", "p_mutation", "p_chromosome_level",
                     "target_fitness"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0 <= self.elitism_count < self.population_size:
            raise ValueError("elitism_count must be < population_size")


@dataclass
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_text: str


@dataclass
class EvolutionHistory:
    records: list = field(default_factory=list)

    def best_curve(self):
        return [r.best_fitness for r in self.records]


def validate_individual(ind):
    """Raise if tree counts, roles, arity, symbols or depths are off."""
    if len(ind.vo_trees) != 4:
        raise ValueError(f"expected 4 VO trees, got {len(ind.vo_trees)}")
    if not 1 <= len(ind.mm_trees) <= MAX_MM_TREES:
        raise ValueError(f"mm tree count {len(ind.mm_trees)} outside [1, 8]")
    if not 5 <= ind.tree_count <= 12:
        raise ValueError(f"total tree count {ind.tree_count} outside [5, 12]")
    for dim, tree in zip(VO_DIMS, ind.vo_trees):
        dsl.validate_tree(tree, dim)
    for tree in ind.mm_trees:
        dsl.validate_tree(tree, Dimension.MERGE)
    return True


def serialize_individual(ind):
    fit = "none" if ind.fitness is None else repr(ind.fitness)
    lines = [f"roles={','.join(VO_ROLES)} mm_count={len(ind.mm_trees)} fitness={fit}"]
    lines += [dsl.serialize(t) for t in ind.vo_trees]
    lines += [dsl.serialize(t) for t in ind.mm_trees]
    return "\n".join(lines) + "\n"


def parse_individual(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = dict(part.split("=", 1) for part in lines[0].split())
    mm_count = int(header["mm_count"])
    fitness = None if header["fitness"] == "none" else float(header["fitness"])
    trees = [dsl.parse(ln) for ln in lines[1:]]
    if len(trees) != 4 + mm_count:
        raise ValueError(f"expected {4 + mm_count} trees, got {len(trees)}")
    ind = Individual(tuple(trees[:4]), tuple(trees[4:]), fitness)
    validate_individual(ind)
    return ind


def save_individual(ind, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_individual(ind))


def load_individual(path):
    with open(path, encoding="utf-8") as fh:
        return parse_individual(fh.read())


def random_individual(rng, depth_cap=INIT_DEPTH):
    vo = tuple(dsl.random_tree(dim, depth_cap, rng) for dim in VO_DIMS)
    mm_count = int(rng.integers(1, MAX_MM_TREES + 1))
    mm = tuple(dsl.random_tree(Dimension.MERGE, depth_cap, rng)
               for _ in range(mm_count))
    return Individual(vo, mm)


def init_population(config, rng):
    return [random_individual(rng) for _ in range(config.population_size)]


def select_parent(population, rng):
    """Roulette-wheel selection over cached fitnesses (uniform if all zero)."""
    if not population:
        raise ValueError("cannot select from an empty population")
    fits = [ind.fitness for ind in population]
    if any(f is None for f in fits):
        raise ValueError("selection requires every individual to carry fitness")
    total = float(sum(fits))
    if total <= 0.0:
        return population[int(rng.integers(len(population)))]
    r = rng.random() * total
    acc = 0.0
    for ind, f in zip(population, fits):
        acc += f
        if r < acc:
            return ind
    return population[-1]


def _reuse_if_unchanged(vo, mm, *parents):
    for p in parents:
        if vo == p.vo_trees and mm == p.mm_trees:
            return p
    return Individual(vo, mm)


def crossover_chromosome(a, b, rng):
    """Cut-and-splice over the merge-tree region; VO slots stay in place.

    Cut points are independent per parent, so offspring merge lists may
    change length; lengths are clamped back to [1, 8] by dropping tail trees
    or appending a fresh random merge tree.
    """
    cut_a = int(rng.integers(0, len(a.mm_trees) + 1))
    cut_b = int(rng.integers(0, len(b.mm_trees) + 1))
    mm1 = a.mm_trees[:cut_a] + b.mm_trees[cut_b:]
    mm2 = b.mm_trees[:cut_b] + a.mm_trees[cut_a:]
    mm1 = _clamp_mm(mm1, rng)
    mm2 = _clamp_mm(mm2, rng)
    return (_reuse_if_unchanged(a.vo_trees, mm1, a, b),
            _reuse_if_unchanged(b.vo_trees, mm2, a, b))


def _clamp_mm(mm, rng):
    if len(mm) > MAX_MM_TREES:
        return mm[:MAX_MM_TREES]
    if not mm:
        return (dsl.random_tree(Dimension.MERGE, INIT_DEPTH, rng),)
    return mm


def crossover_gene(a, b, rng):
    """Swap one subtree between role-compatible trees of the two parents.

    Node choices violating the depth cap are redrawn up to 10 times; after
    that both parents pass through unchanged.
    """
    kind = int(rng.integers(0, 5))
    if kind < 4:
        tree_a, tree_b = a.vo_trees[kind], b.vo_trees[kind]
    else:
        ia = int(rng.integers(len(a.mm_trees)))
        ib = int(rng.integers(len(b.mm_trees)))
        tree_a, tree_b = a.mm_trees[ia], b.mm_trees[ib]

    swapped = None
    paths_a = dsl.node_paths(tree_a)
    paths_b = dsl.node_paths(tree_b)
    for _ in range(10):
        pa = paths_a[int(rng.integers(len(paths_a)))]
        pb = paths_b[int(rng.integers(len(paths_b)))]
        new_a = dsl.replace_at(tree_a, pa, dsl.subtree_at(tree_b, pb))
        new_b = dsl.replace_at(tree_b, pb, dsl.subtree_at(tree_a, pa))
        if dsl.depth(new_a) <= dsl.MAX_DEPTH and dsl.depth(new_b) <= dsl.MAX_DEPTH:
            swapped = (new_a, new_b)
            break
    if swapped is None:
        return a, b

    new_a, new_b = swapped
    if kind < 4:
        vo_a = _with_item(a.vo_trees, kind, new_a)
        vo_b = _with_item(b.vo_trees, kind, new_b)
        return (_reuse_if_unchanged(vo_a, a.mm_trees, a, b),
                _reuse_if_unchanged(vo_b, b.mm_trees, a, b))
    mm_a = _with_item(a.mm_trees, ia, new_a)
    mm_b = _with_item(b.mm_trees, ib, new_b)
    return (_reuse_if_unchanged(a.vo_trees, mm_a, a, b),
            _reuse_if_unchanged(b.vo_trees, mm_b, a, b))


def _with_item(items, index, value):
    out = list(items)
    out[index] = value
    return tuple(out)


def _pick_slot(ind, rng):
    """Uniform slot index over the 4 VO roles plus the merge trees."""
    slot = int(rng.integers(0, 4 + len(ind.mm_trees)))
    if slot < 4:
        return slot, VO_DIMS[slot]
    return slot, Dimension.MERGE


def mutate_chromosome(ind, rng):
    """Replace one whole gene with a fresh random tree of the same role."""
    slot, dim = _pick_slot(ind, rng)
    tree = dsl.random_tree(dim, INIT_DEPTH, rng)
    if slot < 4:
        return _reuse_if_unchanged(_with_item(ind.vo_trees, slot, tree),
                                   ind.mm_trees, ind)
    return _reuse_if_unchanged(ind.vo_trees,
                               _with_item(ind.mm_trees, slot - 4, tree), ind)


def mutate_gene(ind, rng):
    """Replace a uniformly chosen subtree with a random grown subtree."""
    slot, dim = _pick_slot(ind, rng)
    tree = ind.vo_trees[slot] if slot < 4 else ind.mm_trees[slot - 4]
    paths = dsl.node_paths(tree)
    path = paths[int(rng.integers(len(paths)))]
    allowance = dsl.MAX_DEPTH - len(path)
    new_tree = dsl.replace_at(tree, path, dsl.grow_tree(dim, allowance, rng))
    if slot < 4:
        return _reuse_if_unchanged(_with_item(ind.vo_trees, slot, new_tree),
                                   ind.mm_trees, ind)
    return _reuse_if_unchanged(ind.vo_trees,
                               _with_item(ind.mm_trees, slot - 4, new_tree), ind)


def _evaluate_population(population, fitness_fn):
    out = []
    for ind in population:
        if ind.fitness is None:
            try:
                ind = ind.with_fitness(fitness_fn(ind))
            except Exception as exc:
                raise FitnessError(
                    "fitness evaluation failed for individual:\n"
                    + serialize_individual(ind)) from exc
        out.append(ind)
    return out


def _breed(population, config, rng):
    ranked = sorted(population, key=lambda ind: -ind.fitness)
    nxt = list(ranked[: config.elitism_count])
    while len(nxt) < config.population_size:
        pa = select_parent(population, rng)
        pb = select_parent(population, rng)
        if rng.random() < config.p_crossover:
            if rng.random() < config.p_chromosome_level:
                c1, c2 = crossover_chromosome(pa, pb, rng)
            else:
                c1, c2 = crossover_gene(pa, pb, rng)
        else:
            c1, c2 = pa, pb
        for child in (c1, c2):
            if rng.random() < config.p_mutation:
                if rng.random() < config.p_chromosome_level:
                    child = mutate_chromosome(child, rng)
                else:
                    child = mutate_gene(child, rng)
            if len(nxt) < config.population_size:
                nxt.append(child)
    return nxt


def evolve(train_data, config, fitness_fn=None, on_generation=None):
    """Run the generational loop and return (best individual, history).

    train_data is a list of (rgb_image, label) pairs with labels in {-1, +1};
    it is ignored when a prebuilt fitness_fn (a callable Individual -> float
    in [0, 1]) is supplied. Stops when the best fitness reaches
    config.target_fitness or after config.max_generations generations.
    """
    if fitness_fn is None:
        from .avc import FitnessEvaluator
        fitness_fn = FitnessEvaluator(train_data, n=config.descriptor_n,
                                      seed=config.seed)
    ss = np.random.SeedSequence(config.seed)
    init_ss, breed_ss = ss.spawn(2)
    population = init_population(config, np.random.default_rng(init_ss))
    rng_breed = np.random.default_rng(breed_ss)

    history = EvolutionHistory()
    best_prev = -1.0
    for generation in range(1, config.max_generations + 1):
        population = _evaluate_population(population, fitness_fn)
        best = max(population, key=lambda ind: ind.fitness)
        mean = float(np.mean([ind.fitness for ind in population]))
        if best.fitness < best_prev:
            raise RuntimeError(
                f"elitism violated: best fitness fell from {best_prev} "
                f"to {best.fitness} at generation {generation}")
        best_prev = best.fitness
        record = GenerationRecord(generation, best.fitness, mean,
                                  serialize_individual(best))
        history.records.append(record)
        if on_generation is not None:
            on_generation(record)
        if best.fitness >= config.target_fitness:
            break
        if generation < config.max_generations:
            population = _breed(population, config, rng_breed)
    return best, history


def save_history(history, directory):
    """Write history.csv plus one best-individual file per generation."""
    import os

    os.makedirs(directory, exist_ok=True)
    rows = []
    for rec in history.records:
        name = f"best_gen_{rec.generation:03d}.txt"
        with open(os.path.join(directory, name), "w", encoding="utf-8") as fh:
            fh.write(rec.best_text)
        rows.append((rec.generation, rec.best_fitness, rec.mean_fitness, name))
    path = os.path.join(directory, "history.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best_fitness", "mean_fitness", "best_file"])
        writer.writerows(rows)
    return path
