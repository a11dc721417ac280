"""Evolved visual-cortex image classifiers and FGSM robustness experiments."""

from .avc import (FitnessEvaluator, build_descriptor, build_pyramid,
                  center_surround, compute_mental_map, compute_visual_map,
                  describe_image, fitness)
from .cnn import (AdversarialExample, CnnConfig, DiffModel, Perturbation,
                  fgsm, forward, grad_input, init_model, is_adversarial,
                  linear_activation_growth, loss, train_model)
from .dsl import (Dimension, Node, evaluate_tree, parse, primitive_table,
                  random_tree, serialize)
from .engine import (EvolutionConfig, EvolutionHistory, Individual,
                     crossover_chromosome, crossover_gene, evolve,
                     init_population, mutate_chromosome, mutate_gene,
                     select_parent)
from .grids import (decompose_colors, downsample_half, gaussian_blur,
                    load_image, resize)
from .harness import (DatasetManifest, ExperimentConfig, RunReport,
                      emit_report, ingest_dataset, make_texture_dataset,
                      run_experiment)
from .svm import (Scaler, SvmModel, accuracy, apply_scaler, decision,
                  fit_scaler, predict, train_svm)

__version__ = "0.1.0"
