"""
Main runner module.
Orchestrates data generation, reference-model training, explanation,
MoRF evaluation and convergence studies, and writes their outputs.
"""

import logging
import shlex
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .core import (
    GRID, IMAGE, PO_MATRIX, AlphabetSpec, ExplanationMode, ImportanceMap, MalformedFileError,
    Predictor, SampleSet, ShapeMismatchError,
)
from .data import GlyphSpec, MotifSpec, gen_glyphs, gen_sequence_set, load_samples
from .estimator import MFIEstimator
from .evaluation import (
    DATASET_MEAN, UNIFORM_SYMBOL, MorfEvaluator, PerturbationStrategy,
    area_over_curve, outcome_class, sign_accuracy,
)
from .inputs import AUTO, RunConfig, load_config
from .kernels import KernelSpec
from .predictors import (
    IMAGE_CSV, SEQUENCE_STRING, ExternalPredictor, ExternalPredictorSpec, KernelMachinePredictor,
    load_model, save_model, train_ls,
)
from .writer_csv import (
    read_importance, save_images_csv, save_sequences_fasta, write_convergence, write_importance,
    write_instance_batch, write_morf_curves, write_pgm,
)
from .writer_excel import StudyWorkbookWriter

logger = logging.getLogger(__name__)


class ExplanationStudy:
    """Runs one command of the feature importance toolkit."""

    def __init__(self, config: RunConfig, defaults_used: Optional[List[str]] = None,
                 warnings: Optional[List[str]] = None):
        """
        Initialize study with resolved settings.

        Args:
            config: Validated RunConfig
            defaults_used: Audit trail from the input validator
            warnings: Validator warnings
        """
        self.config = config
        self.defaults_used = defaults_used or []
        self.warnings = warnings or []
        self.alphabet = AlphabetSpec.from_string(config.alphabet)
        self._external = None

        # Results storage
        self.samples = None
        self.importance = None
        self.curves = []
        self.convergence = None

    def run(self) -> Dict[str, Any]:
        """Run the configured command and return a short result summary."""
        for warning in self.warnings:
            logger.warning(warning)
        handlers = {
            'gen': self.generate,
            'train': self.train,
            'explain': self.explain,
            'morf': self.morf,
            'converge': self.converge,
        }
        try:
            result = handlers[self.config.command]()
        finally:
            self.close()
        if self.config.report:
            self.export_report(self.config.report)
        return result

    def close(self):
        if self._external is not None:
            self._external.close()
            self._external = None

    # Inputs

    def _load_data(self) -> SampleSet:
        samples = load_samples(self.config.data, alphabet=self.alphabet, seed=self.config.seed)
        if samples.n > self.config.n:
            samples = samples.prefix(self.config.n)
        logger.info("Loaded %d %s samples of shape %s from %s", samples.n, samples.kind,
                    samples.shape, self.config.data)
        return samples

    def _motifs(self) -> List[MotifSpec]:
        return [MotifSpec.parse(text, self.config.mutation_rate) for text in self.config.motifs]

    def _generate(self, per_class: int, seed: int) -> SampleSet:
        config = self.config
        if config.kind == IMAGE:
            return gen_glyphs(per_class, GlyphSpec(config.d1, config.d2, config.noise), seed=seed)
        return gen_sequence_set(per_class, config.length, self._motifs(), seed, self.alphabet)

    def _kernel(self, samples: SampleSet) -> KernelSpec:
        kind = self.config.kernel
        if kind == AUTO:
            kind = 'wd' if samples.is_sequence else 'rbf'
        return KernelSpec.from_params(kind, {'sigma': self.config.sigma, 'degree': self.config.degree})

    def _predictor(self, samples: SampleSet) -> Predictor:
        config = self.config
        if config.external:
            serialization = config.serialization
            if serialization == AUTO:
                serialization = SEQUENCE_STRING if samples.is_sequence else IMAGE_CSV
            spec = ExternalPredictorSpec(tuple(shlex.split(config.external)), config.timeout, serialization)
            self._external = ExternalPredictor(spec)
            self._external.start()
            return self._external
        model = load_model(config.model)
        logger.info("Loaded %s kernel machine with %d support samples", model.kernel.describe(),
                    model.support.n)
        return KernelMachinePredictor(model)

    def _trained_predictor(self, training: SampleSet) -> Predictor:
        model = train_ls(training, training.labels, self._kernel(training), self.config.ridge)
        return KernelMachinePredictor(model)

    @staticmethod
    def _require_labels(samples: SampleSet, purpose: str) -> np.ndarray:
        if samples.labels is None:
            raise MalformedFileError(f"{purpose} needs labeled samples")
        return samples.labels

    # Commands

    def generate(self) -> Dict[str, Any]:
        config = self.config
        logger.info("Generating synthetic %s data...", config.kind)
        self.samples = self._generate(config.n, config.seed)
        if self.samples.is_sequence:
            save_sequences_fasta(self.samples, config.out)
        else:
            save_images_csv(self.samples, config.out)
        logger.info("Wrote %d samples to %s", self.samples.n, config.out)
        return {'samples': self.samples.n, 'out': config.out}

    def train(self) -> Dict[str, Any]:
        config = self.config
        logger.info("Training reference model...")
        logger.info("  1. Loading training data...")
        training = self._load_data()
        labels = self._require_labels(training, "training")

        logger.info("  2. Solving kernel system...")
        model = train_ls(training, labels, self._kernel(training), config.ridge)
        accuracy = sign_accuracy(KernelMachinePredictor(model).score_batch(training), labels)

        logger.info("  3. Saving model...")
        save_model(model, config.out)
        logger.info("Training accuracy: %.3f", accuracy)
        return {'training_accuracy': accuracy, 'out': config.out}

    def explain(self) -> Dict[str, Any]:
        config = self.config
        logger.info("Running explanation (%s)...", config.mode)

        logger.info("  1. Loading samples...")
        self.samples = self._load_data()
        predictor = self._predictor(self.samples)
        estimator = MFIEstimator(self.samples, predictor, threads=config.threads)

        logger.info("  2. Scoring %d samples...", self.samples.n)
        estimator.scores()

        logger.info("  3. Estimating importance...")
        if config.mode == 'instance' and config.instances:
            return self._explain_batch(estimator)
        self.importance = self._importance(estimator)

        logger.info("  4. Writing importance map...")
        write_importance(self.importance, config.out)
        if config.pgm:
            if self.importance.layout == GRID:
                write_pgm(self.importance, config.pgm)
            else:
                logger.warning("PGM heatmap skipped: %s maps are not images", self.importance.layout)

        result = {'layout': self.importance.layout, 'shape': self.importance.shape, 'out': config.out}
        if not np.all(self.importance.missing):
            result['argmax'] = self.importance.argmax()
            logger.info("Explanation complete! Most important coordinate: %s", result['argmax'])
        return result

    def _mode(self, samples: SampleSet) -> ExplanationMode:
        if samples.is_sequence:
            return ExplanationMode.sparse_pwm(self.config.k)
        return ExplanationMode.identity_image()

    def _feature_kernel(self) -> Optional[KernelSpec]:
        if self.config.feature_kernel == AUTO:
            return None
        return KernelSpec.from_params(self.config.feature_kernel, {'sigma': self.config.sigma})

    def _importance(self, estimator: MFIEstimator, target: int = None) -> ImportanceMap:
        config = self.config
        samples = estimator.samples
        if config.mode == 'model':
            return estimator.model_importance(self._mode(samples), uncentered=config.uncentered)
        if config.mode == 'kernel':
            return estimator.kernel_importance(self._mode(samples),
                                               score_kernel=KernelSpec.rbf(config.score_sigma),
                                               feature_kernel=self._feature_kernel())
        if config.mode == 'poim':
            return estimator.poim(config.k)
        if config.mode == 'firm':
            return estimator.firm_map(k=config.k, bins=config.bins)

        target = target or config.target
        if target > samples.n:
            raise ShapeMismatchError(f"target sample {target} outside 1..{samples.n}")
        strategy = None if config.strategy == AUTO else config.strategy
        return estimator.instance_importance(samples.sample(target - 1), window=config.k,
                                             strategy=strategy, epsilon=config.epsilon,
                                             centering=config.centering)

    def _explain_batch(self, estimator: MFIEstimator) -> Dict[str, Any]:
        samples = estimator.samples
        labels = self._require_labels(samples, "batch instance explanation")
        count = min(self.config.instances, samples.n)
        scores = estimator.scores()

        explanations = []
        for target in range(1, count + 1):
            outcome = outcome_class(scores[target - 1], labels[target - 1])
            logger.debug("Explaining sample %d (%s)", target, outcome)
            explanations.append((target, outcome, self._importance(estimator, target)))

        logger.info("  4. Writing %d instance maps...", count)
        write_instance_batch(explanations, self.config.out)
        self.importance = explanations[0][2]
        outcomes = pd.Series([outcome for _, outcome, _ in explanations]).value_counts()
        return {'instances': count, 'outcomes': outcomes.to_dict(), 'out': self.config.out}

    def morf(self) -> Dict[str, Any]:
        config = self.config
        logger.info("Running MoRF evaluation...")

        logger.info("  1. Loading test samples...")
        test = self._load_data()
        labels = self._require_labels(test, "MoRF evaluation")
        predictor = self._predictor(test)

        logger.info("  2. Building relevance ordering...")
        relevance = self._relevance(test, predictor)

        logger.info("  3. Perturbing in relevance and random order...")
        kind = config.perturbation
        if kind == AUTO:
            kind = UNIFORM_SYMBOL if test.is_sequence else DATASET_MEAN
        evaluator = MorfEvaluator(test, PerturbationStrategy(kind, config.radius, config.seed))
        seeds = list(range(config.seed, config.seed + config.seeds))
        ranked, randoms = evaluator.compare(test, labels, predictor, relevance, seeds,
                                            step=config.step, steps=config.steps)
        self.curves = [ranked] + randoms

        write_morf_curves(self.curves, config.out)
        result = {'baseline': ranked.baseline, 'out': config.out}
        if len(ranked.steps) > 1:
            relevance_area = area_over_curve(ranked)
            random_areas = [area_over_curve(curve) for curve in randoms]
            wins = sum(relevance_area > area for area in random_areas)
            logger.info("MoRF complete! Area over curve %.4f vs random mean %.4f (%d/%d seeds beaten)",
                        relevance_area, float(np.mean(random_areas)), wins, len(random_areas))
            result.update({'relevance_area': relevance_area, 'random_areas': random_areas, 'wins': wins})
        return result

    def _relevance(self, test: SampleSet, predictor: Predictor) -> ImportanceMap:
        if self.config.relevance:
            relevance = read_importance(self.config.relevance)
        else:
            estimator = MFIEstimator(test, predictor, threads=self.config.threads)
            if test.is_sequence:
                relevance = estimator.model_importance(ExplanationMode.sparse_pwm(1))
            else:
                relevance = estimator.kernel_importance(ExplanationMode.identity_image(),
                                                        score_kernel=KernelSpec.rbf(self.config.score_sigma),
                                                        feature_kernel=self._feature_kernel())
        if relevance.layout == PO_MATRIX:
            relevance = relevance.position_profile()
        self.importance = relevance
        return relevance

    def converge(self) -> Dict[str, Any]:
        config = self.config
        logger.info("Running convergence study...")

        logger.info("  1. Preparing samples...")
        if config.data:
            samples = load_samples(config.data, alphabet=self.alphabet, seed=config.seed)
        else:
            samples = self._generate(-(-max(config.sizes) // 2), config.seed)

        logger.info("  2. Preparing reference model...")
        if config.model or config.external:
            predictor = self._predictor(samples)
        else:
            # reference model on independent data with n samples in total
            training = self._generate(max(1, config.n // 2), config.seed + 1)
            predictor = self._trained_predictor(training)

        logger.info("  3. Estimating maps at sizes %s...", ','.join(str(s) for s in config.sizes))
        estimator = MFIEstimator(samples, predictor, threads=config.threads)
        self.convergence = estimator.convergence_curve(config.sizes, self._mode(samples),
                                                       kernel=config.kernel_mfi)
        write_convergence(self.convergence, config.out)

        last = self.convergence.iloc[-1]
        logger.info("Convergence complete! Final distance %.4g (%.2f%% of map norm)",
                    last['frobenius_distance'],
                    100.0 * last['frobenius_distance'] / last['map_norm'] if last['map_norm'] else float('nan'))
        return {'rows': len(self.convergence), 'out': config.out}

    def export_report(self, output_path: str):
        """
        Export study to Excel workbook.

        Args:
            output_path: Path for output Excel file
        """
        logger.info("Exporting to Excel: %s", output_path)
        writer = StudyWorkbookWriter(
            self.config.summary(), self.defaults_used, self.warnings,
            importance=self.importance, curves=self.curves, convergence=self.convergence,
        )
        writer.write_workbook(output_path)


def run_study(command: str, config_path: Optional[str] = None,
              **overrides) -> Tuple[Dict[str, Any], ExplanationStudy]:
    """
    Convenience function to resolve settings and run one command.

    Args:
        command: gen, train, explain, morf or converge
        config_path: Optional JSON config file
        **overrides: Settings keyed by CLI option name (e.g. n=500, out='map.csv')

    Returns:
        (result_summary, study)
    """
    config, defaults_used, warnings = load_config(command, config_path, overrides)
    study = ExplanationStudy(config, defaults_used, warnings)
    return study.run(), study
