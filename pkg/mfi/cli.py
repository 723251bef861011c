"""
Command-line interface.

    mfi gen       synthetic motif sequences or glyph images
    mfi train     least-squares kernel machine reference model
    mfi explain   instance, model, kernel, poim or firm importance maps
    mfi morf      most-relevant-first curves against random orderings
    mfi converge  distance between maps on growing sample prefixes

Outputs go to files, one JSON result line goes to stdout and logs go to
stderr. Errors exit with the code of their MFIError subclass.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from .core import MFIError
from .inputs import EXPLAIN_MODES, FLAG_SECTIONS
from .runner import run_study

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def _common_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group('common options')
    group.add_argument('--config', help="JSON config file; explicit flags override it")
    group.add_argument('--seed', type=int, help="random seed (default: 0)")
    group.add_argument('--n', type=int,
                       help="gen: samples per class; converge: reference training samples; "
                            "otherwise: cap on samples read from --data (default: 1000)")
    group.add_argument('--out', help="output file (required)")
    group.add_argument('--threads', type=int, help="worker threads for estimation (default: 1)")
    group.add_argument('--report', help="also write an Excel study workbook to this path")
    verbosity = group.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help="debug logging")
    verbosity.add_argument('-q', '--quiet', action='store_true', help="warnings and errors only")
    return parent


def _add_generation_options(parser: argparse.ArgumentParser):
    group = parser.add_argument_group('synthetic data')
    group.add_argument('--kind', choices=['sequence', 'image'], help="data kind (default: sequence)")
    group.add_argument('--length', type=int, help="sequence length L (default: 45)")
    group.add_argument('--alphabet', help="sequence alphabet (default: ACGT)")
    group.add_argument('--motifs', help="comma-separated PATTERN@POSITION list "
                                        "(default: GGCCGTAAA@11,TTTCACGTTGA@24)")
    group.add_argument('--mutation-rate', type=float, help="per-character motif mutation rate (default: 0.1)")
    group.add_argument('--d1', type=int, help="glyph rows (default: 16)")
    group.add_argument('--d2', type=int, help="glyph columns (default: 16)")
    group.add_argument('--noise', type=float, help="glyph Gaussian noise level (default: 0.1)")


def _add_kernel_options(parser: argparse.ArgumentParser):
    group = parser.add_argument_group('reference model')
    group.add_argument('--kernel', choices=['auto', 'rbf', 'linear', 'delta', 'wd'],
                       help="kernel (default: auto = wd for sequences, rbf for images)")
    group.add_argument('--sigma', type=float, help="rbf bandwidth (default: 1.0)")
    group.add_argument('--degree', type=int, help="wd kernel degree (default: 8)")
    group.add_argument('--ridge', type=float, help="ridge regularization (default: 1e-3)")


def _add_predictor_options(parser: argparse.ArgumentParser):
    group = parser.add_argument_group('predictor')
    group.add_argument('--model', help="model file written by `mfi train`")
    group.add_argument('--external', help="command of an external line-protocol predictor")
    group.add_argument('--serialization', choices=['auto', 'sequence-string', 'image-csv'],
                       help="external request format (default: auto)")
    group.add_argument('--timeout', type=float, help="external response timeout in seconds (default: 30)")


def _add_relevance_options(group):
    group.add_argument('--feature-kernel', choices=['auto', 'rbf', 'linear', 'delta'],
                       help="kernel MFI feature kernel (default: auto)")
    group.add_argument('--score-sigma', type=float, help="kernel MFI score-kernel bandwidth (default: 1.0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='mfi', description="Feature importance for black-box predictors")
    commands = parser.add_subparsers(dest='command', required=True)
    common = _common_options()

    gen = commands.add_parser('gen', parents=[common], help="generate synthetic data")
    _add_generation_options(gen)

    train = commands.add_parser('train', parents=[common], help="train a reference model")
    train.add_argument('--data', help="labeled training data (.csv images or FASTA-like sequences)")
    train.add_argument('--alphabet', help="sequence alphabet (default: ACGT)")
    _add_kernel_options(train)

    explain = commands.add_parser('explain', parents=[common], help="compute an importance map")
    explain.add_argument('--data', help="sample collection Z")
    explain.add_argument('--alphabet', help="sequence alphabet (default: ACGT)")
    _add_predictor_options(explain)
    group = explain.add_argument_group('explanation')
    group.add_argument('--mode', choices=EXPLAIN_MODES, help="explanation (default: model)")
    group.add_argument('--k', type=int, help="k-mer length / sequence window (default: 3)")
    group.add_argument('--target', type=int, help="1-based sample of --data to explain in instance mode (default: 1)")
    group.add_argument('--instances', type=int, help="instance mode: explain the first M samples in batch")
    group.add_argument('--strategy', choices=['auto', 'exact', 'epsilon', 'intervene'],
                       help="conditioning strategy (default: exact for sequences, intervene for images)")
    group.add_argument('--epsilon', type=float, help="epsilon-band half-width (default: 0.05)")
    group.add_argument('--centering', choices=['global', 'none'], help="instance importance centering (default: global)")
    group.add_argument('--uncentered', action='store_true', default=None,
                       help="model mode: plain conditional expectation")
    group.add_argument('--bins', type=int, help="firm mode: intensity bins for images (default: 10)")
    group.add_argument('--sigma', type=float, help="rbf feature-kernel bandwidth (default: 1.0)")
    group.add_argument('--pgm', help="also write a grayscale PGM heatmap for image maps")
    _add_relevance_options(group)

    morf = commands.add_parser('morf', parents=[common], help="run a most-relevant-first evaluation")
    morf.add_argument('--data', help="labeled test samples")
    morf.add_argument('--alphabet', help="sequence alphabet (default: ACGT)")
    _add_predictor_options(morf)
    group = morf.add_argument_group('perturbation')
    group.add_argument('--relevance', help="importance map CSV giving the order (default: computed)")
    group.add_argument('--perturbation', choices=['auto', 'dataset-mean', 'local-mean', 'zero', 'uniform-symbol'],
                       help="replacement strategy (default: dataset-mean for images, uniform-symbol for sequences)")
    group.add_argument('--radius', type=int, help="local-mean radius (default: 1)")
    group.add_argument('--step', type=int, help="coordinates perturbed per step (default: 1)")
    group.add_argument('--steps', type=int, help="number of steps (default: until all are perturbed)")
    group.add_argument('--seeds', type=int, help="random-order baselines (default: 10)")
    _add_relevance_options(group)

    converge = commands.add_parser('converge', parents=[common], help="run a convergence study")
    converge.add_argument('--data', help="sample collection (default: generated)")
    _add_generation_options(converge)
    _add_kernel_options(converge)
    _add_predictor_options(converge)
    group = converge.add_argument_group('convergence')
    group.add_argument('--sizes', help="comma-separated increasing sizes (default: 50,100,215,500,1000,2000)")
    group.add_argument('--k', type=int, help="k-mer length for sequence maps (default: 3)")
    group.add_argument('--kernel-mfi', action='store_true', default=None,
                       help="use per-feature kernel MFI maps")

    return parser


def configure_logging(verbose: bool = False, quiet: bool = False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    overrides = {key: value for key, value in vars(args).items() if key in FLAG_SECTIONS}
    try:
        result, _ = run_study(args.command, args.config, **overrides)
    except MFIError as exc:
        logger.debug("Command failed", exc_info=True)
        print(f"mfi {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.debug("Unexpected failure", exc_info=True)
        print(f"mfi {args.command}: unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    print(json.dumps(result, default=str, sort_keys=True))
    return 0


if __name__ == '__main__':
    sys.exit(main())
