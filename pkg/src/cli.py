import argparse
import logging
import os
import sys
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

# Add src to Python path for imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from adaptive import AdaptiveConfig, SplitStrategy, export_mesh, mesh_statistics
from benchmark_tables import TABLE_RUNNERS, TableSettings, run_table, write_table_report
from cubature_errors import CubatureConfigError, CubatureNumericalError, MeshExportError
from greeks import DeltaConfig, WindowMode, delta_mc_fd, delta_tcheb
from model import (
    ModelSpec,
    PayoffKind,
    PayoffSpec,
    bs_closed_form_1d,
    bs_delta_1d,
    model_config_from_file,
    parity_residual,
    price_adaptive,
    price_replicated,
)
from presets.option_examples import get_preset
from quadrature import build_rule, rule_summary
from reduction_cv import TruncationBasis, build_pca, control_expectation, cv_estimator
from reporting import dumps, get_date_based_folder, report_base_dir, setup_logging
from sampling import resolve_workers

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO_ERROR = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

FAS_DEFAULT_ITERATIONS = 2000
GRS_ITERATIONS_PER_DIM = 2000


# =====================================================
# ARGUMENT PARSING
# =====================================================
def _model_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    source = parent.add_mutually_exclusive_group()
    source.add_argument("--config", type=str, help="Path to a JSON model document.")
    source.add_argument("--preset", type=str, help="Built-in model: Ex1..Ex20 or a parity basket such as t1_K1.")
    parent.add_argument("--payoff", choices=[kind.value for kind in PayoffKind],
                        help="Override the payoff kind of the model document.")
    parent.add_argument("--strategy", choices=[s.value for s in SplitStrategy], default=SplitStrategy.GRS.value,
                        help="Splitting strategy (default: grs).")
    parent.add_argument("--iters", type=int, default=None,
                        help="Number of splits N (default: 2000*d for grs, 2000 for fas).")
    parent.add_argument("--q1", type=int, default=18, help="Level of the lower rule (default: 18).")
    parent.add_argument("--q2", type=int, default=24, help="Level of the higher rule (default: 24).")
    parent.add_argument("--alpha", type=int, default=3, help="Oversampling factor of the rules (default: 3).")
    parent.add_argument("--A", type=float, default=12.0, dest="truncation",
                        help="Half-width of the integration cube [-A, A]^d (default: 12).")
    parent.add_argument("--runs", type=int, default=1, help="Independent GRS runs; > 1 reports mean/median/Err.")
    parent.add_argument("--seed", type=int, default=0, help="Base seed for GRS and Monte Carlo draws.")
    parent.add_argument("--threads", type=int, default=None, help="Worker cap (default: CUBATURE_THREADS or 1).")
    parent.add_argument("--out", type=str, default=None, help="Also write the JSON result (CSV for mesh) here.")
    parent.add_argument("--verbose", action="store_true", help="Log per-split details.")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cubature",
        description="Adaptive cubature pricing of multi-asset options with Greeks and control variates.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    parent = _model_parent()

    price = subparsers.add_parser("price", parents=[parent], help="Price an option by adaptive cubature.")
    price.add_argument("--parity", action="store_true", help="Also price the companion put and report the parity residual.")

    delta = subparsers.add_parser("delta", parents=[parent], help="Delta by Tchebychef interpolation.")
    delta.add_argument("--asset", type=int, default=0, help="Index of the bumped asset (default: 0).")
    delta.add_argument("--nodes", type=int, default=5, help="Number of interpolation nodes m (default: 5).")
    delta.add_argument("--h", type=float, default=0.1, help="Window half-width (default: 0.1).")
    delta.add_argument("--h-mode", choices=[mode.value for mode in WindowMode], default=WindowMode.ABSOLUTE.value,
                       dest="h_mode", help="Window interpretation (default: absolute).")
    delta.add_argument("--mc-samples", type=int, default=0, dest="mc_samples",
                       help="Add a finite-difference Monte Carlo Delta with this many samples.")

    cv = subparsers.add_parser("cv", parents=[parent], help="Control-variate Monte Carlo with a PCA-reduced control.")
    cv.add_argument("--components", type=int, nargs="+", default=[3], help="Retained components l (default: 3).")
    cv.add_argument("--samples", type=int, default=100_000, help="Monte Carlo samples (default: 100000).")
    cv.add_argument("--basis", choices=[basis.value for basis in TruncationBasis],
                    default=TruncationBasis.PRINCIPAL.value,
                    help="Truncation basis of the reduced model (default: principal, which zeroes trailing "
                         "principal coordinates; literal zeroes trailing entries of g before applying H).")

    subparsers.add_parser("mesh", parents=[parent], help="Run one adaptive pricing and export the final mesh as CSV.")

    table = subparsers.add_parser("table", help="Reproduce a reference table.")
    table.add_argument("table_id", choices=sorted(TABLE_RUNNERS, key=lambda t: int(t[1:])), help="Table id.")
    table.add_argument("--scale", type=float, default=1.0, help="Fraction in ]0, 1] of the full iterations and samples.")
    table.add_argument("--seed", type=int, default=0, help="Base seed.")
    table.add_argument("--runs", type=int, default=10, help="GRS runs for replicated tables (default: 10).")
    table.add_argument("--q1", type=int, default=18, help="Level of the lower rule (default: 18).")
    table.add_argument("--q2", type=int, default=24, help="Level of the higher rule (default: 24).")
    table.add_argument("--threads", type=int, default=None, help="Worker cap (default: CUBATURE_THREADS or 1).")
    table.add_argument("--out", type=str, default=None, help="Report base folder (default: CUBATURE_REPORT_DIR).")
    table.add_argument("--verbose", action="store_true", help="Log per-split details.")
    return parser


# =====================================================
# HELPER FUNCTIONS
# =====================================================
def load_model(args: argparse.Namespace) -> Tuple[ModelSpec, PayoffSpec]:
    if args.preset:
        model, payoff_spec = get_preset(args.preset)
    elif args.config:
        model, payoff_spec = model_config_from_file(args.config)
    else:
        raise CubatureConfigError("A model is required: pass --config FILE or --preset NAME")
    if args.payoff:
        payoff_spec = PayoffSpec(args.payoff)
    return model, payoff_spec


def adaptive_config(args: argparse.Namespace, d: int, workers: int) -> AdaptiveConfig:
    strategy = SplitStrategy(args.strategy)
    iterations = args.iters
    if iterations is None:
        iterations = GRS_ITERATIONS_PER_DIM * d if strategy == SplitStrategy.GRS else FAS_DEFAULT_ITERATIONS
    return AdaptiveConfig(strategy=strategy, iterations=iterations, q1=args.q1, q2=args.q2, alpha=args.alpha,
                          seed=args.seed, workers=workers)


def model_summary(model: ModelSpec, payoff_spec: PayoffSpec) -> Dict[str, Any]:
    return {
        'd': model.d,
        'payoff': payoff_spec.kind.value,
        'strike': model.strike,
        'spots': model.spots,
        'vols': model.vols,
        'rate': model.rate,
        'maturity': model.maturity,
        'weights': model.weights,
    }


def price_document(model: ModelSpec, payoff_spec: PayoffSpec, args: argparse.Namespace,
                   config: AdaptiveConfig) -> Dict[str, Any]:
    if args.runs > 1:
        estimate = price_replicated(model, payoff_spec, args.truncation, config, args.runs)
        summary = estimate.replications
        return {'price': estimate.value, 'Err': summary.std, 'eval_count': estimate.eval_count,
                'runs': args.runs, 'mean': summary.mean, 'median': summary.median, 'std': summary.std}
    estimate = price_adaptive(model, payoff_spec, args.truncation, config)
    return {'price': estimate.value, 'error_indicator': estimate.uncertainty, 'eval_count': estimate.eval_count,
            'runs': 1}


def rule_diagnostics(d: int, config: AdaptiveConfig) -> List[Dict[str, Any]]:
    return [rule_summary(build_rule(d, q, config.alpha)) for q in (config.q1, config.q2)]


# =====================================================
# COMMANDS
# =====================================================
def cmd_price(args: argparse.Namespace) -> Dict[str, Any]:
    model, payoff_spec = load_model(args)
    config = adaptive_config(args, model.d, resolve_workers(args.threads))
    result = {'command': 'price', 'model': model_summary(model, payoff_spec), 'strategy': config.strategy.value,
              'iterations': config.iterations, 'A': args.truncation}
    result.update(price_document(model, payoff_spec, args, config))

    if args.parity:
        if payoff_spec.kind != PayoffKind.BASKET_CALL:
            raise CubatureConfigError("--parity needs a basket call model")
        put = price_document(model, PayoffSpec(PayoffKind.BASKET_PUT), args, config)
        result['put_price'] = put['price']
        result['parity_residual'] = parity_residual(result['price'], put['price'], model)
    if model.d == 1 and payoff_spec.kind in (PayoffKind.BASKET_CALL, PayoffKind.BASKET_PUT):
        result['closed_form'] = bs_closed_form_1d(model, payoff_spec)
    result['rules'] = rule_diagnostics(model.d, config)
    return result


def cmd_delta(args: argparse.Namespace) -> Dict[str, Any]:
    model, payoff_spec = load_model(args)
    workers = resolve_workers(args.threads)
    config = adaptive_config(args, model.d, 1)
    if not 0 <= args.asset < model.d:
        raise CubatureConfigError(f"--asset {args.asset} outside [0, {model.d})")
    cfg = DeltaConfig(asset_index=args.asset, m=args.nodes, h=args.h, h_mode=args.h_mode,
                      truncation=args.truncation, pricing=config, workers=workers)
    result = {'command': 'delta', 'model': model_summary(model, payoff_spec), 'asset': args.asset,
              'nodes': args.nodes, 'h': args.h, 'h_mode': cfg.h_mode.value,
              'delta': delta_tcheb(model, payoff_spec, cfg)}
    if args.mc_samples:
        result['delta_mc'] = delta_mc_fd(model, payoff_spec, args.asset, args.mc_samples, args.seed, workers)
        result['mc_samples'] = args.mc_samples
    if model.d == 1 and payoff_spec.kind in (PayoffKind.BASKET_CALL, PayoffKind.BASKET_PUT):
        result['closed_form_delta'] = bs_delta_1d(model, payoff_spec)
    return result


def cmd_cv(args: argparse.Namespace) -> Dict[str, Any]:
    model, payoff_spec = load_model(args)
    workers = resolve_workers(args.threads)
    pca = build_pca(model)
    basis = TruncationBasis(args.basis)
    estimates = []
    for l in args.components:
        config = adaptive_config(args, max(l, 1), 1)
        control = control_expectation(pca, model, payoff_spec, l, args.truncation, config, basis)
        estimates.append(cv_estimator(pca, model, payoff_spec, l, args.samples, args.seed, args.truncation,
                                      config, control=control, workers=workers, basis=basis).to_dict())
    return {'command': 'cv', 'model': model_summary(model, payoff_spec), 'samples': args.samples,
            'basis': basis.value, 'eigenvalues': pca.D, 'explained_variance_ratio': pca.explained_variance_ratio,
            'estimates': estimates}


def cmd_mesh(args: argparse.Namespace) -> Dict[str, Any]:
    model, payoff_spec = load_model(args)
    config = adaptive_config(args, model.d, resolve_workers(args.threads))
    estimate = price_adaptive(model, payoff_spec, args.truncation, config)
    path = args.out
    if path is None:
        timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
        path = os.path.join(get_date_based_folder(report_base_dir()), f'mesh_{timestamp}.csv')
    export_mesh(estimate.adaptive_result, path)
    return {'command': 'mesh', 'model': model_summary(model, payoff_spec), 'price': estimate.value,
            'error_indicator': estimate.uncertainty, 'eval_count': estimate.eval_count,
            'mesh_path': path, 'mesh': mesh_statistics(estimate.adaptive_result)}


def cmd_table(args: argparse.Namespace) -> Dict[str, Any]:
    settings = TableSettings(scale=args.scale, seed=args.seed, runs=args.runs, q1=args.q1, q2=args.q2,
                             workers=resolve_workers(args.threads))
    report = run_table(args.table_id, settings)
    json_path, csv_path = write_table_report(report, args.out)
    report['report_files'] = {'json': json_path, 'csv': csv_path}
    return report


COMMANDS = {
    'price': cmd_price,
    'delta': cmd_delta,
    'cv': cmd_cv,
    'mesh': cmd_mesh,
    'table': cmd_table,
}


def write_output(document: Dict[str, Any], path: Optional[str]):
    text = dumps(document)
    print(text)
    if path:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text)


# =====================================================
# MAIN
# =====================================================
def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point; exit codes: 0 success, 1 I/O failure, 2 invalid configuration, 3 numerical failure
    """
    args = build_parser().parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)

    try:
        result = COMMANDS[args.command](args)
        # mesh and table write their own files; --out there names the CSV / report folder
        write_output(result, args.out if args.command not in ('mesh', 'table') else None)
        return EXIT_OK
    except CubatureConfigError as e:
        logger.error(f"Invalid configuration: {str(e)}")
        print(dumps({'error': type(e).__name__, 'message': str(e)}))
        return EXIT_CONFIG_ERROR
    except (CubatureNumericalError, ArithmeticError, np.linalg.LinAlgError) as e:
        logger.error(f"Numerical failure: {str(e)}")
        print(dumps({'error': type(e).__name__, 'message': str(e)}))
        return EXIT_NUMERICAL_ERROR
    except (MeshExportError, OSError) as e:
        logger.error(f"Failed to write output: {str(e)}")
        print(dumps({'error': type(e).__name__, 'message': str(e)}))
        return EXIT_IO_ERROR


if __name__ == "__main__":
    sys.exit(main())
