#!/usr/bin/env python3
"""
LCEN command line
Dataset generation, fitting (LCEN and its variants), prediction, recursive forecasting,
cutoff sweeps, pipeline ablations and VIF diagnostics
"""

import logging
import os
import sys
import time
from functools import wraps

import click
import numpy as np
import pandas as pd

from basis_expansion import terms_from_json
from config import LIBRARY_VERSION, PIPELINE_NAMES, get_config, load_run_config
from datagen import (GENERATORS, KEPLER_CONSTANTS, NoiseSpec, gen_autoregressive, gen_linear5, gen_multicollinear,
                     gen_quartic, gen_relativistic, gen_stefan_boltzmann, kepler_data, load_csv,
                     load_inputs)
from errors import DataError, LcenError, NumericalError
from experiments import ablation_table, sweep_table
from pipeline import History, fit_pipeline, forecast, metrics, model_equation, predict, vif
from storage import (create_storage_backend, load_model, read_sidecar, save_model, sidecar_key, write_dataset,
                     write_json, write_table)

logger = logging.getLogger(__name__)

GENERATOR_NAMES = tuple(GENERATORS)


def handle_errors(f):
    """Decorator mapping toolkit errors to a one-line message and the error's exit code"""
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except LcenError as e:
            logger.error(f"{f.__name__} failed: {str(e)}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(e.exit_code)
        except np.linalg.LinAlgError as e:
            error = NumericalError(f"Linear algebra failure: {e}")
            logger.error(f"{f.__name__} failed: {str(error)}")
            click.echo(f"Error: {error}", err=True)
            sys.exit(error.exit_code)
    return decorated_function


def run_options(f):
    """Flags shared by every command that fits models; they override the config file"""
    options = [
        click.option('--seed', type=int, default=None, help='Fold-shuffle seed.'),
        click.option('--pipeline', default=None, help=f"One of {', '.join(PIPELINE_NAMES)}."),
        click.option('--degree-list', default=None, help='Comma-separated degrees, e.g. 1,2,3.'),
        click.option('--lag', default=None, help='Comma-separated lags, e.g. 0 or 24,168.'),
        click.option('--cutoff', type=float, default=None, help='Clip cutoff on scaled coefficients.'),
        click.option('--target', default=None, help='Output column (defaults to the last column).'),
        click.option('--threads', type=int, default=None, help='CV worker count.'),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _resolve(ctx, **flags):
    overrides = {
        'seed': flags.get('seed'),
        'pipeline': flags.get('pipeline'),
        'degrees': flags.get('degree_list'),
        'lags': flags.get('lag'),
        'cutoff': flags.get('cutoff'),
        'target': flags.get('target'),
        'threads': flags.get('threads'),
    }
    return load_run_config(ctx.obj.get('config_path'), overrides)


def _default_output(path, suffix):
    stem, _ = os.path.splitext(path)
    return f"{stem}{suffix}"


def _fmt(value):
    return f"{value:.6g}"


def render_report(model, runtime, target='y'):
    """Human-readable fit report: equation, selected terms, hyperparameters, CV table"""
    names = model.feature_names
    lines = [
        f"Pipeline: {model.pipeline}",
        f"Equation: {model_equation(model, names, target=target)}",
        f"Selected features: {model.n_features_selected}",
    ]
    if model.degenerate:
        lines.append("WARNING: every feature was clipped; the model is intercept-only")
    for term, coef, scaled in zip(model.terms, model.unscaled_beta, model.scaled_beta):
        lines.append(f"  {term.render(names):<30} {_fmt(coef):>14}   (scaled {_fmt(scaled)})")
    lines.append(f"  {'intercept':<30} {_fmt(model.intercept):>14}")
    lines.append("Hyperparameters: " + ', '.join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                                                 for k, v in sorted(model.hyperparameters.items())))
    if model.train_metrics:
        lines.append("Train metrics: " + ', '.join(f"{k}={_fmt(v)}" for k, v in sorted(model.train_metrics.items())))
    for stage, result in model.cv_table.items():
        frame = result.as_frame().sort_values('mse', na_position='last').head(10)
        lines.append(f"CV table ({stage}, {len(result.records)} combinations, best 10):")
        lines.append(frame.to_string(index=False, float_format=_fmt))
    lines.append(f"Runtime: {runtime:.2f} s")
    return '\n'.join(lines) + '\n'


@click.group()
@click.option('--config', 'config_path', type=click.Path(), default=None,
              help='Flat KEY=value run configuration file.')
@click.option('--log-level', default=None, help='DEBUG, INFO, WARNING or ERROR.')
@click.pass_context
def cli(ctx, config_path, log_level):
    """Sparse nonlinear regression: LASSO, clip, elastic net, clip"""
    level = (log_level or get_config().LOG_LEVEL).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    ctx.ensure_object(dict)
    ctx.obj['config_path'] = config_path


@cli.command()
@click.argument('generator', type=click.Choice(GENERATOR_NAMES))
@click.option('--out', '-o', 'out', required=True, type=click.Path(), help='CSV to write.')
@click.option('--n', 'n', type=int, default=None, help='Number of samples.')
@click.option('--seed', type=int, default=None)
@click.option('--noise', type=float, default=None, help='Noise level, % of the signal std.')
@click.option('--noise-variance', type=float, default=0.0, help='Noise variance (quartic).')
@click.option('--eps1', type=float, default=0.0, help='X1 noise, % of the std of X0 (multicollinear).')
@click.option('--eps2', type=float, default=0.0, help='y noise, % of the signal std (multicollinear).')
@click.option('--mass-max', type=click.Choice(['10', '100']), default='100', help='Mass range (relativistic).')
@click.option('--n-test', type=int, default=1000, help='Test samples (quartic).')
@click.option('--version', 'kepler_version', type=click.Choice(sorted(KEPLER_CONSTANTS)), default='modern')
@click.pass_context
@handle_errors
def gen(ctx, generator, out, n, seed, noise, noise_variance, eps1, eps2, mass_max, n_test, kepler_version):
    """Generate an artificial dataset as CSV plus a JSON ground-truth sidecar"""
    seed = load_run_config(ctx.obj.get('config_path'), {'seed': seed}).seed
    sized = {} if n is None else {'n': n}
    spec = NoiseSpec(level=noise or 0.0, seed=seed)
    backend = create_storage_backend()

    if generator == 'quartic':
        train, test = gen_quartic(n_train=n or 30, n_test=n_test, noise_variance=noise_variance, seed=seed)
        written = write_dataset(train, _default_output(out, '_train.csv'), backend)
        written += write_dataset(test, _default_output(out, '_test.csv'), backend)
    else:
        if generator == 'linear5':
            dataset = gen_linear5(noise=spec, **sized)
        elif generator == 'multicollinear':
            dataset = gen_multicollinear(eps1=NoiseSpec(level=eps1, seed=seed),
                                         eps2=NoiseSpec(level=eps2, seed=seed + 1), **sized)
        elif generator == 'relativistic':
            dataset = gen_relativistic(mass_max=int(mass_max), noise=spec, **sized)
        elif generator == 'kepler':
            dataset = kepler_data(kepler_version)
        elif generator == 'autoregressive':
            dataset = gen_autoregressive(noise=spec, **sized)
        else:
            dataset = gen_stefan_boltzmann(noise=NoiseSpec(level=2.5 if noise is None else noise, seed=seed),
                                           **sized)
        written = write_dataset(dataset, out, backend)
    for location in written:
        click.echo(f"Wrote {location}")


@cli.command()
@click.argument('data', type=click.Path())
@click.option('--model', '-m', 'model_path', default=None, help='Model JSON (default <data>.model.json).')
@click.option('--report', 'report_path', default=None, help='Report file (default <data>.report.txt).')
@run_options
@click.pass_context
@handle_errors
def fit(ctx, data, model_path, report_path, **flags):
    """Fit a sparse model and write the model JSON plus a report"""
    run = _resolve(ctx, **flags)
    backend = create_storage_backend()
    dataset = load_csv(data, target=run.target, backend=backend)
    start = time.perf_counter()
    model = fit_pipeline(dataset.X, dataset.y, run.to_grid(), run.pipeline, seed=run.seed, threads=run.threads,
                         feature_names=dataset.feature_names, provenance=run.as_dict())
    runtime = time.perf_counter() - start
    model.provenance['target'] = dataset.target_name

    save_model(model, model_path or _default_output(data, '.model.json'), backend)
    report = render_report(model, runtime, target=dataset.target_name)
    backend.save_bytes(report.encode('utf-8'), report_path or _default_output(data, '.report.txt'))
    click.echo(report, nl=False)
    if model.degenerate:
        click.echo("Warning: degenerate intercept-only model", err=True)


def _write_predictions(out, predictions, truth, backend):
    frame = pd.DataFrame({'prediction': predictions})
    if truth is not None:
        frame['actual'] = truth
    buffer = frame.to_csv(index=False)
    return backend.save_bytes(buffer.encode('utf-8'), out)


def _echo_metrics(truth, predictions):
    if truth is None:
        return
    try:
        result = metrics(truth, predictions)
    except DataError as e:
        click.echo(f"Metrics unavailable: {e}")
        return
    click.echo(f"RMSE: {_fmt(result['rmse'])}")
    click.echo(f"Mean relative error (%): {_fmt(result['mean_relative_error'])}")


def _model_target(model):
    return model.provenance.get('target') or model.provenance.get('target_name')


def _write_provenance(command, out, model, backend, **inputs):
    """JSON sidecar beside a prediction or forecast CSV"""
    document = {'command': command, **inputs, 'pipeline': model.pipeline,
                'model_library_version': model.library_version, 'library_version': LIBRARY_VERSION,
                'hyperparameters': dict(model.hyperparameters), 'config': dict(model.provenance)}
    return write_json(document, sidecar_key(out), backend)


@cli.command('predict')
@click.argument('model_path', type=click.Path())
@click.argument('data', type=click.Path())
@click.option('--out', '-o', 'out', default=None, help='Predictions CSV (default <data>.predictions.csv).')
@handle_errors
def predict_command(model_path, data, out):
    """Predict every row of a CSV; lagged models use the first rows as history"""
    backend = create_storage_backend()
    model = load_model(model_path, backend)
    X, y = load_inputs(data, model.feature_names or [], _model_target(model), backend=backend)
    L = model.lag
    if L:
        if y is None:
            raise DataError(f"{data} needs the output column to supply lagged outputs")
        predictions = predict(model, X[L:], history=History(X[:L], y[:L]), y=y[L:])
        y = y[L:]
    else:
        predictions = predict(model, X)
    out = out or _default_output(data, '.predictions.csv')
    click.echo(f"Wrote {_write_predictions(out, predictions, y, backend)}")
    _write_provenance('predict', out, model, backend, model_path=model_path, data=data, rows=len(predictions))
    _echo_metrics(y, predictions)


@cli.command('forecast')
@click.argument('model_path', type=click.Path())
@click.argument('history_path', type=click.Path())
@click.option('--horizon', '-h', type=int, required=True, help='Steps to forecast.')
@click.option('--future', 'future_path', default=None, type=click.Path(),
              help='CSV with inputs (and optionally outputs) for the forecast steps.')
@click.option('--out', '-o', 'out', default=None, help='Forecast CSV (default <history>.forecast.csv).')
@handle_errors
def forecast_command(model_path, history_path, horizon, future_path, out):
    """Recursive multi-step forecast from the last rows of a history CSV"""
    backend = create_storage_backend()
    model = load_model(model_path, backend)
    names = model.feature_names or []
    target = _model_target(model)
    X, y = load_inputs(history_path, names, target, backend=backend)
    if y is None:
        raise DataError(f"{history_path} needs the output column {target!r}")
    future_X, truth = (None, None)
    if future_path:
        future_X, truth = load_inputs(future_path, names, target, backend=backend)
    predictions = forecast(model, History(X, y), horizon, future_X=future_X)
    if truth is not None:
        truth = truth[:horizon]
    out = out or _default_output(history_path, '.forecast.csv')
    click.echo(f"Wrote {_write_predictions(out, predictions, truth, backend)}")
    _write_provenance('forecast', out, model, backend, model_path=model_path, history=history_path,
                      future=future_path, horizon=horizon)
    _echo_metrics(truth, predictions)


def _parse_cutoffs(text):
    try:
        values = sorted(float(v) for v in text.split(',') if v.strip())
    except ValueError:
        raise click.BadParameter(f"not a comma-separated list of numbers: {text!r}")
    if not values:
        raise click.BadParameter("at least one cutoff is required")
    return values


def _load_test(path, dataset, backend):
    if not path:
        return None, None
    test = load_csv(path, target=dataset.target_name, features=dataset.feature_names, backend=backend)
    return test.X, test.y


@cli.command()
@click.argument('data', type=click.Path())
@click.option('--cutoffs', required=True, help='Comma-separated cutoffs, e.g. 0.01,0.05,0.1.')
@click.option('--test', 'test_path', default=None, type=click.Path(), help='Held-out CSV for test RMSE.')
@click.option('--out', '-o', 'out', default=None, help='TSV table (default <data>.sweep.tsv).')
@run_options
@click.pass_context
@handle_errors
def sweep(ctx, data, cutoffs, test_path, out, **flags):
    """Sparsify a fitted model along increasing cutoffs"""
    values = _parse_cutoffs(cutoffs)
    run = _resolve(ctx, **{**flags, 'cutoff': values[0]})
    backend = create_storage_backend()
    dataset = load_csv(data, target=run.target, backend=backend)
    X_test, y_test = _load_test(test_path, dataset, backend)
    grid = run.to_grid()
    model = fit_pipeline(dataset.X, dataset.y, grid, run.pipeline, seed=run.seed, threads=run.threads,
                         feature_names=dataset.feature_names)
    table = sweep_table(model, dataset.X, dataset.y, values, grid, X_test, y_test, threads=run.threads)
    out = out or _default_output(data, '.sweep.tsv')
    click.echo(f"Wrote {write_table(table, out, backend)}")
    write_json({'command': 'sweep', 'data': data, 'cutoffs': values, 'config': run.as_dict()},
               sidecar_key(out), backend)
    click.echo(table.to_csv(sep='\t', index=False), nl=False)


@cli.command()
@click.argument('data', type=click.Path())
@click.option('--test', 'test_path', default=None, type=click.Path(), help='Held-out CSV for test RMSE.')
@click.option('--pipelines', default=','.join(PIPELINE_NAMES), help='Comma-separated pipeline names.')
@click.option('--out', '-o', 'out', default=None, help='TSV table (default <data>.ablation.tsv).')
@run_options
@click.pass_context
@handle_errors
def ablate(ctx, data, test_path, pipelines, out, **flags):
    """Compare LCEN with its ablated and variant pipelines on the same data"""
    run = _resolve(ctx, **flags)
    backend = create_storage_backend()
    dataset = load_csv(data, target=run.target, backend=backend)
    X_test, y_test = _load_test(test_path, dataset, backend)
    truth = None
    sidecar = read_sidecar(data, backend)
    if sidecar and sidecar.get('true_support'):
        truth = (terms_from_json(sidecar['true_support']), sidecar['true_coefficients'])
    names = [p.strip().upper() for p in pipelines.split(',') if p.strip()]
    table = ablation_table(dataset.X, dataset.y, run.to_grid(), names, X_test, y_test, truth=truth,
                           seed=run.seed, threads=run.threads)
    out = out or _default_output(data, '.ablation.tsv')
    click.echo(f"Wrote {write_table(table, out, backend)}")
    write_json({'command': 'ablate', 'data': data, 'pipelines': names, 'config': run.as_dict()},
               sidecar_key(out), backend)
    click.echo(table.to_csv(sep='\t', index=False), nl=False)


@cli.command('vif')
@click.argument('data', type=click.Path())
@click.option('--target', default=None, help='Output column to exclude (defaults to the last column).')
@click.option('--out', '-o', 'out', default=None, help='Optional TSV table.')
@handle_errors
def vif_command(data, target, out):
    """Variance inflation factor of every input column"""
    backend = create_storage_backend()
    dataset = load_csv(data, target=target, backend=backend)
    table = pd.DataFrame({'feature': dataset.feature_names, 'vif': vif(dataset.X)})
    if out:
        click.echo(f"Wrote {write_table(table, out, backend)}")
        write_json({'command': 'vif', 'data': data, 'target': dataset.target_name,
                    'library_version': LIBRARY_VERSION}, sidecar_key(out), backend)
    click.echo(table.to_csv(sep='\t', index=False), nl=False)


def main(argv=None):
    """Entry point: usage errors exit 1, toolkit errors exit with their own code"""
    try:
        result = cli.main(args=argv, prog_name='lcen', standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        click.echo('Aborted!', err=True)
        return 1
    return result if isinstance(result, int) else 0


if __name__ == '__main__':
    sys.exit(main())
