"""
╔═════════════════════════════════════════════════════╗
║                      SymGL.py                       ║
╠═════════════════════════════════════════════════════╣
║          Description: SymGL user interfaces         ║
╚═════════════════════════════════════════════════════╝
"""

import sys
import functools

import click

from sgl_pipeline import symgl_detrend, symgl_fit, symgl_select, symgl_pipeline, symgl_simulate, symgl_intersect, symgl_report
from utils import SymGLError, ConfigError, ParseError, InvalidInputError, parse_float_list
from art import logo

__version__ = "1.0.0"

# Configure CLI context settings
CONTEXT_SETTINGS = dict(help_option_names = ['-h', '--help'], max_content_width = 120)

# exit status of each error family; any other error is a numerical failure
EXIT_CODES = {ConfigError : 2, ParseError : 2, InvalidInputError : 2}
NUMERIC_FAILURE = 3

def print_version(ctx, param, value):
    if not value or ctx.resilient_parsing:
        return
    click.echo('SymGL Version %s' % __version__)
    click.echo(logo)
    ctx.exit()

def exit_on_error(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SymGLError as e:
            code = next((v for k, v in EXIT_CODES.items() if isinstance(e, k)), NUMERIC_FAILURE)
            click.echo("Error: %s" % e, err = True)
            sys.exit(code)
        except Exception as e:
            click.echo("Error: %s: %s" % (type(e).__name__, e), err = True)
            sys.exit(NUMERIC_FAILURE)
    return wrapper

def solver_options(func):
    options = [
        click.option("--rho1", default = 1.0, show_default = True, type = float, help = "Step size of the outer ADMM."),
        click.option("--rho2", default = 1.0, show_default = True, type = float, help = "Step size of the inner ADMM."),
        click.option("--tol", default = 1e-6, show_default = True, type = float, help = "Relative change tolerance of the outer ADMM."),
        click.option("--inner-tol", default = 1e-8, show_default = True, type = float, help = "Residual tolerance of the inner ADMM."),
        click.option("--max-iter", default = 2000, show_default = True, type = int, help = "Maximum number of outer iterations."),
        click.option("--max-inner", default = 5000, show_default = True, type = int, help = "Maximum number of inner iterations."),
        click.option("--inner-solver", default = "admm", show_default = True, type = click.Choice(["admm", "pairwise"]), help = "Inner fused lasso solver."),
    ]
    for option in reversed(options):
        func = option(func)
    return func

def input_options(func):
    options = [
        click.option("--input", "input_file", required = True, type = click.Path(exists = True), help = "CSV file of the time series (T x p with a header of ROI names, or p x T)."),
        click.option("--transpose/--no-transpose", default = None, help = "Force the p x T (--transpose) or T x p (--no-transpose) layout. Auto-detected by default."),
        click.option("--roi-map", default = None, type = click.Path(exists = True), help = "CSV file assigning hemispheres and homologs to the ROIs (column names in roi_col_settings.txt)."),
    ]
    for option in reversed(options):
        func = option(func)
    return func

@click.group(context_settings = CONTEXT_SETTINGS)
@click.option('--version', is_flag = True, callback = print_version, expose_value = False, is_eager = True, help = "Print version and exit.")
def symgl():
    """SymGL: symmetric graphical lasso for paired-hemisphere time series. """
    pass

@symgl.command(context_settings = CONTEXT_SETTINGS)
@input_options
@click.option("--out", required = True, type = click.Path(exists = False), help = "Directory for output files.")
@click.option("--method", default = "henderson", show_default = True, type = click.Choice(["var1", "dcs", "henderson"]), help = "Detrending method.")
@click.option("--h", "h", default = 6, show_default = True, type = int, help = "Half-width of the Henderson filter (2h + 1 terms).")
@click.option("--henderson-weights", default = "wls", show_default = True, type = click.Choice(["wls", "literal"]), help = "Henderson weights from the local cubic fit or the normalised kernel.")
@click.option("--n-threads", default = 1, show_default = True, type = int, help = "Number of worker processes.")
@exit_on_error
def detrend(input_file, transpose, roi_map, out, method, h, henderson_weights, n_threads):
    """Remove the temporal signal and write the residual matrix."""
    symgl_detrend(input_file, out, method, h, henderson_weights, transpose, roi_map, n_threads)

@symgl.command(context_settings = CONTEXT_SETTINGS)
@input_options
@click.option("--out", required = True, type = click.Path(exists = False), help = "Directory for output files.")
@click.option("--lambda1", required = True, type = float, help = "Sparsity penalty.")
@click.option("--lambda2", default = 0.0, show_default = True, type = float, help = "Symmetry penalty.")
@solver_options
@exit_on_error
def fit(input_file, transpose, roi_map, out, lambda1, lambda2, rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver):
    """Fit the symmetric graphical lasso at fixed penalties on residuals."""
    symgl_fit(input_file, out, lambda1, lambda2, transpose, roi_map, rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver)

@symgl.command(context_settings = CONTEXT_SETTINGS)
@input_options
@click.option("--out", required = True, type = click.Path(exists = False), help = "Directory for output files.")
@click.option("--lambda1-grid", default = None, help = "Comma-separated lambda1 values. Default: 30 log-spaced values below the largest off-diagonal covariance.")
@click.option("--lambda2-grid", default = None, help = "Comma-separated lambda2 values. Default: 20 log-spaced values below the largest off-diagonal covariance.")
@click.option("--gamma", default = 0.5, show_default = True, type = float, help = "eBIC parameter in [0, 1].")
@click.option("--criterion", default = "ebic", show_default = True, type = click.Choice(["ebic", "bic"]), help = "Selection criterion.")
@solver_options
@click.option("--n-threads", default = 1, show_default = True, type = int, help = "Number of worker processes.")
@exit_on_error
def select(input_file, transpose, roi_map, out, lambda1_grid, lambda2_grid, gamma, criterion, rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver, n_threads):
    """Select the penalties on residuals by the two-stage grid search."""
    symgl_select(input_file, out, parse_float_list(lambda1_grid), parse_float_list(lambda2_grid), gamma, criterion, transpose, roi_map,
                 rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver, n_threads)

@symgl.command(context_settings = CONTEXT_SETTINGS)
@input_options
@click.option("--out", required = True, type = click.Path(exists = False), help = "Directory for output files.")
@click.option("--method", default = "henderson", show_default = True, type = click.Choice(["var1", "dcs", "henderson"]), help = "Detrending method.")
@click.option("--h", "h", default = 6, show_default = True, type = int, help = "Half-width of the Henderson filter (2h + 1 terms).")
@click.option("--henderson-weights", default = "wls", show_default = True, type = click.Choice(["wls", "literal"]), help = "Henderson weights from the local cubic fit or the normalised kernel.")
@click.option("--lambda1-grid", default = None, help = "Comma-separated lambda1 values. Default: 30 log-spaced values below the largest off-diagonal covariance.")
@click.option("--lambda2-grid", default = None, help = "Comma-separated lambda2 values. Default: 20 log-spaced values below the largest off-diagonal covariance.")
@click.option("--gamma", default = 0.5, show_default = True, type = float, help = "eBIC parameter in [0, 1].")
@click.option("--criterion", default = "ebic", show_default = True, type = click.Choice(["ebic", "bic"]), help = "Selection criterion.")
@solver_options
@click.option("--seed", default = 123, show_default = True, type = int, help = "Recorded in run_config.json; the pipeline draws no random numbers.")
@click.option("--n-threads", default = 1, show_default = True, type = int, help = "Number of worker processes.")
@exit_on_error
def pipeline(input_file, transpose, roi_map, out, method, h, henderson_weights, lambda1_grid, lambda2_grid, gamma, criterion, rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver, seed, n_threads):
    """Full analysis: detrend, select, refit and report."""
    symgl_pipeline(input_file, out, method, h, henderson_weights, parse_float_list(lambda1_grid), parse_float_list(lambda2_grid), gamma, criterion,
                   transpose, roi_map, rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver, seed, n_threads)

@symgl.command(context_settings = CONTEXT_SETTINGS)
@click.option("--out", required = True, type = click.Path(exists = False), help = "Directory for output files.")
@click.option("--scenario", default = None, type = click.Choice(["A", "B"]), help = "Preset environment; explicit options below override its values.")
@click.option("--p", "p", default = None, type = int, help = "Number of variables (even).")
@click.option("--density", default = None, type = float, help = "Edge density of the random graph.")
@click.option("--sym-fraction", default = None, type = float, help = "Fraction of homologous edge pairs tied.")
@click.option("--n", "n", default = None, type = int, help = "Sample size.")
@click.option("--replicates", default = None, type = int, help = "Samples per concentration matrix. [default: 9]")
@click.option("--n-matrices", default = None, type = int, help = "Concentration matrices per scenario. [default: 4 for presets, else 1]")
@click.option("--seed", default = 123, show_default = True, type = int, help = "Random seed.")
@solver_options
@click.option("--n-threads", default = 1, show_default = True, type = int, help = "Number of worker processes.")
@exit_on_error
def simulate(out, scenario, p, density, sym_fraction, n, replicates, n_matrices, seed, rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver, n_threads):
    """Oracle-tuned simulation benchmark."""
    symgl_simulate(out, scenario, p, density, sym_fraction, n, replicates, n_matrices, seed, rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver, n_threads)

@symgl.command(context_settings = CONTEXT_SETTINGS)
@click.option("--model", "models", required = True, multiple = True, type = click.Path(exists = True), help = "Model JSON file; repeat for each model.")
@click.option("--out", required = True, type = click.Path(exists = False), help = "Directory for output files.")
@exit_on_error
def intersect(models, out):
    """Shared edges and symmetries of several selected models."""
    symgl_intersect(list(models), out)

@symgl.command(context_settings = CONTEXT_SETTINGS)
@click.option("--model", required = True, type = click.Path(exists = True), help = "Model JSON file.")
@click.option("--out", required = True, type = click.Path(exists = False), help = "Directory for output files.")
@exit_on_error
def report(model, out):
    """Symmetry graph (DOT) and symmetry report of a model JSON."""
    symgl_report(model, out)

if __name__ == "__main__":
    symgl()
