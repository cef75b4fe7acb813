"""
╔═════════════════════════════════════════════════════╗
║                     utils.py                        ║
╠═════════════════════════════════════════════════════╣
║           Description: Utility functions            ║
╠═════════════════════════════════════════════════════╣
║        Logging, error types and worker pools        ║
╚═════════════════════════════════════════════════════╝
"""

import logging
import multiprocessing

import numpy as np

from art import logo

class SymGLError(Exception):
    """Base class of every error raised by SymGL."""
    pass

class InvalidInputError(SymGLError, ValueError):
    pass

class DomainError(SymGLError, ValueError):
    """Raised when a matrix that must be positive definite is not."""
    pass

class RankDeficiencyError(SymGLError):
    pass

class ConvergenceError(SymGLError):
    def __init__(self, message, diagnostics = None):
        super().__init__(message)
        self.diagnostics = diagnostics if diagnostics is not None else {}

class ParseError(SymGLError):
    def __init__(self, message, locations = None):
        self.locations = locations if locations is not None else []
        if self.locations:
            message = "%s\n\t%s" % (message, "\n\t".join(str(i) for i in self.locations[:10]))
            if len(self.locations) > 10:
                message += "\n\t..."
        super().__init__(message)

class ConfigError(SymGLError):
    pass

def get_symgl_logger():
    logging.basicConfig(level = logging.INFO, format = "SymGL: %(asctime)s - %(levelname)s - %(message)s")
    logger = logging.getLogger("SymGL")

    return logger

def resolve_logger(logger):
    return logger if logger is not None else logging.getLogger("SymGL")

def welcome(logger, function_name):
    logger.info(logo)
    greetings = {"detrend" : "Welcome to SymGL: detrending module!",
                 "fit" : "Welcome to SymGL: symmetric graphical lasso fitting module!",
                 "select" : "Welcome to SymGL: model selection module!",
                 "pipeline" : "Welcome to SymGL: full analysis pipeline!",
                 "simulate" : "Welcome to SymGL: simulation benchmark module!",
                 "intersect" : "Welcome to SymGL: model intersection module!",
                 "report" : "Welcome to SymGL: symmetry report module!"}
    logger.info(greetings.get(function_name, "Welcome to SymGL!"))

def log_list(logger, header, items, n_show = 10):
    items = [str(i) for i in items]
    if len(items) <= n_show:
        logger.info("%s: \n\t%s" % (header, "\n\t".join(items)))
    else:
        logger.info("%s: \n\t%s" % (header, "\n\t".join(items[:n_show])))
        logger.info("\t...")

def flatten_list(alist):
    """
    Flatten a list of lists.

    Args:
        alist (list of lists): The list to be flattened.

    Returns:
        list: The flattened list.
    """
    return [item for sublist in alist for item in sublist]

def parse_float_list(text):
    """
    Parse a comma-separated list of floats.

    Example usage:
    >>> parse_float_list("0.1, 0.2,0.4")
    [0.1, 0.2, 0.4]
    """
    if text is None:
        return None
    values = [i.strip() for i in text.split(",") if i.strip()]
    try:
        return [float(i) for i in values]
    except ValueError:
        raise ConfigError("Cannot parse a list of numbers from: %s" % text)

def _chunk_worker(target, chunk, result_collector, args):
    for job_index, job in chunk:
        result_collector.append((job_index, target(job, *args)))

def run_chunked_jobs(target, jobs, n_threads, *args):
    """
    Run `target(job, *args)` for every job, spreading the jobs over `n_threads` processes.

    Parameters:
    - target (callable): Module-level function, called once per job.
    - jobs (list): Job descriptions.
    - n_threads (int): Number of worker processes. 1 runs everything in-process.
    - args: Extra positional arguments passed to every call.

    Returns:
    - list: Results in the order of `jobs`, whatever the completion order was.
    """
    indexed_jobs = list(enumerate(jobs))
    if n_threads <= 1 or len(indexed_jobs) <= 1:
        return [target(job, *args) for _, job in indexed_jobs]

    n_threads = min(n_threads, len(indexed_jobs))
    chunk_indices = [list(chunk) for chunk in np.array_split(np.arange(len(indexed_jobs)), n_threads)]

    mgr = multiprocessing.Manager()
    result_collectors = [mgr.list() for _ in range(n_threads)]
    workers = []
    for i, chunk_index in enumerate(chunk_indices):
        chunk = [indexed_jobs[idx] for idx in chunk_index]
        p = multiprocessing.Process(target = _chunk_worker,
                                    args = (target, chunk, result_collectors[i], args, ))
        workers.append(p)
        p.daemon = True
        p.start()

    for p in workers:
        p.join()

    failed = [p.exitcode for p in workers if p.exitcode != 0]
    if failed:
        raise SymGLError("%d worker process(es) exited abnormally." % len(failed))

    results = dict(flatten_list([list(collector) for collector in result_collectors]))

    return [results[i] for i in range(len(indexed_jobs))]
