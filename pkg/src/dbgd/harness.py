"""Experiment harness: JSON configs, grid execution, CSV traces.

A config is a single JSON object whose ``kind`` selects the workflow:

* ``experiment``: run every (method, parameter) grid cell of a problem,
  writing one trace CSV per cell plus a ``summary.csv`` with final- and
  best-iterate metrics per cell;
* ``rates``: fit the decay of the minimal potential across iteration
  budgets and write a JSON report;
* ``casestudy``: run one method from several initializations and
  classify each terminal point by its stationarity signature.

Unknown keys anywhere in a config are errors, not warnings.  Reruns with
identical configs and seeds produce byte-identical output files.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np

from .direction import (
    DynamicBarrierMin,
    GradNormSquared,
    LowerLinearization,
)
from .errors import ConfigurationError, DivergenceError
from .problems import (
    ProblemSpec,
    matrix_factorization_problem,
    quadratic_sanity_problem,
    rng,
    toy_problem,
)
from .solver import (
    Bloop,
    ConstantStep,
    Dbgd,
    Method,
    Penalty,
    ScheduledStep,
    SolverConfig,
    TraceRecord,
    best_iterate,
    run,
)
from .verify import rate_fit

#: Version of the trace/summary CSV schemas below.
TRACE_SCHEMA_VERSION = 1

TRACE_HEADER = (
    "k,f,g,grad_f_sq,grad_g_sq,lambda,d_sq,cos_theta,"
    "f_perp_sq,f_par_sq,delta_f,delta_g,potential,degenerate"
)

SUMMARY_HEADER = (
    "cell,method,rows,stopped_early,final_f,final_g,final_grad_f_sq,"
    "final_grad_g_sq,final_lambda,final_d_sq,final_cos_theta,"
    "final_f_perp_sq,final_f_par_sq,best_k,best_potential,"
    "best_grad_g_sq,best_d_sq"
)

CASES_HEADER = (
    "init,classification,final_lambda,final_grad_f_sq,final_grad_g_sq,"
    "final_cos_theta"
)

#: Environment variable overriding the grid worker count.
WORKERS_ENV = "DBGD_WORKERS"

_NUMBER = {"type": "number"}
_NUMBER_OR_GRID = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
    ]
}

_PROBLEM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name"],
    "properties": {
        "name": {"enum": ["toy", "quadratic", "matrix-factorization"]},
        "n": {"type": "integer", "minimum": 1},
        "r": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "variant": {"enum": ["smooth-l1", "log-smooth"]},
        "noise_std": {"type": "number", "minimum": 0},
        "seed": {"type": "integer"},
        "box_radius": {"type": "number", "exclusiveMinimum": 0},
    },
}

_METHOD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["dbgd", "penalty", "bloop"]},
        "rule": {
            "enum": ["grad-norm-squared", "dynamic-barrier-min", "lower-linearization"]
        },
        "beta": _NUMBER_OR_GRID,
        "alpha": _NUMBER_OR_GRID,
        "eta": _NUMBER_OR_GRID,
        "lambda": _NUMBER_OR_GRID,
    },
}

_X0_SCHEMA = {
    "oneOf": [
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["seed"],
            "properties": {"seed": {"type": "integer"}, "scale": _NUMBER},
        },
    ]
}

_STEP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mode"],
    "properties": {
        "mode": {"enum": ["constant", "scheduled"]},
        "eta": {"type": "number", "exclusiveMinimum": 0},
        "p": {"type": "number", "minimum": 0},
    },
}

_RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["x0", "iterations", "step"],
    "properties": {
        "x0": _X0_SCHEMA,
        "iterations": {"type": "integer", "minimum": 1},
        "step": _STEP_SCHEMA,
        "guard": {"type": "number", "exclusiveMinimum": 0},
        "penalty_step_scaling": {"type": "boolean"},
        "stop_tolerances": {
            "type": "array",
            "items": {"type": "number", "minimum": 0},
            "minItems": 2,
            "maxItems": 2,
        },
    },
}

_OUTPUT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["directory"],
    "properties": {
        "directory": {"type": "string"},
        "trace": {"enum": ["all", "final", "none"]},
        "workers": {"type": "integer", "minimum": 1},
    },
}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "problem", "methods", "run", "output"],
    "properties": {
        "kind": {"const": "experiment"},
        "problem": _PROBLEM_SCHEMA,
        "methods": {"type": "array", "items": _METHOD_SCHEMA, "minItems": 1},
        "run": _RUN_SCHEMA,
        "output": _OUTPUT_SCHEMA,
    },
}

RATES_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "problem", "x0", "p", "k_grid", "output"],
    "properties": {
        "kind": {"const": "rates"},
        "problem": _PROBLEM_SCHEMA,
        "x0": _X0_SCHEMA,
        "p": {
            "type": "array",
            "items": {"type": "number", "minimum": 0},
            "minItems": 1,
        },
        "k_grid": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 3,
        },
        "slope_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "required": ["file"],
            "properties": {"file": {"type": "string"}},
        },
    },
}

CASESTUDY_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "problem", "method", "run", "output"],
    "properties": {
        "kind": {"const": "casestudy"},
        "problem": _PROBLEM_SCHEMA,
        "method": _METHOD_SCHEMA,
        "run": {
            "type": "object",
            "additionalProperties": False,
            "required": ["initializations", "iterations", "step"],
            "properties": {
                "initializations": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 1,
                    },
                    "minItems": 1,
                },
                "iterations": {"type": "integer", "minimum": 1},
                "step": _STEP_SCHEMA,
                "guard": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "classify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "case1_lambda_max": _NUMBER,
                "case1_grad_f_sq_max": _NUMBER,
                "case2_cos_theta_max": _NUMBER,
                "case2_lambda_min": _NUMBER,
            },
        },
        "output": _OUTPUT_SCHEMA,
    },
}

_SCHEMAS = {
    "experiment": EXPERIMENT_SCHEMA,
    "rates": RATES_SCHEMA,
    "casestudy": CASESTUDY_SCHEMA,
}


def _fmt(x: float) -> str:
    """Serialize a float with 17 significant digits (lossless round trip)."""
    return f"{x:.17g}"


def _fmt_param(x: float) -> str:
    """Compact parameter rendering for cell names."""
    return f"{x:g}"


def load_config(path: str | Path) -> dict:
    """Parse and validate a config file; returns the raw document."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    validate_config(doc)
    return doc


def validate_config(doc: Any) -> str:
    """Validate a parsed config document; returns its kind."""
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    kind = doc.get("kind")
    if kind not in _SCHEMAS:
        raise ConfigurationError(
            f"config 'kind' must be one of {sorted(_SCHEMAS)}, got {kind!r}"
        )
    validator = jsonschema.Draft202012Validator(_SCHEMAS[kind])
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "$" + "".join(
            f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path
        )
        raise ConfigurationError(f"config field {where}: {err.message}")
    _semantic_checks(doc)
    return kind


def _semantic_checks(doc: dict) -> None:
    problem = doc["problem"]
    name = problem["name"]
    allowed = {
        "toy": {"name"},
        "quadratic": {"name", "n", "box_radius"},
        "matrix-factorization": {"name", "n", "r", "alpha", "variant", "noise_std", "seed"},
    }[name]
    extra = set(problem) - allowed
    if extra:
        raise ConfigurationError(
            f"problem {name!r} does not accept fields {sorted(extra)}"
        )
    if name == "quadratic" and "n" not in problem:
        raise ConfigurationError("problem 'quadratic' requires 'n'")
    if name == "matrix-factorization":
        for req in ("n", "r", "alpha"):
            if req not in problem:
                raise ConfigurationError(f"problem 'matrix-factorization' requires {req!r}")

    if doc["kind"] == "experiment":
        method_blocks = doc["methods"]
    elif "method" in doc:
        method_blocks = [doc["method"]]
    else:
        method_blocks = []
    for i, block in enumerate(method_blocks):
        _check_method_block(block, i)

    run_block = doc.get("run", {})
    step = run_block.get("step")
    if step is not None:
        mode = step["mode"]
        if mode == "constant" and "eta" not in step:
            raise ConfigurationError("constant step mode requires 'eta'")
        if mode == "scheduled" and "p" not in step:
            raise ConfigurationError("scheduled step mode requires 'p'")
        if mode == "scheduled":
            for block in method_blocks:
                if block["kind"] != "dbgd" or block.get("rule", "grad-norm-squared") != "grad-norm-squared":
                    raise ConfigurationError(
                        "scheduled step mode requires every method to be dbgd "
                        "with the grad-norm-squared rule"
                    )


def _check_method_block(block: dict, index: int) -> None:
    kind = block["kind"]
    where = f"methods[{index}]"
    required = {
        "dbgd": {"grad-norm-squared": {"beta"},
                 "dynamic-barrier-min": {"alpha", "beta"},
                 "lower-linearization": {"eta"}},
        "penalty": {"lambda"},
        "bloop": {"beta"},
    }
    if kind == "dbgd":
        rule = block.get("rule", "grad-norm-squared")
        needed = required["dbgd"][rule]
        allowed = {"kind", "rule"} | needed
    else:
        needed = required[kind]
        allowed = {"kind"} | needed
    extra = set(block) - allowed
    if extra:
        raise ConfigurationError(f"{where}: fields {sorted(extra)} not valid for this method")
    missing = needed - set(block)
    if missing:
        raise ConfigurationError(f"{where}: missing required fields {sorted(missing)}")


def build_problem(block: dict) -> ProblemSpec:
    """Construct the problem instance named by a config block."""
    name = block["name"]
    if name == "toy":
        return toy_problem()
    if name == "quadratic":
        return quadratic_sanity_problem(block["n"], block.get("box_radius", 2.0))
    return matrix_factorization_problem(
        block["n"],
        block["r"],
        block["alpha"],
        variant=block.get("variant", "smooth-l1"),
        noise_std=block.get("noise_std", 0.1),
        seed=block.get("seed", 0),
    )


def resolve_x0(spec: Any, dim: int) -> np.ndarray:
    """Materialize an initial point from a literal vector or a seed block."""
    if isinstance(spec, dict):
        gen = rng(spec["seed"])
        return spec.get("scale", 1.0) * gen.standard_normal(dim)
    x0 = np.asarray(spec, dtype=float)
    if x0.shape != (dim,):
        raise ConfigurationError(
            f"x0 has {x0.shape[0]} entries, problem dimension is {dim}"
        )
    return x0


def _grid_values(value: Any) -> list[float]:
    if isinstance(value, list):
        return [float(v) for v in value]
    return [float(value)]


def expand_methods(blocks: list[dict], problem: ProblemSpec) -> list[tuple[str, Method]]:
    """Expand method blocks into named grid cells, preserving order."""
    cells: list[tuple[str, Method]] = []
    for block in blocks:
        kind = block["kind"]
        if kind == "penalty":
            for lam in _grid_values(block["lambda"]):
                cells.append((f"penalty_lambda={_fmt_param(lam)}", Penalty(lam)))
        elif kind == "bloop":
            for beta in _grid_values(block["beta"]):
                cells.append((f"bloop_beta={_fmt_param(beta)}", Bloop(beta)))
        else:
            rule = block.get("rule", "grad-norm-squared")
            if rule == "grad-norm-squared":
                for beta in _grid_values(block["beta"]):
                    cells.append(
                        (f"dbgd_beta={_fmt_param(beta)}", Dbgd(GradNormSquared(beta)))
                    )
            elif rule == "dynamic-barrier-min":
                if not problem.has_g_star:
                    raise ConfigurationError(
                        "the dynamic-barrier-min rule needs a problem with known g*"
                    )
                for alpha in _grid_values(block["alpha"]):
                    for beta in _grid_values(block["beta"]):
                        cells.append((
                            f"dbgd-min_alpha={_fmt_param(alpha)}_beta={_fmt_param(beta)}",
                            Dbgd(DynamicBarrierMin(alpha, beta, problem.g_star)),
                        ))
            else:
                if not problem.has_g_star:
                    raise ConfigurationError(
                        "the lower-linearization rule needs a problem with known g*"
                    )
                for eta in _grid_values(block["eta"]):
                    cells.append((
                        f"dbgd-lin_eta={_fmt_param(eta)}",
                        Dbgd(LowerLinearization(problem.g_star, eta)),
                    ))
    names = [name for name, _ in cells]
    if len(set(names)) != len(names):
        raise ConfigurationError("method grids produce duplicate cell names")
    return cells


def _build_solver_config(run_block: dict, method: Method) -> SolverConfig:
    step_block = run_block["step"]
    if step_block["mode"] == "constant":
        step = ConstantStep(step_block["eta"])
    else:
        step = ScheduledStep(step_block["p"])
    stop = run_block.get("stop_tolerances")
    return SolverConfig(
        method=method,
        step=step,
        iterations=run_block["iterations"],
        guard=run_block.get("guard", 1e-24),
        scale_penalty_step=run_block.get("penalty_step_scaling", True),
        record_iterates="none",
        stop_tolerances=tuple(stop) if stop is not None else None,
    )


def trace_csv(trace: TraceRecord, granularity: str = "all") -> str:
    """Render a trace as CSV text (fixed schema, 17 significant digits)."""
    lines = [TRACE_HEADER]
    indices = range(len(trace)) if granularity == "all" else [len(trace) - 1]
    for k in indices:
        cos = _fmt(trace.cos_theta[k]) if trace.cos_defined[k] else "NA"
        lines.append(",".join([
            str(k),
            _fmt(trace.f[k]),
            _fmt(trace.g[k]),
            _fmt(trace.grad_f_sq[k]),
            _fmt(trace.grad_g_sq[k]),
            _fmt(trace.lam[k]),
            _fmt(trace.d_sq[k]),
            cos,
            _fmt(trace.f_perp_sq[k]),
            _fmt(trace.f_par_sq[k]),
            _fmt(trace.delta_f[k]),
            _fmt(trace.delta_g[k]),
            _fmt(trace.potential[k]),
            "1" if trace.degenerate[k] else "0",
        ]))
    return "\n".join(lines) + "\n"


def _summary_row(name: str, trace: TraceRecord) -> str:
    k = best_iterate(trace)
    cos = _fmt(trace.cos_theta[-1]) if trace.cos_defined[-1] else "NA"
    return ",".join([
        name,
        trace.method_label,
        str(len(trace)),
        "1" if trace.stopped_early else "0",
        _fmt(trace.f[-1]),
        _fmt(trace.g[-1]),
        _fmt(trace.grad_f_sq[-1]),
        _fmt(trace.grad_g_sq[-1]),
        _fmt(trace.lam[-1]),
        _fmt(trace.d_sq[-1]),
        cos,
        _fmt(trace.f_perp_sq[-1]),
        _fmt(trace.f_par_sq[-1]),
        str(k),
        _fmt(trace.potential[k]),
        _fmt(trace.grad_g_sq[k]),
        _fmt(trace.d_sq[k]),
    ])


def _worker_count(output_block: dict) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            count = int(env)
        except ValueError as exc:
            raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {env!r}") from exc
        if count < 1:
            raise ConfigurationError(f"{WORKERS_ENV} must be >= 1, got {count}")
        return count
    return output_block.get("workers", 1)


def run_experiment(
    doc: dict | str | Path,
    output_dir: Optional[str | Path] = None,
    iterations_override: Optional[int] = None,
) -> Path:
    """Execute every grid cell of an experiment config.

    Writes one trace CSV per cell (unless trace granularity is ``none``)
    and a ``summary.csv``; returns the output directory.  ``output_dir``
    and ``iterations_override`` replace the config's values when given
    (the latter is how the full-scale budget is enabled from the CLI).
    """
    if not isinstance(doc, dict):
        doc = load_config(doc)
    else:
        validate_config(doc)
    if doc["kind"] != "experiment":
        raise ConfigurationError(f"expected an 'experiment' config, got {doc['kind']!r}")

    problem = build_problem(doc["problem"])
    cells = expand_methods(doc["methods"], problem)
    run_block = dict(doc["run"])
    if iterations_override is not None:
        if iterations_override < 1:
            raise ConfigurationError("iterations override must be >= 1")
        run_block["iterations"] = iterations_override
    x0 = resolve_x0(run_block["x0"], problem.dim)
    granularity = doc["output"].get("trace", "all")
    out = Path(output_dir if output_dir is not None else doc["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)

    def one_cell(item: tuple[str, Method]) -> tuple[str, TraceRecord]:
        name, method = item
        config = _build_solver_config(run_block, method)
        try:
            trace = run(problem, config, x0)
        except DivergenceError as exc:
            raise DivergenceError(exc.iteration, f"{exc.what} in cell {name}") from exc
        if granularity != "none":
            (out / f"{name}.csv").write_text(trace_csv(trace, granularity))
        return name, trace

    workers = _worker_count(doc["output"])
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_cell, cells))
    else:
        results = [one_cell(cell) for cell in cells]

    lines = [SUMMARY_HEADER]
    lines.extend(_summary_row(name, trace) for name, trace in results)
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    return out


def run_rates(
    doc: dict | str | Path, output_file: Optional[str | Path] = None
) -> Path:
    """Fit minimal-potential decay slopes for every configured exponent."""
    if not isinstance(doc, dict):
        doc = load_config(doc)
    else:
        validate_config(doc)
    if doc["kind"] != "rates":
        raise ConfigurationError(f"expected a 'rates' config, got {doc['kind']!r}")

    problem = build_problem(doc["problem"])
    x0 = resolve_x0(doc["x0"], problem.dim)
    tolerance = doc.get("slope_tolerance", 0.3)
    fits = []
    for p in doc["p"]:
        fit = rate_fit(problem, x0, p, list(doc["k_grid"]), tolerance)
        fits.append({
            "p": p,
            "k_values": list(fit.k_values),
            "min_potentials": list(fit.min_potentials),
            "fitted_slope": fit.fitted_slope,
            "theoretical_slope": fit.theoretical_slope,
            "slope_tolerance": fit.slope_tolerance,
            "passed": fit.passed,
        })
    report = {
        "problem": doc["problem"],
        "x0": doc["x0"],
        "fits": fits,
    }
    path = Path(output_file if output_file is not None else doc["output"]["file"])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path


DEFAULT_CLASSIFY = {
    "case1_lambda_max": 0.1,
    "case1_grad_f_sq_max": 1e-2,
    "case2_cos_theta_max": -0.99,
    "case2_lambda_min": 10.0,
}


def classify_terminal(trace: TraceRecord, thresholds: dict) -> str:
    """Label a terminal point by its stationarity signature.

    ``case1``: the multiplier stayed small and the upper gradient nearly
    vanished (both objectives near-stationary).  ``case2``: the gradients
    ended in near-complete opposition with a large multiplier.  Anything
    else is ``unclassified``.
    """
    lam = float(trace.lam[-1])
    gf_sq = float(trace.grad_f_sq[-1])
    cos = float(trace.cos_theta[-1])
    if lam <= thresholds["case1_lambda_max"] and gf_sq <= thresholds["case1_grad_f_sq_max"]:
        return "case1"
    if (
        bool(trace.cos_defined[-1])
        and cos <= thresholds["case2_cos_theta_max"]
        and lam > thresholds["case2_lambda_min"]
    ):
        return "case2"
    return "unclassified"


def run_casestudy(
    doc: dict | str | Path, output_dir: Optional[str | Path] = None
) -> Path:
    """Run one method from several initializations and classify endpoints."""
    if not isinstance(doc, dict):
        doc = load_config(doc)
    else:
        validate_config(doc)
    if doc["kind"] != "casestudy":
        raise ConfigurationError(f"expected a 'casestudy' config, got {doc['kind']!r}")

    problem = build_problem(doc["problem"])
    cells = expand_methods([doc["method"]], problem)
    if len(cells) != 1:
        raise ConfigurationError("case studies take a single method without grids")
    _, method = cells[0]
    thresholds = {**DEFAULT_CLASSIFY, **doc.get("classify", {})}

    run_block = dict(doc["run"])
    granularity = doc["output"].get("trace", "all")
    out = Path(output_dir if output_dir is not None else doc["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)

    lines = [CASES_HEADER]
    classified = 0
    for i, init in enumerate(run_block["initializations"]):
        x0 = resolve_x0(init, problem.dim)
        config = _build_solver_config(run_block, method)
        trace = run(problem, config, x0)
        if granularity != "none":
            (out / f"init{i}.csv").write_text(trace_csv(trace, granularity))
        label = classify_terminal(trace, thresholds)
        if label != "unclassified":
            classified += 1
        cos = _fmt(trace.cos_theta[-1]) if trace.cos_defined[-1] else "NA"
        lines.append(",".join([
            str(i),
            label,
            _fmt(trace.lam[-1]),
            _fmt(trace.grad_f_sq[-1]),
            _fmt(trace.grad_g_sq[-1]),
            cos,
        ]))
    if classified == 0:
        print(
            "warning: no initialization matched either terminal signature; "
            "check the classification thresholds",
            file=sys.stderr,
        )
    (out / "cases.csv").write_text("\n".join(lines) + "\n")
    return out
