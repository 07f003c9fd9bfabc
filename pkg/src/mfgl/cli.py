"""Command-line front end: plan, estimate, bench.

The workflow is two-phase because the high-fidelity model belongs to the
user, not to us.  ``plan`` picks which parameter points deserve expensive
evaluations and writes the reordered low-fidelity matrix; the user runs
their own solver on the selected points; ``estimate`` ingests those
results and produces the updated estimates with uncertainties.  ``bench``
short-circuits the loop on synthetic problems where the truth is known.

Exit codes: 0 ok, 2 I/O error, 3 validation error, 4 numerical failure.
Errors are reported as one JSON object on stderr.

Only the standard library is imported at module level: ``--threads`` (or
``MFGL_THREADS``) caps BLAS pools through environment variables, which
must be set before the numerical stack is first imported.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .exceptions import (
    InvalidConfig,
    MatrixIOError,
    NumericalError,
    RowCountMismatch,
    ValidationError,
)

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

_FORMATS = ("csv", "bin")
_SOLVERS = ("dense", "truncated", "nystrom")
_NORMALIZATIONS = ("none", "component", "instance")
_SADDLE_METHODS = ("symmetric", "unsymmetric", "woodbury")
_GENERATORS = ("clustered-shift", "smooth-manifold", "beam-like-1d")
_METRICS = ("component", "field")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _auto_or_positive(value, name: str) -> Optional[float]:
    # "auto" (or None) means: resolve from the data at run time.
    if value is None or value == "auto":
        return None
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise InvalidConfig(f"{name} must be 'auto' or a number, got {value!r}")
    if not out > 0:
        raise InvalidConfig(f"{name} must be positive, got {out}")
    return out


@dataclass(frozen=True)
class RunConfig:
    """Checked bag of settings shared by all subcommands.

    ``omega`` and ``tau`` accept the string ``"auto"`` (resolve from the
    data) or a fixed positive value, matching the flags.
    """

    lf_path: Optional[str] = None
    hf_path: Optional[str] = None
    plan_path: Optional[str] = None
    format: str = "csv"
    header: bool = False
    normalization: str = "none"
    p: float = 0.5
    q: float = 0.5
    knn_k: int = 7
    solver: str = "truncated"
    K: Optional[int] = None
    m: int = 10
    sigma: Optional[float] = None
    beta: float = 2.0
    r: float = 3.0
    omega: object = "auto"
    tau: object = "auto"
    seed: int = 0
    output_dir: str = "."
    threads: Optional[int] = None
    saddle_method: Optional[str] = None
    rank_r: Optional[int] = None
    embed_dim: Optional[int] = None

    def validate(self) -> None:
        if self.format not in _FORMATS:
            raise InvalidConfig(f"format must be one of {_FORMATS}, got {self.format!r}")
        if self.solver not in _SOLVERS:
            raise InvalidConfig(f"solver must be one of {_SOLVERS}, got {self.solver!r}")
        if self.normalization not in _NORMALIZATIONS:
            raise InvalidConfig(
                f"normalization must be one of {_NORMALIZATIONS}, got {self.normalization!r}"
            )
        if self.saddle_method is not None and self.saddle_method not in _SADDLE_METHODS:
            raise InvalidConfig(
                f"saddle-method must be one of {_SADDLE_METHODS}, got {self.saddle_method!r}"
            )
        if self.solver == "nystrom" and abs(self.p + self.q - 1.0) > 1e-12:
            raise InvalidConfig(
                f"solver 'nystrom' needs p + q = 1, got p={self.p}, q={self.q}"
            )
        if self.knn_k < 1:
            raise InvalidConfig(f"knn-k must be at least 1, got {self.knn_k}")
        if self.m < 0:
            raise InvalidConfig(f"m must be non-negative, got {self.m}")
        if self.K is not None and self.K < 1:
            raise InvalidConfig(f"K must be at least 1, got {self.K}")
        if self.sigma is not None and not self.sigma > 0:
            raise InvalidConfig(f"sigma must be positive, got {self.sigma}")
        if not self.beta > 0:
            raise InvalidConfig(f"beta must be positive, got {self.beta}")
        if not self.r > 0:
            raise InvalidConfig(f"r must be positive, got {self.r}")
        if self.threads is not None and self.threads < 1:
            raise InvalidConfig(f"threads must be at least 1, got {self.threads}")
        if self.rank_r is not None and self.rank_r < 1:
            raise InvalidConfig(f"rank-r must be at least 1, got {self.rank_r}")
        if self.embed_dim is not None and self.embed_dim < 1:
            raise InvalidConfig(f"embed-dim must be at least 1, got {self.embed_dim}")
        # Parse eagerly so a bad value fails before any compute.
        _auto_or_positive(self.omega, "omega")
        _auto_or_positive(self.tau, "tau")

    @property
    def omega_value(self) -> Optional[float]:
        return _auto_or_positive(self.omega, "omega")

    @property
    def tau_value(self) -> Optional[float]:
        return _auto_or_positive(self.tau, "tau")


@dataclass(frozen=True)
class BenchConfig:
    """Synthetic-problem knobs, only consumed by the bench subcommand."""

    generator: str = "clustered-shift"
    n: int = 1000
    d: int = 5
    clusters: int = 10
    displacement_rel: float = 0.3
    noise_rel: float = 0.01
    lf_scale: float = 0.8
    metric: str = "field"

    def validate(self) -> None:
        if self.generator not in _GENERATORS:
            raise InvalidConfig(
                f"generator must be one of {_GENERATORS}, got {self.generator!r}"
            )
        if self.metric not in _METRICS:
            raise InvalidConfig(f"metric must be one of {_METRICS}, got {self.metric!r}")
        if self.n < 2:
            raise InvalidConfig(f"n must be at least 2, got {self.n}")
        if self.d < 1:
            raise InvalidConfig(f"d must be at least 1, got {self.d}")
        if self.clusters < 1:
            raise InvalidConfig(f"clusters must be at least 1, got {self.clusters}")
        if not self.displacement_rel > 0:
            raise InvalidConfig(
                f"displacement-rel must be positive, got {self.displacement_rel}"
            )
        if self.noise_rel < 0:
            raise InvalidConfig(f"noise-rel must be non-negative, got {self.noise_rel}")
        if not self.lf_scale > 0:
            raise InvalidConfig(f"lf-scale must be positive, got {self.lf_scale}")


def _merge_config(ns: argparse.Namespace) -> tuple[RunConfig, BenchConfig]:
    """Defaults, then the JSON config file, then explicit flags."""
    run_kw = {f.name: f.default for f in fields(RunConfig)}
    bench_kw = {f.name: f.default for f in fields(BenchConfig)}
    config_path = getattr(ns, "config", None)
    if config_path:
        text = Path(config_path).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config file {config_path} is not valid JSON: {exc}")
        if not isinstance(raw, dict):
            raise InvalidConfig(f"config file {config_path} must hold a JSON object")
        for key, value in raw.items():
            if key in run_kw:
                run_kw[key] = value
            elif key in bench_kw:
                bench_kw[key] = value
            else:
                raise InvalidConfig(f"unknown config key {key!r} in {config_path}")
    for key in run_kw:
        flag = getattr(ns, key, None)
        if flag is not None:
            run_kw[key] = flag
    for key in bench_kw:
        flag = getattr(ns, key, None)
        if flag is not None:
            bench_kw[key] = flag
    cfg = RunConfig(**run_kw)
    cfg.validate()
    bcfg = BenchConfig(**bench_kw)
    bcfg.validate()
    return cfg, bcfg


def _apply_thread_cap(threads: Optional[int]) -> None:
    # Effective only if set before numpy/scipy first load their BLAS; the
    # lazy imports below guarantee that for this process.
    if threads is None:
        return
    for var in _THREAD_ENV_VARS:
        os.environ[var] = str(threads)


# ---------------------------------------------------------------------------
# Matrix I/O in the configured format
# ---------------------------------------------------------------------------

def _read_matrix(path: str, cfg: RunConfig):
    from . import matio

    if cfg.format == "bin":
        return matio.read_binary(path)
    return matio.read_csv(path, header=cfg.header)


def _write_matrix(path: Path, a, cfg: RunConfig) -> None:
    from . import matio

    if cfg.format == "bin":
        matio.write_binary(path, a)
    else:
        matio.write_csv(path, a)


def _matrix_name(stem: str, cfg: RunConfig) -> str:
    return f"{stem}.bin" if cfg.format == "bin" else f"{stem}.csv"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _pipeline_config(cfg: RunConfig, m: int, sigma: Optional[float] = None):
    from .bench import PipelineConfig
    from .data import Normalization
    from .nystrom import SaddleMethod
    from .posterior import SolverTag

    method = None if cfg.saddle_method is None else SaddleMethod(cfg.saddle_method)
    return PipelineConfig(
        solver=SolverTag(cfg.solver),
        m=m,
        knn_k=cfg.knn_k,
        p=cfg.p,
        q=cfg.q,
        normalization=Normalization(cfg.normalization),
        sigma=sigma,
        K=cfg.K,
        beta=cfg.beta,
        r=cfg.r,
        omega=cfg.omega_value,
        tau=cfg.tau_value,
        seed=cfg.seed,
        saddle_method=method,
        rank_r=cfg.rank_r,
        embed_dim=cfg.embed_dim,
    )


def cmd_plan(cfg: RunConfig) -> int:
    import numpy as np

    from .acquisition import plan_acquisition, save_plan
    from .bench import planning_spectrum
    from .data import Dataset, Normalization, normalize

    if cfg.lf_path is None:
        raise InvalidConfig("plan needs --lf-path")
    if cfg.m < 1:
        raise InvalidConfig("plan needs m >= 1")
    lf = _read_matrix(cfg.lf_path, cfg)
    ds = Dataset(lf=lf)
    if cfg.m > ds.n:
        raise InvalidConfig(f"m={cfg.m} exceeds the number of rows {ds.n}")

    ds_norm, _ = normalize(ds, Normalization(cfg.normalization))
    pcfg = _pipeline_config(cfg, m=cfg.m)
    spectrum = planning_spectrum(ds_norm.lf, pcfg)
    plan = plan_acquisition(spectrum, cfg.m, cfg.seed, embed_dim=cfg.embed_dim)

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    plan_file = outdir / "plan.json"
    save_plan(plan_file, plan)
    perm = np.asarray(plan.permutation, dtype=np.intp)
    lf_file = outdir / _matrix_name("lf_permuted", cfg)
    _write_matrix(lf_file, lf[perm], cfg)

    # The ids the user must now evaluate with their high-fidelity model,
    # in the exact row order the estimate step expects the results in.
    ids = (
        [ds.param_ids[i] for i in plan.selected_indices]
        if ds.param_ids is not None
        else list(plan.selected_indices)
    )
    print(
        json.dumps(
            {
                "parameter_ids": ids,
                "selected_indices": list(plan.selected_indices),
                "plan_path": str(plan_file),
                "lf_permuted_path": str(lf_file),
            }
        )
    )
    return 0


def cmd_estimate(cfg: RunConfig) -> int:
    from .acquisition import load_plan
    from .bench import estimate_attached, sigma_in_solve_coords
    from .data import Dataset, Normalization, normalize
    from .matio import write_csv

    if cfg.lf_path is None:
        raise InvalidConfig("estimate needs --lf-path (the reordered matrix from plan)")
    if cfg.hf_path is None:
        raise InvalidConfig("estimate needs --hf-path")
    if cfg.plan_path is None:
        raise InvalidConfig("estimate needs --plan-path")
    if cfg.sigma is None:
        raise InvalidConfig("estimate needs --sigma (observation noise level)")

    plan = load_plan(cfg.plan_path)
    lf = _read_matrix(cfg.lf_path, cfg)
    hf = _read_matrix(cfg.hf_path, cfg)
    if lf.shape[0] != len(plan.permutation):
        raise RowCountMismatch(
            f"low-fidelity matrix has {lf.shape[0]} rows but the plan "
            f"covers {len(plan.permutation)}"
        )
    if hf.shape[0] != plan.m:
        raise RowCountMismatch(
            f"high-fidelity matrix has {hf.shape[0]} rows but the plan "
            f"selected {plan.m}"
        )

    ds_norm, nspec = normalize(Dataset(lf=lf), Normalization(cfg.normalization))
    sigma = sigma_in_solve_coords(cfg.sigma, nspec)
    ds_solve = Dataset(lf=ds_norm.lf, hf=nspec.apply(hf))
    art = estimate_attached(ds_solve, _pipeline_config(cfg, m=plan.m, sigma=sigma))

    mf = nspec.invert(ds_norm.lf + art.posterior.phi_star)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    mf_file = outdir / _matrix_name("mf_estimates", cfg)
    _write_matrix(mf_file, mf, cfg)
    write_csv(outdir / "stddevs.csv", art.posterior.stddevs[:, None])
    hp = art.hyper
    resolved = {
        "sigma": hp.sigma,
        "omega": hp.omega,
        "tau": hp.tau,
        "beta": hp.beta,
        "r": hp.r,
        "kappa": hp.kappa,
    }
    (outdir / "hyperparameters.json").write_text(json.dumps(resolved, indent=2) + "\n")
    (outdir / "timings.json").write_text(json.dumps(art.timings, indent=2) + "\n")
    print(
        json.dumps(
            {
                "mf_estimates_path": str(mf_file),
                "stddevs_path": str(outdir / "stddevs.csv"),
                "hyperparameters": resolved,
            }
        )
    )
    return 0


def cmd_bench(cfg: RunConfig, bcfg: BenchConfig) -> int:
    import dataclasses

    from .bench import ErrorMetric, Generator, generate, run_pipeline, write_report

    problem = generate(
        Generator(bcfg.generator),
        bcfg.n,
        bcfg.d,
        seed=cfg.seed,
        clusters=bcfg.clusters,
        displacement_rel=bcfg.displacement_rel,
        noise_rel=bcfg.noise_rel,
        lf_scale=bcfg.lf_scale,
    )
    pcfg = _pipeline_config(cfg, m=cfg.m, sigma=cfg.sigma)
    pcfg = dataclasses.replace(pcfg, metric=ErrorMetric(bcfg.metric))
    output = run_pipeline(problem, pcfg)
    write_report(cfg.output_dir, output)
    print(
        json.dumps(
            {
                "generator": bcfg.generator,
                "n": bcfg.n,
                "d": bcfg.d,
                "m": cfg.m,
                "mean_lf_error_pct": output.report.mean_lf,
                "mean_mf_error_pct": output.report.mean_mf,
                "reduction_pct": output.report.reduction,
                "report_path": str(Path(cfg.output_dir) / "report.json"),
            }
        )
    )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # argparse exits with its own code 2 on bad flags; route through the
    # shared taxonomy instead (bad usage is a validation error, exit 3).
    def error(self, message):
        raise InvalidConfig(message)


def _add_shared(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("shared options")
    g.add_argument("--config", metavar="FILE", help="JSON file with config fields; explicit flags override it")
    g.add_argument("--format", choices=_FORMATS, help="matrix file format (default csv)")
    g.add_argument("--header", action=argparse.BooleanOptionalAction, default=None,
                   help="first row of CSV inputs is a header")
    g.add_argument("--normalization", choices=_NORMALIZATIONS)
    g.add_argument("--p", type=float, help="left degree exponent")
    g.add_argument("--q", type=float, help="right degree exponent")
    g.add_argument("--knn-k", type=int, dest="knn_k", help="neighbor rank for the local kernel scale")
    g.add_argument("--solver", choices=_SOLVERS)
    g.add_argument("--K", type=int, dest="K", help="spectrum size (truncated) or landmark count (nystrom)")
    g.add_argument("--m", type=int, help="high-fidelity budget")
    g.add_argument("--sigma", type=float, help="observation noise level")
    g.add_argument("--beta", type=float, help="prior smoothness exponent")
    g.add_argument("--r", type=float, help="spread-calibration multiple")
    g.add_argument("--omega", help="'auto' or a fixed prior strength")
    g.add_argument("--tau", help="'auto' or a fixed spectral shift")
    g.add_argument("--seed", type=int)
    g.add_argument("--output-dir", dest="output_dir", metavar="DIR")
    g.add_argument("--threads", type=int, help="cap for BLAS worker pools (MFGL_THREADS equivalent)")
    g.add_argument("--saddle-method", choices=_SADDLE_METHODS, dest="saddle_method")
    g.add_argument("--rank-r", type=int, dest="rank_r", help="extra rank cut for the landmark factor")
    g.add_argument("--embed-dim", type=int, dest="embed_dim", help="spectral embedding width for planning")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="mfgl",
        description="Multi-fidelity estimation on graph-Laplacian priors.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{plan,estimate,bench}")

    p_plan = sub.add_parser("plan", help="select the rows worth a high-fidelity evaluation")
    p_plan.add_argument("--lf-path", dest="lf_path", metavar="FILE", help="low-fidelity matrix")
    _add_shared(p_plan)

    p_est = sub.add_parser("estimate", help="fuse high-fidelity results into updated estimates")
    p_est.add_argument("--lf-path", dest="lf_path", metavar="FILE", help="reordered low-fidelity matrix from plan")
    p_est.add_argument("--hf-path", dest="hf_path", metavar="FILE", help="high-fidelity rows, in plan order")
    p_est.add_argument("--plan-path", dest="plan_path", metavar="FILE", help="plan.json from the plan step")
    _add_shared(p_est)

    p_bench = sub.add_parser("bench", help="run the pipeline on a synthetic problem")
    p_bench.add_argument("--generator", choices=_GENERATORS)
    p_bench.add_argument("--n", type=int, help="number of parameter points")
    p_bench.add_argument("--d", type=int, help="state dimension")
    p_bench.add_argument("--clusters", type=int)
    p_bench.add_argument("--displacement-rel", type=float, dest="displacement_rel")
    p_bench.add_argument("--noise-rel", type=float, dest="noise_rel")
    p_bench.add_argument("--lf-scale", type=float, dest="lf_scale")
    p_bench.add_argument("--metric", choices=_METRICS)
    _add_shared(p_bench)

    return parser


def _emit_error(exc: BaseException, code: int) -> None:
    payload = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        parser = _build_parser()
        ns = parser.parse_args(argv)
        env_threads = os.environ.get("MFGL_THREADS")
        if ns.threads is None and env_threads is not None:
            try:
                ns.threads = int(env_threads)
            except ValueError:
                raise InvalidConfig(f"MFGL_THREADS must be an integer, got {env_threads!r}")
        cfg, bcfg = _merge_config(ns)
        _apply_thread_cap(cfg.threads)
        if ns.command == "plan":
            return cmd_plan(cfg)
        if ns.command == "estimate":
            return cmd_estimate(cfg)
        return cmd_bench(cfg, bcfg)
    except SystemExit as exc:  # argparse --help/--version
        return exc.code if isinstance(exc.code, int) else 0
    except (MatrixIOError, OSError) as exc:
        _emit_error(exc, 2)
        return 2
    except ValidationError as exc:
        _emit_error(exc, 3)
        return 3
    except NumericalError as exc:
        _emit_error(exc, 4)
        return 4


if __name__ == "__main__":
    sys.exit(main())
