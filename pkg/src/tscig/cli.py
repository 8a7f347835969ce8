"""Command-line entry point: ``tscig <command> [--config FILE] [--set key=value ...]``.

Every command takes one JSON config (schema per command, unknown keys
rejected); ``--set`` overrides single values using dotted keys, e.g.
``--set gms.lam=0.2``.  Exit codes: 0 ok, 1 usage/config, 2 data, 3 solver.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import analysis
from .errors import DataError, InvalidParameterError, SolverError
from .evalharness import (
    cell_seed,
    curve_from_graphs,
    rescaled_tau,
    selection_metrics,
    tau_at_detection,
    TauPoint,
    var_baseline_gms,
)
from .gms import GmsConfig, infer_cig
from .io import export_graph, ingest_csv, label_blocks, preprocess, write_series_csv
from .mlasso import SolverOptions
from .procgen import ProcessModel, ground_truth_graph, bivariate_var1, random_sparse_covariance, simulate
from .spectral import make_gaussian_window, make_window

THREADS_ENV = "TSCIG_THREADS"
SCHEMA_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProcessSpec(_Strict):
    kind: Literal["var1", "firma", "white"] = "var1"
    p: int = Field(2, ge=1)
    sigma: float = Field(1.0, gt=0)
    # planted-graph settings (firma)
    s_max: int = Field(3, ge=0)
    coupling: float = Field(0.95, gt=0, lt=1)
    graph_seed: int = 7
    fir_coeffs: list[float] = [1.0, 0.5]
    # var1: defaults to the bivariate rotation-like example when omitted
    var1_A: list[list[float]] | None = None

    def build(self) -> ProcessModel:
        if self.kind == "white":
            return ProcessModel.white_noise(self.p, self.sigma)
        if self.kind == "firma":
            C0 = random_sparse_covariance(self.p, self.s_max, self.coupling, seed=self.graph_seed)
            return ProcessModel.fir_ma(C0, self.fir_coeffs)
        if self.var1_A is None:
            if self.p != 2:
                raise InvalidParameterError("var1 without var1_A requires p = 2")
            return bivariate_var1(self.sigma)
        return ProcessModel.var1(np.array(self.var1_A), self.sigma ** 2 * np.eye(len(self.var1_A)))


class SolverSpec(_Strict):
    rho: float = Field(1.0, gt=0)
    abs_tol: float = Field(1e-8, gt=0)
    rel_tol: float = Field(1e-7, gt=0)
    max_iter: int = Field(10000, ge=1)
    adaptive_rho: bool = True
    best_effort: bool = False

    def build(self) -> SolverOptions:
        return SolverOptions(**self.model_dump())


class GmsSpec(_Strict):
    lam: float = Field(0.1, ge=0)
    eta: float = Field(0.1, ge=0)
    window_scale: float = Field(44.0, gt=0)
    F: int = Field(4, ge=1)
    quad_points: int = Field(8, ge=1)
    rule: Literal["and", "or"] = "or"
    solver: SolverSpec = SolverSpec()

    def build(self, **override) -> GmsConfig:
        d = self.model_dump(exclude={"solver"})
        d.update(override)
        return GmsConfig(solver=self.solver.build(), **d)


class CsvSpec(_Strict):
    header_row: bool = True
    label_column: str | int | None = None
    delimiter: str = ","


class _Command(_Strict):
    version: Literal[1] = SCHEMA_VERSION


class SimulateConfig(_Command):
    process: ProcessSpec = ProcessSpec()
    N: int = Field(1024, ge=1)
    burn_in: int = Field(1000, ge=0)
    seed: int = 0
    output: str = "data.csv"
    truth_output: str | None = None


class InferConfig(_Command):
    input: str
    csv: CsvSpec = CsvSpec()
    gms: GmsSpec = GmsSpec()
    output: str = "graph.json"
    format: Literal["json", "dot", "csv"] = "json"
    diagnostics_output: str | None = None


class LambdaGrid(_Strict):
    start: float = Field(gt=0)
    stop: float = Field(gt=0)
    num: int = Field(ge=1)

    def values(self) -> np.ndarray:
        return np.geomspace(self.start, self.stop, self.num)


class EvalRocConfig(_Command):
    process: ProcessSpec = ProcessSpec(kind="firma", p=16)
    gms: GmsSpec = GmsSpec()
    lambdas: LambdaGrid | list[float] = LambdaGrid(start=0.005, stop=1.0, num=20)
    # None: half the smallest true edge strength
    eta: float | None = None
    N: int = Field(128, ge=2)
    M: int = Field(10, ge=1)
    seed: int = 0
    baseline: bool = False
    baseline_lambdas: LambdaGrid | list[float] = LambdaGrid(start=1e-3, stop=0.5, num=20)
    baseline_eta: float = Field(0.0, ge=0)
    output: str = "roc.csv"


class TauSweepConfig(_Command):
    ps: list[int] = [16, 32]
    Ns: list[int] = [8, 12, 16, 24, 32, 48, 64, 128, 256]
    M: int = Field(10, ge=1)
    seed: int = 0
    s_max: int = Field(3, ge=1)
    coupling: float = Field(0.95, gt=0, lt=1)
    graph_seed: int = 7
    fir_coeffs: list[float] = [1.0, 0.5]
    lam_factor: float = Field(0.5, gt=0)
    eta_factor: float = Field(0.25, ge=0)
    window_scale: float = Field(44.0, gt=0)
    F: int = Field(4, ge=1)
    quad_points: int = Field(8, ge=1)
    output: str = "tau.csv"


class CheckBoundsConfig(_Command):
    N: float = Field(gt=0)
    p: int = Field(ge=1)
    s_max: int = Field(ge=1)
    rho_min: float = Field(gt=0)
    U: float = Field(ge=1)
    delta: float = Field(gt=0, lt=1)
    window_l1: float = Field(gt=0)
    mu_h1: float = Field(0.0, ge=0)
    E: float | None = Field(None, ge=0)
    output: str | None = None


class SdmTailSpec(_Strict):
    process: ProcessSpec = ProcessSpec(kind="white", p=2)
    window: Literal["gaussian", "delta"] = "gaussian"
    window_scale: float = Field(44.0, gt=0)
    N: int = Field(256, ge=1)
    nu: float = Field(0.4, gt=0, lt=0.5)
    trials: int = Field(500, ge=1)
    seed: int = 0


class QuadSpec(_Strict):
    N: int = Field(64, ge=1)
    nu: float = Field(0.45, gt=0, lt=0.5)
    trials: int = Field(2000, ge=1)
    seed: int = 0
    q_scale: float = 1.0
    # identical halves (y = x) exercise the symmetric single-vector form
    coupled: bool = False


class McVerifyConfig(_Command):
    sdm: list[SdmTailSpec] = [
        SdmTailSpec(),
        SdmTailSpec(window="delta", N=1024, nu=0.45),
    ]
    quadratic: list[QuadSpec] = [QuadSpec(), QuadSpec(q_scale=2.0), QuadSpec(coupled=True)]
    output: str | None = None


class EegConfig(_Command):
    input: str
    csv: CsvSpec = CsvSpec(label_column="eye")
    N: int = Field(1024, ge=2)
    outlier_mad_k: float = Field(5.0, gt=0)
    boxcar_len: int = Field(5, ge=1)
    gms: GmsSpec = GmsSpec()
    output_dir: str = "eeg_graphs"
    format: Literal["json", "dot", "csv"] = "json"


COMMANDS = {
    "simulate": SimulateConfig,
    "infer": InferConfig,
    "eval-roc": EvalRocConfig,
    "tau-sweep": TauSweepConfig,
    "check-bounds": CheckBoundsConfig,
    "mc-verify": McVerifyConfig,
    "eeg-pipeline": EegConfig,
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``key.sub=value`` overrides; values are parsed as JSON when possible."""
    for item in overrides or []:
        if "=" not in item:
            raise InvalidParameterError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = raw
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise InvalidParameterError(f"cannot set {key}: {part} is not a section")
        node[parts[-1]] = _parse_value(val)
    return raw


def _merge(base: dict, top: dict) -> dict:
    out = dict(base)
    for k, v in top.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _section_defaults(model: type[BaseModel]) -> dict:
    # nested sections start from their defaults so a partial override keeps the rest
    return {
        name: f.default.model_dump(mode="json")
        for name, f in model.model_fields.items()
        if isinstance(f.default, BaseModel)
    }


def load_config(command: str, path=None, overrides=None):
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as e:
            raise InvalidParameterError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise InvalidParameterError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise InvalidParameterError("config must be a JSON object")
    raw = apply_overrides(raw, overrides)
    model = COMMANDS[command]
    return model.model_validate(_merge(_section_defaults(model), raw))


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise InvalidParameterError(f"{THREADS_ENV} must be an integer") from None


def _pmap(fn, items):
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _grid(spec) -> np.ndarray:
    vals = spec.values() if isinstance(spec, LambdaGrid) else np.asarray(spec, dtype=float)
    if vals.size == 0:
        raise InvalidParameterError("empty lambda grid")
    return vals


def _write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def run_simulate(cfg: SimulateConfig) -> dict:
    model = cfg.process.build()
    blk = simulate(model, cfg.N, burn_in=cfg.burn_in, seed=cfg.seed)
    write_series_csv(cfg.output, blk.values)
    out = {"output": cfg.output, "p": blk.p, "N": blk.N}
    if cfg.truth_output:
        gt = ground_truth_graph(model)
        export_graph(gt.graph, "json", cfg.truth_output)
        out["truth_output"] = cfg.truth_output
    return out


def run_infer(cfg: InferConfig) -> dict:
    series = ingest_csv(cfg.input, cfg.csv.header_row, cfg.csv.label_column, cfg.csv.delimiter)
    graph, diags = infer_cig(series.values, cfg.gms.build())
    export_graph(graph, cfg.format, cfg.output)
    if cfg.diagnostics_output:
        rows = [
            {
                "node": d.node + 1,
                "iterations": d.report.iterations,
                "converged": d.report.converged,
                "group_norms": {str(int(c) + 1): float(g) for c, g in zip(d.columns, d.group_norms)},
            }
            for d in diags
        ]
        Path(cfg.diagnostics_output).write_text(json.dumps(rows, indent=1) + "\n")
    return {"output": cfg.output, "edges": len(graph)}


def run_eval_roc(cfg: EvalRocConfig) -> dict:
    model = cfg.process.build()
    gt = ground_truth_graph(model)
    eta = gt.rho_min / 2 if cfg.eta is None else cfg.eta
    lams = _grid(cfg.lambdas)
    blocks = _pmap(lambda l: simulate(model, cfg.N, seed=cell_seed(cfg.seed, 0, l)), range(cfg.M))
    base = cfg.gms.build(eta=eta)
    cells = [(i, l) for i in range(lams.size) for l in range(cfg.M)]
    graphs = _pmap(lambda c: infer_cig(blocks[c[1]], replace(base, lam=float(lams[c[0]])))[0], cells)
    per_lam = [graphs[i * cfg.M:(i + 1) * cfg.M] for i in range(lams.size)]
    curve = curve_from_graphs(lams, per_lam, gt.graph)
    rows = [("proposed", lam, fa, pd) for lam, fa, pd in curve.points]
    out = {"output": cfg.output, "area": curve.area()}
    if cfg.baseline:
        blams = _grid(cfg.baseline_lambdas)
        bcells = [(i, l) for i in range(blams.size) for l in range(cfg.M)]
        bgraphs = _pmap(lambda c: var_baseline_gms(blocks[c[1]], float(blams[c[0]]), cfg.baseline_eta), bcells)
        bcurve = curve_from_graphs(blams, [bgraphs[i * cfg.M:(i + 1) * cfg.M] for i in range(blams.size)], gt.graph)
        rows += [("var-baseline", lam, fa, pd) for lam, fa, pd in bcurve.points]
        out["baseline_area"] = bcurve.area()
    lines = ["method,lambda,p_fa,p_d"] + [f"{m},{_fmt(a)},{_fmt(b)},{_fmt(c)}" for m, a, b, c in rows]
    Path(cfg.output).write_text("\n".join(lines) + "\n")
    return out


def tau_window_scale(scale: float, N: int) -> float:
    """Shrink the lag window for short blocks so its transform stays non-negative."""
    return min(scale, N * N / 36.0)


def run_tau_sweep(cfg: TauSweepConfig) -> dict:
    points = []
    for p in cfg.ps:
        C0 = random_sparse_covariance(p, cfg.s_max, cfg.coupling, seed=cfg.graph_seed)
        model = ProcessModel.fir_ma(C0, cfg.fir_coeffs)
        gt = ground_truth_graph(model)
        for N in cfg.Ns:
            gcfg = GmsConfig(
                lam=cfg.lam_factor * gt.rho_min,
                eta=cfg.eta_factor * gt.rho_min,
                window_scale=tau_window_scale(cfg.window_scale, N),
                F=cfg.F,
                quad_points=cfg.quad_points,
            )
            graphs = _pmap(
                lambda l: infer_cig(simulate(model, N, seed=cell_seed(cfg.seed, p, N, l)), gcfg)[0], range(cfg.M)
            )
            m = selection_metrics(graphs, gt.graph)
            points.append(TauPoint(p, int(N), rescaled_tau(N, p, gt.s_max), m.p_d, m.p_fa))
    _write_csv(cfg.output, ["p", "N", "tau", "p_d", "p_fa"], [(t.p, t.N, t.tau, t.p_d, t.p_fa) for t in points])
    cross = {str(p): tau_at_detection([t for t in points if t.p == p]) for p in cfg.ps}
    return {"output": cfg.output, "tau_at_half_detection": cross}


def run_check_bounds(cfg: CheckBoundsConfig) -> dict:
    tp = analysis.TheoryParams(cfg.N, cfg.p, cfg.s_max, cfg.rho_min, cfg.U, cfg.delta, cfg.window_l1, cfg.mu_h1)
    out = {}
    for variant in analysis.Variant:
        chk = analysis.theorem_bound_check(tp, variant)
        out[variant.value] = {
            "satisfied": chk.satisfied,
            "margin": chk.margin_n,
            "moment_ok": chk.moment_ok,
            "crossover_N": analysis.crossover_sample_size(tp, variant),
        }
    if cfg.E is not None:
        ok = analysis.compatibility_condition_check(cfg.E, cfg.s_max)
        out["compatibility"] = {"holds": ok, "phi_lower_bound": analysis.PHI_LOWER_BOUND if ok else None}
    if cfg.output:
        Path(cfg.output).write_text(json.dumps(out, indent=1) + "\n")
    return out


def _quad_inputs(spec: QuadSpec):
    N = spec.N
    if spec.coupled:
        I = np.eye(N)
        Cz = np.block([[I, I], [I, I]])
    else:
        Cz = np.eye(2 * N)
    return Cz, spec.q_scale * np.eye(N)


def run_mc_verify(cfg: McVerifyConfig) -> dict:
    results = []
    for s in cfg.sdm:
        w = make_gaussian_window(s.window_scale, s.N) if s.window == "gaussian" else make_window([1.0], s.N)
        r = analysis.mc_sdm_tail_check(s.process.build(), w, s.N, s.nu, s.trials, s.seed)
        results.append({"check": "sdm-tail", **s.model_dump(), **_mc_dict(r)})
    for q in cfg.quadratic:
        Cz, Q = _quad_inputs(q)
        r = analysis.mc_quadratic_form_check(Cz, Q, q.nu, q.trials, q.seed)
        results.append({"check": "quadratic-form", **q.model_dump(), **_mc_dict(r)})
    out = {"all_passed": all(r["passed"] for r in results), "results": results}
    if cfg.output:
        Path(cfg.output).write_text(json.dumps(out, indent=1) + "\n")
    return out


def _mc_dict(r: analysis.McResult) -> dict:
    return {"empirical": r.empirical, "bound": r.bound, "exceedances": r.exceedances, "passed": r.passed}


def run_eeg(cfg: EegConfig) -> dict:
    series = ingest_csv(cfg.input, cfg.csv.header_row, cfg.csv.label_column, cfg.csv.delimiter)
    if series.labels is None:
        raise DataError("eeg-pipeline needs a label column")
    clean = preprocess(series, cfg.outlier_mad_k, cfg.boxcar_len)
    blocks = label_blocks(clean, cfg.N)
    if not blocks:
        raise DataError(f"no label has a contiguous run of {cfg.N} clean samples")
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    gcfg = cfg.gms.build()
    out = {}
    for label, sl in blocks.items():
        graph, _ = infer_cig(clean.values[:, sl], gcfg)
        path = outdir / f"graph_label{label}.{cfg.format}"
        export_graph(graph, cfg.format, path)
        out[str(label)] = {"output": str(path), "edges": len(graph), "first_row": int(clean.index[sl.start]) + 1}
    return out


RUNNERS = {
    "simulate": run_simulate,
    "infer": run_infer,
    "eval-roc": run_eval_roc,
    "tau-sweep": run_tau_sweep,
    "check-bounds": run_check_bounds,
    "mc-verify": run_mc_verify,
    "eeg-pipeline": run_eeg,
}


def _nan_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_safe(v) for v in obj]
    return obj


def _error(code: int, exc: BaseException, **extra) -> int:
    report = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc), **extra}
    print(json.dumps(report), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tscig", description="CIG inference for vector time series.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config value (dotted keys, JSON values); repeatable")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.command, args.config, args.overrides)
        result = RUNNERS[args.command](cfg)
    except ValidationError as e:
        return _error(EXIT_CONFIG, e, details=json.loads(e.json(include_url=False)))
    except DataError as e:
        return _error(EXIT_DATA, e)
    except SolverError as e:
        failed = getattr(e, "failed_nodes", None if e.node is None else [e.node])
        return _error(EXIT_SOLVER, e, nodes=None if failed is None else [r + 1 for r in failed])
    except InvalidParameterError as e:
        return _error(EXIT_CONFIG, e)
    except OSError as e:
        return _error(EXIT_DATA, e)
    print(json.dumps(_nan_safe({"status": "ok", "command": args.command, **result}), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
