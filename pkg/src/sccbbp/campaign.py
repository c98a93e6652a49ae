"""Configuration-driven Monte Carlo campaigns and their persisted reports."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConstraintViolation
from .io import dumps, write_json, write_spectrum_rows
from .model import (
    EntryDistribution,
    SpikeModel,
    diagonal_covariance,
    generate_dataset,
    make_spike_model,
    spike_model_for_targets,
)
from .resolvent import identity_instance
from .spectrum import (
    bundle_spectra,
    detect_spikes,
    goe_edge_samples,
    ks_distance,
    rescale_edge,
    rigidity_diagnostic,
    scc_spectrum,
    sticking_diagnostic,
)
from .theory import DimensionRatios, TheoryContext, bound_envelopes, gc

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KINDS = ("transition-sweep", "tw-edge", "rigidity", "sticking", "identities", "detect")
FAILURE_BUDGET = 0.01
# execution knobs that must not influence results or the config hash
_EXECUTION_FIELDS = ("out_dir", "workers")


class CampaignFailure(RuntimeError):
    """More than the allowed fraction of replicates failed."""

    def __init__(self, message: str, report: "McReport"):
        super().__init__(message)
        self.report = report


@dataclass
class ExperimentConfig:
    kind: str = "transition-sweep"
    p: int = 100
    q: int = 80
    n: int = 400
    tau: float = 0.01
    spikes: dict = field(default_factory=dict)   # {"t": [...]} or {"a": [...], "b": [...], "alignment": ...}
    sweep_t: list = field(default_factory=list)
    distributions: dict = field(default_factory=lambda: {"kind": "gaussian"})
    covariance: dict | None = None               # {"low": .., "high": .., "seed": ..} diagonal C1, C2
    replicates: int = 200
    seed: int = 0
    eps_tol: float = 0.1
    window_constant: float = 1.0
    window_eps: float = 0.1
    delta: float = 0.1
    estimate_tol: float = 0.08
    rigidity_bound: float = 10.0
    sticking_exponent: float = 0.25
    edge_count: int = 5
    goe_size: int = 400
    goe_samples: int = 2000
    goe_seed: int = 7
    identity_tol: float = 1e-9
    out_dir: str = "out"
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConstraintViolation(f"unknown campaign kind {self.kind!r}; pick one of {KINDS}")
        if self.replicates < 0:
            raise ConstraintViolation("replicate count must be nonnegative")
        if self.workers < 1:
            raise ConstraintViolation("need at least one worker")
        for name in ("eps_tol", "window_constant", "window_eps", "delta", "estimate_tol",
                     "rigidity_bound", "sticking_exponent", "identity_tol"):
            if not getattr(self, name) > 0:
                raise ConstraintViolation(f"tolerance {name} must be positive")

    @property
    def dims(self) -> DimensionRatios:
        return DimensionRatios(self.p, self.q, self.n, tau=self.tau)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConstraintViolation(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def config_hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in _EXECUTION_FIELDS}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# config -> model objects


def build_spike_model(config: ExperimentConfig, t_override: float | None = None) -> SpikeModel | None:
    dims = config.dims
    if t_override is not None:
        return spike_model_for_targets([t_override], dims, tau=config.tau)
    spec = config.spikes or {}
    if "t" in spec:
        if not spec["t"]:
            return None
        return spike_model_for_targets(spec["t"], dims, tau=config.tau)
    if "a" in spec:
        a = spec["a"]
        alignment = spec.get("alignment", "identity")
        if isinstance(alignment, list) and alignment and isinstance(alignment[0], list):
            alignment = np.array(alignment)
        elif isinstance(alignment, list):
            alignment = tuple(alignment)  # ("random", seed)
        return make_spike_model(len(a), a, spec.get("b", a), alignment, dims, tau=config.tau)
    return None


def distributions_for(config: ExperimentConfig):
    d = config.distributions
    if isinstance(d, str) or "kind" in d:
        return EntryDistribution.from_dict(d)
    return {role: EntryDistribution.from_dict(v) for role, v in d.items()}


def covariance_for(config: ExperimentConfig):
    cov = config.covariance
    if not cov:
        return None
    low, high, seed = cov.get("low", 0.5), cov.get("high", 2.0), cov.get("seed", 0)
    return diagonal_covariance(config.p, low, high, seed), diagonal_covariance(config.q, low, high, seed + 1)


@lru_cache(maxsize=8)
def _context(p: int, q: int, n: int) -> TheoryContext:
    return TheoryContext.from_dims(DimensionRatios(p, q, n, tau=0.0))


def theory_report(config: ExperimentConfig, include_gammas: bool = True) -> dict:
    """Deterministic theory summary: edges, threshold, spike classification, outlier map."""
    dims = config.dims
    ctx = _context(dims.p, dims.q, dims.n)
    out = {"context": ctx.as_dict()}
    sm = build_spike_model(config)
    if sm is None:
        out.update(t=[], delta=[], alpha_plus=None, r_plus=0, theta=[], envelopes=[])
    else:
        envs = bound_envelopes(sm.t_values, dims, eps=config.eps_tol, margin=sm.margin)
        out.update(
            t=sm.t_values, delta=sm.delta_values, alpha_plus=sm.alpha_plus, r_plus=sm.r_plus,
            margin=sm.margin,
            theta=[float(gc(t, dims)) for t in sm.outlier_t],
            envelopes=[asdict(e) for e in envs],
        )
    if config.sweep_t:
        out["sweep"] = [
            {"t": t, "prediction": float(gc(t, dims)) if t > ctx.t_threshold else ctx.lambda_plus}
            for t in config.sweep_t
        ]
    if include_gammas:
        out["gammas"] = ctx.gammas
    return out


run_theory = theory_report


# ---------------------------------------------------------------------------
# replicates


def _tasks(config: ExperimentConfig) -> list[tuple[int, float | None]]:
    if config.kind == "transition-sweep":
        return [(k * config.replicates + j, t)
                for k, t in enumerate(config.sweep_t) for j in range(config.replicates)]
    return [(j, None) for j in range(config.replicates)]


def _edges(spectra: dict, k: int) -> dict:
    return {name: spec.values[:k].tolist() for name, spec in spectra.items()}


def run_replicate(config: ExperimentConfig, replicate: int, t_value: float | None = None) -> dict:
    """One isolated replicate; never raises, failures are recorded."""
    rec = {"replicate": int(replicate), "seed": int(config.seed), "status": "ok"}
    try:
        rec.update(_replicate_body(config, replicate, t_value))
    except Exception as exc:  # failure policy: record and continue
        rec["status"] = "failed"
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def _replicate_body(config: ExperimentConfig, replicate: int, t_value: float | None) -> dict:
    if config.kind == "identities":
        res = identity_instance(config.seed, replicate, tol=config.identity_tol)
        return {
            "max_residual": max(r["residual"] for r in res),
            "all_passed": all(r["passed"] for r in res),
            "identities": res,
        }
    dims = config.dims
    ctx = _context(dims.p, dims.q, dims.n)
    sm = build_spike_model(config, t_value)
    bundle = generate_dataset(dims, sm, distributions_for(config), covariance_for(config),
                              seed=config.seed, replicate=replicate)
    kind = config.kind
    if kind == "rigidity":
        null = scc_spectrum(bundle.X, bundle.Y, "null")
        return {"rigidity": rigidity_diagnostic(null, ctx, config.delta),
                "edges": {"null": null.values[:config.edge_count].tolist()}}
    if kind == "detect":
        # work from the observed matrices; SCCs are invariant to C1, C2
        spec = scc_spectrum(bundle.X_tilde, bundle.Y_tilde, "perturbed")
        est = detect_spikes(spec, ctx, config.window_constant, config.window_eps)
        return {**est.to_dict(), "edges": {"perturbed": spec.values[:config.edge_count].tolist()}}
    spectra = bundle_spectra(bundle)
    edges = _edges(spectra, config.edge_count)
    pert, null = spectra["perturbed"], spectra["null"]
    if kind == "transition-sweep":
        return {"t": t_value, "lambda1": float(pert.values[0]), "edges": edges}
    r_plus = sm.r_plus if sm else 0
    if kind == "tw-edge":
        return {"null_edge": float(null.values[0]), "perturbed_edge": float(pert.padded(1 + r_plus)),
                "r_plus": r_plus, "edges": edges}
    if kind == "sticking":
        if sm is None:
            raise ConstraintViolation("sticking campaign needs a spike model")
        value = sticking_diagnostic(pert, null, r_plus, sm.alpha_plus, config.delta)
        return {"sticking": value, "alpha_plus": sm.alpha_plus, "r_plus": r_plus, "edges": edges}
    raise ConstraintViolation(f"unhandled campaign kind {kind!r}")


def _worker(args) -> dict:
    cfg_dict, replicate, t_value = args
    return run_replicate(ExperimentConfig.from_dict(cfg_dict), replicate, t_value)


# ---------------------------------------------------------------------------
# aggregation


def _stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"count": 0}
    q05, q50, q90, q95 = np.quantile(v, [0.05, 0.5, 0.9, 0.95])
    return {"count": int(v.size), "mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
            "median": float(q50), "q05": float(q05), "q90": float(q90), "q95": float(q95),
            "min": float(v.min()), "max": float(v.max())}


def aggregate(config: ExperimentConfig, records: list[dict]) -> dict:
    """Deterministic fold over replicate-sorted records."""
    records = sorted(records, key=lambda r: r["replicate"])
    ok = [r for r in records if r["status"] == "ok"]
    out = {"replicates": len(records), "succeeded": len(ok), "failed": len(records) - len(ok)}
    dims = config.dims
    ctx = _context(dims.p, dims.q, dims.n)
    kind = config.kind
    if kind == "transition-sweep":
        rows = []
        for t in config.sweep_t:
            vals = [r["lambda1"] for r in ok if r["t"] == t]
            pred = float(gc(t, dims)) if t > ctx.t_threshold else ctx.lambda_plus
            mean = float(np.mean(vals)) if vals else math.nan
            rows.append({"t": t, "mean_lambda1": mean, "prediction": pred,
                         "abs_error": abs(mean - pred), "stats": _stats(vals)})
        out["sweep"] = rows
    elif kind == "tw-edge":
        goe = goe_edge_samples(config.goe_size, config.goe_samples, config.goe_seed)
        null = [r["null_edge"] for r in ok]
        pert = [r["perturbed_edge"] for r in ok]
        out["goe"] = _stats(goe)
        out["null_rescaled"] = _stats(rescale_edge(null, ctx))
        out["perturbed_rescaled"] = _stats(rescale_edge(pert, ctx))
        out["ks_null"] = ks_distance(rescale_edge(null, ctx), goe) if null else None
        out["ks_perturbed"] = ks_distance(rescale_edge(pert, ctx), goe) if pert else None
    elif kind == "rigidity":
        vals = [r["rigidity"] for r in ok]
        out["rigidity"] = _stats(vals)
        out["bound"] = config.rigidity_bound
        out["fraction_within"] = float(np.mean(np.array(vals) <= config.rigidity_bound)) if vals else None
    elif kind == "sticking":
        vals = [r["sticking"] for r in ok]
        bound = dims.n ** config.sticking_exponent
        out["sticking"] = _stats(vals)
        out["bound"] = bound
        out["fraction_within"] = float(np.mean(np.array(vals) <= bound)) if vals else None
    elif kind == "detect":
        sm = build_spike_model(config)
        r_plus = sm.r_plus if sm else 0
        t_true = list(sm.outlier_t) if sm else []
        r_hat = np.array([r["r_hat"] for r in ok])
        out["r_plus"] = r_plus
        out["r_hat_counts"] = {str(k): int(np.sum(r_hat == k)) for k in np.unique(r_hat)} if r_hat.size else {}
        out["correct_rank_rate"] = float(np.mean(r_hat == r_plus)) if r_hat.size else None
        out["over_detection_rate"] = float(np.mean(r_hat > r_plus)) if r_hat.size else None
        est = []
        for i, t in enumerate(t_true):
            hit = [len(r["t_hat"]) > i and abs(r["t_hat"][i] - t) <= config.estimate_tol for r in ok]
            vals = [r["t_hat"][i] for r in ok if len(r["t_hat"]) > i]
            est.append({"index": i + 1, "t": t, "within_tol_rate": float(np.mean(hit)) if hit else None,
                        "t_hat": _stats(vals)})
        out["estimates"] = est
    elif kind == "identities":
        res = [r["max_residual"] for r in ok]
        out["max_residual"] = max(res) if res else None
        out["all_passed"] = bool(all(r["all_passed"] for r in ok))
        out["tolerance"] = config.identity_tol
    return out


# ---------------------------------------------------------------------------
# report


@dataclass
class McReport:
    config: ExperimentConfig
    records: list[dict]
    summary: dict
    theory: dict
    config_hash: str
    artifact_version: str = __version__
    schema_version: int = SCHEMA_VERSION

    @property
    def failed_replicates(self) -> list[int]:
        return [r["replicate"] for r in self.records if r["status"] != "ok"]

    def summary_document(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "artifact_version": self.artifact_version,
            "config_hash": self.config_hash,
            "kind": self.config.kind,
            "config": {k: v for k, v in self.config.to_dict().items() if k not in _EXECUTION_FIELDS},
            "theory": self.theory,
            "summary": self.summary,
            "failed_replicates": self.failed_replicates,
        }

    def edge_rows(self):
        for r in self.records:
            for prov, vals in sorted(r.get("edges", {}).items()):
                for i, v in enumerate(vals, start=1):
                    yield r["replicate"], i, v, prov

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_spectrum_rows(out / "records.csv", self.edge_rows())
        write_json(out / "records.json", {"config_hash": self.config_hash, "records": self.records})
        write_json(out / "summary.json", self.summary_document())
        return out


def run_campaign(config: ExperimentConfig, write: bool = True) -> McReport:
    """Run every replicate, fold the records, persist, and enforce the failure budget."""
    config.validate()
    if config.kind == "transition-sweep" and not config.sweep_t:
        raise ConstraintViolation("transition-sweep needs a nonempty sweep_t list")
    tasks = _tasks(config)
    if not tasks:
        log.warning("campaign has zero replicates; writing an empty report")
    if config.workers > 1 and len(tasks) > 1:
        cfg = config.to_dict()
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_worker, [(cfg, i, t) for i, t in tasks],
                                    chunksize=max(1, len(tasks) // (4 * config.workers))))
    else:
        records = [run_replicate(config, i, t) for i, t in tasks]
    records.sort(key=lambda r: r["replicate"])
    report = McReport(config, records, aggregate(config, records),
                      theory_report(config), config.config_hash())
    if write:
        report.write(config.out_dir)
    failed = len(report.failed_replicates)
    if tasks and failed > FAILURE_BUDGET * len(tasks):
        raise CampaignFailure(
            f"{failed} of {len(tasks)} replicates failed (budget {FAILURE_BUDGET:.0%})", report)
    return report
