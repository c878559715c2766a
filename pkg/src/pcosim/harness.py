"""Seeded Monte Carlo experiment runner and result export.

An experiment spec names a protocol kind, a topology (inline, from file,
or from a generator preset), protocol parameters and a seed plan.  Trials
are independent and deterministic: trial k runs on the Philox stream
spawned from (base seed, k), and aggregation folds records in seed order,
so the same spec always produces byte-identical outputs.

Export writes one delimited trials file plus a JSON aggregate summary;
figure rendering on top of those files lives in :mod:`pcosim.figures`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import sched, spectral, sync
from .errors import ConfigError, PcosimError
from .rng import RNG_ALGORITHM, trial_seed
from .topology import (
    CliqueCover,
    Topology,
    build_topology,
    delay_distances,
    maximal_cliques,
)

__all__ = [
    "ExperimentSpec",
    "RunRecord",
    "AggregateReport",
    "load_spec",
    "spec_from_dict",
    "preset_spec",
    "run_experiment",
    "head_bounds",
    "emit_results",
    "PRESETS",
]

KINDS = (
    "sync",
    "sync-delay",
    "sched",
    "spectral",
    "montecarlo-line",
    "montecarlo-star",
    "histogram-f",
)


@dataclass
class ExperimentSpec:
    kind: str
    topology: Topology | None = None
    alpha: float = 0.1
    rho: float | None = None
    max_periods: float = 10_000.0
    beta: float = 0.5
    delta: Fraction = Fraction(1)
    demands: tuple[Fraction, ...] | None = None
    max_frames: int = 5_000
    base_seed: int = 0
    trials: int = 1
    sizes: tuple[int, ...] = ()      # Monte Carlo network-size grid
    tau_max: float = 0.0             # Monte Carlo delay scale
    spectral_sizes: tuple[int, ...] = (8, 16, 32)
    require_consecutive_locals: bool = False
    band: tuple[float, float] | None = None   # acceptance band on the headline metric
    preset: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trial count must be at least 1")


@dataclass
class RunRecord:
    seed: int                  # trial index within the base-seed stream
    converged: bool
    time: float                # periods or frames to the fixed point
    value: float               # delta_max or free-gap theta, kind-dependent
    head: int | None = None
    payload: dict = field(default_factory=dict)


@dataclass
class AggregateReport:
    kind: str
    base_seed: int
    trials: int
    rng_algorithm: str
    metrics: dict
    band: tuple[float, float] | None = None
    band_ok: bool | None = None

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "base_seed": self.base_seed,
            "trials": self.trials,
            "rng_algorithm": self.rng_algorithm,
            "metrics": self.metrics,
            "band": list(self.band) if self.band else None,
            "band_ok": self.band_ok,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


# -- configuration ------------------------------------------------------------


def _parse_demand(value) -> Fraction:
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return Fraction(int(value[0]), int(value[1]))
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not value.is_integer():
            raise ConfigError(
                f"demand {value} is not an exact rational; write it as 'p/q'"
            )
        return Fraction(int(value))
    raise ConfigError(f"cannot read demand {value!r}")


def _topology_from_dict(doc) -> Topology:
    try:
        nodes = doc["nodes"]
        edges = doc["edges"]
    except (KeyError, TypeError):
        raise ConfigError("topology needs 'nodes' and 'edges' fields")
    pairs, taus = [], []
    for entry in edges:
        if len(entry) == 3:
            i, j, tau = entry
        elif len(entry) == 2:
            (i, j), tau = entry, 0.0
        else:
            raise ConfigError(f"edge entry {entry!r} is not [i, j] or [i, j, tau]")
        pairs.append((int(i), int(j)))
        taus.append(float(tau))
    return build_topology(int(nodes), pairs, taus)


def spec_from_dict(doc: dict) -> ExperimentSpec:
    """Build a spec from a parsed config document (see README for keys)."""
    if "kind" not in doc:
        raise ConfigError("config needs a 'kind' field")
    kind = doc["kind"]
    topo = _topology_from_dict(doc["topology"]) if "topology" in doc else None
    sync_doc = doc.get("sync", {})
    sched_doc = doc.get("sched", {})
    seeds = doc.get("seeds", {})
    demands = sched_doc.get("demands")
    if demands is not None:
        demands = tuple(_parse_demand(d) for d in demands)
    return ExperimentSpec(
        kind=kind,
        topology=topo,
        alpha=float(sync_doc.get("alpha", 0.1)),
        rho=None if sync_doc.get("rho") is None else float(sync_doc["rho"]),
        max_periods=float(sync_doc.get("max_periods", 10_000)),
        beta=float(sched_doc.get("beta", 0.5)),
        delta=_parse_demand(sched_doc.get("delta", 1)),
        demands=demands,
        max_frames=int(sched_doc.get("max_frames", 5_000)),
        base_seed=int(seeds.get("base", 0)),
        trials=int(seeds.get("trials", 1)),
        sizes=tuple(int(n) for n in doc.get("sizes", ())),
        tau_max=float(doc.get("tau_max", 0.0)),
        spectral_sizes=tuple(int(n) for n in doc.get("spectral_sizes", (8, 16, 32))),
        require_consecutive_locals=bool(doc.get("require_consecutive_locals", False)),
    )


def load_spec(path) -> ExperimentSpec:
    with open(path) as fp:
        return spec_from_dict(json.load(fp))


# -- generator presets ---------------------------------------------------------


def line_topology(n: int, tau_total: float) -> Topology:
    """Line with constant end-to-end delay split evenly per hop."""
    hop = tau_total / (n - 1)
    return build_topology(n, [(i, i + 1) for i in range(n - 1)], [hop] * (n - 1))


def star_topology(n: int, tau: float) -> Topology:
    """Hub and n-1 leaves at a uniform radius (equal delay per spoke)."""
    return build_topology(n, [(0, i) for i in range(1, n)], [tau] * (n - 1))


def chained_cliques_topology(sizes=(4, 3, 4), tau: float = 0.0) -> Topology:
    """Cliques in a chain, adjacent ones joined by a single gateway node."""
    edges = []
    start = 0
    blocks = []
    for k, size in enumerate(sizes):
        if k == 0:
            block = list(range(start, start + size))
        else:
            block = [blocks[-1][-1]] + list(range(start, start + size - 1))
        blocks.append(block)
        start = block[-1] + 1
        edges += [(a, b) for x, a in enumerate(block) for b in block[x + 1:]]
    n = blocks[-1][-1] + 1
    return build_topology(n, edges, [tau] * len(edges))


def two_clique_topology(n_local_1: int, n_shared: int, n_local_2: int) -> Topology:
    """Two overlapping cliques: locals of each clique plus a shared block."""
    c1 = list(range(n_local_1 + n_shared))
    c2 = list(range(n_local_1, n_local_1 + n_shared + n_local_2))
    edges = sorted(
        {(min(a, b), max(a, b)) for block in (c1, c2) for a in block for b in block if a != b}
    )
    return build_topology(n_local_1 + n_shared + n_local_2, edges)


def preset_spec(name: str, base_seed=None, trials=None) -> ExperimentSpec:
    """Named experiment presets, fully determined by their parameters."""
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    spec = builder()
    if base_seed is not None:
        spec.base_seed = int(base_seed)
    if trials is not None:
        spec.trials = int(trials)
    spec.preset = name
    return spec


PRESETS = {
    "line-accuracy": lambda: ExperimentSpec(
        kind="montecarlo-line",
        sizes=(2, 4, 8, 16, 32),
        tau_max=0.02,
        alpha=0.1,
        max_periods=5_000,
        base_seed=31337,
        trials=200,
        band=(0.65, 0.85),
    ),
    "star-accuracy": lambda: ExperimentSpec(
        kind="montecarlo-star",
        sizes=(2, 4, 8, 16, 32),
        tau_max=1e-3,
        alpha=0.2,
        max_periods=5_000,
        base_seed=20250,
        trials=200,
        band=(1.18, 1.48),
    ),
    "histogram-f": lambda: ExperimentSpec(
        kind="histogram-f",
        topology=chained_cliques_topology((4, 3, 4)),
        beta=0.5,
        delta=Fraction(1),
        demands=tuple([Fraction(4)] * 9),
        max_frames=2_000,
        base_seed=777,
        trials=2_000,
        band=(0.33, 0.53),
    ),
    "two-clique-schedule": lambda: ExperimentSpec(
        kind="sched",
        topology=two_clique_topology(5, 2, 2),
        beta=0.5,
        delta=Fraction(1),
        demands=tuple([Fraction(4)] * 9),
        max_frames=2_000,
        base_seed=4242,
        trials=50,
        require_consecutive_locals=True,
    ),
    "single-clique-schedule": lambda: ExperimentSpec(
        kind="sched",
        topology=build_topology(3, [(0, 1), (0, 2), (1, 2)]),
        beta=0.5,
        delta=Fraction(1),
        demands=(Fraction(4),) * 3,
        max_frames=2_000,
        base_seed=11,
        trials=50,
    ),
    "eigenvalue-accuracy": lambda: ExperimentSpec(
        kind="spectral",
        beta=0.5,
        delta=Fraction(1),
        demands=(Fraction(4),),
        spectral_sizes=(4, 8, 16, 32, 64),
        base_seed=0,
        trials=1,
    ),
}


# -- metric helpers ------------------------------------------------------------


def head_bounds(topology: Topology) -> dict:
    """Accumulated-delay eccentricity per candidate head, with the best
    (smallest) and worst (largest) cases over head choices."""
    ecc = {}
    for h in range(topology.node_count):
        dist = delay_distances(topology, h)
        ecc[h] = max(d for i, d in enumerate(dist) if i != h) if topology.node_count > 1 else 0.0
    return {
        "eccentricity": ecc,
        "best": min(ecc.values()),
        "worst": max(ecc.values()),
    }


def _free_gap_theta(state: sched.SchedState, cover: CliqueCover, mid: int,
                    gateways: tuple[int, int]) -> float:
    """Gap of the chained middle clique on the arc without local nodes:
    the gap entry of whichever gateway directly follows the other."""
    order = state.order[mid]
    ups = sched.extract_upsilon(state, mid)
    g1, g2 = gateways
    for k, node in enumerate(order):
        if node in (g1, g2):
            other = g2 if node == g1 else g1
            if order[k - 1] == other:
                return ups[2 * k]
    raise ConfigError("gateways are not adjacent in the middle clique's order")


# -- experiment execution -------------------------------------------------------


def run_experiment(spec: ExperimentSpec):
    """Execute all trials and aggregate; returns (AggregateReport, records).

    Trial errors are collected per record (never silently dropped); an
    aggregate band verdict is attached when the spec declares a band.
    """
    if spec.kind in ("sync", "sync-delay"):
        return _run_sync(spec)
    if spec.kind == "sched":
        return _run_sched(spec)
    if spec.kind == "histogram-f":
        return _run_histogram(spec)
    if spec.kind in ("montecarlo-line", "montecarlo-star"):
        return _run_montecarlo(spec)
    if spec.kind == "spectral":
        return _run_spectral(spec)
    raise ConfigError(f"unhandled kind {spec.kind}")


def _sync_config(spec: ExperimentSpec) -> sync.SyncConfig:
    return sync.SyncConfig(alpha=spec.alpha, rho=spec.rho, max_periods=spec.max_periods)


def _run_sync(spec: ExperimentSpec):
    if spec.topology is None:
        raise ConfigError("sync experiments need a topology")
    topo = spec.topology
    cfg = _sync_config(spec)
    bounds = head_bounds(topo)
    records = []
    errors = 0
    for k in range(spec.trials):
        try:
            st = sync.init_sync(topo, cfg, seed=trial_seed(spec.base_seed, k))
            rec = sync.run_until_fixed(st)
        except PcosimError as exc:
            errors += 1
            records.append(RunRecord(seed=k, converged=False, time=math.nan,
                                     value=math.nan, payload={"error": str(exc)}))
            continue
        head = None
        bound_ok = None
        dmax = rec.delta.delta_max()
        if rec.converged:
            heads = sync.head_nodes(rec.delta)
            head = heads[0]
            bound_ok = all(dmax <= bounds["eccentricity"][h] + 1e-9 for h in heads)
        records.append(RunRecord(
            seed=k,
            converged=rec.converged,
            time=rec.time,
            value=dmax,
            head=head,
            payload={"bound_ok": bound_ok, "periods": rec.periods},
        ))
    conv = [r for r in records if r.converged]
    dmaxes = sorted(r.value for r in conv)
    head_freq: dict[int, int] = {}
    for r in conv:
        head_freq[r.head] = head_freq.get(r.head, 0) + 1
    p_hat = {h: c / len(conv) for h, c in head_freq.items()} if conv else {}
    expected_bound = sum(p * bounds["eccentricity"][h] for h, p in p_hat.items())
    metrics = {
        "convergence_rate": len(conv) / len(records),
        "delta_max_mean": _mean(dmaxes),
        "delta_max_max": dmaxes[-1] if dmaxes else None,
        "delta_max_quantiles": _quantiles(dmaxes),
        "median_convergence_time": _median([r.time for r in conv]),
        "head_distribution": {str(h): p_hat[h] for h in sorted(p_hat)},
        "expected_delta_max_bound": expected_bound,
        "bound_violations": sum(1 for r in conv if r.payload["bound_ok"] is False),
        "head_bounds": {
            "best": bounds["best"],
            "worst": bounds["worst"],
        },
        "trial_errors": errors,
    }
    report = AggregateReport(
        kind=spec.kind,
        base_seed=spec.base_seed,
        trials=spec.trials,
        rng_algorithm=RNG_ALGORITHM,
        metrics=metrics,
    )
    return report, records


def _sched_setup(spec: ExperimentSpec):
    if spec.topology is None:
        raise ConfigError("scheduling experiments need a topology")
    if spec.demands is None:
        raise ConfigError("scheduling experiments need demands")
    topo = spec.topology
    cover = maximal_cliques(topo)
    cfg = sched.SchedConfig(
        beta=spec.beta,
        delta=spec.delta,
        demands=spec.demands,
        max_frames=spec.max_frames,
    )
    return topo, cover, cfg


def _run_sched(spec: ExperimentSpec):
    topo, cover, cfg = _sched_setup(spec)
    records = []
    final_upsilons = []
    errors = 0
    for k in range(spec.trials):
        try:
            st = sched.init_schedule(
                topo, cover, cfg,
                seed=trial_seed(spec.base_seed, k),
                require_consecutive_locals=spec.require_consecutive_locals,
            )
            rec = sched.run_frames(st)
        except PcosimError as exc:
            errors += 1
            records.append(RunRecord(seed=k, converged=False, time=math.nan,
                                     value=math.nan, payload={"error": str(exc)}))
            continue
        fairness = spectral.check_fairness(st, cover, spec.demands, spec.delta, tol=1e-6)
        records.append(RunRecord(
            seed=k,
            converged=rec.converged,
            time=float(rec.frames_to_converge),
            value=max(
                abs(sum(v) - 1.0) for v in rec.upsilons.values()
            ),
            payload={
                "partial_fair": fairness.partial,
                "global_fair": fairness.global_,
                "frames": rec.frames,
            },
        ))
        final_upsilons.append(rec.upsilons)
    conv = [r for r in records if r.converged]
    metrics = {
        "convergence_rate": len(conv) / len(records),
        "median_frames_to_converge": _median([r.time for r in conv]),
        "partial_fair_rate": _mean([1.0 * r.payload.get("partial_fair", False)
                                    for r in records]),
        "global_fair_rate": _mean([1.0 * r.payload.get("global_fair", False)
                                   for r in records]),
        "trial_errors": errors,
    }
    report = AggregateReport(
        kind=spec.kind,
        base_seed=spec.base_seed,
        trials=spec.trials,
        rng_algorithm=RNG_ALGORITHM,
        metrics=metrics,
    )
    return report, records, final_upsilons


def _run_histogram(spec: ExperimentSpec):
    topo, cover, cfg = _sched_setup(spec)
    pred = spectral.fixed_point_multiclique(topo, cover, spec.demands, spec.delta)
    if not pred.set_valued:
        raise ConfigError("histogram experiments expect a set-valued fixed point")
    theta_lo, theta_hi = (float(x) for x in pred.theta_range)
    mid = next(iter(pred.upsilon_affine))
    gateways = (pred.orders[mid][0], pred.orders[mid][-1])
    records = []
    thetas = []
    errors = 0
    for k in range(spec.trials):
        try:
            st = sched.init_schedule(topo, cover, cfg,
                                     seed=trial_seed(spec.base_seed, k))
            rec = sched.run_frames(st)
        except PcosimError as exc:
            errors += 1
            records.append(RunRecord(seed=k, converged=False, time=math.nan,
                                     value=math.nan, payload={"error": str(exc)}))
            continue
        theta = _free_gap_theta(st, cover, mid, gateways) if rec.converged else math.nan
        records.append(RunRecord(
            seed=k,
            converged=rec.converged,
            time=float(rec.frames_to_converge),
            value=theta,
            payload={"frames": rec.frames},
        ))
        if rec.converged:
            thetas.append(theta)
    at_max_share = sum(1 for t in thetas if t <= theta_lo + 1e-6)
    frac = at_max_share / len(thetas) if thetas else math.nan
    edges, counts = _histogram(thetas, float(theta_lo), float(theta_hi), 0.01)
    metrics = {
        "convergence_rate": len(thetas) / len(records),
        "theta_range": [theta_lo, theta_hi],
        "max_share_fraction": frac,
        "histogram_bin_edges": edges,
        "histogram_counts": counts,
        "trial_errors": errors,
    }
    report = AggregateReport(
        kind=spec.kind,
        base_seed=spec.base_seed,
        trials=spec.trials,
        rng_algorithm=RNG_ALGORITHM,
        metrics=metrics,
        band=spec.band,
        band_ok=None if spec.band is None else (spec.band[0] <= frac <= spec.band[1]),
    )
    return report, records


def _run_montecarlo(spec: ExperimentSpec):
    make = line_topology if spec.kind == "montecarlo-line" else star_topology
    if not spec.sizes or spec.tau_max <= 0:
        raise ConfigError("Monte Carlo sweeps need sizes and tau_max")
    per_size = {}
    records = []
    for n in spec.sizes:
        topo = make(n, spec.tau_max)
        sub = ExperimentSpec(
            kind="sync-delay",
            topology=topo,
            alpha=spec.alpha,
            rho=spec.rho,
            max_periods=spec.max_periods,
            base_seed=spec.base_seed,
            trials=spec.trials,
        )
        rep, recs = _run_sync(sub)
        for r in recs:
            r.payload["n"] = n
        records.extend(recs)
        per_size[n] = {
            "ratio": (rep.metrics["delta_max_mean"] / spec.tau_max
                      if rep.metrics["delta_max_mean"] is not None else None),
            "convergence_rate": rep.metrics["convergence_rate"],
            "best_bound_ratio": rep.metrics["head_bounds"]["best"] / spec.tau_max,
            "worst_bound_ratio": rep.metrics["head_bounds"]["worst"] / spec.tau_max,
        }
    largest = max(spec.sizes)
    saturation = per_size[largest]["ratio"]
    metrics = {
        "tau_max": spec.tau_max,
        "alpha": spec.alpha,
        "per_size": {str(n): per_size[n] for n in spec.sizes},
        "saturation_ratio": saturation,
    }
    report = AggregateReport(
        kind=spec.kind,
        base_seed=spec.base_seed,
        trials=spec.trials,
        rng_algorithm=RNG_ALGORITHM,
        metrics=metrics,
        band=spec.band,
        band_ok=None if spec.band is None else (
            spec.band[0] <= saturation <= spec.band[1]
        ),
    )
    return report, records


def _run_spectral(spec: ExperimentSpec):
    if spec.demands is None or len(spec.demands) == 0:
        raise ConfigError("spectral experiments need a demand value")
    D = spec.demands[0]
    rows = []
    for n in spec.spectral_sizes:
        system = spectral.build_clique_system([D] * n, spec.delta, spec.beta)
        rep = spectral.eigenvalues(system)
        rows.append({
            "n": n,
            "lambda2_exact": rep.lambda2_exact,
            "lambda2_estimate": rep.lambda2_estimate,
            "estimate_error": abs(rep.lambda2_exact - rep.lambda2_estimate),
            "max_char_residual": max(rep.char_residuals),
            "eigenvalues": [[v.real, v.imag] for v in rep.eigenvalues],
        })
    pred = spectral.fixed_point_single_clique([D] * max(spec.spectral_sizes), spec.delta)
    metrics = {
        "beta": spec.beta,
        "delta": str(spec.delta),
        "demand": str(D),
        "per_size": rows,
        "errors_non_increasing": all(
            rows[k]["estimate_error"] >= rows[k + 1]["estimate_error"]
            for k in range(len(rows) - 1)
        ),
        "largest_prediction": [str(x) for x in pred.upsilon[0]],
    }
    report = AggregateReport(
        kind=spec.kind,
        base_seed=spec.base_seed,
        trials=1,
        rng_algorithm=RNG_ALGORITHM,
        metrics=metrics,
    )
    return report, []


# -- aggregation helpers --------------------------------------------------------


def _mean(xs):
    xs = list(xs)
    return sum(xs) / len(xs) if xs else None


def _median(xs):
    xs = sorted(xs)
    if not xs:
        return None
    m = len(xs) // 2
    return xs[m] if len(xs) % 2 else 0.5 * (xs[m - 1] + xs[m])


def _quantiles(sorted_xs, qs=(0.5, 0.9, 0.99)):
    if not sorted_xs:
        return {}
    out = {}
    for q in qs:
        idx = min(len(sorted_xs) - 1, int(q * len(sorted_xs)))
        out[str(q)] = sorted_xs[idx]
    return out


def _histogram(values, lo, hi, width):
    nbins = round((hi - lo) / width)
    edges = [lo + k * width for k in range(nbins + 1)]
    counts = [0] * nbins
    for v in values:
        if math.isnan(v):
            continue
        k = min(nbins - 1, max(0, int((v - lo) / width)))
        counts[k] += 1
    return edges, counts


# -- export ---------------------------------------------------------------------


def emit_results(records, report: AggregateReport, out_dir) -> list[Path]:
    """Write the per-trial CSV and the aggregate JSON summary; outputs are
    byte-stable for identical inputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    value_col = "theta" if report.kind in ("histogram-f",) else "delta_max"
    if report.kind == "sched":
        value_col = "frame_sum_error"
    trials_path = out / "trials.csv"
    with open(trials_path, "w", newline="") as fp:
        fp.write(f"seed,converged,time,{value_col},head\n")
        for r in records:
            head = "" if r.head is None else r.head
            fp.write(f"{r.seed},{int(r.converged)},{r.time!r},{r.value!r},{head}\n")
    summary_path = out / "summary.json"
    with open(summary_path, "w") as fp:
        fp.write(report.to_json() + "\n")
    return [trials_path, summary_path]
