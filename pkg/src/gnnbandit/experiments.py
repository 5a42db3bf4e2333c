"""Experiment runners behind the command line.

Each runner takes a parsed :class:`ExperimentConfig`, a base seed and a
:class:`ResultWriter`, and appends ``experiment,seed,step,metric,value``
rows. Summary rows across trials use ``step = -1``.
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
from scipy import stats

from . import __version__
from .gcn import (AssumptionMonitor, GcnState, LrSchedule, NumericError, embedding_step_bound_check,
                  forward_full, forward_sampled, full_embeddings, init_state, sgd_step)
from .graph import (GraphError, corrupt_features, load_edge_list, read_edge_file, read_feature_file)
from .regret import fit_scaling_exponent, make_environment, run_policy
from .rewards import practical_rewards, reward_bound
from .samplers import SamplerKind, build_plan, collect_rewards, feedback
from .synth import LabeledGraph, read_index_file, sbm_graph, write_dataset


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


class MonitorViolation(AssertionError):
    """A monitored bound was exceeded."""


def _opt(cast):
    return lambda s: None if s.strip().lower() in ("", "none") else cast(s)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s: str) -> tuple:
    return tuple(int(float(x)) for x in s.split(",") if x.strip())


def _str_list(s: str) -> tuple:
    return tuple(x.strip() for x in s.split(",") if x.strip())


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "graph": {
        "edges": (_opt(str), None),
        "features": (_opt(str), None),
        "labels": (_opt(str), None),
        "train": (_opt(str), None),
        "val": (_opt(str), None),
        "test": (_opt(str), None),
        "weighting": (str, "symmetric_norm"),
        "self_loops": (_bool, True),
        "nodes": (int, 2000),
        "communities": (int, 4),
        "p_in": (float, 0.01),
        "p_out": (float, 0.001),
        "feature_dim": (int, 16),
        "separation": (float, 1.0),
        "noise": (float, 1.0),
        "graph_seed": (int, 0),
        "degree_tail": (_opt(float), None),
    },
    "model": {
        "model": (str, "gcn"),
        "depth": (int, 2),
        "hidden": (int, 16),
        "activation": (str, "relu"),
        "lr": (float, 0.001),
        "lr_schedule": (str, "constant"),
    },
    "sampler": {
        "sampler": (str, "thanos"),
        "k": (int, 2),
        "eta": (float, 0.1),
        "gamma": (float, 0.1),
        "delta_t": (int, 0),
        "estimator": (_opt(str), None),
        "reward_clip": (_opt(float), None),
        "compare": (_opt(str), None),
        "compare_eta": (_opt(float), None),
        "compare_gamma": (_opt(float), None),
        "compare_estimator": (_opt(str), None),
    },
    "run": {
        "trials": (int, 1),
        "steps": (int, 100),
        "epochs": (int, 10),
        "batch_size": (int, 256),
        "corrupt_fraction": (float, 0.05),
        "corrupt_scale": (float, 40.0),
        "probe_roots": (int, 5),
        "environment": (str, "log_decay"),
        "arms": (int, 6),
        "plays": (int, 2),
        "horizons": (_int_list, (1000, 3000, 10000, 30000, 100000)),
        "seeds": (int, 10),
        "c_v_bar": (float, 0.005),
        "budget": (float, 1.0),
        "num_changes": (int, 0),
        "gap": (float, 1.0),
        "low": (float, 0.0),
        "reward_cap": (float, 1.0),
        "noise_half_width": (float, 0.0),
        "policies": (_str_list, ("rexp3", "uniform_random")),
        "rexp3_eta": (_opt(float), None),
        "rexp3_gamma": (_opt(float), None),
        "rexp3_delta_t": (_opt(int), None),
        "write_traces": (_bool, False),
    },
}


@dataclass
class ExperimentConfig:
    graph: dict
    model: dict
    sampler: dict
    run: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def sampler_kind(self) -> SamplerKind:
        s = self.sampler
        try:
            return SamplerKind(s["sampler"], s["k"], s["eta"], s["gamma"], s["delta_t"],
                               s["estimator"], s["reward_clip"])
        except ValueError as exc:
            raise ConfigError(f"[sampler] {exc}") from exc

    def compare_kind(self) -> Optional[SamplerKind]:
        s = self.sampler
        if s["compare"] is None:
            return None
        try:
            return SamplerKind(s["compare"], s["k"],
                               s["compare_eta"] if s["compare_eta"] is not None else s["eta"],
                               s["compare_gamma"] if s["compare_gamma"] is not None else s["gamma"],
                               s["delta_t"], s["compare_estimator"], s["reward_clip"])
        except ValueError as exc:
            raise ConfigError(f"[sampler] compare: {exc}") from exc

    def path(self, key: str) -> Optional[Path]:
        v = self.graph[key]
        if v is None:
            return None
        p = Path(v)
        p = p if p.is_absolute() else self.base_dir / p
        if not p.exists():
            raise ConfigError(f"[graph] {key}: file {p} does not exist")
        return p

    def as_items(self):
        for sec in SCHEMA:
            for key, val in getattr(self, sec).items():
                yield sec, key, val


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    """Parse an INI-style config; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    out = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]; expected one of {list(SCHEMA)}")
    for sec, keys in SCHEMA.items():
        vals = {k: d for k, (_, d) in keys.items()}
        if cp.has_section(sec):
            for key, raw in cp.items(sec):
                if key not in keys:
                    raise ConfigError(f"unknown key [{sec}] {key}")
                try:
                    vals[key] = keys[key][0](raw)
                except ValueError as exc:
                    raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from exc
        out[sec] = vals
    cfg = ExperimentConfig(**out, base_dir=base_dir or Path.cwd())
    _validate(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    return parse_config(p.read_text(), p.resolve().parent)


def _validate(cfg: ExperimentConfig) -> None:
    m, r = cfg.model, cfg.run
    if m["model"] != "gcn":
        raise ConfigError(f"[model] model = {m['model']}: only 'gcn' is supported (attention models are out of scope)")
    if m["depth"] < 1 or m["hidden"] < 1:
        raise ConfigError("[model] depth and hidden must be >= 1")
    if m["activation"] not in ("relu", "tanh"):
        raise ConfigError("[model] activation must be relu or tanh")
    if m["lr_schedule"] not in ("constant", "inverse_t"):
        raise ConfigError("[model] lr_schedule must be constant or inverse_t")
    if m["lr"] < 0:
        raise ConfigError("[model] lr must be >= 0")
    for key in ("trials", "batch_size", "seeds", "arms", "plays"):
        if r[key] < 1:
            raise ConfigError(f"[run] {key} must be >= 1")
    for key in ("steps", "epochs"):
        if r[key] < 0:
            raise ConfigError(f"[run] {key} must be >= 0")
    if not 0 <= r["corrupt_fraction"] <= 1 or not r["corrupt_scale"] > 0:
        raise ConfigError("[run] corrupt_fraction must lie in [0, 1] and corrupt_scale be > 0")
    cfg.sampler_kind()
    cfg.compare_kind()
    for key in ("edges", "features", "labels", "train", "val", "test"):
        cfg.path(key)


# -- results ---------------------------------------------------------------------

class ResultWriter:
    """Append-only ``results.csv`` plus a ``manifest.txt`` written first."""

    def __init__(self, out_dir: str | Path, experiment: str, cfg: ExperimentConfig, seed: int):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.experiment = experiment
        lines = [f"experiment = {experiment}", f"seed = {seed}", f"code_version = {__version__}"]
        current = None
        for sec, key, val in cfg.as_items():
            if sec != current:
                lines.append(f"[{sec}]")
                current = sec
            if isinstance(val, tuple):
                val = ",".join(str(x) for x in val)
            lines.append(f"{key} = {val}")
        (self.dir / "manifest.txt").write_text("\n".join(lines) + "\n")
        self._fh = open(self.dir / "results.csv", "w", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(["experiment", "seed", "step", "metric", "value"])
        self._seen = set()
        self.rows = 0

    def write(self, seed: int, step: int, metric: str, value) -> None:
        key = (seed, step, metric)
        if key in self._seen:
            raise ValueError(f"duplicate record {key}")
        self._seen.add(key)
        v = float(value)
        if not math.isfinite(v):
            raise NumericError(f"non-finite value for {metric} at step {step}")
        self._csv.writerow([self.experiment, seed, step, metric, repr(v)])
        self.rows += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


# -- data -------------------------------------------------------------------------

def load_dataset(cfg: ExperimentConfig, need_labels: bool = True) -> LabeledGraph:
    """Read the graph files named in ``[graph]`` or synthesize a community graph."""
    gc = cfg.graph
    edges_path = cfg.path("edges")
    if edges_path is None:
        try:
            return sbm_graph(gc["nodes"], gc["communities"], gc["p_in"], gc["p_out"],
                             gc["feature_dim"], gc["separation"], gc["noise"], seed=gc["graph_seed"],
                             degree_tail=gc["degree_tail"])
        except (ValueError, GraphError) as exc:
            raise ConfigError(f"[graph] {exc}") from exc
    feat_path = cfg.path("features")
    if feat_path is None:
        raise ConfigError("[graph] features is required when edges is given")
    try:
        feats = read_feature_file(feat_path)
        g = load_edge_list(read_edge_file(edges_path), feats.shape[0], gc["weighting"],
                           self_loops=gc["self_loops"], features=feats)
    except GraphError as exc:
        raise ConfigError(f"[graph] {exc}") from exc
    labels = train = val = test = None
    if need_labels:
        for key in ("labels", "train", "val", "test"):
            if cfg.graph[key] is None:
                raise ConfigError(f"[graph] {key} file is required for this experiment")
        labels = read_index_file(cfg.path("labels"))
        train, val, test = (read_index_file(cfg.path(k)) for k in ("train", "val", "test"))
        if len(labels) != g.node_count:
            raise ConfigError(f"[graph] labels has {len(labels)} entries for {g.node_count} nodes")
    else:
        labels = np.zeros(g.node_count, dtype=np.int64)
        train = val = test = np.arange(g.node_count)
    return LabeledGraph(g, labels, train, val, test)


def _model(cfg: ExperimentConfig, data: LabeledGraph, rng) -> GcnState:
    m = cfg.model
    dims = [data.graph.feature_dim] + [m["hidden"]] * (m["depth"] - 1) + [data.num_classes]
    return init_state(dims, rng, m["activation"], LrSchedule(m["lr_schedule"], m["lr"]))


def accuracy(g, state: GcnState, labels, nodes) -> float:
    logits = full_embeddings(g, state)[-1][nodes]
    return float(np.mean(np.argmax(logits, axis=1) == labels[nodes]))


def _batches(rng, nodes, batch_size):
    perm = rng.permutation(nodes)
    return [np.sort(perm[i:i + batch_size]) for i in range(0, len(perm), batch_size)]


# -- experiments ----------------------------------------------------------------

def run_approx_error(cfg: ExperimentConfig, seed: int, out: ResultWriter) -> dict:
    """Per-step aggregation error of two samplers driven by shared weights.

    Weights follow exact full-neighborhood gradients so both samplers see
    the same trajectory. ``dist`` sums, over the batch roots, the distance
    between the sampled and exact root aggregate of the layer below the
    output.
    """
    ours, theirs = cfg.sampler_kind(), cfg.compare_kind()
    if theirs is None:
        raise ConfigError("[sampler] compare is required for approx-error")
    data = load_dataset(cfg)
    g, depth = data.graph, cfg.model["depth"]
    finals = []
    for trial in range(cfg.run["trials"]):
        ts = trial_seed(seed, trial)
        rng = np.random.default_rng(ts)
        state = _model(cfg, data, rng)
        pol_a = ours.policy_table(g.node_count, ts + 1)
        pol_b = theirs.policy_table(g.node_count, ts + 2)
        total = 0.0
        for t in range(1, cfg.run["steps"] + 1):
            batch = np.sort(rng.choice(data.train, size=min(cfg.run["batch_size"], len(data.train)),
                                       replace=False))
            exact = forward_full(g, state, batch).aggregates[-1]
            dists = []
            for sk, pol in ((ours, pol_a), (theirs, pol_b)):
                plan = build_plan(sk, g, pol, batch, depth)
                trace = forward_sampled(g, state, batch, plan)
                dists.append(float(np.linalg.norm(trace.aggregates[-1] - exact, axis=1).sum()))
                feedback(sk, pol, plan, trace, t)
            total += dists[0] - dists[1]
            out.write(ts, t, "dist_ours", dists[0])
            out.write(ts, t, "dist_compare", dists[1])
            out.write(ts, t, "delta_dist", total)
            state = sgd_step(state, g, batch, data.labels[batch]).state
        finals.append(total)
        out.write(ts, -1, "final_delta_dist", total)
    out.write(seed, -1, "delta_dist_mean", np.mean(finals))
    out.write(seed, -1, "delta_dist_std", np.std(finals, ddof=1) if len(finals) > 1 else 0.0)
    return {"final_delta_dist": finals}


def train_sampled(cfg, data, sk: SamplerKind, ts: int, epochs: int, out: ResultWriter | None,
                   prefix: str, counted=None, tails: dict | None = None):
    """Train with sampled gradients; returns per-epoch counts of ``counted`` nodes and accuracies.

    ``tails`` collects banditsampler and thanos rewards on every reward
    site's draws (``kind -> list``).
    """
    g, depth = data.graph, cfg.model["depth"]
    rng = np.random.default_rng(ts)
    state = _model(cfg, data, rng)
    pol = sk.policy_table(g.node_count, ts + 1)
    mask = np.zeros(g.node_count, dtype=bool)
    if counted is not None:
        mask[counted] = True
    counts, val_acc, test_acc = [], [], []
    va, te = accuracy(g, state, data.labels, data.val), accuracy(g, state, data.labels, data.test)
    val_acc.append(va)
    test_acc.append(te)
    if out is not None:
        out.write(ts, 0, f"{prefix}val_acc", va)
        out.write(ts, 0, f"{prefix}test_acc", te)
    step = 1
    for epoch in range(1, epochs + 1):
        n = 0
        for batch in _batches(rng, data.train, cfg.run["batch_size"]):
            plan = build_plan(sk, g, pol, batch, depth)
            n += int(mask[plan.sampled_ids()].sum())
            res = sgd_step(state, g, batch, data.labels[batch], plan)
            if tails is not None:
                collect_rewards(plan, res.trace, into=tails)
            feedback(sk, pol, plan, res.trace, step)
            state = res.state
            step += 1
        va, te = accuracy(g, state, data.labels, data.val), accuracy(g, state, data.labels, data.test)
        counts.append(n)
        val_acc.append(va)
        test_acc.append(te)
        if out is not None:
            if counted is not None:
                out.write(ts, epoch, f"{prefix}count", n)
            out.write(ts, epoch, f"{prefix}val_acc", va)
            out.write(ts, epoch, f"{prefix}test_acc", te)
    best = int(np.argmax(val_acc))
    return np.array(counts), np.array(val_acc), np.array(test_acc), test_acc[best]


def run_norm_bias(cfg: ExperimentConfig, seed: int, out: ResultWriter) -> dict:
    """Sampling frequency of feature-scaled training nodes, per sampler.

    Each trial picks ``corrupt_fraction`` of the training nodes, then
    trains every sampler on the clean graph and on the graph with those
    nodes' features multiplied by ``corrupt_scale`` (same seed for both).
    Counts are draws of the chosen nodes at any aggregation site per pass
    over the training roots.
    """
    kinds = [cfg.sampler_kind()] + ([cfg.compare_kind()] if cfg.compare_kind() else [])
    data = load_dataset(cfg)
    summary = {}
    for trial in range(cfg.run["trials"]):
        ts = trial_seed(seed, trial)
        rng = np.random.default_rng(ts)
        n_bad = int(round(cfg.run["corrupt_fraction"] * len(data.train)))
        bad = np.sort(rng.choice(data.train, size=n_bad, replace=False))
        scaled = LabeledGraph(corrupt_features(data.graph, bad, cfg.run["corrupt_scale"]),
                              data.labels, data.train, data.val, data.test)
        for sk in kinds:
            for tag, d in (("normal", data), ("scaled", scaled)):
                prefix = f"{sk.kind}_{tag}_"
                counts, _, _, best_test = train_sampled(cfg, d, sk, ts, cfg.run["epochs"], out,
                                                         prefix, counted=bad)
                mean_count = float(counts.mean()) if len(counts) else 0.0
                out.write(ts, -1, f"{prefix}mean_count", mean_count)
                out.write(ts, -1, f"{prefix}best_val_test_acc", best_test)
                summary.setdefault(prefix + "mean_count", []).append(mean_count)
    for key, vals in summary.items():
        out.write(seed, -1, key + "_trials_mean", np.mean(vals))
    return summary


def tail_ratio(values) -> Optional[float]:
    """``max / mean`` of a reward sample, or None when the mean is not positive."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0 or not v.mean() > 0:
        return None
    return float(v.max() / v.mean())


def run_train_accuracy(cfg: ExperimentConfig, seed: int, out: ResultWriter) -> dict:
    """Accuracy curves of sampled training; the test accuracy at the best validation epoch per trial."""
    kinds = [cfg.sampler_kind()] + ([cfg.compare_kind()] if cfg.compare_kind() else [])
    data = load_dataset(cfg)
    summary = {}
    for trial in range(cfg.run["trials"]):
        ts = trial_seed(seed, trial)
        for sk in kinds:
            tails = {}
            _, _, _, best = train_sampled(cfg, data, sk, ts, cfg.run["epochs"], out, f"{sk.kind}_",
                                           tails=tails)
            out.write(ts, -1, f"{sk.kind}_best_val_test_acc", best)
            for kind, vals in sorted(tails.items()):
                ratio = tail_ratio(vals)
                if ratio is not None:
                    out.write(ts, -1, f"{sk.kind}_run_{kind}_reward_max_over_mean", ratio)
                    out.write(ts, -1, f"{sk.kind}_run_{kind}_reward_count", len(vals))
            summary.setdefault(sk.kind, []).append(best)
    for kind, vals in summary.items():
        out.write(seed, -1, f"{kind}_best_val_test_acc_mean", np.mean(vals))
    return summary


def run_regret(cfg: ExperimentConfig, seed: int, out: ResultWriter) -> dict:
    """Mean dynamic and weak regret over seeds per horizon and policy, plus log-log slopes."""
    r = cfg.run
    manual = {k: r[f"rexp3_{k}"] for k in ("eta", "gamma", "delta_t") if r[f"rexp3_{k}"] is not None}
    fits = {}
    for policy in r["policies"]:
        points = []
        for T in r["horizons"]:
            dyn = []
            for s in range(r["seeds"]):
                ts = trial_seed(seed, s)
                try:
                    env = make_environment(r["environment"], r["arms"], r["plays"], T, ts,
                                           budget=r["budget"], num_changes=r["num_changes"],
                                           gap=r["gap"], low=r["low"], c_v_bar=r["c_v_bar"],
                                           reward_cap=r["reward_cap"],
                                           noise_half_width=r["noise_half_width"])
                    trace = run_policy(env, policy, ts, manual if policy == "rexp3" else None)
                except ValueError as exc:
                    raise ConfigError(f"[run] {exc}") from exc
                out.write(ts, T, f"{policy}_R", trace.dynamic_regret)
                out.write(ts, T, f"{policy}_Rhat", trace.weak_regret)
                if r["write_traces"]:
                    trace.write_csv(out.dir / f"trace_{policy}_T{T}_seed{ts}.csv")
                dyn.append(trace.dynamic_regret)
            points.append((T, float(np.mean(dyn))))
            out.write(seed, T, f"{policy}_R_mean", points[-1][1])
        if len(points) >= 4 and all(p[1] > 0 for p in points):
            slope, intercept, r2 = fit_scaling_exponent(points)
            out.write(seed, -1, f"{policy}_slope", slope)
            out.write(seed, -1, f"{policy}_intercept", intercept)
            out.write(seed, -1, f"{policy}_r_squared", r2)
            fits[policy] = (slope, intercept, r2)
    return fits


@dataclass
class BudgetReport:
    variation: np.ndarray
    running_sum: np.ndarray
    bound: np.ndarray
    satisfied: np.ndarray
    rewards: np.ndarray
    reward_ok: np.ndarray
    step_ok: np.ndarray
    monitor: AssumptionMonitor


def probe_rewards(g, h1: np.ndarray, probes) -> np.ndarray:
    """Practical rewards of every (root, frozen neighbor) probe from layer-1 embeddings."""
    out = []
    for v, ids, arms in probes:
        z = g.weights(v)[arms][:, None] * h1[ids]
        out.append(practical_rewards(z))
    return np.concatenate(out)


def probe_signed_rewards(g, h1: np.ndarray, probes) -> np.ndarray:
    """Same as :func:`probe_rewards` before the ReLU clamp."""
    out = []
    for v, ids, arms in probes:
        z = g.weights(v)[arms][:, None] * h1[ids]
        m = z.mean(axis=0)
        out.append(2.0 * z @ m - np.einsum("ij,ij->i", z, z))
    return np.concatenate(out)


def budget_monitor(g, labels, train, state: GcnState, steps: int, probes) -> BudgetReport:
    """Full-batch SGD on ``train`` while tracking probe-reward variation against its bound.

    The bound at step ``t`` is ``lr * C_v ln t`` with ``C_v`` rebuilt from
    the running maxima of the monitored constants (``lr`` is the schedule
    numerator, 1 for ``alpha_t = 1/t``).
    """
    if state.lr_schedule.kind != "inverse_t":
        raise ConfigError("budget monitoring needs lr_schedule = inverse_t")
    monitor = AssumptionMonitor.for_graph(g, state.depth)
    monitor.observe_params(state.layer_weights)
    all_nodes = np.arange(g.node_count)
    trace = forward_full(g, state, all_nodes)
    h1 = trace.layer_embeddings[1]
    prev = probe_rewards(g, h1, probes)
    variation, running, bound, sat, rewards, rew_ok, step_ok = [], [], [], [], [], [], []
    total = 0.0
    for t in range(1, steps + 1):
        signed = probe_signed_rewards(g, h1, probes)
        zmax = float(np.max(g.max_incident_weight * np.linalg.norm(h1, axis=1)))
        monitor.observe_weighted_norm(zmax)
        rewards.append(float(np.max(np.abs(signed))))
        rew_ok.append(bool(np.all(np.abs(signed) <= 3.0 * zmax**2 * (1 + 1e-12))
                           and np.all(np.abs(signed) <= reward_bound(monitor) * (1 + 1e-12))))
        res = sgd_step(state, g, train, labels[train])
        monitor = monitor.merge(res.monitor)
        state = res.state
        nxt_trace = forward_full(g, state, all_nodes)
        step_ok.append(embedding_step_bound_check(g, trace, nxt_trace, monitor, layer=1))
        trace = nxt_trace
        h1 = trace.layer_embeddings[1]
        cur = probe_rewards(g, h1, probes)
        var = float(np.max(np.abs(cur - prev)))
        prev = cur
        total += var
        horizon = t + 1
        b = state.lr_schedule.value * monitor.variation_constant(1) * math.log(horizon)
        variation.append(var)
        running.append(total)
        bound.append(b)
        sat.append(total <= b * (1 + 1e-12))
    return BudgetReport(np.array(variation), np.array(running), np.array(bound), np.array(sat),
                        np.array(rewards), np.array(rew_ok), np.array(step_ok), monitor)


def make_probes(g, roots, k: int, rng) -> list:
    """Freeze ``k`` uniformly drawn neighbors (all when the degree is at most ``k``) per root."""
    probes = []
    for v in roots:
        K = g.degree(int(v))
        arms = np.arange(K) if K <= k else np.sort(rng.choice(K, size=k, replace=False))
        probes.append((int(v), g.neighbors(int(v))[arms], arms))
    return probes


def run_budget_monitor(cfg: ExperimentConfig, seed: int, out: ResultWriter) -> dict:
    """Track reward variation along a real training run; raises on any bound violation."""
    if cfg.model["lr_schedule"] != "inverse_t":
        raise ConfigError("budget-monitor needs [model] lr_schedule = inverse_t")
    data = load_dataset(cfg)
    g = data.graph
    violations = 0
    reports = []
    for trial in range(cfg.run["trials"]):
        ts = trial_seed(seed, trial)
        rng = np.random.default_rng(ts)
        state = _model(cfg, data, rng)
        n_probe = min(cfg.run["probe_roots"], len(data.train))
        if n_probe < 1:
            raise ConfigError("[run] probe_roots must select at least one root")
        roots = np.sort(rng.choice(data.train, size=n_probe, replace=False))
        probes = make_probes(g, roots, cfg.sampler["k"], rng)
        rep = budget_monitor(g, data.labels, data.train, state, cfg.run["steps"], probes)
        for t in range(len(rep.variation)):
            out.write(ts, t + 1, "variation", rep.variation[t])
            out.write(ts, t + 1, "variation_sum", rep.running_sum[t])
            out.write(ts, t + 1, "variation_bound", rep.bound[t])
            out.write(ts, t + 1, "budget_satisfied", rep.satisfied[t])
            out.write(ts, t + 1, "max_abs_reward", rep.rewards[t])
            out.write(ts, t + 1, "reward_bound_satisfied", rep.reward_ok[t])
            out.write(ts, t + 1, "embedding_step_satisfied", rep.step_ok[t])
        violations += int((~rep.satisfied).sum() + (~rep.reward_ok).sum() + (~rep.step_ok).sum())
        reports.append(rep)
    out.write(seed, -1, "violations", violations)
    if violations:
        raise MonitorViolation(f"{violations} monitored bound violations")
    return {"reports": reports}


def run_synth_graph(cfg: ExperimentConfig, seed: int, out_dir: Path) -> dict:
    """Write a community graph drawn with ``[graph]`` settings and ``seed``."""
    gc = cfg.graph
    try:
        data = sbm_graph(gc["nodes"], gc["communities"], gc["p_in"], gc["p_out"], gc["feature_dim"],
                         gc["separation"], gc["noise"], seed=seed, degree_tail=gc["degree_tail"])
    except (ValueError, GraphError) as exc:
        raise ConfigError(f"[graph] {exc}") from exc
    return write_dataset(out_dir, data)


RUNNERS = {
    "approx-error": ("approx_error", run_approx_error),
    "norm-bias": ("norm_bias", run_norm_bias),
    "train": ("train_accuracy", run_train_accuracy),
    "regret": ("regret_scaling", run_regret),
    "budget-monitor": ("budget_monitor", run_budget_monitor),
}


def run_experiment(verb: str, cfg: ExperimentConfig, out_dir: str | Path, seed: int):
    """Run one experiment verb and write ``manifest.txt`` and ``results.csv`` into ``out_dir``."""
    if verb == "synth-graph":
        return run_synth_graph(cfg, seed, Path(out_dir))
    if verb not in RUNNERS:
        raise ConfigError(f"unknown experiment {verb!r}")
    name, fn = RUNNERS[verb]
    with ResultWriter(out_dir, name, cfg, seed) as out:
        return fn(cfg, seed, out)


def welch_one_sided(a, b) -> float:
    """p-value for mean(a) > mean(b) under Welch's t-test."""
    return float(stats.ttest_ind(a, b, equal_var=False, alternative="greater").pvalue)
