"""Train a two-layer GCN on a hub-heavy community graph with each neighbor sampler.

Prints accuracy at the best validation epoch and, for the bandit samplers,
how heavy-tailed the rewards they learned from were (max over mean).
"""

from gnnbandit.experiments import parse_config, tail_ratio, train_sampled
from gnnbandit.synth import sbm_graph

CONFIG = """
[model]
depth = 2
hidden = 16
lr = 0.01
[run]
batch_size = 128
"""

cfg = parse_config(CONFIG)
data = sbm_graph(1500, 5, 0.01, 0.0005, feature_dim=16, separation=1.0, seed=0, degree_tail=1.5)
print(f"{data.graph.node_count} nodes, max degree {data.graph.constants.max_degree}")

for kind, eta in (("uniform", 0.1), ("banditsampler", 0.01), ("thanos", 0.1), ("thanos_m", 0.1)):
    cfg.sampler.update(sampler=kind, eta=eta, k=3, estimator=None)
    tails = {}
    _, val, _, best_test = train_sampled(cfg, data, cfg.sampler_kind(), ts=1, epochs=10, out=None,
                                         prefix="", tails=tails if kind != "uniform" else None)
    line = f"{kind:<14} best val {val.max():.3f}  test at best val {best_test:.3f}"
    if kind != "uniform":
        own = "banditsampler" if kind == "banditsampler" else "thanos"
        line += f"  reward max/mean {tail_ratio(tails[own]):8.1f}"
    print(line)
