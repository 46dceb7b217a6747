"""Multiobjective hydropower reservoir scheduling with attention-based policy gradients.

Submodules:

    hydro          physical model, objectives, constraint checks
    env            decision process and batched rollouts
    decomposition  weight grid, objective bounds, scalarized reward
    autodiff       reverse-mode tensors, Adam, checkpoints
    policy         attention encoder (two-stage / direct) and decoder heads
    trainer        REINFORCE with greedy-rollout baseline and t-test swaps
    moea           NSGA-III and MOEA/D baselines
    pareto         dominance filter, hypervolume, improvement report
    dataset        CSV instance format and the bundled desk dataset
    cli            command-line entry point
"""

__version__ = "0.1.0"
