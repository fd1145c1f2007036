"""
LAAT - manifold extraction from noisy point clouds with pheromone-reinforced,
alignment-biased random walks, plus the fixed-kernel Markov chain baseline,
synthetic benchmarks and Hausdorff-distance evaluation.
"""

__version__ = "1.0.0"
