"""capval: capability-aligned OOD validation sets and loss-to-capability laws.

Synthesizes out-of-distribution validation data from benchmark samples,
scores language models on it via aggregated token-level cross-entropy, and
fits the bounded sigmoid loss-to-capability law and the log-linear
compute-to-loss law to predict downstream capability.
"""

__version__ = "0.1.0"
