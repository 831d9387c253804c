"""Dual-hop mmWave-RF to FSO relay link evaluator.

Outage probability, bit-error probability, and ergodic capacity of an
amplify-and-forward mmWave->FSO link under amplifier nonlinearity, IQ
imbalance, and co-channel interference, computed by two independent
routes (Monte Carlo in the SNR domain and closed-form/series analytics)
with cross-validation between them.
"""

__version__ = "0.1.0"

__all__ = [
    "specfun",
    "channel_rf",
    "channel_fso",
    "impairments",
    "sindr",
    "montecarlo",
    "analytic",
    "cli",
]
