"""Policy-gradient portfolio optimization with interchangeable
input-normalization schemes: market simulation with transaction costs,
a shared-kernel convolutional policy, recency-biased replay training
with online learning, and a seeded campaign runner."""

__version__ = "0.1.0"
