"""
Dynamics Service — stochastic system models and seeded rollout sampling.
"""
