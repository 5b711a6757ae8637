"""
Moments Engine — Gaussian moment propagation and closed-form expected costs.
"""
