"""
Simulation Engine — closed-loop MPC runs and variance sweeps.
"""
