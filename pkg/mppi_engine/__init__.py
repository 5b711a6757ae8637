"""
MPPI Engine — trajectory batches, weights and the path-integral control estimate.
"""
