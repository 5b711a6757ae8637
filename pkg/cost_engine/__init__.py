"""
Cost Engine — quadratic/obstacle costs and convex obstacle geometry.
"""
