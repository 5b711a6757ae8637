"""
Complexity Engine — required sample counts, error intervals and growth bounds.
"""
