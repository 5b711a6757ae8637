"""
Reporting — CSV output with run metadata.
"""
