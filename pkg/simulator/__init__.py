"""
Simulated ad tracker dan experiment runner
Randomized experiments untuk information flow detection
"""

__version__ = "1.0.0"
