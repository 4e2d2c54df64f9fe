"""
s5kit - feature extraction, label correction and evaluation
toolkit for sound scene tagging and separation systems
"""

__version__ = "0.1.0"
