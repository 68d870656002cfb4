"""
Podcast Topics
Short-text topic modeling with CluWords and named-entity-informed NEiCE
representations, NMF factorization and C_V coherence evaluation.
"""

__version__ = "1.0.0"
