"""
Core package initialization
Conservation engine, statistics, propagation, safety mapping and pipeline
"""

__version__ = "1.0.0"
__author__ = "ConserveAI Team"
