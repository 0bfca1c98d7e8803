"""
Package initialization for circleflow, Wasserstein gradient flows on the circle.
"""

__version__ = '1.0.0'
__author__ = 'circleflow developers'
