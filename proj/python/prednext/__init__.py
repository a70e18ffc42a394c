"""Python bindings for the prednext core library.

The compiled extension `_prednext` exposes the main operations: the LIF
neuron update, the self-supervised and prediction losses, the evaluation
metrics, and synthetic dataset generation.
"""

from ._prednext import *  # noqa: F401,F403
