"""Square-operator toolkit on periodic grids.

Subpackages: grid (sampled functions and cubes), weights (Muckenhoupt
functionals), kernels (admissible convolution profiles), operators
(vertical/conical square operators), oscillation (weighted mean-oscillation
norms), czd (stopping-time decomposition and distributional checks),
report (corpus and result tables), cli (command line entry points).
"""

__version__ = "0.1.0"
